"""UAV air-to-ground MIMO-OFDM link simulator.

Submodules: geometry, channel (GBSM realizations), ldpc, modulation,
moduformer, ofdm, rx_classical, rx_neural, autodiff/optim, imaging,
training, metrics, harness, cli.
"""

from .channel import (ArrayConfig, ChannelRealization, ClusterSet,
                      LargeScaleParams, doppler_shift, realize_channel,
                      rician_factor, sample_clusters, steering_ula, steering_upa)
from .geometry import (GeometryState, elevation_azimuth, horizontal_distance,
                       slant_distance, unit_direction)
from .harness import (LinkConfig, SchemeSpec, SlotReport, SweepConfig,
                      SweepResult, run_sweep, simulate_slot, transmit_image)
from .ldpc import LdpcCode, decode, encode, pack_slot
from .metrics import psnr, throughput_bps, wilson_interval
from .modulation import (ConstellationSpec, normalize_constellation, qam_demap_llr,
                         qam_map)
from .moduformer import ModuformerParams, moduformer_forward
from .ofdm import (PilotPattern, ResourceGrid, RxSlot, TxSlot, apply_channel,
                   build_grid, ezf_precode, mrc_combine)
from .rx_classical import (ChannelEstimate, genie_receiver, interpolate,
                           ls_estimate, mmse_equalize)
from .rx_neural import DeepRxParams, deeprx_features, deeprx_forward
from .training import LossConfig, TrainConfig, loss_total, ssim, train_e2e

__version__ = "0.1.0"
