"""Link-level simulation harness: slot pipeline, Monte-Carlo sweeps, CRN.

A "scheme" is a (transmitter, receiver, pilot pattern) triple. All schemes
evaluated at one SNR point see identical channel, noise, and payload
realizations: the per-slot RNG streams are derived from
(master seed, snr index, slot index, stream tag) only, never from the
scheme, so comparisons are paired (common random numbers).

Sweeps run in normalized-SNR mode (beta = 1); SNR means the slot-average
per-receive-antenna post-channel SNR.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .channel import (ArrayConfig, ChannelRealization, LargeScaleParams,
                      realize_channel, sample_clusters)
from .errors import ConfigMismatch
from .geometry import GeometryState, elevation_azimuth
from .ldpc import LdpcCode, decode, encode_slot, pack_slot
from .metrics import throughput_bps, wilson_interval
from .modulation import ConstellationSpec, qam_map
from .moduformer import ModuformerParams, moduformer_forward
from .ofdm import (PilotPattern, RxSlot, TxSlot, apply_channel, build_grid,
                   ezf_precode_slot)
from .rx_classical import (genie_receiver, interpolate, llr_grid_from_estimate,
                           lmmse_smooth, ls_estimate)
from .rx_neural import DeepRxParams, deeprx_features, deeprx_forward
from .seeding import substream

# Stream tags for substream derivation (documented splitting).
STREAM_CHANNEL = 0
STREAM_NOISE = 1
STREAM_PAYLOAD = 2

DEFAULT_GEOMETRIES = (
    GeometryState(p_uav=(60.0, 45.0, 80.0), v_uav=(12.0, 6.0, 0.0), h_bs=25.0),
    GeometryState(p_uav=(-40.0, 70.0, 120.0), v_uav=(-8.0, 10.0, 1.0), h_bs=25.0),
    GeometryState(p_uav=(25.0, -30.0, 150.0), v_uav=(10.0, -4.0, -1.0), h_bs=25.0),
)


@dataclass(frozen=True)
class LinkConfig:
    """Physical-layer configuration shared by sweeps and training.

    Desk-scale defaults (16 BS antennas, 2 UAV antennas) keep Monte-Carlo
    and training runtimes short; the experiment-scale 64 x 4 arrays are a
    config change (see configs/paper_scale.json).
    """

    arrays: ArrayConfig = ArrayConfig(n_y=4, n_z=4, n_uav=2)
    large_scale: LargeScaleParams = LargeScaleParams()
    geometries: tuple = DEFAULT_GEOMETRIES
    k_clusters: int = 8
    delay_spread_s: float = 100e-9
    scs_hz: float = 15e3
    symbol_duration_s: float = 1e-3 / 14
    n_subcarriers: int = 72
    n_symbols: int = 14
    pilot_seed: int = 1234
    normalized_snr: bool = True

    def pattern(self, kind: str) -> PilotPattern:
        return PilotPattern.by_name(kind, seed=self.pilot_seed)


@dataclass(frozen=True)
class SchemeSpec:
    """Transmitter/receiver/pilot combination under test."""

    name: str
    tx: str = "qam"            # "qam" | "moduformer"
    rx: str = "genie"          # "genie" | "ls_mmse" | "lmmse_mmse" | "deeprx"
    pattern: str = "full"      # "full" | "sparse"
    tx_params: ModuformerParams = None
    rx_params: DeepRxParams = None

    def __post_init__(self):
        if self.tx == "moduformer" and self.tx_params is None:
            raise ConfigMismatch(f"scheme '{self.name}': moduformer needs tx_params")
        if self.rx == "deeprx" and self.rx_params is None:
            raise ConfigMismatch(f"scheme '{self.name}': deeprx needs rx_params")


@dataclass
class SlotReport:
    """Per-slot outcome used for BLER/throughput accounting."""

    snr_db: float
    n_blocks: int
    block_errors: int
    n_info_bits: int
    bit_errors: int
    llr_mean_abs: float
    llr_min_abs: float
    decoder_converged: int
    decoded_info: np.ndarray = None  # (n_blocks * k,) hard info bits

    @property
    def bler(self) -> float:
        return self.block_errors / self.n_blocks if self.n_blocks else 0.0


def draw_channel(link: LinkConfig, rng: np.random.Generator) -> ChannelRealization:
    """One realization: geometry choice, cluster redraw, lifted to the grid."""
    geo = link.geometries[rng.integers(0, len(link.geometries))]
    theta, _ = elevation_azimuth(geo)
    clusters = sample_clusters(rng, link.k_clusters, theta,
                               float(np.linalg.norm(geo.velocity)),
                               link.arrays.wavelength,
                               delay_spread_s=link.delay_spread_s)
    return realize_channel(geo, link.arrays, link.large_scale, clusters,
                           (link.n_subcarriers, link.n_symbols),
                           (link.scs_hz, link.symbol_duration_s),
                           rng, normalized_snr_mode=link.normalized_snr)


def transmit(payload_bits: np.ndarray, pattern: PilotPattern, spec: ConstellationSpec,
             scheme: SchemeSpec, chan: ChannelRealization) -> TxSlot:
    """Map payload bits to a precoded slot, with optional Moduformer rows."""
    symbols = qam_map(payload_bits, spec)
    if scheme.tx == "moduformer":
        symbols = perturb_rows(symbols, pattern, scheme.tx_params)
    grid = build_grid(symbols, pattern)
    w = ezf_precode_slot(chan)
    return TxSlot(grid=grid, w=w)


def perturb_rows(symbols: np.ndarray, pattern: PilotPattern,
                 params: ModuformerParams) -> np.ndarray:
    """Apply the Moduformer to each OFDM-symbol row of data symbols."""
    out = symbols.copy()
    for start, stop in data_row_spans(pattern):
        if stop > start:
            out[start:stop] = moduformer_forward(symbols[start:stop], params)
    return out


def data_row_spans(pattern: PilotPattern) -> list:
    """(start, stop) index spans of each OFDM symbol row within the
    symbol-major data fill order."""
    coords = pattern.data_res()
    spans = []
    start = 0
    for s in range(pattern.n_s):
        count = sum(1 for _, ss in coords[start:] if ss == s)
        spans.append((start, start + count))
        start += count
    return spans


def receive_llrs(scheme: SchemeSpec, rx: RxSlot, chan: ChannelRealization,
                 w: np.ndarray, pattern: PilotPattern,
                 spec: ConstellationSpec) -> np.ndarray:
    """(n_c, n_s, M) LLR grid for the configured receiver."""
    if scheme.rx == "genie":
        return genie_receiver(rx, chan, w, pattern, spec)
    if scheme.rx == "ls_mmse":
        est = interpolate(ls_estimate(rx, pattern), pattern)
        return llr_grid_from_estimate(rx, est, pattern, spec)
    if scheme.rx == "lmmse_mmse":
        smoothed = lmmse_smooth(ls_estimate(rx, pattern), pattern, rx.noise_var)
        est = interpolate(smoothed, pattern)
        return llr_grid_from_estimate(rx, est, pattern, spec)
    if scheme.rx == "deeprx":
        feats = deeprx_features(rx, pattern)
        return deeprx_forward(feats, scheme.rx_params)
    raise ConfigMismatch(f"unknown receiver '{scheme.rx}'")


def gather_payload_llrs(llr_grid: np.ndarray, pattern: PilotPattern) -> np.ndarray:
    """Flatten the LLR grid into payload bit order (symbol-major data REs)."""
    coords = pattern.data_res()
    cs = np.array([c for c, _ in coords])
    ss = np.array([s for _, s in coords])
    return llr_grid[cs, ss, :].reshape(-1)


def simulate_slot(scheme: SchemeSpec, link: LinkConfig, code: LdpcCode,
                  spec: ConstellationSpec, snr_db: float, master_seed: int,
                  snr_idx: int, slot_idx: int,
                  payload_info_bits: np.ndarray = None) -> SlotReport:
    """Run one coded slot end to end and score it against the ground truth.

    The channel/noise/payload RNG streams depend only on (master_seed,
    snr_idx, slot_idx), making slots directly comparable across schemes.
    """
    pattern = link.pattern(scheme.pattern)
    n_blocks, _ = pack_slot(pattern.data_capacity, spec.m_order, code)

    rng_chan = substream(master_seed, snr_idx, slot_idx, STREAM_CHANNEL)
    rng_noise = substream(master_seed, snr_idx, slot_idx, STREAM_NOISE)
    rng_payload = substream(master_seed, snr_idx, slot_idx, STREAM_PAYLOAD)

    if payload_info_bits is None:
        payload_info_bits = rng_payload.integers(0, 2, size=n_blocks * code.k).astype(np.uint8)
    blocks, tx_bits = encode_slot(payload_info_bits, pattern.data_capacity,
                                  spec.m_order, code)

    chan = draw_channel(link, rng_chan)
    tx = transmit(tx_bits, pattern, spec, scheme, chan)
    rx = apply_channel(tx, chan, snr_db, rng_noise)
    llr_grid = receive_llrs(scheme, rx, chan, tx.w, pattern, spec)
    llrs = gather_payload_llrs(llr_grid, pattern)

    coded_llrs = llrs[:n_blocks * code.n].reshape(n_blocks, code.n)
    decoded, converged = decode(coded_llrs, code)
    info = payload_info_bits.reshape(n_blocks, code.k)
    bit_errors = int(np.sum(decoded != info))
    block_errors = int(np.sum(np.any(decoded != info, axis=1)))
    return SlotReport(
        snr_db=snr_db,
        n_blocks=n_blocks,
        block_errors=block_errors,
        n_info_bits=n_blocks * code.k,
        bit_errors=bit_errors,
        llr_mean_abs=float(np.mean(np.abs(coded_llrs))),
        llr_min_abs=float(np.min(np.abs(coded_llrs))),
        decoder_converged=int(np.sum(converged)),
        decoded_info=decoded.reshape(-1),
    )


@dataclass(frozen=True)
class SweepConfig:
    snr_points_db: tuple
    blocks_per_point: int
    seed: int
    schemes: tuple
    link: LinkConfig = LinkConfig()

    def __post_init__(self):
        if self.blocks_per_point < 1:
            raise ConfigMismatch("blocks_per_point must be >= 1")


@dataclass
class SweepPoint:
    scheme: str
    snr_db: float
    n_blocks: int
    block_errors: int
    bler: float
    ci_lo: float
    ci_hi: float
    throughput_bps: float


@dataclass
class SweepResult:
    points: list
    warnings: list = field(default_factory=list)

    def for_scheme(self, name: str) -> list:
        return [p for p in self.points if p.scheme == name]


def run_sweep(cfg: SweepConfig, code: LdpcCode = None,
              spec: ConstellationSpec = None) -> SweepResult:
    """BLER/throughput sweep with paired seeds across schemes."""
    code = code or LdpcCode.from_file()
    spec = spec or ConstellationSpec.qam(4)
    points = []
    warns = []
    for snr_idx, snr_db in enumerate(cfg.snr_points_db):
        for scheme in cfg.schemes:
            pattern = cfg.link.pattern(scheme.pattern)
            blocks_per_slot, _ = pack_slot(pattern.data_capacity, spec.m_order, code)
            n_slots = int(np.ceil(cfg.blocks_per_point / blocks_per_slot))
            tot_blocks = 0
            tot_errors = 0
            for slot_idx in range(n_slots):
                rep = simulate_slot(scheme, cfg.link, code, spec, snr_db,
                                    cfg.seed, snr_idx, slot_idx)
                tot_blocks += rep.n_blocks
                tot_errors += rep.block_errors
            bler = tot_errors / tot_blocks
            lo, hi = wilson_interval(tot_errors, tot_blocks)
            info_bits_per_slot = blocks_per_slot * code.k
            pt = SweepPoint(scheme=scheme.name, snr_db=snr_db, n_blocks=tot_blocks,
                            block_errors=tot_errors, bler=bler, ci_lo=lo, ci_hi=hi,
                            throughput_bps=throughput_bps(bler, info_bits_per_slot))
            points.append(pt)
            if 0 < tot_errors < 100:
                msg = (f"scheme '{scheme.name}' at {snr_db} dB: only {tot_errors} "
                       f"block errors observed; BLER estimate is coarse")
                warns.append(msg)
                warnings.warn(msg)
    return SweepResult(points=points, warnings=warns)


def sweep_csv(result: SweepResult, scheme_name: str) -> str:
    """Schema-stable per-scheme CSV: snr_db, bler, ci_lo, ci_hi, throughput_bps."""
    lines = ["snr_db,bler,ci_lo,ci_hi,throughput_bps"]
    for p in result.for_scheme(scheme_name):
        lines.append(f"{p.snr_db:.17g},{p.bler:.17g},{p.ci_lo:.17g},"
                     f"{p.ci_hi:.17g},{p.throughput_bps:.17g}")
    return "\n".join(lines) + "\n"


def slot_reports_csv(reports: list) -> str:
    lines = ["slot,snr_db,n_blocks,block_errors,n_info_bits,bit_errors,"
             "llr_mean_abs,llr_min_abs,decoder_converged"]
    for i, r in enumerate(reports):
        lines.append(f"{i},{r.snr_db:.17g},{r.n_blocks},{r.block_errors},"
                     f"{r.n_info_bits},{r.bit_errors},{r.llr_mean_abs:.17g},"
                     f"{r.llr_min_abs:.17g},{r.decoder_converged}")
    return "\n".join(lines) + "\n"


def transmit_image(image: np.ndarray, scheme: SchemeSpec, link: LinkConfig,
                   snr_db: float, seed: int, code: LdpcCode = None,
                   spec: ConstellationSpec = None) -> tuple:
    """Send an image through the coded chain; returns (recovered, reports).

    The bitstream is chunked into whole-slot payloads (zero padded at the
    tail) and each slot uses its own paired RNG streams.
    """
    from .imaging import bits_to_image, image_to_bits

    code = code or LdpcCode.from_file()
    spec = spec or ConstellationSpec.qam(4)
    pattern = link.pattern(scheme.pattern)
    n_blocks, _ = pack_slot(pattern.data_capacity, spec.m_order, code)
    bits_per_slot = n_blocks * code.k

    bits = image_to_bits(image)
    n_slots = int(np.ceil(bits.size / bits_per_slot))
    padded = np.zeros(n_slots * bits_per_slot, dtype=np.uint8)
    padded[:bits.size] = bits

    recovered = np.zeros_like(padded)
    reports = []
    for slot_idx in range(n_slots):
        payload = padded[slot_idx * bits_per_slot:(slot_idx + 1) * bits_per_slot]
        rep = simulate_slot(scheme, link, code, spec, snr_db, seed, 0, slot_idx,
                            payload_info_bits=payload)
        reports.append(rep)
        recovered[slot_idx * bits_per_slot:(slot_idx + 1) * bits_per_slot] = rep.decoded_info
    h, w = image.shape
    return bits_to_image(recovered[:bits.size], h, w), reports
