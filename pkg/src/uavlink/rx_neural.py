"""Deep-Rx: residual convolutional receiver from grid features to bit LLRs.

Input features per RE (F_in = 5): Re/Im of the MRC-combined received
symbol, the pilot-position mask, and Re/Im of the scalar LS anchor at
pilot REs (zero elsewhere). Combining uses the interpolated sparse-pilot
LS estimate, so the network sees roughly equalized symbols plus the raw
anchors and learns the residual estimation/equalization/demapping jointly.

Normalization inside the residual blocks is layer norm over the channel
axis - deterministic for single-slot inference, no batch statistics.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimMismatch, ShapeMismatch
from .ofdm import PilotPattern, RxSlot
from .rx_classical import ChannelEstimate, interpolate, ls_estimate

F_IN = 5


@dataclass
class DeepRxParams:
    """Stem conv (F_in->width), n residual blocks, head conv (width->M)."""

    width: int
    n_blocks: int
    m_bits: int
    tensors: dict = field(default_factory=dict)

    @staticmethod
    def init(rng: np.random.Generator, width: int = 32, n_blocks: int = 2,
             m_bits: int = 4, f_in: int = F_IN, head_scale: float = 0.01) -> "DeepRxParams":
        def conv_w(c_out, c_in, scale=None):
            if scale is None:
                scale = math.sqrt(2.0 / (c_in * 9))
            return ad.parameter(rng.normal(0.0, scale, size=(c_out, c_in, 3, 3)))

        t = {"stem_w": conv_w(width, f_in), "stem_b": ad.parameter(np.zeros(width))}
        for i in range(n_blocks):
            t[f"blk{i}_w1"] = conv_w(width, width)
            t[f"blk{i}_b1"] = ad.parameter(np.zeros(width))
            t[f"blk{i}_w2"] = conv_w(width, width)
            t[f"blk{i}_b2"] = ad.parameter(np.zeros(width))
        # Small (or zero) head: zero weights give all-zero LLRs.
        t["head_w"] = conv_w(m_bits, width, scale=head_scale) if head_scale > 0 else \
            ad.parameter(np.zeros((m_bits, width, 3, 3)))
        t["head_b"] = ad.parameter(np.zeros(m_bits))
        return DeepRxParams(width=width, n_blocks=n_blocks, m_bits=m_bits, tensors=t)

    @property
    def n_params(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def named(self, prefix: str = "") -> dict:
        return {prefix + k: v for k, v in self.tensors.items()}


def deeprx_features(rx: RxSlot, pattern: PilotPattern,
                    est_pilots: ChannelEstimate = None) -> np.ndarray:
    """Feature grid (n_c, n_s, 5) for the network.

    est_pilots defaults to the LS estimate of this slot; only its pilot-RE
    entries are used, both for the anchor channels and (after
    interpolation) for the combining weights.
    """
    n_c, n_s, _ = rx.y.shape
    if (n_c, n_s) != (pattern.n_c, pattern.n_s):
        raise DimMismatch(f"slot {(n_c, n_s)} vs pattern {(pattern.n_c, pattern.n_s)}")
    if est_pilots is None:
        est_pilots = ls_estimate(rx, pattern)
    full = interpolate(est_pilots, pattern)
    h = full.h_eff                                         # (n_c, n_s, n_bs)
    gain = np.sum(np.abs(h) ** 2, axis=-1)
    gain = np.where(gain == 0.0, 1.0, gain)
    combined = np.sum(h.conj() * rx.y, axis=-1) / gain     # (n_c, n_s)

    mask = np.zeros((n_c, n_s))
    anchor = np.zeros((n_c, n_s), dtype=complex)
    for (c, s), p in zip(pattern.pilot_res, pattern.pilot_seq):
        mask[c, s] = 1.0
        # Scalar LS on the combined grid: post-combining channel at anchors.
        anchor[c, s] = combined[c, s] * np.conj(p) / (abs(p) ** 2)

    feats = np.zeros((n_c, n_s, F_IN))
    feats[:, :, 0] = combined.real
    feats[:, :, 1] = combined.imag
    feats[:, :, 2] = mask
    feats[:, :, 3] = anchor.real
    feats[:, :, 4] = anchor.imag
    return feats


def deeprx_apply(features: Tensor, params: DeepRxParams) -> Tensor:
    """Differentiable forward: (n_c, n_s, F_in) -> (n_c, n_s, M) LLRs."""
    if features.shape[-1] != params.tensors["stem_w"].shape[1]:
        raise ShapeMismatch(
            f"feature channels {features.shape[-1]} != stem input "
            f"{params.tensors['stem_w'].shape[1]}")
    t = params.tensors
    x = ad.transpose(features, (2, 0, 1))                  # (C, H, W)
    h = ad.conv2d(x, t["stem_w"], t["stem_b"])
    for i in range(params.n_blocks):
        y = ad.conv2d(h, t[f"blk{i}_w1"], t[f"blk{i}_b1"])
        y = ad.relu(ad.layernorm(y, axis=0))
        y = ad.conv2d(y, t[f"blk{i}_w2"], t[f"blk{i}_b2"])
        h = ad.add(h, y)
    llr = ad.conv2d(h, t["head_w"], t["head_b"])           # (M, H, W)
    return ad.transpose(llr, (1, 2, 0))


def deeprx_forward(features: np.ndarray, params: DeepRxParams) -> np.ndarray:
    """Inference wrapper over numpy features; returns (n_c, n_s, M) LLRs."""
    return deeprx_apply(ad.tensor(features), params).values
