"""Gray-mapped square QAM with zero-mean/unit-power normalization and a
max-log soft demapper.

LLR sign convention used everywhere in this package: L = log(P(b=0)/P(b=1)),
so positive LLR favors bit 0.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSet, LengthMismatch


def normalize_constellation(points: np.ndarray) -> np.ndarray:
    """Center and scale points to zero mean and unit average power.

    c_tilde = (c - mean) / std with std = sqrt(mean|c|^2 - |mean c|^2).
    """
    pts = np.asarray(points, dtype=complex)
    if pts.size < 2 or np.all(pts == pts.flat[0]):
        raise DegenerateSet("need at least 2 distinct constellation points")
    mu = pts.mean()
    power = np.mean(np.abs(pts) ** 2)
    var = power - abs(mu) ** 2
    if var <= 0.0:
        raise DegenerateSet("constellation has zero spread")
    return (pts - mu) / np.sqrt(var)


def _gray_axis_levels(bits_per_axis: int) -> np.ndarray:
    """levels[gray_label] = amplitude, for one I/Q axis.

    Ascending amplitudes {-(2^m - 1), ..., -1, +1, ..., +(2^m - 1)} are
    labeled in Gray order, so adjacent levels differ in exactly one bit.
    """
    m = bits_per_axis
    n = 1 << m
    levels = np.zeros(n)
    for i in range(n):
        gray = i ^ (i >> 1)
        levels[gray] = 2 * i - (n - 1)
    return levels


@dataclass(frozen=True)
class ConstellationSpec:
    """M bits/symbol square QAM (2^M points), Gray labeled per axis.

    points[v] is the symbol whose M-bit label (MSB first) is v; the first
    M/2 bits select the I level, the last M/2 the Q level. 16-QAM maps bit
    pairs {00,01,11,10} -> {-3,-1,+1,+3}/sqrt(10) on each axis.
    """

    m_order: int
    points: np.ndarray
    labels: np.ndarray  # (2^M, M) bit rows, labels[v] = binary of v

    @staticmethod
    def qam(m_order: int = 4) -> "ConstellationSpec":
        if m_order % 2 != 0 or m_order < 2:
            raise ValueError(f"square QAM needs even bits/symbol, got {m_order}")
        half = m_order // 2
        axis = _gray_axis_levels(half)
        n = 1 << m_order
        pts = np.zeros(n, dtype=complex)
        labels = np.zeros((n, m_order), dtype=np.uint8)
        for v in range(n):
            i_label = v >> half
            q_label = v & ((1 << half) - 1)
            pts[v] = axis[i_label] + 1j * axis[q_label]
            labels[v] = [(v >> (m_order - 1 - b)) & 1 for b in range(m_order)]
        scale = np.sqrt(np.mean(np.abs(pts) ** 2))
        return ConstellationSpec(m_order=m_order, points=pts / scale, labels=labels)

    @property
    def n_points(self) -> int:
        return 1 << self.m_order


def qam_map(bits: np.ndarray, spec: ConstellationSpec) -> np.ndarray:
    """Bits (MSB-first groups of M) -> complex symbols."""
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
    m = spec.m_order
    if bits.size % m != 0:
        raise LengthMismatch(f"bit count {bits.size} not divisible by {m}")
    groups = bits.reshape(-1, m)
    weights = 1 << np.arange(m - 1, -1, -1)
    values = groups @ weights
    return spec.points[values]


def qam_demap_hard(symbols: np.ndarray, spec: ConstellationSpec) -> np.ndarray:
    """Nearest-point hard decision back to bits."""
    symbols = np.asarray(symbols, dtype=complex).reshape(-1)
    d2 = np.abs(symbols[:, None] - spec.points[None, :]) ** 2
    idx = np.argmin(d2, axis=1)
    return spec.labels[idx].reshape(-1)


def qam_demap_llr(y_eq: np.ndarray, noise_var: float, spec: ConstellationSpec) -> np.ndarray:
    """Max-log LLRs, shape (n_symbols, M).

    L_i = (min_{c: b_i=1} |y - c|^2 - min_{c: b_i=0} |y - c|^2) / noise_var,
    positive when bit 0 is more likely.
    """
    if noise_var <= 0.0:
        raise ValueError(f"noise_var must be positive, got {noise_var}")
    y = np.atleast_1d(np.asarray(y_eq, dtype=complex)).reshape(-1)
    d2 = np.abs(y[:, None] - spec.points[None, :]) ** 2  # (n_sym, 2^M)
    llr = np.zeros((y.size, spec.m_order))
    for b in range(spec.m_order):
        mask1 = spec.labels[:, b] == 1
        min1 = d2[:, mask1].min(axis=1)
        min0 = d2[:, ~mask1].min(axis=1)
        llr[:, b] = (min1 - min0) / noise_var
    return llr
