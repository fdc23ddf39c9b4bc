"""Pilot-based channel estimation, interpolation, equalization, and the
perfect-CSI genie receiver.

All estimators work on the post-precoding effective channel h_eff(re) =
H(re) w, an N_BS vector per RE. LS estimates live at pilot REs; the
interpolator extends them to the whole grid (linear across subcarriers
within the pilot symbol, nearest across symbols, nearest at edges). The
LMMSE variant smooths the raw LS estimates over frequency with an
exponential correlation prior before interpolating.

LLRs are computed from the unbiased MRC-combined symbol with its effective
noise variance sigma^2 / ||h_eff||^2; the scalar MMSE equalizer supplies
the shrinkage symbol estimates reported for EVM-style diagnostics (the
cited iterative WMMSE collapses to scalar MMSE in this single-stream
setting).
"""

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization
from .errors import NoPilots, ZeroChannel
from .modulation import ConstellationSpec, qam_demap_llr
from .ofdm import PilotPattern, RxSlot, effective_channel


@dataclass
class ChannelEstimate:
    """Effective-channel estimate on the grid.

    h_eff: (n_c, n_s, n_bs) complex, NaN where undefined; quality holds a
    per-RE error-variance estimate; defined marks REs holding estimates.
    """

    h_eff: np.ndarray
    quality: np.ndarray
    defined: np.ndarray


def ls_estimate(rx: RxSlot, pattern: PilotPattern) -> ChannelEstimate:
    """Per-pilot-RE least squares: h_hat = y p* / |p|^2."""
    if pattern.n_pilots == 0:
        raise NoPilots("pattern has no pilot REs")
    n_c, n_s, n_bs = rx.y.shape
    h = np.full((n_c, n_s, n_bs), np.nan, dtype=complex)
    quality = np.full((n_c, n_s), np.nan)
    defined = np.zeros((n_c, n_s), dtype=bool)
    for (c, s), p in zip(pattern.pilot_res, pattern.pilot_seq):
        h[c, s] = rx.y[c, s] * np.conj(p) / (abs(p) ** 2)
        quality[c, s] = rx.noise_var * n_bs / (abs(p) ** 2)
        defined[c, s] = True
    return ChannelEstimate(h_eff=h, quality=quality, defined=defined)


def lmmse_smooth(est: ChannelEstimate, pattern: PilotPattern, noise_var: float,
                 correlation: float = 0.9) -> ChannelEstimate:
    """LMMSE re-estimation across frequency within each pilot symbol.

    Prior: exponential subcarrier correlation R[i, j] = rho^|c_i - c_j|
    with unit channel power per antenna. Produces estimates on every
    subcarrier of each pilot symbol.
    """
    n_c, n_s, n_bs = est.h_eff.shape
    out_h = np.full_like(est.h_eff, np.nan)
    out_q = np.full((n_c, n_s), np.nan)
    out_d = np.zeros((n_c, n_s), dtype=bool)
    pilot_symbols = sorted({s for _, s in pattern.pilot_res})
    for s in pilot_symbols:
        carriers = np.array(sorted(c for c, ss in pattern.pilot_res if ss == s))
        raw = est.h_eff[carriers, s, :]                          # (n_p, n_bs)
        r_pp = correlation ** np.abs(carriers[:, None] - carriers[None, :])
        # Per-antenna mean pilot power stands in for the channel power scale.
        power = max(float(np.mean(np.abs(raw) ** 2)) - noise_var, 1e-12)
        gain = np.linalg.solve((power * r_pp + noise_var * np.eye(len(carriers))).T,
                               (power * correlation ** np.abs(np.arange(n_c)[:, None] - carriers[None, :])).T).T
        out_h[:, s, :] = gain @ raw                               # (n_c, n_bs)
        out_q[:, s] = noise_var * n_bs * np.sum(gain ** 2, axis=1)
        out_d[:, s] = True
    return ChannelEstimate(h_eff=out_h, quality=out_q, defined=out_d)


def interpolate(est: ChannelEstimate, pattern: PilotPattern,
                grid_dims: tuple = None) -> ChannelEstimate:
    """Extend pilot-RE estimates to every RE of the grid.

    Linear interpolation across subcarriers within each estimated symbol,
    nearest-neighbor extrapolation at band edges, then nearest (hold)
    across OFDM symbols.
    """
    n_c, n_s, n_bs = est.h_eff.shape
    if grid_dims is not None and grid_dims != (n_c, n_s):
        raise ValueError(f"grid dims {grid_dims} do not match estimate {(n_c, n_s)}")
    if not est.defined.any():
        raise NoPilots("no defined estimates to interpolate")
    full_h = np.zeros_like(est.h_eff)
    full_q = np.zeros((n_c, n_s))
    est_symbols = sorted(set(np.flatnonzero(est.defined.any(axis=0))))
    per_symbol = {}
    for s in est_symbols:
        carriers = np.flatnonzero(est.defined[:, s])
        vals = est.h_eff[carriers, s, :]
        q = est.quality[carriers, s]
        col = np.empty((n_c, n_bs), dtype=complex)
        colq = np.empty(n_c)
        grid = np.arange(n_c)
        for b in range(n_bs):
            col[:, b] = (np.interp(grid, carriers, vals[:, b].real)
                         + 1j * np.interp(grid, carriers, vals[:, b].imag))
        colq[:] = np.interp(grid, carriers, q)
        per_symbol[s] = (col, colq)
    sym_arr = np.array(est_symbols)
    for s in range(n_s):
        nearest = sym_arr[np.argmin(np.abs(sym_arr - s))]
        col, colq = per_symbol[nearest]
        full_h[:, s, :] = col
        full_q[:, s] = colq
    return ChannelEstimate(h_eff=full_h, quality=full_q,
                           defined=np.ones((n_c, n_s), dtype=bool))


def mmse_equalize(y_combined, h_hat, noise_var: float):
    """Scalar MMSE symbol estimate x_hat = h* y / (|h|^2 + sigma^2)."""
    y = np.asarray(y_combined, dtype=complex)
    h = np.asarray(h_hat, dtype=complex)
    return np.conj(h) * y / (np.abs(h) ** 2 + noise_var)


def llr_grid_from_estimate(rx: RxSlot, est: ChannelEstimate, pattern: PilotPattern,
                           spec: ConstellationSpec) -> np.ndarray:
    """(n_c, n_s, M) LLRs on data REs (zero elsewhere) from a full estimate.

    The combining divisor removes the known estimation-noise bias:
    E||h_hat||^2 = ||h||^2 + quality, so dividing by ||h_hat||^2 alone
    would shrink 16-QAM amplitudes systematically at low pilot SNR. The
    effective noise variance likewise includes the estimation error.
    """
    n_c, n_s, n_bs = rx.y.shape
    llr = np.zeros((n_c, n_s, spec.m_order))
    coords = pattern.data_res()
    cs = np.array([c for c, _ in coords])
    ss = np.array([s for _, s in coords])
    h = est.h_eff[cs, ss, :]
    gain = np.sum(np.abs(h) ** 2, axis=-1)
    if np.any(gain == 0.0):
        raise ZeroChannel("estimated effective channel is zero on a data RE")
    quality = np.nan_to_num(est.quality[cs, ss], nan=0.0)
    gain_corr = np.maximum(gain - quality, 0.05 * gain)
    z = np.sum(h.conj() * rx.y[cs, ss, :], axis=-1) / gain_corr
    eff_nv = (rx.noise_var * gain + quality * (rx.noise_var + gain_corr / n_bs)) \
        / (gain_corr ** 2)
    eff_nv = np.maximum(eff_nv, 1e-300)
    # Max-log LLRs scale as 1/sigma^2, so demap once at unit variance and
    # rescale with each RE's post-combining noise variance.
    vals = qam_demap_llr(z, 1.0, spec) / eff_nv[:, None]
    llr[cs, ss, :] = vals
    return llr


def genie_receiver(rx: RxSlot, chan: ChannelRealization, w: np.ndarray,
                   pattern: PilotPattern, spec: ConstellationSpec) -> np.ndarray:
    """Perfect-CSI receiver: true h_eff, MRC combine, demap. Returns the
    (n_c, n_s, M) LLR grid with zeros outside data REs."""
    heff = effective_channel(chan, w)
    est = ChannelEstimate(h_eff=heff,
                          quality=np.zeros(heff.shape[:2]),
                          defined=np.ones(heff.shape[:2], dtype=bool))
    return llr_grid_from_estimate(rx, est, pattern, spec)
