"""Resource-grid assembly, pilot multiplexing, precoding, and channel I/O.

The slot is a 72 x 14 grid of resource elements. Two pilot layouts exist:

* Full   - every subcarrier of OFDM symbols 2 and 3 (144 pilot REs),
* Sparse - a comb of every 6th subcarrier in symbol 3 only (12 pilot REs),

so the sparse layout cuts pilot overhead by 12/144 = 91.7%. Data REs fill
in (symbol, subcarrier) lexicographic order: symbol row 0 first, low
subcarriers first, which is also the order the Moduformer consumes.

Transmission is single-stream: one eigen-beamforming vector per slot,
computed from the slot-averaged channel Gram matrix, applied to every RE.
The per-RE receive SNR definition used throughout: snr = E||H w x||^2 /
(N_BS sigma^2) with the expectation over the slot's REs at unit symbol
power.
"""

import enum
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelRealization
from .errors import DimMismatch, LengthMismatch, ZeroChannel
from .seeding import substream

N_SUBCARRIERS = 72
N_SYMBOLS = 14
FULL_PILOT_SYMBOLS = (2, 3)
SPARSE_PILOT_SYMBOL = 3
SPARSE_COMB_SPACING = 6


class ReKind(enum.IntEnum):
    DATA = 0
    PILOT = 1
    NULL = 2


@dataclass(frozen=True)
class PilotPattern:
    """Pilot RE positions plus the known unit-modulus pilot sequence."""

    kind: str                      # "full" or "sparse"
    pilot_res: tuple               # ((subcarrier, symbol), ...) in fill order
    pilot_seq: np.ndarray          # complex, one per pilot RE
    n_c: int = N_SUBCARRIERS
    n_s: int = N_SYMBOLS

    @staticmethod
    def full(seed: int = 1234, n_c: int = N_SUBCARRIERS, n_s: int = N_SYMBOLS) -> "PilotPattern":
        res = tuple((c, s) for s in FULL_PILOT_SYMBOLS for c in range(n_c))
        return PilotPattern("full", res, _qpsk_sequence(seed, len(res)), n_c, n_s)

    @staticmethod
    def sparse(seed: int = 1234, n_c: int = N_SUBCARRIERS, n_s: int = N_SYMBOLS) -> "PilotPattern":
        res = tuple((c, SPARSE_PILOT_SYMBOL) for c in range(0, n_c, SPARSE_COMB_SPACING))
        return PilotPattern("sparse", res, _qpsk_sequence(seed, len(res)), n_c, n_s)

    @staticmethod
    def by_name(name: str, seed: int = 1234) -> "PilotPattern":
        if name == "full":
            return PilotPattern.full(seed)
        if name == "sparse":
            return PilotPattern.sparse(seed)
        raise ValueError(f"unknown pilot pattern '{name}'")

    @property
    def n_pilots(self) -> int:
        return len(self.pilot_res)

    @property
    def data_capacity(self) -> int:
        return self.n_c * self.n_s - self.n_pilots

    def mask(self) -> np.ndarray:
        """(n_c, n_s) array of ReKind values."""
        m = np.full((self.n_c, self.n_s), int(ReKind.DATA), dtype=np.uint8)
        for c, s in self.pilot_res:
            m[c, s] = int(ReKind.PILOT)
        return m

    def data_res(self) -> list:
        """Data RE coordinates in fill order: symbol-major, subcarrier-minor."""
        pilots = set(self.pilot_res)
        return [(c, s) for s in range(self.n_s) for c in range(self.n_c)
                if (c, s) not in pilots]


def _qpsk_sequence(seed: int, count: int) -> np.ndarray:
    rng = substream(seed, 0xB17)
    phases = rng.integers(0, 4, size=count)
    return np.exp(1j * (np.pi / 4.0 + np.pi / 2.0 * phases))


@dataclass
class ResourceGrid:
    """Single-stream symbols on the grid plus the pilot/data mask."""

    res: np.ndarray   # (n_c, n_s) complex
    mask: np.ndarray  # (n_c, n_s) uint8 of ReKind

    @property
    def n_c(self) -> int:
        return self.res.shape[0]

    @property
    def n_s(self) -> int:
        return self.res.shape[1]


def build_grid(data_symbols: np.ndarray, pattern: PilotPattern) -> ResourceGrid:
    """Place data symbols (fill order) and pilots onto a fresh grid."""
    data_symbols = np.asarray(data_symbols, dtype=complex).reshape(-1)
    if data_symbols.size != pattern.data_capacity:
        raise LengthMismatch(
            f"need {pattern.data_capacity} data symbols, got {data_symbols.size}")
    res = np.zeros((pattern.n_c, pattern.n_s), dtype=complex)
    for (c, s), p in zip(pattern.pilot_res, pattern.pilot_seq):
        res[c, s] = p
    for (c, s), d in zip(pattern.data_res(), data_symbols):
        res[c, s] = d
    return ResourceGrid(res=res, mask=pattern.mask())


def extract_data(grid: ResourceGrid, pattern: PilotPattern) -> np.ndarray:
    """Inverse of build_grid's data placement."""
    coords = pattern.data_res()
    return np.array([grid.res[c, s] for c, s in coords], dtype=complex)


@dataclass
class TxSlot:
    """Precoded transmit slot: grid symbols and the beamforming vector."""

    grid: ResourceGrid
    w: np.ndarray  # (n_uav,) unit norm

    def signal(self) -> np.ndarray:
        """Per-RE transmit vectors, shape (n_c, n_s, n_uav)."""
        return self.grid.res[:, :, None] * self.w[None, None, :]


@dataclass
class RxSlot:
    """Received per-RE vectors and the noise variance that produced them."""

    y: np.ndarray          # (n_c, n_s, n_bs) complex
    noise_var: float


def ezf_precode(h: np.ndarray) -> np.ndarray:
    """Dominant right singular vector of one channel matrix, unit norm.

    The global phase is canonicalized so the largest-magnitude entry is
    real positive (keeps golden vectors and interpolation stable).
    """
    h = np.asarray(h, dtype=complex)
    if not np.any(h):
        raise ZeroChannel("channel matrix is zero")
    _, _, vh = np.linalg.svd(h, full_matrices=False)
    v = vh[0].conj()
    return _canonical_phase(v)


def ezf_precode_slot(chan: ChannelRealization) -> np.ndarray:
    """Slot-level beamformer: top eigenvector of the RE-averaged Gram matrix.

    Maximizes the average beamformed power sum_re ||H(re) w||^2 and gives a
    single smooth precoder for the whole slot.
    """
    h = chan.h  # (n_s, n_c, n_bs, n_uav)
    if not np.any(h):
        raise ZeroChannel("channel realization is zero")
    gram = np.einsum("scij,scik->jk", h.conj(), h) / (h.shape[0] * h.shape[1])
    vals, vecs = np.linalg.eigh(gram)
    return _canonical_phase(vecs[:, -1])


def _canonical_phase(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v)
    pivot = np.argmax(np.abs(v))
    phase = v[pivot] / abs(v[pivot])
    return v * phase.conj()


def effective_channel(chan: ChannelRealization, w: np.ndarray) -> np.ndarray:
    """Post-precoding channel vectors h_eff(re) = H(re) w, (n_c, n_s, n_bs)."""
    if chan.h.shape[3] != w.shape[0]:
        raise DimMismatch(f"precoder length {w.shape[0]} != n_uav {chan.h.shape[3]}")
    heff = np.einsum("scij,j->sci", chan.h, w)  # (n_s, n_c, n_bs)
    return heff.transpose(1, 0, 2)


def noise_variance_for_snr(chan: ChannelRealization, w: np.ndarray, snr_db: float) -> float:
    """sigma^2 so the slot-average per-antenna receive SNR equals snr_db."""
    heff = effective_channel(chan, w)
    mean_rx_power = float(np.mean(np.sum(np.abs(heff) ** 2, axis=-1)))
    n_bs = heff.shape[-1]
    return mean_rx_power / n_bs * 10.0 ** (-snr_db / 10.0)


def apply_channel(tx: TxSlot, chan: ChannelRealization, snr_db: float,
                  rng: np.random.Generator, noise_var: float = None) -> RxSlot:
    """y(re) = H(re) s(re) + n, n ~ CN(0, sigma^2 I).

    sigma^2 follows the documented per-antenna SNR definition unless
    ``noise_var`` overrides it (e.g. noise-only calibration runs).
    """
    n_c, n_s = tx.grid.res.shape
    if chan.h.shape[0] != n_s or chan.h.shape[1] != n_c:
        raise DimMismatch(f"channel grid {chan.h.shape[:2]} vs slot ({n_s}, {n_c})")
    if chan.h.shape[3] != tx.w.shape[0]:
        raise DimMismatch("precoder / channel n_uav mismatch")
    heff = effective_channel(chan, tx.w)            # (n_c, n_s, n_bs)
    if noise_var is None:
        noise_var = noise_variance_for_snr(chan, tx.w, snr_db)
    clean = heff * tx.grid.res[:, :, None]
    n_bs = heff.shape[-1]
    noise = (rng.standard_normal((n_c, n_s, n_bs)) + 1j * rng.standard_normal((n_c, n_s, n_bs)))
    noise *= np.sqrt(noise_var / 2.0)
    return RxSlot(y=clean + noise, noise_var=float(noise_var))


def mrc_combine(y: np.ndarray, h_eff: np.ndarray) -> tuple:
    """Unbiased matched-filter combine: (h^H y / ||h||^2, ||h||^2).

    The second element is the post-combining SNR gain: post-SNR =
    ||h_eff||^2 / sigma^2. Accepts single vectors or (..., n_bs) stacks.
    """
    y = np.asarray(y, dtype=complex)
    h = np.asarray(h_eff, dtype=complex)
    gain = np.sum(np.abs(h) ** 2, axis=-1)
    if np.any(gain == 0.0):
        raise ZeroChannel("effective channel is zero")
    z = np.sum(h.conj() * y, axis=-1) / gain
    return z, gain
