"""Rate-1/2 quasi-cyclic LDPC encoding and normalized min-sum decoding.

The code ships as a plain-text base matrix of circulant shifts (-1 = zero
block), lifted by Z at load time. Encoding solves H [s p]^T = 0 for the
parity half with a precomputed GF(2) inverse of the parity submatrix, so
any base matrix with an invertible parity part works. Decoding is flooding
normalized min-sum (factor 0.8) with early exit on a clean syndrome.

Block for BLER purposes = one codeword; a block errs when any decoded info
bit differs from the transmitted one.
"""

from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import LengthMismatch, SlotTooSmall

DEFAULT_CODE_FILE = "qc_r12_n648_z27.txt"
MINSUM_FACTOR = 0.8
MAX_ITERS = 25


def load_base_matrix(path=None) -> np.ndarray:
    """Read a base matrix: '#' comments, whitespace-separated ints, -1 = zero block."""
    if path is None:
        text = resources.files("uavlink.data").joinpath(DEFAULT_CODE_FILE).read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    rows = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append([int(tok) for tok in line.split()])
    base = np.array(rows, dtype=int)
    if base.ndim != 2:
        raise ValueError("base matrix file must be rectangular")
    return base


def _gf2_inverse(mat: np.ndarray) -> np.ndarray:
    """Invert a binary matrix over GF(2) by Gauss-Jordan elimination."""
    n = mat.shape[0]
    aug = np.concatenate([mat.astype(np.uint8) % 2, np.eye(n, dtype=np.uint8)], axis=1)
    for col in range(n):
        pivot = None
        for r in range(col, n):
            if aug[r, col]:
                pivot = r
                break
        if pivot is None:
            raise ValueError("parity submatrix is singular over GF(2)")
        if pivot != col:
            aug[[col, pivot]] = aug[[pivot, col]]
        hits = np.flatnonzero(aug[:, col])
        hits = hits[hits != col]
        aug[hits] ^= aug[col]
    return aug[:, n:]


@dataclass
class LdpcCode:
    """Lifted code: dense H plus the precomputed parity solve matrix."""

    base_matrix: np.ndarray
    lift_size: int
    h: np.ndarray            # (n-k, n) uint8 parity-check matrix
    encode_mat: np.ndarray   # (n-k, k): p = encode_mat @ s mod 2
    check_edges: np.ndarray  # (n_checks, max_row_weight) var indices, -1 pad
    check_degree: np.ndarray

    @staticmethod
    def from_file(path=None, lift_size: int = 27) -> "LdpcCode":
        base = load_base_matrix(path)
        return LdpcCode.from_base(base, lift_size)

    @staticmethod
    def from_base(base: np.ndarray, lift_size: int) -> "LdpcCode":
        z = lift_size
        mb, nb = base.shape
        m, n = mb * z, nb * z
        h = np.zeros((m, n), dtype=np.uint8)
        eye = np.eye(z, dtype=np.uint8)
        for br in range(mb):
            for bc in range(nb):
                shift = base[br, bc]
                if shift < 0:
                    continue
                # P^shift: row r has its 1 at column (r + shift) mod Z.
                h[br * z:(br + 1) * z, bc * z:(bc + 1) * z] = np.roll(eye, -(shift % z), axis=0)
        k = n - m
        a_part = h[:, :k].astype(np.uint8)
        b_part = h[:, k:].astype(np.uint8)
        b_inv = _gf2_inverse(b_part)
        # p = B^{-1} A s; int32 matmul keeps the row sums exact before mod 2.
        encode_mat = (b_inv.astype(np.int32) @ a_part.astype(np.int32)) % 2
        max_w = int((h > 0).sum(axis=1).max())
        edges = -np.ones((m, max_w), dtype=np.int64)
        degree = np.zeros(m, dtype=np.int64)
        for r in range(m):
            idx = np.flatnonzero(h[r])
            edges[r, :idx.size] = idx
            degree[r] = idx.size
        return LdpcCode(base_matrix=base, lift_size=z, h=h,
                        encode_mat=encode_mat.astype(np.uint8),
                        check_edges=edges, check_degree=degree)

    @property
    def n(self) -> int:
        return self.h.shape[1]

    @property
    def k(self) -> int:
        return self.n - self.h.shape[0]

    @property
    def rate(self) -> float:
        return self.k / self.n


@dataclass
class CodedBlock:
    info_bits: np.ndarray
    code_bits: np.ndarray


def encode(info: np.ndarray, code: LdpcCode) -> np.ndarray:
    """Systematic codeword [info | parity]; supports (k,) or (B, k) input."""
    info = np.asarray(info, dtype=np.uint8)
    single = info.ndim == 1
    batch = info.reshape(1, -1) if single else info
    if batch.shape[1] != code.k:
        raise LengthMismatch(f"info length {batch.shape[1]} != k = {code.k}")
    parity = (code.encode_mat.astype(np.int32) @ batch.T.astype(np.int32)) % 2
    out = np.concatenate([batch, parity.T.astype(np.uint8)], axis=1)
    return out[0] if single else out


def syndrome(code_bits: np.ndarray, code: LdpcCode) -> np.ndarray:
    """H c^T over GF(2); zero vector iff c is a codeword."""
    c = np.asarray(code_bits, dtype=np.int32)
    single = c.ndim == 1
    batch = c.reshape(1, -1) if single else c
    s = (batch @ code.h.T.astype(np.int32)) % 2
    return (s[0] if single else s).astype(np.uint8)


def decode(llr: np.ndarray, code: LdpcCode, max_iters: int = MAX_ITERS,
           norm_factor: float = MINSUM_FACTOR) -> tuple:
    """Normalized min-sum decode; returns (info_bits, converged).

    LLR convention L = log(P(b=0)/P(b=1)). Accepts (n,) or (B, n) input;
    batched input returns (B, k) bits and a (B,) flag array. Convergence
    requires a zero syndrome AND strictly nonzero posteriors (an exactly
    zero posterior is an unresolved erasure, never a decoding success).
    """
    llr = np.asarray(llr, dtype=np.float64)
    single = llr.ndim == 1
    batch = llr.reshape(1, -1) if single else llr
    if batch.shape[1] != code.n:
        raise LengthMismatch(f"LLR length {batch.shape[1]} != n = {code.n}")
    nb = batch.shape[0]

    edges = code.check_edges                      # (m, w) with -1 pads
    pad = edges < 0
    safe_edges = np.where(pad, 0, edges)
    m, w = edges.shape

    c2v = np.zeros((nb, m, w))
    total = batch.copy()
    converged = np.zeros(nb, dtype=bool)
    # Flat accumulation indices: batch-row offset + variable index per edge slot.
    flat_idx = (np.arange(nb)[:, None] * code.n + safe_edges.reshape(1, -1)).ravel()

    def check_state(t):
        hard = (t < 0).astype(np.int32)           # L < 0 -> bit 1
        synd_ok = ~np.any(syndrome(hard, code).astype(bool), axis=1)
        solid = ~np.any(t == 0.0, axis=1)
        return hard, synd_ok & solid

    hard, ok = check_state(total)
    converged |= ok
    for _ in range(max_iters):
        if converged.all():
            break
        active = ~converged
        # Variable-to-check: total belief minus this check's last message.
        v2c = total[:, safe_edges] - c2v          # (nb, m, w)
        mag = np.where(pad, np.inf, np.abs(v2c))
        sign = np.where(pad, 1.0, np.sign(v2c))
        sign = np.where(sign == 0.0, 1.0, sign)
        part = np.partition(mag, 1, axis=2)
        min1, min2 = part[:, :, 0], part[:, :, 1]
        argmin = np.argmin(mag, axis=2)
        row_sign = np.prod(sign, axis=2)
        excl_min = np.where(np.arange(w) == argmin[:, :, None], min2[:, :, None], min1[:, :, None])
        new_c2v = norm_factor * (row_sign[:, :, None] * sign) * excl_min
        new_c2v = np.where(pad, 0.0, new_c2v)
        c2v[active] = new_c2v[active]
        # Posterior: channel LLR plus all check messages (pad slots add 0).
        sums = np.bincount(flat_idx, weights=c2v.ravel(), minlength=nb * code.n)
        total_new = batch + sums.reshape(nb, code.n)
        total[active] = total_new[active]
        hard_new, ok = check_state(total)
        hard[active] = hard_new[active]
        converged |= ok

    info = hard[:, :code.k].astype(np.uint8)
    if single:
        return info[0], bool(converged[0])
    return info, converged


def pack_slot(data_re_count: int, bits_per_symbol: int, code: LdpcCode) -> tuple:
    """Codewords per slot and filler bits for a given data capacity.

    Greatest whole number of codewords fits; the remaining REs carry
    filler bits of fixed value 0, excluded from BLER accounting.
    """
    capacity = data_re_count * bits_per_symbol
    if capacity < code.n:
        raise SlotTooSmall(f"capacity {capacity} bits < one codeword ({code.n})")
    n_blocks = capacity // code.n
    filler = capacity - n_blocks * code.n
    return n_blocks, filler


def encode_slot(info_bits: np.ndarray, data_re_count: int, bits_per_symbol: int,
                code: LdpcCode) -> tuple:
    """Encode a slot payload; returns (blocks, tx_bits including filler zeros).

    info_bits must be exactly n_blocks * k long.
    """
    n_blocks, filler = pack_slot(data_re_count, bits_per_symbol, code)
    info_bits = np.asarray(info_bits, dtype=np.uint8).reshape(-1)
    if info_bits.size != n_blocks * code.k:
        raise LengthMismatch(
            f"slot payload must be {n_blocks * code.k} info bits, got {info_bits.size}")
    infos = info_bits.reshape(n_blocks, code.k)
    codewords = encode(infos, code)
    blocks = [CodedBlock(info_bits=infos[i], code_bits=codewords[i]) for i in range(n_blocks)]
    tx = np.concatenate([codewords.reshape(-1), np.zeros(filler, dtype=np.uint8)])
    return blocks, tx
