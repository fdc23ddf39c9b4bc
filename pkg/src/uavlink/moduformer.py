"""Moduformer: residual Transformer perturbation of QAM symbol sequences.

The network never replaces the constellation; it reads a symbol sequence,
attends across it, and emits a small complex perturbation added back onto
the input (x_hat = x + delta_x). The perturbed sequence is then rescaled
to unit average symbol power so the transmitter cannot buy SNR by raising
power. With a zero-initialized output projection the whole block is an
exact identity on unit-power input.

One forward pass covers the data REs of one OFDM symbol row (length <= 72
by default), which bounds the attention cost and matches the grid layout.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import SequenceTooLong


@dataclass
class ModuformerParams:
    """All trainable tensors plus the fixed sizes.

    d_model must be divisible by n_heads; out_w/out_b start at zero so the
    initial perturbation is exactly zero, and out_gain scales the tanh of
    the output projection.
    """

    d_model: int
    n_heads: int
    d_ffn: int
    max_len: int
    tensors: dict = field(default_factory=dict)

    @staticmethod
    def init(rng: np.random.Generator, d_model: int = 32, n_heads: int = 4,
             d_ffn: int = 64, max_len: int = 72) -> "ModuformerParams":
        if d_model % n_heads != 0:
            raise ValueError(f"d_model {d_model} not divisible by n_heads {n_heads}")

        def xavier(n_in, n_out):
            bound = math.sqrt(6.0 / (n_in + n_out))
            return ad.parameter(rng.uniform(-bound, bound, size=(n_in, n_out)))

        t = {
            "embed_w": xavier(2, d_model),
            "embed_b": ad.parameter(np.zeros(d_model)),
            "pos_embed": ad.parameter(rng.normal(0.0, 0.02, size=(max_len, d_model))),
            "wq": xavier(d_model, d_model),
            "bq": ad.parameter(np.zeros(d_model)),
            "wk": xavier(d_model, d_model),
            "bk": ad.parameter(np.zeros(d_model)),
            "wv": xavier(d_model, d_model),
            "bv": ad.parameter(np.zeros(d_model)),
            "wo": xavier(d_model, d_model),
            "bo": ad.parameter(np.zeros(d_model)),
            "ffn_w1": xavier(d_model, d_ffn),
            "ffn_b1": ad.parameter(np.zeros(d_ffn)),
            "ffn_w2": xavier(d_ffn, d_model),
            "ffn_b2": ad.parameter(np.zeros(d_model)),
            "out_w": ad.parameter(np.zeros((d_model, 2))),
            "out_b": ad.parameter(np.zeros(2)),
            "out_gain": ad.parameter(np.array([1.0])),
        }
        return ModuformerParams(d_model=d_model, n_heads=n_heads, d_ffn=d_ffn,
                                max_len=max_len, tensors=t)

    @property
    def n_params(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def named(self, prefix: str = "") -> dict:
        return {prefix + k: v for k, v in self.tensors.items()}


def moduformer_apply(x: Tensor, params: ModuformerParams,
                     return_attention: bool = False):
    """Differentiable core: (N, 2) re/im pairs in, (N, 2) out.

    E0 = embed(x) + pos; E_attn = LN(E0 + MHA(E0)); E_out = LN(E_attn +
    FFN(E_attn)); delta = gain * tanh(E_out W_out + b_out); output is
    (x + delta) rescaled to unit average symbol power.
    """
    n = x.shape[0]
    if n > params.max_len:
        raise SequenceTooLong(f"sequence length {n} > max {params.max_len}")
    t = params.tensors
    d, h = params.d_model, params.n_heads
    dk = d // h

    e0 = ad.add(ad.add(ad.matmul(x, t["embed_w"]), t["embed_b"]),
                ad.slice_(t["pos_embed"], (slice(0, n),)))

    q = ad.add(ad.matmul(e0, t["wq"]), t["bq"])
    k = ad.add(ad.matmul(e0, t["wk"]), t["bk"])
    v = ad.add(ad.matmul(e0, t["wv"]), t["bv"])
    # (N, d) -> (heads, N, dk)
    split = lambda m: ad.transpose(ad.reshape(m, (n, h, dk)), (1, 0, 2))
    qh, kh, vh = split(q), split(k), split(v)
    scores = ad.mul(ad.matmul(qh, ad.transpose(kh, (0, 2, 1))), ad.tensor(1.0 / math.sqrt(dk)))
    attn = ad.softmax(scores, axis=-1)                       # (h, N, N)
    ctx = ad.matmul(attn, vh)                                # (h, N, dk)
    merged = ad.reshape(ad.transpose(ctx, (1, 0, 2)), (n, d))
    mha_out = ad.add(ad.matmul(merged, t["wo"]), t["bo"])

    e_attn = ad.layernorm(ad.add(e0, mha_out), axis=-1)
    ffn = ad.add(ad.matmul(ad.relu(ad.add(ad.matmul(e_attn, t["ffn_w1"]), t["ffn_b1"])),
                           t["ffn_w2"]), t["ffn_b2"])
    e_out = ad.layernorm(ad.add(e_attn, ffn), axis=-1)

    delta = ad.mul(ad.tanh(ad.add(ad.matmul(e_out, t["out_w"]), t["out_b"])), t["out_gain"])
    x_hat = ad.add(x, delta)
    power = ad.mean(ad.complex_abs2(x_hat))
    x_hat = ad.div(x_hat, ad.sqrt(power))
    if return_attention:
        return x_hat, attn.values
    return x_hat


def moduformer_forward(x: np.ndarray, params: ModuformerParams,
                       return_attention: bool = False):
    """Inference wrapper: complex (N,) in, complex (N,) out."""
    xt = ad.tensor(ad.to_pairs(np.asarray(x, dtype=complex)))
    out = moduformer_apply(xt, params, return_attention=return_attention)
    if return_attention:
        x_hat, attn = out
        return ad.from_pairs(x_hat.values), attn
    return ad.from_pairs(out.values)
