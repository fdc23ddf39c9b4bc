"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Design: define-by-run graph. Each op builds a new Tensor holding its value,
its parents, and a closure that maps the upstream gradient to per-parent
gradients. ``backward`` walks the graph once in reverse topological order
and accumulates into ``.grad``; repeated calls accumulate (callers zero
grads via the optimizer). Complex signals ride through as (..., 2) arrays
of (re, im) channel pairs, which keeps every gradient real and exact.

Everything is float64: the finite-difference acceptance checks at relative
error < 1e-6 leave no room for float32 noise.
"""

import numpy as np

from .errors import MissingGrad, NonScalarLoss, ShapeMismatch


class Tensor:
    """Node of the differentiation graph: value + gradient + linkage."""

    __slots__ = ("values", "_grad", "parents", "_vjp", "requires_grad", "op")

    def __init__(self, values, parents=(), vjp=None, requires_grad=False, op="leaf"):
        self.values = np.asarray(values, dtype=np.float64)
        self._grad = None
        self.parents = tuple(parents)
        self._vjp = vjp
        self.op = op
        # A node needs grad if it is a trainable leaf or depends on one.
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self):
        return self.values.size

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.values)
        return self._grad

    def grad_populated(self) -> bool:
        return self._grad is not None

    def zero_grad(self):
        self._grad = None

    def accumulate(self, g):
        if self._grad is None:
            self._grad = np.zeros_like(self.values)
        self._grad += g

    def item(self) -> float:
        return float(self.values.reshape(()))

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.values.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; the module-level functions do the work.
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))


def tensor(values) -> Tensor:
    """Non-trainable constant."""
    return Tensor(values)


def parameter(values) -> Tensor:
    """Trainable leaf."""
    return Tensor(np.array(values, dtype=np.float64), requires_grad=True, op="param")


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce gradient g back to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(loss: Tensor):
    """Populate dLoss/dNode for every node reachable from ``loss``.

    Visits each node exactly once in reverse topological order; gradients
    accumulate across calls until optimizer.zero_grad/step clears them.
    """
    if loss.values.size != 1:
        raise NonScalarLoss(f"loss must be scalar, got shape {loss.values.shape}")

    # Iterative post-order topological sort (graphs can be deep).
    order = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    # Per-call gradient map keeps propagation independent of grads left over
    # from earlier backward calls; persistent .grad still accumulates.
    flowing = {id(loss): np.ones_like(loss.values)}
    for node in reversed(order):
        g = flowing.pop(id(node), None)
        if g is None:
            continue
        node.accumulate(g)
        if node._vjp is None or not node.parents:
            continue
        for p, pg in zip(node.parents, node._vjp(g)):
            if p.requires_grad and pg is not None:
                prev = flowing.get(id(p))
                flowing[id(p)] = pg if prev is None else prev + pg


# ---------------------------------------------------------------------------
# Elementwise arithmetic (numpy broadcasting semantics)
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.values + b.values

    def vjp(g):
        return (_unbroadcast(g, a.values.shape), _unbroadcast(g, b.values.shape))

    return Tensor(out, (a, b), vjp, op="add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.values - b.values

    def vjp(g):
        return (_unbroadcast(g, a.values.shape), _unbroadcast(-g, b.values.shape))

    return Tensor(out, (a, b), vjp, op="sub")


def neg(a: Tensor) -> Tensor:
    return Tensor(-a.values, (a,), lambda g: (-g,), op="neg")


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.values * b.values

    def vjp(g):
        return (
            _unbroadcast(g * b.values, a.values.shape),
            _unbroadcast(g * a.values, b.values.shape),
        )

    return Tensor(out, (a, b), vjp, op="mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    out = a.values / b.values

    def vjp(g):
        return (
            _unbroadcast(g / b.values, a.values.shape),
            _unbroadcast(-g * a.values / (b.values * b.values), b.values.shape),
        )

    return Tensor(out, (a, b), vjp, op="div")


# ---------------------------------------------------------------------------
# Linear algebra / shape ops
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; supports stacked (batched) operands with equal batch dims."""
    if a.values.ndim < 2 or b.values.ndim < 2:
        raise ShapeMismatch("matmul requires ndim >= 2 operands")
    if a.values.shape[-1] != b.values.shape[-2]:
        raise ShapeMismatch(f"matmul inner dims {a.values.shape} @ {b.values.shape}")
    out = a.values @ b.values

    def vjp(g):
        ga = g @ np.swapaxes(b.values, -1, -2)
        gb = np.swapaxes(a.values, -1, -2) @ g
        return (_unbroadcast(ga, a.values.shape), _unbroadcast(gb, b.values.shape))

    return Tensor(out, (a, b), vjp, op="matmul")


def reshape(a: Tensor, shape) -> Tensor:
    old = a.values.shape
    out = a.values.reshape(shape)

    def vjp(g):
        return (g.reshape(old),)

    return Tensor(out, (a,), vjp, op="reshape")


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def vjp(g):
        return (g.transpose(inv),)

    return Tensor(a.values.transpose(axes), (a,), vjp, op="transpose")


def concat(parts, axis: int = 0) -> Tensor:
    parts = [(_as_tensor(p)) for p in parts]
    out = np.concatenate([p.values for p in parts], axis=axis)
    sizes = [p.values.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(
            np.take(g, range(offsets[i], offsets[i + 1]), axis=axis) for i in range(len(parts))
        )

    return Tensor(out, tuple(parts), vjp, op="concat")


def slice_(a: Tensor, key) -> Tensor:
    """Basic slicing; ``key`` is a slice or tuple of slices (no fancy indexing)."""
    out = a.values[key]

    def vjp(g):
        full = np.zeros_like(a.values)
        full[key] = g
        return (full,)

    return Tensor(out, (a,), vjp, op="slice")


def gather_flat(a: Tensor, idx: np.ndarray) -> Tensor:
    """out[k] = a.flat[idx[k]]; exact scatter-add gradient."""
    idx = np.asarray(idx, dtype=np.intp)
    out = a.values.reshape(-1)[idx]

    def vjp(g):
        full = np.zeros(a.values.size)
        np.add.at(full, idx, g.reshape(-1))
        return (full.reshape(a.values.shape),)

    return Tensor(out, (a,), vjp, op="gather")


def scatter_flat(vals: Tensor, idx: np.ndarray, size: int) -> Tensor:
    """Flat output of ``size`` zeros with vals placed at unique indices ``idx``."""
    idx = np.asarray(idx, dtype=np.intp)
    if idx.size != vals.values.size:
        raise ShapeMismatch("scatter index count must match value count")
    out = np.zeros(size)
    out[idx] = vals.values.reshape(-1)

    def vjp(g):
        return (g.reshape(-1)[idx].reshape(vals.values.shape),)

    return Tensor(out, (vals,), vjp, op="scatter")


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------


def _reduce_vjp_expand(g, a_shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, a_shape)
    if not keepdims:
        axes = axis if isinstance(axis, tuple) else (axis,)
        axes = tuple(ax % len(a_shape) for ax in axes)
        shape = tuple(1 if i in axes else n for i, n in enumerate(a_shape))
        g = g.reshape(shape)
    return np.broadcast_to(g, a_shape)


def sum_(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = a.values.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        return (_reduce_vjp_expand(g, a.values.shape, axis, keepdims).copy(),)

    return Tensor(out, (a,), vjp, op="sum")


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = a.values.mean(axis=axis, keepdims=keepdims)
    count = a.values.size if axis is None else np.prod(
        [a.values.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]
    )

    def vjp(g):
        return (_reduce_vjp_expand(g, a.values.shape, axis, keepdims) / count,)

    return Tensor(out, (a,), vjp, op="mean")


# ---------------------------------------------------------------------------
# Nonlinearities
# ---------------------------------------------------------------------------


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.values, 0.0)

    def vjp(g):
        return (g * (a.values > 0.0),)

    return Tensor(out, (a,), vjp, op="relu")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.values)

    def vjp(g):
        return (g * (1.0 - out * out),)

    return Tensor(out, (a,), vjp, op="tanh")


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid_np(a.values)

    def vjp(g):
        return (g * out * (1.0 - out),)

    return Tensor(out, (a,), vjp, op="sigmoid")


def _sigmoid_np(x):
    # Split by sign to avoid overflow in exp.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_sigmoid(a: Tensor) -> Tensor:
    """log(sigmoid(x)), computed as -softplus(-x); finite for any input."""
    x = a.values
    out = np.where(x >= 0, -np.log1p(np.exp(-np.abs(x))), x - np.log1p(np.exp(-np.abs(x))))

    def vjp(g):
        return (g * _sigmoid_np(-x),)

    return Tensor(out, (a,), vjp, op="log_sigmoid")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.values)

    def vjp(g):
        return (g * out,)

    return Tensor(out, (a,), vjp, op="exp")


def log(a: Tensor) -> Tensor:
    out = np.log(a.values)

    def vjp(g):
        return (g / a.values,)

    return Tensor(out, (a,), vjp, op="log")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.values)

    def vjp(g):
        return (g * 0.5 / out,)

    return Tensor(out, (a,), vjp, op="sqrt")


def abs_(a: Tensor) -> Tensor:
    """|x| with subgradient 0 at x = 0."""
    out = np.abs(a.values)

    def vjp(g):
        return (g * np.sign(a.values),)

    return Tensor(out, (a,), vjp, op="abs")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.values - a.values.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return ((g - dot) * out,)

    return Tensor(out, (a,), vjp, op="softmax")


def layernorm(a: Tensor, axis: int = -1, eps: float = 1e-5) -> Tensor:
    """(x - mu) / sqrt(var + eps) over ``axis``; no affine parameters."""
    x = a.values
    mu = x.mean(axis=axis, keepdims=True)
    var = x.var(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv

    def vjp(g):
        gm = g.mean(axis=axis, keepdims=True)
        gx = (g * xhat).mean(axis=axis, keepdims=True)
        return (inv * (g - gm - xhat * gx),)

    return Tensor(xhat, (a,), vjp, op="layernorm")


# ---------------------------------------------------------------------------
# Convolution / pooling
# ---------------------------------------------------------------------------


def conv2d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """3x3 convolution, stride 1, zero padding 1; x (C,H,W), w (O,C,3,3), b (O,)."""
    xv, wv = x.values, w.values
    if xv.ndim != 3 or wv.ndim != 4 or wv.shape[2:] != (3, 3):
        raise ShapeMismatch(f"conv2d expects (C,H,W) and (O,C,3,3), got {xv.shape}, {wv.shape}")
    if wv.shape[1] != xv.shape[0]:
        raise ShapeMismatch(f"conv2d channel mismatch: {xv.shape[0]} vs {wv.shape[1]}")
    c, h, wd = xv.shape
    o = wv.shape[0]
    xp = np.pad(xv, ((0, 0), (1, 1), (1, 1)))
    # im2col: (C*9, H*W) patch matrix, kernel as (O, C*9)
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))  # (C,H,W,3,3)
    patches = win.transpose(0, 3, 4, 1, 2).reshape(c * 9, h * wd)
    wmat = wv.reshape(o, c * 9)
    out = (wmat @ patches).reshape(o, h, wd) + b.values[:, None, None]

    def vjp(g):
        gmat = g.reshape(o, h * wd)
        gw = (gmat @ patches.T).reshape(wv.shape)
        gb = g.sum(axis=(1, 2))
        gpatch = (wmat.T @ gmat).reshape(c, 3, 3, h, wd)
        gxp = np.zeros_like(xp)
        for ki in range(3):
            for kj in range(3):
                gxp[:, ki:ki + h, kj:kj + wd] += gpatch[:, ki, kj]
        return (gxp[:, 1:-1, 1:-1], gw, gb)

    return Tensor(out, (x, w, b), vjp, op="conv2d")


def avg_pool2d(x: Tensor, window: int) -> Tensor:
    """Sliding-window mean over a 2D map, stride 1, valid padding."""
    xv = x.values
    if xv.ndim != 2:
        raise ShapeMismatch(f"avg_pool2d expects a 2D map, got {xv.shape}")
    h, w = xv.shape
    if window > h or window > w:
        raise ShapeMismatch(f"window {window} exceeds map dims {xv.shape}")
    win = np.lib.stride_tricks.sliding_window_view(xv, (window, window))
    out = win.mean(axis=(2, 3))
    oh, ow = out.shape
    scale = 1.0 / (window * window)

    def vjp(g):
        gx = np.zeros_like(xv)
        for di in range(window):
            for dj in range(window):
                gx[di:di + oh, dj:dj + ow] += g * scale
        return (gx,)

    return Tensor(out, (x,), vjp, op="avg_pool2d")


# ---------------------------------------------------------------------------
# Complex pairs: (..., 2) arrays holding (re, im)
# ---------------------------------------------------------------------------


def complex_mul(a: Tensor, b: Tensor) -> Tensor:
    """(a_re + j a_im)(b_re + j b_im) over (..., 2) channel pairs."""
    ar, ai = slice_(a, (..., slice(0, 1))), slice_(a, (..., slice(1, 2)))
    br, bi = slice_(b, (..., slice(0, 1))), slice_(b, (..., slice(1, 2)))
    re = sub(mul(ar, br), mul(ai, bi))
    im = add(mul(ar, bi), mul(ai, br))
    return concat([re, im], axis=-1)


def complex_abs2(a: Tensor) -> Tensor:
    """|a|^2 = re^2 + im^2, shape (...,) from (..., 2)."""
    sq = mul(a, a)
    return sum_(sq, axis=-1)


def to_pairs(z: np.ndarray) -> np.ndarray:
    """Complex ndarray -> float (..., 2) pairs."""
    return np.stack([z.real, z.imag], axis=-1).astype(np.float64)


def from_pairs(v: np.ndarray) -> np.ndarray:
    """Float (..., 2) pairs -> complex ndarray."""
    return v[..., 0] + 1j * v[..., 1]
