"""Minimal reverse-mode automatic differentiation on numpy arrays.

Supplies exactly the operations the denoising network needs: matmul
(plain and stacked), concatenation, elementwise arithmetic, the usual
activations, softmax, dropout, transposition, reshaping and mean
reduction, plus a layer-norm fused op and a gradient checker.

Design rules, enforced everywhere:

* 64-bit floats only.
* No broadcasting. Operand shapes must conform exactly; anything else
  raises :class:`ShapeError` naming the operation and both shapes.
* Stochastic ops take an explicit ``numpy.random.Generator``.
* A :class:`Tape` is single threaded. Independent tapes may run in
  parallel; tensors that do not track gradients are never mutated.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor", "Tape", "ShapeError", "tensor", "parameter",
    "add", "sub", "mul", "add_scalar", "scale", "add_rowvec",
    "matmul", "transpose",
    "reshape", "concat", "tile_leading", "sigmoid", "tanh", "relu",
    "softmax", "dropout", "mean_all", "layer_norm",
    "scaled_dot_attention", "grad_check", "grad_check_params",
]


class ShapeError(ValueError):
    """Raised when operand shapes do not conform for an operation."""


class Tensor:
    """A shape-tagged float64 array, optionally tracking gradients.

    ``grad`` is populated for leaf tensors (those created with
    ``requires_grad=True``) by :meth:`Tape.backward`; it always has the
    same shape as ``data``.
    """

    __slots__ = ("data", "requires_grad", "grad", "_op")

    def __init__(self, data, requires_grad: bool = False, _op: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._op = _op  # name of the producing op; None for leaves

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return self._op is None

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    """Wrap array-like data as a leaf tensor."""
    return Tensor(data, requires_grad=requires_grad)


def parameter(data) -> Tensor:
    """Wrap array-like data as a trainable leaf tensor."""
    return Tensor(data, requires_grad=True)


class _Entry:
    """One executed operation: output plus the vector-Jacobian rules."""

    __slots__ = ("op", "inputs", "output", "vjps")

    def __init__(self, op, inputs, output, vjps):
        self.op = op            # operation name
        self.inputs = inputs    # tuple of input Tensors needing grads
        self.output = output    # produced Tensor
        self.vjps = vjps        # tuple of callables, grad_out -> grad_input


_TAPES: list["Tape"] = []


class Tape:
    """Ordered record of executed operations, in execution order.

    Execution order is a topological order by construction: an operation
    is appended only after its inputs already exist. Used as a context
    manager; operations executed inside record themselves onto the
    innermost active tape whenever an input tracks gradients.
    """

    def __init__(self):
        self.entries: list[_Entry] = []

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _TAPES.pop()
        assert popped is self

    def backward(self, loss: Tensor) -> None:
        """Accumulate dLoss/dLeaf into every requires-grad leaf's ``grad``.

        ``loss`` must be a scalar produced on this tape. The tape is
        cleared afterwards; a second backward needs a fresh forward pass.
        """
        if loss.data.ndim != 0:
            raise ValueError(
                f"backward needs a scalar loss, got shape {loss.data.shape}")
        if not self.entries:
            raise ValueError("backward on an empty tape")
        grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
        for entry in reversed(self.entries):
            g = grads.pop(id(entry.output), None)
            if g is None:
                continue
            for inp, vjp in zip(entry.inputs, entry.vjps):
                gi = vjp(g)
                if inp.is_leaf:
                    if inp.grad is None:
                        inp.grad = np.zeros_like(inp.data)
                    inp.grad += gi
                else:
                    acc = grads.get(id(inp))
                    if acc is None:
                        grads[id(inp)] = gi.copy() if gi.base is not None else gi
                    else:
                        acc += gi
        self.entries.clear()


def _record(op: str, out: Tensor, pairs) -> Tensor:
    """Record op on the active tape. ``pairs`` is [(input, vjp), ...]."""
    if out.requires_grad and _TAPES:
        tracked = [(t, f) for t, f in pairs if t.requires_grad]
        if tracked:
            inputs = tuple(t for t, _ in tracked)
            vjps = tuple(f for _, f in tracked)
            _TAPES[-1].entries.append(_Entry(op, inputs, out, vjps))
    return out


def _require_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeError(
            f"{op}: operand shapes {a.data.shape} and {b.data.shape} differ "
            "(no broadcasting)")


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("add", a, b)
    out = Tensor(a.data + b.data, a.requires_grad or b.requires_grad, "add")
    return _record("add", out, [(a, lambda g: g), (b, lambda g: g)])


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("sub", a, b)
    out = Tensor(a.data - b.data, a.requires_grad or b.requires_grad, "sub")
    return _record("sub", out, [(a, lambda g: g), (b, lambda g: -g)])


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("mul", a, b)
    out = Tensor(a.data * b.data, a.requires_grad or b.requires_grad, "mul")
    return _record("mul", out, [(a, lambda g: g * b.data),
                                (b, lambda g: g * a.data)])


def add_scalar(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(a.data + c, a.requires_grad, "add_scalar")
    return _record("add_scalar", out, [(a, lambda g: g)])


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(a.data * c, a.requires_grad, "scale")
    return _record("scale", out, [(a, lambda g: g * c)])


def add_rowvec(a: Tensor, b: Tensor) -> Tensor:
    """Add a 1-D vector to every row of ``a`` along its last axis.

    The one sanctioned exception to the no-broadcasting rule: ``b`` must
    be exactly 1-D with length equal to ``a``'s last axis, so the intent
    (a per-feature offset) is unambiguous. The gradient of ``b`` sums
    over all leading axes.
    """
    if b.data.ndim != 1 or a.data.ndim < 1 or a.data.shape[-1] != b.data.shape[0]:
        raise ShapeError(
            f"add_rowvec: vector {b.data.shape} does not match last axis of "
            f"{a.data.shape}")
    out = Tensor(a.data + b.data, a.requires_grad or b.requires_grad,
                 "add_rowvec")
    red = tuple(range(a.data.ndim - 1))
    return _record("add_rowvec", out,
                   [(a, lambda g: g), (b, lambda g: g.sum(axis=red))])


# ---------------------------------------------------------------------------
# linear algebra and structure


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes.

    2-D operands give a plain matrix product. Higher-rank operands are
    stacks of matrices whose leading dimensions must match exactly.
    """
    sa, sb = a.data.shape, b.data.shape
    if len(sa) < 2 or len(sb) < 2 or len(sa) != len(sb) \
            or sa[:-2] != sb[:-2] or sa[-1] != sb[-2]:
        raise ShapeError(
            f"matmul: shapes {sa} and {sb} do not conform "
            "(need equal leading dims and inner dimension)")
    out = Tensor(a.data @ b.data, a.requires_grad or b.requires_grad, "matmul")

    def vjp_a(g):
        return g @ np.swapaxes(b.data, -1, -2)

    def vjp_b(g):
        return np.swapaxes(a.data, -1, -2) @ g

    return _record("matmul", out, [(a, vjp_a), (b, vjp_b)])


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(a.data.ndim)):
        raise ShapeError(
            f"transpose: axes {axes} are not a permutation for shape "
            f"{a.data.shape}")
    inv = tuple(int(np.argsort(axes)[i]) for i in range(len(axes)))
    out = Tensor(np.transpose(a.data, axes), a.requires_grad, "transpose")
    return _record("transpose", out,
                   [(a, lambda g: np.ascontiguousarray(np.transpose(g, inv)))])


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != a.data.size:
        raise ShapeError(
            f"reshape: cannot view shape {a.data.shape} as {shape}")
    old = a.data.shape
    out = Tensor(np.ascontiguousarray(a.data).reshape(shape),
                 a.requires_grad, "reshape")
    return _record("reshape", out,
                   [(a, lambda g: np.ascontiguousarray(g).reshape(old))])


def concat(tensors, axis: int) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat: empty input list")
    nd = tensors[0].data.ndim
    ref = list(tensors[0].data.shape)
    for t in tensors[1:]:
        s = list(t.data.shape)
        if t.data.ndim != nd or s[:axis] + s[axis + 1:] != ref[:axis] + ref[axis + 1:]:
            raise ShapeError(
                f"concat: shape {t.data.shape} incompatible with "
                f"{tensors[0].data.shape} along axis {axis}")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    out = Tensor(data, any(t.requires_grad for t in tensors), "concat")
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def make_vjp(i):
        lo, hi = offsets[i], offsets[i + 1]

        def vjp(g):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            return np.ascontiguousarray(g[tuple(idx)])

        return vjp

    return _record("concat", out,
                   [(t, make_vjp(i)) for i, t in enumerate(tensors)])


def tile_leading(a: Tensor, n: int) -> Tensor:
    """Repeat ``a`` along a new leading axis: shape ``(n, *a.shape)``.

    The explicit replacement for broadcasting; the gradient sums the
    leading axis back out.
    """
    if n < 1:
        raise ShapeError(f"tile_leading: repeat count {n} < 1")
    data = np.broadcast_to(a.data, (n,) + a.data.shape).copy()
    out = Tensor(data, a.requires_grad, "tile_leading")
    return _record("tile_leading", out, [(a, lambda g: g.sum(axis=0))])


# ---------------------------------------------------------------------------
# nonlinearities


def sigmoid(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        y = 1.0 / (1.0 + np.exp(-a.data))
    out = Tensor(y, a.requires_grad, "sigmoid")
    return _record("sigmoid", out, [(a, lambda g: g * (y * (1.0 - y)))])


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y, a.requires_grad, "tanh")
    return _record("tanh", out, [(a, lambda g: g * (1.0 - y * y))])


def relu(a: Tensor) -> Tensor:
    y = np.maximum(a.data, 0.0)
    out = Tensor(y, a.requires_grad, "relu")
    return _record("relu", out, [(a, lambda g: g * (a.data > 0.0))])


def softmax(a: Tensor, axis: int) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y, a.requires_grad, "softmax")

    def vjp(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return y * (g - dot)

    return _record("softmax", out, [(a, vjp)])


def dropout(a: Tensor, p: float, train: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: scales by 1/(1-p) at train time.

    Evaluation mode (or p == 0) is the identity function.
    """
    if not (0.0 <= p < 1.0):
        raise ValueError(f"dropout: rate {p} outside [0, 1)")
    if not train or p == 0.0:
        return a
    if rng is None:
        raise ValueError("dropout: train mode needs a random generator")
    keep = 1.0 - p
    mask = (rng.random(a.data.shape) >= p) / keep
    out = Tensor(a.data * mask, a.requires_grad, "dropout")
    return _record("dropout", out, [(a, lambda g: g * mask)])


def mean_all(a: Tensor) -> Tensor:
    out = Tensor(np.asarray(a.data.mean()), a.requires_grad, "mean_all")
    n = a.data.size
    shape = a.data.shape
    return _record("mean_all", out,
                   [(a, lambda g: np.full(shape, float(g) / n))])


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then apply
    a per-feature affine map. ``gain`` and ``bias`` are 1-D of length
    equal to the last axis of ``x``.
    """
    feat = x.data.shape[-1]
    if gain.data.shape != (feat,) or bias.data.shape != (feat,):
        raise ShapeError(
            f"layer_norm: gain {gain.data.shape} / bias {bias.data.shape} "
            f"must be ({feat},) for input {x.data.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gain.data + bias.data,
                 x.requires_grad or gain.requires_grad or bias.requires_grad,
                 "layer_norm")

    def vjp_x(g):
        gy = g * gain.data
        m1 = gy.mean(axis=-1, keepdims=True)
        m2 = (gy * xhat).mean(axis=-1, keepdims=True)
        return inv * (gy - m1 - xhat * m2)

    red = tuple(range(x.data.ndim - 1))

    def vjp_gain(g):
        return (g * xhat).sum(axis=red)

    def vjp_bias(g):
        return g.sum(axis=red)

    return _record("layer_norm", out,
                   [(x, vjp_x), (gain, vjp_gain), (bias, vjp_bias)])


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor, dropout_p: float = 0.0,
                         train: bool = False,
                         rng: np.random.Generator | None = None):
    """Softmax(q kᵀ / sqrt(d_k)) v over the last two axes.

    Operands are stacks ``[..., n, d_k]`` (``v``: ``[..., n, d_v]``) with
    identical leading dims. Returns ``(output, weights)``; the weights
    tensor (pre-dropout) is exposed for interpretation and tests.
    """
    d_k = q.data.shape[-1]
    scores = scale(matmul(q, transpose(k, tuple(range(k.data.ndim - 2)) + (k.data.ndim - 1, k.data.ndim - 2))),
                   1.0 / np.sqrt(d_k))
    weights = softmax(scores, axis=-1)
    applied = dropout(weights, dropout_p, train, rng)
    return matmul(applied, v), weights


# ---------------------------------------------------------------------------
# verification


def grad_check(f, x: Tensor, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference grads.

    ``f`` must be scalar-valued and is called as ``f(x)``; the relative
    error per entry is |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
    """
    x = Tensor(x.data, requires_grad=True)
    with Tape() as tape:
        out = f(x)
        if out.data.ndim != 0:
            raise ValueError(f"grad_check: f returned shape {out.data.shape}, "
                             "expected a scalar")
        if not np.isfinite(out.data):
            raise ValueError("grad_check: f returned a non-finite value")
        tape.backward(out)
    analytic = x.grad.copy()

    numeric = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = float(f(Tensor(x.data)).data)
        flat[i] = orig - step
        lo = float(f(Tensor(x.data)).data)
        flat[i] = orig
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise ValueError("grad_check: non-finite value during differencing")
        num_flat[i] = (hi - lo) / (2.0 * step)

    denom = np.abs(analytic) + np.abs(numeric) + 1e-12
    return float(np.max(np.abs(analytic - numeric) / denom))


def grad_check_params(f, params: dict[str, Tensor], step: float = 1e-5) -> float:
    """Gradient check of a scalar function of several named tensors.

    ``f`` is called with no arguments and reads ``params``; returns the
    max relative error over all entries of all tensors.
    """
    for t in params.values():
        t.zero_grad()
    with Tape() as tape:
        out = f()
        if out.data.ndim != 0:
            raise ValueError("grad_check_params: loss is not scalar")
        tape.backward(out)
    worst = 0.0
    for name, t in params.items():
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = float(f().data)
            flat[i] = orig - step
            lo = float(f().data)
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * step)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / (abs(a) + abs(numeric) + 1e-12)
            worst = max(worst, err)
    return worst
