"""Minimal reverse-mode autodiff over dense float64 arrays.

Just enough machinery to train the embedding head: a Tensor wraps a numpy
array and remembers the primitive that produced it, `forward` re-evaluates a
built graph in place (used by the finite-difference checker), and `backward`
accumulates adjoints in reverse topological order. Not a general framework:
only the primitives the training objective needs exist, matmul is strictly
2-D, and broadcasting is limited to scalar-against-array.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NORM_EPS = 1e-12


class ShapeError(ValueError):
    """Incompatible operand shapes for a primitive."""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        detail = " vs ".join(str(s) for s in self.shapes)
        super().__init__(f"{op}: incompatible shapes {detail}")


class Tensor:
    """Node of the computation graph; leaves hold parameters or constants."""

    __slots__ = ("data", "grad", "op", "inputs", "requires_grad", "_fwd", "_bwd")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.grad = None
        self.op = "leaf"
        self.inputs = ()
        self.requires_grad = requires_grad
        self._fwd = None
        self._bwd = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.data.shape})"

    # reductions as methods so the module namespace keeps the builtins
    def sum(self, axis=None) -> "Tensor":
        return _reduce(self, "sum", axis)

    def mean(self, axis=None) -> "Tensor":
        return _reduce(self, "mean", axis)

    def max(self, axis=None) -> "Tensor":
        return _reduce(self, "max", axis)

    def min(self, axis=None) -> "Tensor":
        return _reduce(self, "min", axis)

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return mul(self, _wrap(-1.0))

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _node(op: str, inputs, fwd, bwd) -> Tensor:
    """Build an eagerly evaluated graph node.

    fwd: (*input_arrays) -> array.
    bwd: (out_grad, out_value, *input_arrays) -> tuple of per-input grads
    (None for inputs that need no gradient).
    """
    out = Tensor.__new__(Tensor)
    out.data = fwd(*[t.data for t in inputs])
    out.grad = None
    out.op = op
    out.inputs = tuple(inputs)
    out.requires_grad = any(t.requires_grad for t in inputs)
    out._fwd = fwd
    out._bwd = bwd
    return out


def _topo(root: Tensor):
    """Inputs-before-consumers ordering, iterative to spare the stack."""
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.inputs:
            stack.append((parent, False))
    return order


def forward(root: Tensor) -> Tensor:
    """Re-evaluate every non-leaf node from current leaf data."""
    for node in _topo(root):
        if node.inputs:
            node.data = node._fwd(*[t.data for t in node.inputs])
    return root


def backward(root: Tensor) -> dict:
    """Accumulate d(root)/d(leaf) for every requires_grad leaf.

    Each node is visited exactly once in reverse topological order. Returns
    a mapping from leaf Tensor to its gradient array (also left on .grad).
    """
    if root.data.size != 1:
        raise ShapeError("backward", root.data.shape)
    order = _topo(root)
    for node in order:
        node.grad = None
    root.grad = np.ones_like(root.data)
    leaves = {}
    for node in reversed(order):
        if node.grad is None or not node.requires_grad:
            continue
        if not node.inputs:
            leaves[node] = node.grad
            continue
        grads = node._bwd(node.grad, node.data, *[t.data for t in node.inputs])
        for parent, g in zip(node.inputs, grads):
            if g is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = g.copy()
            else:
                parent.grad += g
    return leaves


def _match_reduce(g: np.ndarray, shape) -> np.ndarray:
    # inverse of scalar-vs-array broadcast: collapse back to the scalar
    if g.shape == tuple(shape):
        return g
    return np.sum(g).reshape(shape)


def _check_elementwise(op: str, a: Tensor, b: Tensor):
    if a.data.shape != b.data.shape and a.data.size != 1 and b.data.size != 1:
        raise ShapeError(op, a.data.shape, b.data.shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_elementwise("add", a, b)
    return _node(
        "add",
        (a, b),
        lambda x, y: x + y,
        lambda g, out, x, y: (_match_reduce(g, x.shape), _match_reduce(g, y.shape)),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_elementwise("sub", a, b)
    return _node(
        "sub",
        (a, b),
        lambda x, y: x - y,
        lambda g, out, x, y: (_match_reduce(g, x.shape), _match_reduce(-g, y.shape)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_elementwise("mul", a, b)
    return _node(
        "mul",
        (a, b),
        lambda x, y: x * y,
        lambda g, out, x, y: (_match_reduce(g * y, x.shape), _match_reduce(g * x, y.shape)),
    )


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_elementwise("div", a, b)
    return _node(
        "div",
        (a, b),
        lambda x, y: x / y,
        lambda g, out, x, y: (
            _match_reduce(g / y, x.shape),
            _match_reduce(-g * x / (y * y), y.shape),
        ),
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError("matmul", a.data.shape, b.data.shape)
    return _node(
        "matmul",
        (a, b),
        lambda x, y: x @ y,
        lambda g, out, x, y: (g @ y.T, x.T @ g),
    )


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError("transpose", a.data.shape)
    return _node("transpose", (a,), lambda x: x.T.copy(), lambda g, out, x: (g.T,))


def concat_rows(tensors) -> Tensor:
    """Stack 2-D tensors along axis 0; all must share the column count."""
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat_rows", ())
    cols = tensors[0].data.shape[1] if tensors[0].data.ndim == 2 else None
    for t in tensors:
        if t.data.ndim != 2 or t.data.shape[1] != cols:
            raise ShapeError("concat_rows", tensors[0].data.shape, t.data.shape)
    sizes = [t.data.shape[0] for t in tensors]

    def bwd(g, out, *xs):
        grads, at = [], 0
        for n in sizes:
            grads.append(g[at : at + n])
            at += n
        return tuple(grads)

    return _node("concat_rows", tuple(tensors), lambda *xs: np.concatenate(xs, axis=0), bwd)


def sigmoid(a: Tensor) -> Tensor:
    def fwd(x):
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out

    return _node("sigmoid", (a,), fwd, lambda g, out, x: (g * out * (1.0 - out),))


def exp(a: Tensor) -> Tensor:
    return _node("exp", (a,), np.exp, lambda g, out, x: (g * out,))


def log(a: Tensor) -> Tensor:
    return _node("log", (a,), np.log, lambda g, out, x: (g / x,))


def relu(a: Tensor) -> Tensor:
    return _node(
        "relu",
        (a,),
        lambda x: np.maximum(x, 0.0),
        lambda g, out, x: (g * (x > 0.0),),
    )


def square(a: Tensor) -> Tensor:
    return _node("square", (a,), np.square, lambda g, out, x: (2.0 * x * g,))


def l2_normalize_rows(a: Tensor, eps: float = NORM_EPS) -> Tensor:
    """Scale each row to unit norm; an all-zero row stays zero (guard eps)."""
    if a.data.ndim != 2:
        raise ShapeError("l2_normalize_rows", a.data.shape)

    def fwd(x):
        norms = np.sqrt(np.sum(x * x, axis=1, keepdims=True))
        return x / (norms + eps)

    def bwd(g, out, x):
        norms = np.sqrt(np.sum(x * x, axis=1, keepdims=True))
        denom = norms + eps
        dot = np.sum(g * x, axis=1, keepdims=True)
        gx = g / denom - x * dot / (np.where(norms > 0.0, norms, 1.0) * denom * denom)
        # zero rows: function is flat at the origin under the guard, take 0
        return (np.where(norms > 0.0, gx, 0.0),)

    return _node("l2_normalize_rows", (a,), fwd, bwd)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    def fwd(x):
        shifted = x - np.max(x, axis=axis, keepdims=True)
        ex = np.exp(shifted)
        return ex / np.sum(ex, axis=axis, keepdims=True)

    def bwd(g, out, x):
        inner = np.sum(g * out, axis=axis, keepdims=True)
        return ((g - inner) * out,)

    return _node("softmax", (a,), fwd, bwd)


def _reduce(a: Tensor, kind: str, axis) -> Tensor:
    def fwd(x):
        if kind == "sum":
            return np.asarray(np.sum(x, axis=axis))
        if kind == "mean":
            return np.asarray(np.mean(x, axis=axis))
        if kind == "max":
            return np.asarray(np.max(x, axis=axis))
        return np.asarray(np.min(x, axis=axis))

    def bwd(g, out, x):
        if kind in ("sum", "mean"):
            if axis is None:
                gx = np.broadcast_to(g, x.shape).copy()
            else:
                gx = np.broadcast_to(np.expand_dims(g, axis), x.shape).copy()
            if kind == "mean":
                gx /= x.size if axis is None else x.shape[axis]
            return (gx,)
        # max/min subgradient: the first attaining index (row-major) takes it all
        argfn = np.argmax if kind == "max" else np.argmin
        gx = np.zeros_like(x)
        if axis is None:
            gx.flat[argfn(x)] = g
        else:
            idx = np.expand_dims(argfn(x, axis=axis), axis)
            np.put_along_axis(gx, idx, np.expand_dims(g, axis), axis=axis)
        return (gx,)

    return _node(kind, (a,), fwd, bwd)


def depthwise_conv1d(x: Tensor, kernel: Tensor) -> Tensor:
    """Per-channel 1-D convolution along axis 0 with "same" zero padding.

    x is (T, d), kernel is (d, w); output (T, d) with
    out[i, c] = sum_j x[i + j - pad_left, c] * kernel[c, j], zeros outside,
    pad_left = (w - 1) // 2 so a delta kernel at that tap is the identity.
    """
    if x.data.ndim != 2 or kernel.data.ndim != 2 or x.data.shape[1] != kernel.data.shape[0]:
        raise ShapeError("depthwise_conv1d", x.data.shape, kernel.data.shape)
    w = kernel.data.shape[1]
    pad_left = (w - 1) // 2
    pad_right = w - 1 - pad_left

    def fwd(xv, kv):
        t = xv.shape[0]
        xp = np.pad(xv, ((pad_left, pad_right), (0, 0)))
        out = np.zeros_like(xv)
        for j in range(w):
            out += xp[j : j + t] * kv[:, j]
        return out

    def bwd(g, out, xv, kv):
        t = xv.shape[0]
        xp = np.pad(xv, ((pad_left, pad_right), (0, 0)))
        gxp = np.zeros_like(xp)
        gk = np.zeros_like(kv)
        for j in range(w):
            gxp[j : j + t] += g * kv[:, j]
            gk[:, j] = np.sum(g * xp[j : j + t], axis=0)
        return (gxp[pad_left : pad_left + t], gk)

    return _node("depthwise_conv1d", (x, kernel), fwd, bwd)


def one_hot_row(index: int, length: int) -> Tensor:
    """Constant (1, length) selector; row @ matrix picks one matrix row."""
    row = np.zeros((1, length))
    row[0, index] = 1.0
    return Tensor(row)


@dataclass
class GradCheckReport:
    """Outcome of comparing analytic gradients against central differences."""

    max_rel_err: float
    per_param: dict = field(default_factory=dict)
    h: float = 1e-5
    tol: float = 1e-4

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"grad check: max relative error {self.max_rel_err:.3e} (tol {self.tol:.1e}) {status}"


def grad_check(loss_builder, params: dict, h: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Check d(loss)/d(param) coordinate by coordinate.

    loss_builder maps {name: leaf Tensor} to a scalar Tensor and is called
    once; numeric probes re-run `forward` on that same graph, so any
    data-dependent choices baked in at build time stay frozen.
    """
    leaves = {name: Tensor(value, requires_grad=True) for name, value in params.items()}
    root = loss_builder(leaves)
    backward(root)
    analytic = {name: np.array(leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data))
                for name, leaf in leaves.items()}

    per_param = {}
    worst = 0.0
    for name, leaf in leaves.items():
        errs = 0.0
        flat = leaf.data.reshape(-1)
        aflat = analytic[name].reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            hi = float(forward(root).data)
            flat[i] = keep - h
            lo = float(forward(root).data)
            flat[i] = keep
            numeric = (hi - lo) / (2.0 * h)
            denom = max(abs(aflat[i]), abs(numeric), 1e-8)
            errs = max(errs, abs(aflat[i] - numeric) / denom)
        per_param[name] = errs
        worst = max(worst, errs)
    forward(root)  # leave cached values consistent with unperturbed params
    return GradCheckReport(max_rel_err=worst, per_param=per_param, h=h, tol=tol)
