"""Reverse-mode automatic differentiation on dense float64 arrays.

All computation runs at 64-bit precision.  Operations record onto an
explicit tape (a Wengert list) when one is active; without a tape they
evaluate untracked, which is the fast path used for inference.  The tape
is rebuilt on every forward pass, so the graph always matches the code
that just ran.

A tape plus its tensors belong to a single thread.  Frozen parameters and
plain tensors are immutable from the engine's point of view and may be
shared across threads for read-only inference.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "Tensor",
    "Tape",
    "ParameterStore",
    "BatchNormState",
    "apply_op",
    "linear",
    "activation",
    "relu",
    "elu",
    "tanh",
    "sigmoid",
    "softmax",
    "batch_norm",
    "concat",
    "l1_distance",
    "pairwise_l1",
    "pairwise_concat",
    "matmul",
    "add",
    "sub",
    "mul",
    "sum_",
    "mean",
    "sqrt",
    "cumsum",
    "reshape",
    "broadcast_to",
    "backward",
    "finite_difference_check",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class Tensor:
    """Dense float64 array plus the bookkeeping needed for backprop.

    ``backward_fn`` maps the output gradient to a tuple of parent
    gradients (entries may be None); it is set only on tensors produced
    by tracked operations.  Leaf tensors created with
    ``requires_grad=True`` accumulate gradients persistently in ``grad``
    until explicitly zeroed.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "parents", "backward_fn")

    def __init__(self, data, requires_grad=False, op="leaf", parents=(), backward_fn=None):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            # np.ascontiguousarray would also promote 0-d arrays to 1-d,
            # so only pay for the copy when contiguity actually demands it.
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.op = op
        self.parents: tuple[Tensor, ...] = tuple(parents)
        self.backward_fn: Callable[[np.ndarray], tuple] | None = backward_fn

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() requires a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(op={self.op!r}, shape={self.shape}, requires_grad={self.requires_grad})"


_ACTIVE_TAPE: "Tape | None" = None


class Tape:
    """Append-only record of tracked operations, in execution order.

    Entering the context makes the tape active; every operation whose
    inputs require gradients appends its output.  Append order is a
    topological order of the graph, so ``backward`` can simply walk the
    list in reverse.  Only one tape may be active at a time.
    """

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("a tape is already active; tapes do not nest")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None

    def __len__(self) -> int:
        return len(self.nodes)


def apply_op(op: str, data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    """Wrap an operation result, registering it on the active tape.

    Low-level hook: normal code should call the named operations below.
    The result is tracked only when a tape is active and at least one
    parent requires gradients.
    """
    tape = _ACTIVE_TAPE
    if tape is not None and any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True, op=op, parents=parents, backward_fn=backward_fn)
        tape.nodes.append(out)
        return out
    return Tensor(data, op=op)


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# Parameters


class ParameterStore:
    """Named learnable tensors plus non-trainable buffers.

    Parameter shapes are fixed at registration; gradients accumulate on
    the parameter tensors until ``zero_grads``.  Buffers hold mutable
    running statistics (batch-norm) that are checkpointed alongside the
    parameters but never receive gradients.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._buffers: dict[str, np.ndarray] = {}

    def add_parameter(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params or name in self._buffers:
            raise ValueError(f"duplicate store entry {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, op="param")
        self._params[name] = t
        return t

    def add_buffer(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self._params or name in self._buffers:
            raise ValueError(f"duplicate store entry {name!r}")
        arr = np.array(value, dtype=np.float64)
        self._buffers[name] = arr
        return arr

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params or name in self._buffers

    def parameters(self) -> list[tuple[str, Tensor]]:
        return sorted(self._params.items())

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        return sorted(self._buffers.items())

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad = None

    def num_values(self) -> int:
        return sum(p.size for p in self._params.values())

    def load_values(self, params: dict[str, np.ndarray], buffers: dict[str, np.ndarray]) -> None:
        """Copy values in place, keeping tensor/buffer object identity."""
        if set(params) != set(self._params) or set(buffers) != set(self._buffers):
            missing = (set(self._params) - set(params)) | (set(self._buffers) - set(buffers))
            extra = (set(params) - set(self._params)) | (set(buffers) - set(self._buffers))
            raise ValueError(f"store entries do not match checkpoint (missing={sorted(missing)}, unexpected={sorted(extra)})")
        for name, value in params.items():
            slot = self._params[name]
            if slot.shape != value.shape:
                raise ValueError(f"parameter {name!r}: shape {value.shape} does not match registered {slot.shape}")
            slot.data[...] = value
        for name, value in buffers.items():
            slot = self._buffers[name]
            if slot.shape != value.shape:
                raise ValueError(f"buffer {name!r}: shape {value.shape} does not match registered {slot.shape}")
            slot[...] = value


class BatchNormState:
    """Learnable scale/shift and running statistics for one batch-norm layer.

    ``mode`` selects the normalization source: "train" uses batch
    statistics (biased variance) and updates the running estimates,
    "eval" uses only the running estimates, making per-row outputs
    independent of batch composition.
    """

    def __init__(self, store: ParameterStore, prefix: str, num_features: int,
                 momentum: float = 0.1, epsilon: float = 1e-5):
        if not 0.0 < momentum < 1.0:
            raise ValueError(f"momentum must lie in (0, 1), got {momentum}")
        self.gamma = store.add_parameter(f"{prefix}.gamma", np.ones(num_features))
        self.beta = store.add_parameter(f"{prefix}.beta", np.zeros(num_features))
        self.running_mean = store.add_buffer(f"{prefix}.running_mean", np.zeros(num_features))
        self.running_var = store.add_buffer(f"{prefix}.running_var", np.ones(num_features))
        self.momentum = momentum
        self.epsilon = epsilon
        self.mode = "train"


# ---------------------------------------------------------------------------
# Operations


def linear(x, weights, bias=None) -> Tensor:
    """Affine map y = x @ weights.T + bias over the last axis of x."""
    x = _coerce(x)
    w = _coerce(weights)
    if w.ndim != 2:
        raise ShapeError(f"linear: weights must be 2-D (out, in), got {w.shape}")
    out_dim, in_dim = w.shape
    if x.ndim < 1 or x.shape[-1] != in_dim:
        raise ShapeError(f"linear: input shape {x.shape} incompatible with weights shape {w.shape}")
    b = _coerce(bias) if bias is not None else None
    if b is not None and b.shape != (out_dim,):
        raise ShapeError(f"linear: bias shape {b.shape} incompatible with weights shape {w.shape}")

    x2 = x.data.reshape(-1, in_dim)
    y2 = x2 @ w.data.T
    if b is not None:
        y2 = y2 + b.data
    out_shape = x.shape[:-1] + (out_dim,)
    parents = (x, w) if b is None else (x, w, b)

    def backward_fn(g):
        g2 = g.reshape(-1, out_dim)
        dx = (g2 @ w.data).reshape(x.shape)
        dw = g2.T @ x2
        if b is None:
            return dx, dw
        return dx, dw, g2.sum(axis=0)

    return apply_op("linear", y2.reshape(out_shape), parents, backward_fn)


def relu(x) -> Tensor:
    x = _coerce(x)
    y = np.maximum(x.data, 0.0)
    mask = x.data > 0.0

    def backward_fn(g):
        return (g * mask,)

    return apply_op("relu", y, (x,), backward_fn)


def elu(x) -> Tensor:
    """Exponential linear unit with unit saturation scale."""
    x = _coerce(x)
    y = np.where(x.data > 0.0, x.data, np.expm1(x.data))

    def backward_fn(g):
        return (g * np.where(x.data > 0.0, 1.0, y + 1.0),)

    return apply_op("elu", y, (x,), backward_fn)


def tanh(x) -> Tensor:
    x = _coerce(x)
    y = np.tanh(x.data)

    def backward_fn(g):
        return (g * (1.0 - y * y),)

    return apply_op("tanh", y, (x,), backward_fn)


def sigmoid(x) -> Tensor:
    x = _coerce(x)
    d = x.data
    y = np.empty_like(d)
    pos = d >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    y[~pos] = e / (1.0 + e)

    def backward_fn(g):
        return (g * y * (1.0 - y),)

    return apply_op("sigmoid", y, (x,), backward_fn)


_ACTIVATIONS = {"relu": relu, "elu": elu, "tanh": tanh, "sigmoid": sigmoid}


def activation(x, kind: str) -> Tensor:
    """Elementwise nonlinearity selected by name: relu|elu|tanh|sigmoid."""
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unsupported activation kind {kind!r}") from None
    return fn(x)


def softmax(x, axis: int = -1) -> Tensor:
    """Stable softmax along ``axis`` (max-subtraction before exp)."""
    x = _coerce(x)
    if x.shape == () or x.shape[axis] < 1:
        raise ShapeError(f"softmax: axis {axis} of shape {x.shape} is empty")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(g):
        inner = (g * s).sum(axis=axis, keepdims=True)
        return (s * (g - inner),)

    return apply_op("softmax", s, (x,), backward_fn)


def batch_norm(x, state: BatchNormState) -> Tensor:
    """Batch normalization over axis 0 of a [batch, features] input."""
    x = _coerce(x)
    if x.ndim != 2:
        raise ShapeError(f"batch_norm: expected [batch, features] input, got shape {x.shape}")
    n, f = x.shape
    if f != state.gamma.size:
        raise ShapeError(f"batch_norm: {f} features do not match state width {state.gamma.size}")
    gamma, beta = state.gamma, state.beta
    eps = state.epsilon

    if state.mode == "train":
        if n < 2:
            raise ValueError("batch_norm: train mode requires batch size >= 2 (variance undefined for 1)")
        mu = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mu) * inv
        m = state.momentum
        state.running_mean *= 1.0 - m
        state.running_mean += m * mu
        state.running_var *= 1.0 - m
        state.running_var += m * var

        def backward_fn(g):
            dbeta = g.sum(axis=0)
            dgamma = (g * xhat).sum(axis=0)
            # Batch statistics depend on every row; the extra mean terms
            # are their contribution to the input gradient.
            dx = gamma.data * inv * (g - g.mean(axis=0) - xhat * (g * xhat).mean(axis=0))
            return dx, dgamma, dbeta

    else:
        inv = 1.0 / np.sqrt(state.running_var + eps)
        xhat = (x.data - state.running_mean) * inv

        def backward_fn(g):
            dbeta = g.sum(axis=0)
            dgamma = (g * xhat).sum(axis=0)
            dx = g * gamma.data * inv
            return dx, dgamma, dbeta

    y = gamma.data * xhat + beta.data
    return apply_op("batch_norm", y, (x, gamma, beta), backward_fn)


def concat(parts: Iterable, axis: int = 0) -> Tensor:
    """Concatenate tensors along ``axis``, preserving part order."""
    tensors = [_coerce(p) for p in parts]
    if not tensors:
        raise ValueError("concat: empty input")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from exc
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        return tuple(np.split(g, offsets, axis=axis))

    return apply_op("concat", data, tuple(tensors), backward_fn)


def l1_distance(a, b) -> Tensor:
    """Sum of absolute differences of two equal-length vectors.

    Subgradient at ties is 0 (the symmetric choice).
    """
    a = _coerce(a)
    b = _coerce(b)
    if a.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"l1_distance: expected equal-length vectors, got {a.shape} and {b.shape}")
    diff = a.data - b.data
    val = np.abs(diff).sum()

    def backward_fn(g):
        s = g * np.sign(diff)
        return s, -s

    return apply_op("l1_distance", np.asarray(val), (a, b), backward_fn)


def pairwise_l1(t) -> Tensor:
    """All-pairs L1 distances over the second-to-last axis.

    Input [..., L, k] yields [..., L, L] with out[..., i, j] equal to
    the L1 distance between rows i and j.
    """
    t = _coerce(t)
    if t.ndim < 2:
        raise ShapeError(f"pairwise_l1: need at least 2-D input, got {t.shape}")
    diff = t.data[..., :, None, :] - t.data[..., None, :, :]
    out = np.abs(diff).sum(axis=-1)
    sign = np.sign(diff)

    def backward_fn(g):
        dt = np.einsum("...ij,...ijk->...ik", g, sign)
        dt -= np.einsum("...ij,...ijk->...jk", g, sign)
        return (dt,)

    return apply_op("pairwise_l1", out, (t,), backward_fn)


def pairwise_concat(t) -> Tensor:
    """All ordered-pair row concatenations over the second-to-last axis.

    Input [..., L, k] yields [..., L, L, 2k] with out[..., i, j] equal
    to [row_i || row_j].
    """
    t = _coerce(t)
    if t.ndim < 2:
        raise ShapeError(f"pairwise_concat: need at least 2-D input, got {t.shape}")
    L, k = t.shape[-2], t.shape[-1]
    lead = t.shape[:-2]
    out = np.empty(lead + (L, L, 2 * k))
    out[..., :, :, :k] = t.data[..., :, None, :]
    out[..., :, :, k:] = t.data[..., None, :, :]

    def backward_fn(g):
        dt = g[..., :, :, :k].sum(axis=-2) + g[..., :, :, k:].sum(axis=-3)
        return (dt,)

    return apply_op("pairwise_concat", out, (t,), backward_fn)


def matmul(a, b) -> Tensor:
    """Matrix product with optional shared leading batch axes."""
    a = _coerce(a)
    b = _coerce(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}")
    try:
        data = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from exc

    def backward_fn(g):
        da = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        db = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return da, db

    return apply_op("matmul", data, (a, b), backward_fn)


def add(a, b) -> Tensor:
    a = _coerce(a)
    b = _coerce(b)
    data = a.data + b.data

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return apply_op("add", data, (a, b), backward_fn)


def sub(a, b) -> Tensor:
    a = _coerce(a)
    b = _coerce(b)
    data = a.data - b.data

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return apply_op("sub", data, (a, b), backward_fn)


def mul(a, b) -> Tensor:
    a = _coerce(a)
    b = _coerce(b)
    data = a.data * b.data

    def backward_fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return apply_op("mul", data, (a, b), backward_fn)


def sum_(x, axis: int | None = None) -> Tensor:
    x = _coerce(x)
    data = x.data.sum(axis=axis)

    def backward_fn(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return apply_op("sum", np.asarray(data), (x,), backward_fn)


def mean(x, axis: int | None = None) -> Tensor:
    x = _coerce(x)
    count = x.size if axis is None else x.shape[axis]
    data = x.data.mean(axis=axis)

    def backward_fn(g):
        if axis is None:
            return (np.broadcast_to(g / count, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis) / count, x.shape).copy(),)

    return apply_op("mean", np.asarray(data), (x,), backward_fn)


def sqrt(x) -> Tensor:
    x = _coerce(x)
    y = np.sqrt(x.data)

    def backward_fn(g):
        return (g / (2.0 * y),)

    return apply_op("sqrt", y, (x,), backward_fn)


def cumsum(x, axis: int = -1) -> Tensor:
    x = _coerce(x)
    data = np.cumsum(x.data, axis=axis)

    def backward_fn(g):
        return (np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis),)

    return apply_op("cumsum", data, (x,), backward_fn)


def reshape(x, shape) -> Tensor:
    x = _coerce(x)
    data = x.data.reshape(shape)

    def backward_fn(g):
        return (g.reshape(x.shape),)

    return apply_op("reshape", data, (x,), backward_fn)


def broadcast_to(x, shape) -> Tensor:
    x = _coerce(x)
    data = np.broadcast_to(x.data, shape).copy()

    def backward_fn(g):
        return (_unbroadcast(g, x.shape),)

    return apply_op("broadcast_to", data, (x,), backward_fn)


# ---------------------------------------------------------------------------
# Backward pass and verification


def backward(tape: Tape, output: Tensor) -> None:
    """Accumulate d(output)/d(leaf) for every leaf reachable on the tape.

    ``output`` must be scalar.  Gradients of leaf tensors (parameters)
    accumulate across calls until zeroed; intermediate gradients live
    only inside this call, so repeated invocations with the same tape
    each add exactly one d(output)/d(leaf).
    """
    if output.size != 1:
        raise ValueError(f"backward requires a scalar output, got shape {output.shape}")

    pending: dict[int, np.ndarray] = {}

    def send(t: Tensor, g: np.ndarray) -> None:
        if not t.requires_grad:
            return
        if t.backward_fn is None:
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
            t.grad += g
        elif id(t) in pending:
            pending[id(t)] = pending[id(t)] + g
        else:
            pending[id(t)] = g

    send(output, np.ones_like(output.data))
    for node in reversed(tape.nodes):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is not None:
                send(parent, pg)


def finite_difference_check(fn, store: ParameterStore, step: float = 1e-5,
                            max_coords: int = 64, seed: int = 0) -> float:
    """Max relative error of analytic gradients vs central differences.

    ``fn`` is a deterministic zero-argument callable returning a scalar
    Tensor computed from the parameters in ``store``.  Up to
    ``max_coords`` coordinates per parameter are sampled uniformly at
    random (fixed seed).  Relative error is
    |analytic - numeric| / max(1e-12, |numeric|).
    """
    if step <= 0.0:
        raise ValueError(f"step must be positive, got {step}")
    rng = np.random.default_rng(seed)

    store.zero_grads()
    with Tape() as tape:
        out = fn()
    backward(tape, out)
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in store.parameters()
    }
    store.zero_grads()

    worst = 0.0
    for name, p in store.parameters():
        flat = p.data.reshape(-1)
        if flat.size <= max_coords:
            coords = np.arange(flat.size)
        else:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        a_flat = analytic[name].reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + step
            f_plus = fn().item()
            flat[i] = orig - step
            f_minus = fn().item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            err = abs(a_flat[i] - numeric) / max(1e-12, abs(numeric))
            worst = max(worst, err)
    return worst
