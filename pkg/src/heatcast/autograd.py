"""Minimal dense-tensor reverse-mode automatic differentiation.

Float64 everywhere, dynamic tape rebuilt per training step. Broadcasting
is restricted to leading batch dimensions (one operand's shape must be a
suffix of the other's); anything else needs an explicit reshape. Every
public operation verifies its output is finite.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, GraphError, NumericalError, ShapeError

Array = np.ndarray


def _as_array(data) -> Array:
    arr = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NumericalError("non-finite tensor values")
    return arr


class Tensor:
    """A float64 array plus its position in the computation tape."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 _parents: tuple["Tensor", ...] = (), _backward=None):
        self.data = _as_array(data)
        self.requires_grad = requires_grad
        self.grad: Array | None = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def gradient(self) -> Array:
        """Accumulated gradient, zeros if the tensor never reached the loss."""
        if self.grad is None:
            return np.zeros_like(self.data)
        return self.grad

    def item(self) -> float:
        return float(self.data)

    # operator sugar; scalars are wrapped as constants
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ShapeError("division only by python scalars; use mul with a reciprocal")
        return mul(self, _wrap(1.0 / float(other)))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _wrap(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=np.float64))


def _node(data: Array, parents: tuple[Tensor, ...], backward) -> Tensor:
    requires = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=requires, _parents=parents,
                  _backward=backward if requires else None)


def _suffix_compatible(a: tuple[int, ...], b: tuple[int, ...]) -> bool:
    small, big = (a, b) if len(a) <= len(b) else (b, a)
    return big[len(big) - len(small):] == small


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    return grad.sum(axis=tuple(range(extra)))


def _accumulate(t: Tensor, grad: Array) -> None:
    if t.grad is None:
        # copy: the incoming array may alias a child's grad buffer
        t.grad = np.array(grad)
    else:
        t.grad += grad


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    if not _suffix_compatible(a.shape, b.shape):
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")
    out_data = a.data + b.data

    def backward(out: Tensor) -> None:
        if a.requires_grad:
            _accumulate(a, _unbroadcast(out.grad, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(out.grad, b.shape))

    return _node(out_data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(out: Tensor) -> None:
        if a.requires_grad:
            _accumulate(a, -out.grad)

    return _node(-a.data, (a,), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if not _suffix_compatible(a.shape, b.shape):
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    out_data = a.data * b.data

    def backward(out: Tensor) -> None:
        if a.requires_grad:
            _accumulate(a, _unbroadcast(out.grad * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(out.grad * a.data, b.shape))

    return _node(out_data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: need (n,k)@(k,m), got {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(out: Tensor) -> None:
        if a.requires_grad:
            _accumulate(a, out.grad @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ out.grad)

    return _node(out_data, (a, b), backward)


def _stable_sigmoid(x: Array) -> Array:
    # overflow-free for any x: sigma(x) = (tanh(x/2) + 1) / 2
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def sigmoid(a: Tensor) -> Tensor:
    out_data = _stable_sigmoid(a.data)

    def backward(out: Tensor) -> None:
        if a.requires_grad:
            _accumulate(a, out.grad * out.data * (1.0 - out.data))

    return _node(out_data, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def backward(out: Tensor) -> None:
        if a.requires_grad:
            _accumulate(a, out.grad * (1.0 - out.data * out.data))

    return _node(out_data, (a,), backward)


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0.0)

    def backward(out: Tensor) -> None:
        if a.requires_grad:
            _accumulate(a, out.grad * (a.data > 0))

    return _node(out_data, (a,), backward)


def softplus(a: Tensor) -> Tensor:
    out_data = np.logaddexp(0.0, a.data)

    def backward(out: Tensor) -> None:
        if a.requires_grad:
            _accumulate(a, out.grad * _stable_sigmoid(a.data))

    return _node(out_data, (a,), backward)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)
    if not np.all(np.isfinite(out_data)):
        raise NumericalError("exp overflow")

    def backward(out: Tensor) -> None:
        if a.requires_grad:
            _accumulate(a, out.grad * out.data)

    return _node(out_data, (a,), backward)


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise DomainError("log requires strictly positive input")
    out_data = np.log(a.data)

    def backward(out: Tensor) -> None:
        if a.requires_grad:
            _accumulate(a, out.grad / a.data)

    return _node(out_data, (a,), backward)


def sqrt(a: Tensor) -> Tensor:
    if np.any(a.data < 0):
        raise DomainError("sqrt requires non-negative input")
    out_data = np.sqrt(a.data)

    def backward(out: Tensor) -> None:
        if a.requires_grad:
            denom = np.maximum(out.data, 1e-300)
            _accumulate(a, out.grad * 0.5 / denom)

    return _node(out_data, (a,), backward)


def abs_sum(a: Tensor) -> Tensor:
    """L1 norm of all entries; subgradient 0 at exact zeros."""
    out_data = np.sum(np.abs(a.data))

    def backward(out: Tensor) -> None:
        if a.requires_grad:
            _accumulate(a, out.grad * np.sign(a.data))

    return _node(out_data, (a,), backward)


def sum_all(a: Tensor) -> Tensor:
    out_data = np.sum(a.data)

    def backward(out: Tensor) -> None:
        if a.requires_grad:
            _accumulate(a, np.full(a.shape, out.grad))

    return _node(out_data, (a,), backward)


def mean_all(a: Tensor) -> Tensor:
    return sum_all(a) * (1.0 / a.data.size)


def slice_(a: Tensor, key) -> Tensor:
    out_data = a.data[key]
    if isinstance(out_data, np.ndarray) and out_data.base is not None:
        out_data = out_data.copy()

    def backward(out: Tensor) -> None:
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad[key] += out.grad

    return _node(out_data, (a,), backward)


def concat(tensors: list[Tensor] | tuple[Tensor, ...], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat of zero tensors")
    try:
        out_data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(out: Tensor) -> None:
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * out.grad.ndim
                idx[axis] = slice(int(lo), int(hi))
                _accumulate(t, out.grad[tuple(idx)])

    return _node(out_data, tuple(tensors), backward)


def reshape(a: Tensor, shape) -> Tensor:
    try:
        out_data = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: {exc}") from None

    def backward(out: Tensor) -> None:
        if a.requires_grad:
            _accumulate(a, out.grad.reshape(a.shape))

    return _node(out_data.copy(), (a,), backward)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose expects a 2-D tensor, got shape {a.shape}")

    def backward(out: Tensor) -> None:
        if a.requires_grad:
            _accumulate(a, out.grad.T)

    return _node(a.data.T.copy(), (a,), backward)


# ---------------------------------------------------------------------------
# reverse pass
# ---------------------------------------------------------------------------

def backward(loss: Tensor) -> None:
    """Accumulate gradients of a scalar loss into every reachable tensor.

    Leaves that do not contribute to the loss are simply never visited;
    their ``gradient()`` reads as zeros.
    """
    if loss.data.shape != ():
        raise GraphError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones((), dtype=np.float64)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node)


def zero_grads(tensors) -> None:
    for t in tensors:
        t.grad = None


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """First/second moment accumulators keyed like the parameter dict."""

    step: int = 0
    m: dict[str, Array] = field(default_factory=dict)
    v: dict[str, Array] = field(default_factory=dict)

    @classmethod
    def init(cls, params: dict[str, Array]) -> "AdamState":
        return cls(step=0,
                   m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict[str, Array], grads: dict[str, Array], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> tuple[dict[str, Array], AdamState]:
    """One bias-corrected Adam update, in place on the parameter arrays."""
    state.step += 1
    t = state.step
    for key, p in params.items():
        g = grads[key]
        if g.shape != p.shape:
            raise ShapeError(f"adam_step: grad shape {g.shape} != param shape {p.shape} for {key}")
        m = state.m[key]
        v = state.v[key]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state
