"""
Minimal reverse-mode differentiation over numpy arrays.

Each operation records its inputs and a backward closure; Tensor.backward walks the
graph in reverse topological order. Only the operators registered in OPERATORS can be
used to build a graph.
"""

from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from utils.errors import UnsupportedOperatorError


class Tensor:
    """Array value with an optional gradient slot"""

    def __init__(self, data, requires_grad: bool = False, parents: Sequence["Tensor"] = (),
                 op: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.grad: Optional[np.ndarray] = None
        self.parents = tuple(parents)
        self.op = op
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, grad: np.ndarray):
        if not self.requires_grad:
            return
        grad = _unbroadcast(grad, self.data.shape)
        self.grad = grad.copy() if self.grad is None else self.grad + grad

    def backward(self, grad: Optional[np.ndarray] = None):
        """Accumulate d(self)/d(leaf) into every leaf's .grad"""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)

        order: List[Tensor] = []
        visited = set()

        def visit(node: "Tensor"):
            if id(node) in visited:
                return
            visited.add(id(node))
            for parent in node.parents:
                visit(parent)
            order.append(node)

        visit(self)
        for node in order:
            if node.parents:
                node.grad = None
        self.grad = np.asarray(grad, dtype=np.float64)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, op, backward) -> Tensor:
    out = Tensor(data, parents=parents, op=op)
    if out.requires_grad:
        out._backward = backward
    return out


# ---------------------------------------------------------
# Operators
# ---------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)

    def backward(g):
        a._accumulate(g)
        b._accumulate(g)
    return _node(a.data + b.data, (a, b), "add", backward)


def mul(a, b) -> Tensor:
    """Elementwise product with numpy broadcasting"""
    a, b = _lift(a), _lift(b)

    def backward(g):
        a._accumulate(g * b.data)
        b._accumulate(g * a.data)
    return _node(a.data * b.data, (a, b), "mul", backward)


def scale(a, factor: float) -> Tensor:
    a = _lift(a)
    return _node(a.data * factor, (a,), "scale", lambda g: a._accumulate(g * factor))


def affine(x, W, b=None) -> Tensor:
    """x @ W (+ b) over the last axis of x"""
    x, W = _lift(x), _lift(W)
    parents = (x, W) if b is None else (x, W, _lift(b))
    out = x.data @ W.data
    if b is not None:
        out = out + parents[2].data

    def backward(g):
        if x.requires_grad:
            x._accumulate(g @ W.data.T)
        if W.requires_grad:
            W._accumulate(x.data.reshape(-1, W.shape[0]).T @ g.reshape(-1, W.shape[1]))
        if b is not None:
            parents[2]._accumulate(g.reshape(-1, W.shape[1]).sum(axis=0))
    return _node(out, parents, "affine", backward)


def relu(x) -> Tensor:
    x = _lift(x)
    return _node(np.maximum(x.data, 0.0), (x,), "relu", lambda g: x._accumulate(g * (x.data > 0)))


def shifted_softplus(x) -> Tensor:
    """log(1 + e^x) - log 2"""
    x = _lift(x)
    out = np.logaddexp(0.0, x.data) - np.log(2.0)

    def backward(g):
        x._accumulate(g / (1.0 + np.exp(-x.data)))
    return _node(out, (x,), "shifted_softplus", backward)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            t._accumulate(piece)
    return _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), "concat", backward)


def reduce_sum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _lift(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        x._accumulate(np.broadcast_to(g, x.shape))
    return _node(out, (x,), "sum", backward)


def reshape(x, shape) -> Tensor:
    x = _lift(x)
    return _node(x.data.reshape(shape), (x,), "reshape", lambda g: x._accumulate(g.reshape(x.shape)))


def gather(x, batch_index: np.ndarray, row_index: np.ndarray) -> Tensor:
    """x[batch_index, row_index] for x of shape (B, N, F)"""
    x = _lift(x)
    batch_index = np.asarray(batch_index)
    row_index = np.asarray(row_index)

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, (batch_index, row_index), g)
        x._accumulate(full)
    return _node(x.data[batch_index, row_index], (x,), "gather", backward)


def masked_mse(pred, target: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean squared error over entries where mask is set"""
    pred = _lift(pred)
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    count = max(mask.sum(), 1.0)
    diff = (pred.data - target) * mask

    def backward(g):
        pred._accumulate(g * 2.0 * diff / count)
    return _node(np.array((diff ** 2).sum() / count), (pred,), "masked_mse", backward)


OPERATORS: Dict[str, Callable[..., Tensor]] = {
    "add": add,
    "mul": mul,
    "scale": scale,
    "affine": affine,
    "relu": relu,
    "shifted_softplus": shifted_softplus,
    "concat": concat,
    "sum": reduce_sum,
    "reshape": reshape,
    "gather": gather,
    "masked_mse": masked_mse,
}

ACTIVATIONS = ("relu", "shifted_softplus")


def require(ops) -> None:
    """Fail before any graph is built if a model plans an operator outside OPERATORS"""
    missing = sorted(set(ops) - set(OPERATORS))
    if missing:
        raise UnsupportedOperatorError(f"operators {missing} are not supported by the autodiff engine")


def apply(op: str, *args, **kwargs) -> Tensor:
    """Build a graph node by operator name"""
    try:
        fn = OPERATORS[op]
    except KeyError:
        raise UnsupportedOperatorError(f"operator '{op}' is not supported by the autodiff engine") from None
    return fn(*args, **kwargs)
