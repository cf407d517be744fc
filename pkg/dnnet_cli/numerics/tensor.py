"""
Dense tensors with reverse-mode gradient recording
"""

import threading
from contextlib import contextmanager
from enum import Enum
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..core.errors import ConfigError, GraphError, ShapeError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Precision(Enum):
    """Scalar precision of tensors and parameters"""
    FLOAT32 = "float32"
    FLOAT64 = "float64"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(self.value)

    @classmethod
    def parse(cls, value: "Precision | str | int") -> "Precision":
        """Accept 'float32', '32', 32, 'float64', '64', 64 or a Precision"""
        if isinstance(value, Precision):
            return value
        text = str(value).lower().strip()
        if text in ("float32", "32", "f4", "single"):
            return cls.FLOAT32
        if text in ("float64", "64", "f8", "double"):
            return cls.FLOAT64
        raise ConfigError(f"Unknown precision '{value}' (use float32 or float64)")


_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording in the current thread"""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Tensor:
    """N-dimensional array plus the bookkeeping needed for backward()"""

    def __init__(
        self,
        data: np.ndarray,
        requires_grad: bool = False,
        name: Optional[str] = None,
        _parents: Tuple["Tensor", ...] = (),
        _backward: Optional[BackwardFn] = None,
    ):
        data = np.asarray(data)
        if any(dim < 1 for dim in data.shape):
            raise ShapeError(f"Tensor dimensions must be >= 1, got shape {list(data.shape)}")
        self.data = data
        self.requires_grad = requires_grad
        self.name = name
        self.grad: Optional[np.ndarray] = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._backward is None and not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={list(self.shape)}, dtype={self.dtype}{label})"


class Parameter(Tensor):
    """Trainable leaf tensor"""

    def __init__(self, data: np.ndarray, name: Optional[str] = None):
        super().__init__(np.array(data, copy=True), requires_grad=True, name=name)

    def zero_grad(self) -> None:
        self.grad = None


def make_node(data: np.ndarray, parents: Sequence[Tensor], backward_fn: BackwardFn) -> Tensor:
    """Wrap an op result, recording the graph edge only when something upstream needs it"""
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward_fn)
    return Tensor(data)


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited and parent.requires_grad:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, grad: Optional[np.ndarray] = None) -> List[Tensor]:
    """
    Reverse-mode sweep from ``loss``.

    Leaf gradients are accumulated into ``.grad``; the recorded graph is released
    afterwards, so a second call without a new forward pass is rejected.
    Returns the leaves that received a gradient.
    """
    if loss._backward is None:
        raise GraphError("backward() needs a tensor produced by a recorded forward pass")
    if grad is None:
        if loss.size != 1:
            raise ShapeError(f"backward() without an explicit gradient needs a scalar, got shape {list(loss.shape)}")
        grad = np.ones_like(loss.data)

    grads: Dict[int, np.ndarray] = {id(loss): np.asarray(grad, dtype=loss.dtype)}
    leaves: List[Tensor] = []
    for node in reversed(_topological_order(loss)):
        node_grad = grads.pop(id(node), None)
        if node_grad is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                node.grad = node_grad.copy() if node.grad is None else node.grad + node_grad
                leaves.append(node)
            continue
        parent_grads = node._backward(node_grad)
        for parent, parent_grad in zip(node._parents, parent_grads):
            if parent_grad is None or not parent.requires_grad:
                continue
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + parent_grad
            else:
                grads[id(parent)] = parent_grad
        node._parents = ()
        node._backward = None
    return leaves
