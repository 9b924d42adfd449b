"""Reverse-mode automatic differentiation over dense float64 tensors.

A dynamic tape: every operation on tracked tensors records a backward
closure; ``backward`` walks the graph once in reverse topological order,
accumulates gradients into reachable Parameters, and then releases the
tape. Big enough for MLPs, recurrent cells, and unrolled ODE solves;
deliberately nothing more (no GPU, no fusion, no higher-order grads).
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes incompatible for the requested op."""


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """Dense float64 value, optionally attached to the differentiation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        assert np.all(np.isfinite(arr)), "tensor holds NaN/Inf"
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, grad={'yes' if self.requires_grad else 'no'})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.astype(np.float64, copy=True)
        else:
            self.grad += g

    # -- graph construction helpers -------------------------------------

    @staticmethod
    def _result(data, parents, backward):
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    # -- elementwise arithmetic (numpy broadcasting; scalars stay off-graph)

    def __add__(self, other):
        if isinstance(other, (int, float)):
            return Tensor._result(self.data + other, (self,),
                                  lambda g: self._accumulate(g))
        data = _broadcast_op(np.add, self, other)

        def bw(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))
        return Tensor._result(data, (self, other), bw)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return Tensor._result(self.data - other, (self,),
                                  lambda g: self._accumulate(g))
        data = _broadcast_op(np.subtract, self, other)

        def bw(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(-g, other.data.shape))
        return Tensor._result(data, (self, other), bw)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return Tensor._result(-self.data, (self,), lambda g: self._accumulate(-g))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Tensor._result(self.data * other, (self,),
                                  lambda g: self._accumulate(g * other))
        data = _broadcast_op(np.multiply, self, other)

        def bw(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.data.shape))
        return Tensor._result(data, (self, other), bw)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        if not isinstance(scalar, (int, float)):
            raise TypeError("tensor division only supports scalar divisors")
        return self * (1.0 / scalar)

    # -- linear algebra ---------------------------------------------------

    def matmul(self, other: "Tensor") -> "Tensor":
        if self.data.ndim != 2 or other.data.ndim != 2 or self.shape[1] != other.shape[0]:
            raise ShapeError(f"matmul needs [m,k] @ [k,n], got {self.shape} @ {other.shape}")
        data = self.data @ other.data

        def bw(g):
            if self.requires_grad:
                self._accumulate(g @ other.data.T)
            if other.requires_grad:
                other._accumulate(self.data.T @ g)
        return Tensor._result(data, (self, other), bw)

    __matmul__ = matmul

    # -- nonlinearities ----------------------------------------------------

    def tanh(self) -> "Tensor":
        out_data = np.tanh(self.data)
        return Tensor._result(out_data, (self,),
                              lambda g: self._accumulate(g * (1.0 - out_data * out_data)))

    def sigmoid(self) -> "Tensor":
        out_data = 1.0 / (1.0 + np.exp(-self.data))
        return Tensor._result(out_data, (self,),
                              lambda g: self._accumulate(g * out_data * (1.0 - out_data)))

    def exp(self) -> "Tensor":
        out_data = np.exp(self.data)
        return Tensor._result(out_data, (self,),
                              lambda g: self._accumulate(g * out_data))

    def log(self) -> "Tensor":
        if np.any(self.data <= 0.0):
            raise ValueError("log requires strictly positive values")
        return Tensor._result(np.log(self.data), (self,),
                              lambda g: self._accumulate(g / self.data))

    # -- shape manipulation -------------------------------------------------

    def __getitem__(self, key) -> "Tensor":
        data = self.data[key]

        def bw(g):
            if self.requires_grad:
                scatter = np.zeros_like(self.data)
                np.add.at(scatter, key, g)
                self._accumulate(scatter)
        return Tensor._result(data, (self,), bw)

    def reshape(self, *shape) -> "Tensor":
        data = self.data.reshape(*shape)
        return Tensor._result(data, (self,),
                              lambda g: self._accumulate(g.reshape(self.data.shape)))

    # -- reductions ----------------------------------------------------------

    def sum(self) -> "Tensor":
        return Tensor._result(self.data.sum(), (self,),
                              lambda g: self._accumulate(np.broadcast_to(g, self.data.shape)))

    def mean(self) -> "Tensor":
        n = self.data.size
        return Tensor._result(self.data.mean(), (self,),
                              lambda g: self._accumulate(np.broadcast_to(g / n, self.data.shape)))


def _broadcast_op(ufunc, a: Tensor, b: Tensor) -> np.ndarray:
    if not isinstance(b, Tensor):
        raise TypeError(f"expected Tensor or scalar, got {type(b).__name__}")
    try:
        return ufunc(a.data, b.data)
    except ValueError:
        raise ShapeError(f"shapes {a.shape} and {b.shape} do not broadcast")


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    sizes = [t.data.shape[axis] for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"cannot concat shapes {[t.shape for t in tensors]} on axis {axis}")
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(lo, hi)
                t._accumulate(g[tuple(index)])
    return Tensor._result(data, tuple(tensors), bw)


class Parameter(Tensor):
    """Trainable leaf with a stable name and a persistent gradient buffer."""

    __slots__ = ("name",)

    def __init__(self, name: str, data):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/dp into every reachable Parameter's .grad.

    loss must be scalar. The traversal is iterative (unrolled solves exceed
    the recursion limit) and the tape is released afterwards: intermediate
    nodes drop their parents, closures, and gradients, so a fresh graph can
    be built without growing peak memory.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)

    for node in topo:
        if not isinstance(node, Parameter):
            node.grad = None
        node._parents = ()
        node._backward = None


class Adam:
    """Standard Adam with bias correction; deterministic given the grads."""

    def __init__(self, params: list[Parameter], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / (1.0 - b1 ** self.t)
            v_hat = v / (1.0 - b2 ** self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
