"""Dense float64 tensors (1-D and 2-D) with reverse-mode gradients.

The engine is deliberately small: it implements exactly the operations the
forecasting model needs, with no general broadcasting. Every operation
records a backward closure; calling :meth:`Tensor.backward` on a scalar
(size-1) result sweeps the graph in reverse topological order and
accumulates adjoints into ``.grad`` of every ancestor node. Adjoints
accumulate across repeated backward calls until :func:`zero_grad`, which
is what lets per-sample losses of a mini-batch share parameter leaves.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "matvec",
    "hadamard",
    "concat",
    "dot",
    "sigmoid",
    "tanh_act",
    "softmax",
    "absolute",
    "total",
    "take_row",
    "stack_rows",
    "transpose",
    "zero_grad",
]


def _accumulate(t: "Tensor", g: np.ndarray) -> None:
    # copy on first write: g may alias the child's grad buffer
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad += g


class Tensor:
    """A 1-D or 2-D float64 array plus the bookkeeping for reverse mode.

    Data is treated as immutable after construction (the optimizer is the
    single sanctioned exception). ``grad`` is lazily allocated by the
    backward sweep and holds the adjoint of the same shape as ``data``.
    """

    __slots__ = ("data", "grad", "_parents", "_backward_fn")

    def __init__(self, data, _parents: tuple = ()):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim not in (1, 2):
            raise ValueError(f"tensors must be 1-D or 2-D, got shape {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward_fn = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, data={self.data!r})"

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a size-1 tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    # -- elementwise arithmetic (same shape, or a python scalar) ----------

    def __add__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            _check_same_shape("add", self, other)
            out = Tensor(self.data + other.data, (self, other))

            def bw(g):
                _accumulate(self, g)
                _accumulate(other, g)

        else:
            out = Tensor(self.data + float(other), (self,))

            def bw(g):
                _accumulate(self, g)

        out._backward_fn = bw
        return out

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            _check_same_shape("sub", self, other)
            out = Tensor(self.data - other.data, (self, other))

            def bw(g):
                _accumulate(self, g)
                _accumulate(other, -g)

        else:
            out = Tensor(self.data - float(other), (self,))

            def bw(g):
                _accumulate(self, g)

        out._backward_fn = bw
        return out

    def __rsub__(self, other) -> "Tensor":
        out = Tensor(float(other) - self.data, (self,))

        def bw(g):
            _accumulate(self, -g)

        out._backward_fn = bw
        return out

    def __neg__(self) -> "Tensor":
        return self.__rsub__(0.0)

    def __mul__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            _check_same_shape("mul", self, other)
            out = Tensor(self.data * other.data, (self, other))

            def bw(g):
                _accumulate(self, g * other.data)
                _accumulate(other, g * self.data)

        else:
            c = float(other)
            out = Tensor(self.data * c, (self,))

            def bw(g):
                _accumulate(self, g * c)

        out._backward_fn = bw
        return out

    __rmul__ = __mul__

    # -- backward sweep ----------------------------------------------------

    def backward(self, seed: float = 1.0) -> None:
        """Accumulate d(self)/d(node) * seed into every ancestor's grad.

        ``self`` must be a scalar (size-1) tensor. The computation graph is
        acyclic by construction, so a reverse topological sweep visits each
        node exactly once.
        """
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {self.shape}")
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
                if id(parent) not in visited:
                    stack.append((parent, False))
        _accumulate(self, np.full_like(self.data, seed))
        for node in reversed(order):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def zero_grad(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None


# -- operations --------------------------------------------------------------


def matvec(m: Tensor, v: Tensor) -> Tensor:
    """Matrix-vector product of a 2-D tensor with a 1-D tensor."""
    if m.data.ndim != 2 or v.data.ndim != 1:
        raise ValueError(f"matvec needs (2-D, 1-D), got shapes {m.shape} and {v.shape}")
    if m.shape[1] != v.shape[0]:
        raise ValueError(f"matvec: shape mismatch {m.shape} x {v.shape}")
    out = Tensor(m.data @ v.data, (m, v))

    def bw(g):
        _accumulate(m, np.outer(g, v.data))
        _accumulate(v, m.data.T @ g)

    out._backward_fn = bw
    return out


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    """Element-wise product of two same-shape tensors."""
    if not isinstance(b, Tensor):
        raise TypeError("hadamard needs two tensors")
    return a * b


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Inner product of two 1-D tensors, returned as a size-1 tensor."""
    if a.data.ndim != 1 or b.data.ndim != 1:
        raise ValueError(f"dot needs 1-D tensors, got shapes {a.shape} and {b.shape}")
    if a.shape != b.shape:
        raise ValueError(f"dot: shape mismatch {a.shape} vs {b.shape}")
    out = Tensor(np.array([a.data @ b.data]), (a, b))

    def bw(g):
        _accumulate(a, g[0] * b.data)
        _accumulate(b, g[0] * a.data)

    out._backward_fn = bw
    return out


def concat(*tensors: Tensor) -> Tensor:
    """Concatenate 1-D tensors, first argument's entries first."""
    for t in tensors:
        if t.data.ndim != 1:
            raise ValueError(f"concat needs 1-D tensors, got shape {t.shape}")
    out = Tensor(np.concatenate([t.data for t in tensors]), tuple(tensors))
    offsets = np.cumsum([0] + [t.data.shape[0] for t in tensors])

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if hi > lo:
                _accumulate(t, g[lo:hi])

    out._backward_fn = bw
    return out


def sigmoid(x: Tensor) -> Tensor:
    """Element-wise logistic function, numerically stable at both tails."""
    d = x.data
    y = np.empty_like(d)
    pos = d >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = Tensor(y, (x,))

    def bw(g):
        _accumulate(x, g * y * (1.0 - y))

    out._backward_fn = bw
    return out


def tanh_act(x: Tensor) -> Tensor:
    """Element-wise hyperbolic tangent."""
    y = np.tanh(x.data)
    out = Tensor(y, (x,))

    def bw(g):
        _accumulate(x, g * (1.0 - y * y))

    out._backward_fn = bw
    return out


def softmax(u: Tensor) -> Tensor:
    """Normalize a 1-D score vector to a probability vector.

    Scores are shifted by their maximum before exponentiation so that
    arbitrarily large inputs cannot overflow.
    """
    if u.data.ndim != 1:
        raise ValueError(f"softmax needs a 1-D tensor, got shape {u.shape}")
    if u.data.size == 0:
        raise ValueError("softmax of an empty tensor")
    e = np.exp(u.data - np.max(u.data))
    y = e / e.sum()
    out = Tensor(y, (u,))

    def bw(g):
        _accumulate(u, y * (g - float(g @ y)))

    out._backward_fn = bw
    return out


def absolute(x: Tensor) -> Tensor:
    """Element-wise absolute value; the subgradient at 0 is 0."""
    out = Tensor(np.abs(x.data), (x,))
    sign = np.sign(x.data)

    def bw(g):
        _accumulate(x, g * sign)

    out._backward_fn = bw
    return out


def total(x: Tensor) -> Tensor:
    """Sum of all entries as a size-1 tensor."""
    out = Tensor(np.array([x.data.sum()]), (x,))

    def bw(g):
        _accumulate(x, np.full_like(x.data, g[0]))

    out._backward_fn = bw
    return out


def take_row(m: Tensor, i: int, cols: np.ndarray | None = None) -> Tensor:
    """Select row ``i`` of a 2-D tensor, optionally restricted to ``cols``.

    ``cols`` must hold unique column indices; gradients scatter back into
    exactly those entries.
    """
    if m.data.ndim != 2:
        raise ValueError(f"take_row needs a 2-D tensor, got shape {m.shape}")
    if not 0 <= i < m.shape[0]:
        raise IndexError(f"row {i} out of range for shape {m.shape}")
    row = m.data[i].copy() if cols is None else m.data[i, cols]
    out = Tensor(row, (m,))

    def bw(g):
        if m.grad is None:
            m.grad = np.zeros_like(m.data)
        if cols is None:
            m.grad[i] += g
        else:
            m.grad[i, cols] += g

    out._backward_fn = bw
    return out


def stack_rows(vectors: Sequence[Tensor]) -> Tensor:
    """Stack equal-length 1-D tensors into a 2-D tensor, one per row."""
    vs = list(vectors)
    if not vs:
        raise ValueError("stack_rows of an empty sequence")
    for v in vs:
        if v.data.ndim != 1 or v.shape != vs[0].shape:
            raise ValueError("stack_rows needs equal-length 1-D tensors")
    out = Tensor(np.stack([v.data for v in vs]), tuple(vs))

    def bw(g):
        for k, v in enumerate(vs):
            _accumulate(v, g[k])

    out._backward_fn = bw
    return out


def transpose(m: Tensor) -> Tensor:
    """Transpose of a 2-D tensor."""
    if m.data.ndim != 2:
        raise ValueError(f"transpose needs a 2-D tensor, got shape {m.shape}")
    out = Tensor(m.data.T.copy(), (m,))

    def bw(g):
        _accumulate(m, g.T)

    out._backward_fn = bw
    return out
