"""Minimal reverse-mode autodiff over numpy arrays.

The value type is `Tensor`, a numpy array plus an optional gradient slot.
Operations (see `functional`) record vector-Jacobian callbacks on their
output; `backward` replays them in reverse topological order.
"""

from __future__ import annotations

import contextlib

import numpy as np

_GRAD_ENABLED = True
_DEFAULT_DTYPE = np.float32


def grad_enabled() -> bool:
    return _GRAD_ENABLED


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (used for targets and eval)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def use_dtype(dtype):
    """Switch the default dtype (float32 for training, float64 for checks)."""
    global _DEFAULT_DTYPE
    prev = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DEFAULT_DTYPE = prev


class Tensor:
    """Numeric array with an optional gradient and a reverse-mode history.

    `_vjps` holds ``(parent, fn)`` pairs where ``fn(g)`` maps the output
    gradient to this parent's gradient contribution.  Leaves have no vjps.
    """

    __slots__ = ("data", "grad", "requires_grad", "_vjps", "name")

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(_DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._vjps = ()
        self.name = name

    # -- basic introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, requires_grad={self.requires_grad}{tag})"

    def item(self):
        return float(self.data.item())

    def numpy(self):
        return self.data

    # -- graph management ----------------------------------------------------
    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    # -- operator sugar (implemented in functional, bound at import) ---------
    def __add__(self, other):
        from . import functional as F
        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import functional as F
        return F.sub(self, other)

    def __rsub__(self, other):
        from . import functional as F
        return F.sub(other, self)

    def __mul__(self, other):
        from . import functional as F
        return F.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import functional as F
        return F.div(self, other)

    def __rtruediv__(self, other):
        from . import functional as F
        return F.div(other, self)

    def __neg__(self):
        from . import functional as F
        return F.mul(self, -1.0)

    def __pow__(self, p):
        from . import functional as F
        return F.power(self, p)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def make_node(data, parents_and_vjps, name=None) -> Tensor:
    """Create an op output; records vjps only for grad-requiring parents."""
    out = Tensor(data)
    if _GRAD_ENABLED:
        vjps = tuple((p, fn) for p, fn in parents_and_vjps if p.requires_grad or p._vjps)
        if vjps:
            out._vjps = vjps
            out.requires_grad = True
    if name:
        out.name = name
    return out


class Tape:
    """Reverse-topologically ordered view of the graph that reaches `root`.

    Node order guarantees every tensor's parents appear before it.
    """

    def __init__(self, nodes):
        self.nodes = list(nodes)

    @classmethod
    def from_root(cls, root: Tensor) -> "Tape":
        order = []
        visited = set()
        stack = [(root, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent, _ in node._vjps:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return cls(order)


def backward(loss: Tensor, tape: Tape | None = None):
    """Accumulate d(loss)/d(t) into ``t.grad`` for every reachable tensor
    with ``requires_grad``.  Fan-out is summed.  `loss` must be scalar.
    """
    if loss.size != 1:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.shape}")
    if tape is None:
        tape = Tape.from_root(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad and not node._vjps:
            # leaf parameter/input
            node.grad = g if node.grad is None else node.grad + g
        for parent, vjp in node._vjps:
            contrib = vjp(g)
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + contrib
            else:
                grads[key] = contrib
    # a requires_grad root with no vjps was handled above; nothing left to do
