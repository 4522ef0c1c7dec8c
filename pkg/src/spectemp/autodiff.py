"""Minimal reverse-mode gradient engine over numpy arrays.

Every operation records its inputs and a vector-Jacobian closure on the
result node, so a forward pass builds a tape implicitly (the DAG of nodes);
``backward`` replays it once in reverse topological order. Only float64
real arrays are supported; complex quantities are carried as separate
real/imaginary parts by the caller.

The op set is exactly what the forecasting model needs: broadcast
elementwise arithmetic, relu/softmax, a handful of einsum contractions
with fixed subscripts, and safe reciprocal square root for degree
normalization. Shapes follow the model convention (batch, node, time, dim).
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalError

__all__ = [
    "Tensor",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "neg",
    "relu",
    "softmax_last",
    "reshape",
    "transpose_last2",
    "sum_all",
    "sum_last",
    "take_row",
    "rsqrt_safe",
    "graph_mix",
    "time_mix",
    "mode_filter",
    "node_scores",
    "node_apply",
    "embed_map",
    "pair_scores",
]

_DEGREE_FLOOR = 1e-12


class Tensor:
    """One tape node: a float64 array plus reverse-mode bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad", "_parents")

    def __init__(self, data, requires_grad=False, parents=()):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        # parents: tuple of (Tensor, vjp callable grad_out -> grad_parent)
        self._parents = tuple(parents)

    @property
    def shape(self):
        return self.data.shape

    def topological_order(self):
        """All reachable nodes, inputs strictly before consumers."""
        order, seen, stack = [], set(), [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        return order

    def backward(self):
        if self.data.shape != ():
            raise ValueError("backward() expects a scalar loss node")
        order = self.topological_order()
        for node in order:
            node.grad = None
        self.grad = np.ones((), dtype=np.float64)
        for node in reversed(order):
            if node.grad is None:
                continue
            for parent, vjp in node._parents:
                if not parent.requires_grad:
                    continue
                contrib = vjp(node.grad)
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad = parent.grad + contrib
        return self

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _node(data, inputs_and_vjps):
    """Build a result node; gradient tracking is inherited from inputs."""
    tracked = [(t, vjp) for t, vjp in inputs_and_vjps if t.requires_grad]
    requires = bool(tracked)
    return Tensor(data, requires_grad=requires, parents=tracked)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data + b.data, [
        (a, lambda g: _unbroadcast(g, a.data.shape)),
        (b, lambda g: _unbroadcast(g, b.data.shape)),
    ])


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data - b.data, [
        (a, lambda g: _unbroadcast(g, a.data.shape)),
        (b, lambda g: _unbroadcast(-g, b.data.shape)),
    ])


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data * b.data, [
        (a, lambda g: _unbroadcast(g * b.data, a.data.shape)),
        (b, lambda g: _unbroadcast(g * a.data, b.data.shape)),
    ])


def neg(a):
    a = as_tensor(a)
    return _node(-a.data, [(a, lambda g: -g)])


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0.0
    return _node(np.where(mask, a.data, 0.0), [(a, lambda g: g * mask)])


def softmax_last(a):
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return y * (g - dot)

    return _node(y, [(a, vjp)])


def reshape(a, shape):
    a = as_tensor(a)
    old = a.data.shape
    return _node(a.data.reshape(shape), [(a, lambda g: g.reshape(old))])


def transpose_last2(a):
    a = as_tensor(a)
    return _node(np.swapaxes(a.data, -1, -2),
                 [(a, lambda g: np.swapaxes(g, -1, -2))])


def sum_all(a):
    a = as_tensor(a)
    shape = a.data.shape
    return _node(np.asarray(a.data.sum()),
                 [(a, lambda g: np.broadcast_to(g, shape).copy())])


def take_row(a, k):
    """Select row k of a 2-D tensor."""
    a = as_tensor(a)

    def vjp(g):
        out = np.zeros_like(a.data)
        out[k] = g
        return out

    return _node(a.data[k], [(a, vjp)])


def sum_last(a):
    a = as_tensor(a)
    shape = a.data.shape
    return _node(a.data.sum(axis=-1),
                 [(a, lambda g: np.broadcast_to(g[..., None], shape).copy())])


def rsqrt_safe(a):
    """x -> x**-0.5 where x is safely positive, else 0 (with zero gradient)."""
    a = as_tensor(a)
    ok = a.data > _DEGREE_FLOOR
    safe = np.where(ok, a.data, 1.0)
    y = np.where(ok, safe ** -0.5, 0.0)

    def vjp(g):
        return np.where(ok, -0.5 * safe ** -1.5, 0.0) * g

    return _node(y, [(a, vjp)])


# ---------------------------------------------------------------------------
# fixed-subscript contractions for the (batch, node, time, dim) layout
# ---------------------------------------------------------------------------

def graph_mix(m, x):
    """Mix along the node axis: out[b,i,t,d] = sum_j m[i,j] x[b,j,t,d].

    ``m`` is either a shared (N, N) operator or a per-sample (B, N, N) stack.
    """
    m, x = as_tensor(m), as_tensor(x)
    if m.data.ndim == 2:
        out = np.einsum("ij,bjtd->bitd", m.data, x.data)
        return _node(out, [
            (m, lambda g: np.einsum("bitd,bjtd->ij", g, x.data)),
            (x, lambda g: np.einsum("ij,bitd->bjtd", m.data, g)),
        ])
    out = np.einsum("bij,bjtd->bitd", m.data, x.data)
    return _node(out, [
        (m, lambda g: np.einsum("bitd,bjtd->bij", g, x.data)),
        (x, lambda g: np.einsum("bij,bitd->bjtd", m.data, g)),
    ])


def time_mix(a, x):
    """Mix along the time axis: out[b,n,i,d] = sum_j a[i,j] x[b,n,j,d]."""
    a, x = as_tensor(a), as_tensor(x)
    out = np.einsum("ij,bnjd->bnid", a.data, x.data)
    return _node(out, [
        (a, lambda g: np.einsum("bnid,bnjd->ij", g, x.data)),
        (x, lambda g: np.einsum("ij,bnid->bnjd", a.data, g)),
    ])


def mode_filter(x, w):
    """Per-variable per-dimension mode mixing.

    out[b,n,j,d] = sum_i x[b,n,i,d] w[n,d,i,j]; the first two axes of ``w``
    may be 1 for weight sharing across variables and/or dimensions.
    """
    x, w = as_tensor(x), as_tensor(w)
    b, n, s, d = x.data.shape
    wfull = np.broadcast_to(w.data, (n, d) + w.data.shape[2:])
    out = np.einsum("bnid,ndij->bnjd", x.data, wfull)

    def vjp_w(g):
        full = np.einsum("bnid,bnjd->ndij", x.data, g)
        return _unbroadcast(full, w.data.shape)

    return _node(out, [
        (x, lambda g: np.einsum("bnjd,ndij->bnid", g, wfull)),
        (w, vjp_w),
    ])


def node_scores(q, k):
    """Pairwise mode scores per node: out[b,n,i,j] = sum_d q[b,n,i,d] k[b,n,j,d]."""
    q, k = as_tensor(q), as_tensor(k)
    out = np.einsum("bnid,bnjd->bnij", q.data, k.data)
    return _node(out, [
        (q, lambda g: np.einsum("bnij,bnjd->bnid", g, k.data)),
        (k, lambda g: np.einsum("bnij,bnid->bnjd", g, q.data)),
    ])


def node_apply(a, v):
    """Apply per-node mixing weights: out[b,n,i,d] = sum_j a[b,n,i,j] v[b,n,j,d]."""
    a, v = as_tensor(a), as_tensor(v)
    out = np.einsum("bnij,bnjd->bnid", a.data, v.data)
    return _node(out, [
        (a, lambda g: np.einsum("bnid,bnjd->bnij", g, v.data)),
        (v, lambda g: np.einsum("bnij,bnid->bnjd", a.data, g)),
    ])


def embed_map(x, w):
    """Shared linear map on the last axis: out[b,n,l] = sum_k x[b,n,k] w[k,l]."""
    x, w = as_tensor(x), as_tensor(w)
    out = np.einsum("bnk,kl->bnl", x.data, w.data)
    return _node(out, [
        (x, lambda g: np.einsum("kl,bnl->bnk", w.data, g)),
        (w, lambda g: np.einsum("bnk,bnl->kl", x.data, g)),
    ])


def pair_scores(e):
    """Dot products between all variable pairs: out[b,n,m] = e[b,n,:] . e[b,m,:]."""
    e = as_tensor(e)
    out = np.einsum("bne,bme->bnm", e.data, e.data)

    def vjp(g):
        return (np.einsum("bnm,bme->bne", g, e.data)
                + np.einsum("bnm,bne->bme", g, e.data))

    return _node(out, [(e, vjp)])


def check_finite_gradients(named_params):
    """Raise NumericalError naming the first parameter with a non-finite gradient."""
    for name, tensor in named_params.items():
        if tensor.grad is not None and not np.all(np.isfinite(tensor.grad)):
            raise NumericalError(f"non-finite gradient for parameter {name!r}")
