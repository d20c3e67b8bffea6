"""Reverse-mode automatic differentiation over dense float64 arrays.

A Tensor wraps a numpy array plus an adjoint of the same shape. Operations
build a dynamic graph; backward() on a scalar root fills every reachable
requires_grad leaf with d(root)/d(leaf). Adjoints accumulate, so leaves reused
across several paths (or several backward calls) sum their contributions;
zero the grads you care about before a fresh pass.

numpy supplies storage and matmul only. Derivatives, the graph and the
traversal are implemented here.
"""
from __future__ import annotations

import numpy as np

from .errors import NonScalarRootError, ShapeMismatchError, ZeroVectorError

NORM_EPS = 1e-12  # below this a vector counts as zero for cosine similarity


class Tensor:
    """Node in the computation graph.

    values and grad are float64 numpy arrays of identical shape. Leaves are
    created with leaf()/constant(); interior nodes carry the closure that
    routes their adjoint to their parents.
    """

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, values, requires_grad=False, _parents=(), _op="leaf"):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = np.zeros_like(self.values)
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = None
        self._op = _op

    @property
    def shape(self):
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeMismatchError(f"item() on tensor of shape {self.shape}")
        return float(self.values.reshape(()))

    def zero_grad(self):
        self.grad[...] = 0.0

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(op={self._op!r}, shape={self.shape}, requires_grad={self.requires_grad})"


def leaf(values, requires_grad=False, shape=None) -> Tensor:
    """Create a graph leaf. If shape is given the values must conform to it."""
    t = Tensor(values, requires_grad=requires_grad)
    if shape is not None and t.values.shape != tuple(shape):
        raise ShapeMismatchError(f"leaf values have shape {t.values.shape}, expected {tuple(shape)}")
    return t


def constant(values) -> Tensor:
    """Leaf that never receives a gradient."""
    return Tensor(values, requires_grad=False)


def zero_grads(tensors):
    for t in tensors:
        t.zero_grad()


def _node(values, parents, op) -> Tensor:
    rg = any(p.requires_grad for p in parents)
    return Tensor(values, requires_grad=rg, _parents=tuple(parents), _op=op)


def _same_shape(a: Tensor, b: Tensor, op: str):
    if a.values.shape != b.values.shape:
        raise ShapeMismatchError(f"{op}: shapes {a.values.shape} and {b.values.shape} differ")


# elementwise arithmetic

def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    out = _node(a.values + b.values, (a, b), "add")

    def bw(g):
        if a.requires_grad:
            a.grad += g
        if b.requires_grad:
            b.grad += g

    out._backward = bw
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    out = _node(a.values - b.values, (a, b), "sub")

    def bw(g):
        if a.requires_grad:
            a.grad += g
        if b.requires_grad:
            b.grad -= g

    out._backward = bw
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    out = _node(a.values * b.values, (a, b), "mul")

    def bw(g):
        if a.requires_grad:
            a.grad += g * b.values
        if b.requires_grad:
            b.grad += g * a.values

    out._backward = bw
    return out


def scale(x: Tensor, c: float) -> Tensor:
    """Multiply by a python scalar constant."""
    c = float(c)
    out = _node(x.values * c, (x,), "scale")

    def bw(g):
        if x.requires_grad:
            x.grad += g * c

    out._backward = bw
    return out


# linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(m,n)@(n,p) -> (m,p) or (m,n)@(n,) -> (m,)."""
    av, bv = a.values, b.values
    if av.ndim != 2 or bv.ndim not in (1, 2) or av.shape[1] != bv.shape[0]:
        raise ShapeMismatchError(f"matmul: shapes {av.shape} and {bv.shape}")
    out = _node(av @ bv, (a, b), "matmul")

    def bw(g):
        if bv.ndim == 1:
            if a.requires_grad:
                a.grad += np.outer(g, bv)
            if b.requires_grad:
                b.grad += av.T @ g
        else:
            if a.requires_grad:
                a.grad += g @ bv.T
            if b.requires_grad:
                b.grad += av.T @ g

    out._backward = bw
    return out


def affine(w: Tensor, x: Tensor, b: Tensor) -> Tensor:
    """w @ x + b for a vector x, or x @ w.T + b rowwise for a matrix x.

    w is (out, in) and b is (out,). The matrix form treats each row of x as
    one input and accumulates the bias gradient over rows.
    """
    wv, xv, bv = w.values, x.values, b.values
    if wv.ndim != 2 or bv.shape != (wv.shape[0],):
        raise ShapeMismatchError(f"affine: weight {wv.shape} and bias {bv.shape}")
    if xv.ndim == 1:
        if xv.shape[0] != wv.shape[1]:
            raise ShapeMismatchError(f"affine: weight {wv.shape} applied to vector {xv.shape}")
        out = _node(wv @ xv + bv, (w, x, b), "affine")

        def bw(g):
            if w.requires_grad:
                w.grad += np.outer(g, xv)
            if x.requires_grad:
                x.grad += wv.T @ g
            if b.requires_grad:
                b.grad += g

    elif xv.ndim == 2:
        if xv.shape[1] != wv.shape[1]:
            raise ShapeMismatchError(f"affine: weight {wv.shape} applied to rows of {xv.shape}")
        out = _node(xv @ wv.T + bv, (w, x, b), "affine")

        def bw(g):
            if w.requires_grad:
                w.grad += g.T @ xv
            if x.requires_grad:
                x.grad += g @ wv
            if b.requires_grad:
                b.grad += g.sum(axis=0)

    else:
        raise ShapeMismatchError(f"affine: input must be 1-D or 2-D, got {xv.shape}")
    out._backward = bw
    return out


# shape plumbing

def concat(parts, axis=0) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ShapeMismatchError("concat of zero tensors")
    nd = parts[0].values.ndim
    for p in parts:
        if p.values.ndim != nd:
            raise ShapeMismatchError("concat: mixed ranks")
    try:
        vals = np.concatenate([p.values for p in parts], axis=axis)
    except ValueError as exc:
        raise ShapeMismatchError(f"concat: {exc}") from None
    out = _node(vals, parts, "concat")
    sizes = [p.values.shape[axis] for p in parts]

    def bw(g):
        start = 0
        for p, n in zip(parts, sizes):
            if p.requires_grad:
                idx = [slice(None)] * nd
                idx[axis] = slice(start, start + n)
                p.grad += g[tuple(idx)]
            start += n

    out._backward = bw
    return out


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape, dtype=np.int64)) != x.values.size:
        raise ShapeMismatchError(f"reshape {x.shape} -> {shape}")
    out = _node(x.values.reshape(shape), (x,), "reshape")

    def bw(g):
        if x.requires_grad:
            x.grad += g.reshape(x.values.shape)

    out._backward = bw
    return out


def row(x: Tensor, i: int) -> Tensor:
    """Row i of a matrix as a vector."""
    if x.values.ndim != 2:
        raise ShapeMismatchError(f"row: expected matrix, got {x.shape}")
    i = int(i)
    out = _node(x.values[i].copy(), (x,), "row")

    def bw(g):
        if x.requires_grad:
            x.grad[i] += g

    out._backward = bw
    return out


def take_rows(x: Tensor, indices) -> Tensor:
    """Gather rows of a matrix; duplicate indices are allowed."""
    if x.values.ndim != 2:
        raise ShapeMismatchError(f"take_rows: expected matrix, got {x.shape}")
    idx = np.asarray(indices, dtype=np.int64)
    out = _node(x.values[idx], (x,), "take_rows")

    def bw(g):
        if x.requires_grad:
            np.add.at(x.grad, idx, g)

    out._backward = bw
    return out


def select_cols(x: Tensor, indices) -> Tensor:
    """Keep the listed coordinates of a vector, or columns of a matrix."""
    idx = np.asarray(indices, dtype=np.int64)
    if x.values.ndim == 1:
        out = _node(x.values[idx], (x,), "select_cols")

        def bw(g):
            if x.requires_grad:
                np.add.at(x.grad, idx, g)

    elif x.values.ndim == 2:
        out = _node(x.values[:, idx], (x,), "select_cols")

        def bw(g):
            if x.requires_grad:
                # column loop keeps duplicate indices correct
                for j, c in enumerate(idx):
                    x.grad[:, c] += g[:, j]

    else:
        raise ShapeMismatchError(f"select_cols: rank {x.values.ndim}")
    out._backward = bw
    return out


def stack_rows(parts) -> Tensor:
    """Stack equal-length vectors into a matrix, one per row."""
    parts = list(parts)
    if not parts:
        raise ShapeMismatchError("stack_rows of zero tensors")
    d = parts[0].values.shape
    for p in parts:
        if p.values.ndim != 1 or p.values.shape != d:
            raise ShapeMismatchError("stack_rows: parts must be vectors of one length")
    out = _node(np.stack([p.values for p in parts]), parts, "stack_rows")

    def bw(g):
        for i, p in enumerate(parts):
            if p.requires_grad:
                p.grad += g[i]

    out._backward = bw
    return out


# nonlinearities

def _sigmoid_values(x: np.ndarray) -> np.ndarray:
    # piecewise form never exponentiates a large positive argument
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid_values(x.values)
    out = _node(s, (x,), "sigmoid")

    def bw(g):
        if x.requires_grad:
            x.grad += g * s * (1.0 - s)

    out._backward = bw
    return out


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.values)
    out = _node(t, (x,), "tanh")

    def bw(g):
        if x.requires_grad:
            x.grad += g * (1.0 - t * t)

    out._backward = bw
    return out


def relu(x: Tensor) -> Tensor:
    mask = x.values > 0  # subgradient at 0 is 0
    out = _node(np.where(mask, x.values, 0.0), (x,), "relu")

    def bw(g):
        if x.requires_grad:
            x.grad += g * mask

    out._backward = bw
    return out


def softmax_pair(a: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
    """Two-way softmax computed as (sigmoid(a-b), sigmoid(b-a)).

    Algebraically identical to exp-normalize with max subtraction, but never
    overflows and keeps the pair summing to 1 up to one ulp.
    """
    _same_shape(a, b, "softmax_pair")
    return sigmoid(sub(a, b)), sigmoid(sub(b, a))


# similarity and losses

def cosine_similarity(u: Tensor, v: Tensor, guarded: bool = False) -> Tensor:
    """Cosine of the angle between two vectors, or rowwise between matrices.

    A norm below NORM_EPS raises ZeroVectorError by default. With
    ``guarded=True`` such a pair instead yields cosine 0 with zero gradient
    into both arguments — the defined extension used inside the scoring
    head, where a relu tower can legitimately emit an all-zero vector.
    """
    uv, vv = u.values, v.values
    _same_shape(u, v, "cosine_similarity")
    if uv.ndim == 1:
        nu = float(np.linalg.norm(uv))
        nv = float(np.linalg.norm(vv))
        if nu < NORM_EPS or nv < NORM_EPS:
            if not guarded:
                raise ZeroVectorError(f"cosine_similarity: norms {nu:.3e}, {nv:.3e}")
            return _node(0.0, (u, v), "cosine")
        d = float(uv @ vv) / (nu * nv)
        out = _node(d, (u, v), "cosine")

        def bw(g):
            if u.requires_grad:
                u.grad += g * (vv / (nu * nv) - d * uv / (nu * nu))
            if v.requires_grad:
                v.grad += g * (uv / (nu * nv) - d * vv / (nv * nv))

    elif uv.ndim == 2:
        nu = np.linalg.norm(uv, axis=1)
        nv = np.linalg.norm(vv, axis=1)
        live = (nu >= NORM_EPS) & (nv >= NORM_EPS)
        if not np.all(live):
            if not guarded:
                raise ZeroVectorError("cosine_similarity: a row has norm below threshold")
            nu = np.where(live, nu, 1.0)  # dead rows: value 0, gradient 0
            nv = np.where(live, nv, 1.0)
        d = np.where(live, np.einsum("ij,ij->i", uv, vv) / (nu * nv), 0.0)
        out = _node(d, (u, v), "cosine")

        def bw(g):
            gl = g * live
            if u.requires_grad:
                u.grad += (gl / (nu * nv))[:, None] * vv - (gl * d / (nu * nu))[:, None] * uv
            if v.requires_grad:
                v.grad += (gl / (nu * nv))[:, None] * uv - (gl * d / (nv * nv))[:, None] * vv

    else:
        raise ShapeMismatchError(f"cosine_similarity: rank {uv.ndim}")
    out._backward = bw
    return out


def mse_loss(pred: Tensor, target) -> Tensor:
    """Mean squared error against a constant target."""
    tv = target.values if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if tv.shape != pred.values.shape:
        raise ShapeMismatchError(f"mse_loss: {pred.values.shape} vs {tv.shape}")
    diff = pred.values - tv
    n = max(diff.size, 1)
    out = _node(float(np.mean(diff * diff)) if diff.size else 0.0, (pred,), "mse")

    def bw(g):
        if pred.requires_grad:
            pred.grad += g * 2.0 * diff / n

    out._backward = bw
    return out


def bce_loss(logits: Tensor, labels) -> Tensor:
    """Mean binary cross entropy from raw logits, labels in {0, 1}.

    Uses max(x,0) - x*y + log1p(exp(-|x|)) per element, which is exact and
    stable for any logit magnitude.
    """
    yv = labels.values if isinstance(labels, Tensor) else np.asarray(labels, dtype=np.float64)
    if yv.shape != logits.values.shape:
        raise ShapeMismatchError(f"bce_loss: {logits.values.shape} vs {yv.shape}")
    xv = logits.values
    per = np.maximum(xv, 0.0) - xv * yv + np.log1p(np.exp(-np.abs(xv)))
    n = max(per.size, 1)
    out = _node(float(np.mean(per)) if per.size else 0.0, (logits,), "bce")

    def bw(g):
        if logits.requires_grad:
            logits.grad += g * (_sigmoid_values(xv) - yv) / n

    out._backward = bw
    return out


# traversal

def _topo_order(root: Tensor):
    order, seen = [], set()
    stack = [(root, False)]
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
            if id(p) not in seen:
                stack.append((p, False))
    return order  # parents precede children


def backward(root: Tensor):
    """Accumulate d(root)/d(leaf) into every reachable requires_grad leaf."""
    if root.values.size != 1:
        raise NonScalarRootError(f"backward root has shape {root.shape}")
    root.grad += 1.0
    for node in reversed(_topo_order(root)):
        if node._backward is not None and node.requires_grad:
            node._backward(node.grad)


def grad_check(f, x: Tensor, epsilon: float = 1e-5) -> float:
    """Compare reverse-mode gradients of f at leaf x with central differences.

    f must rebuild its graph on each call and return a scalar Tensor; it is
    assumed smooth at x (keep inputs away from relu kinks). Returns
    max_i |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
    """
    x.zero_grad()
    backward(f(x))
    g_ad = x.grad.copy()
    flat = x.values.reshape(-1)
    g_fd = np.zeros(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + epsilon
        hi = f(x).item()
        flat[i] = orig - epsilon
        lo = f(x).item()
        flat[i] = orig
        g_fd[i] = (hi - lo) / (2.0 * epsilon)
    g_fd = g_fd.reshape(x.values.shape)
    denom = np.maximum(1e-8, np.abs(g_ad) + np.abs(g_fd))
    return float(np.max(np.abs(g_ad - g_fd) / denom)) if g_ad.size else 0.0
