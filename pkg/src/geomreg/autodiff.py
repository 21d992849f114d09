"""Minimal reverse-mode automatic differentiation over dense numpy arrays.

A Tape records primitive ops in execution order (parents always precede
children), so the backward pass is a single reverse sweep visiting each node
exactly once. Vars are thin handles (tape, node index, value). Gradients are
exact reverse-mode adjoints; max-style reductions route their subgradient to
the argmax entry (ties to the lowest index).

Test-grade work should run in float64; float32 is acceptable for training.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

EPS_NORM = 1e-12  # below this row norm, normalization is an error, not garbage


class NumericError(RuntimeError):
    """Non-finite value or degenerate normalization inside a computation."""


class _Node:
    __slots__ = ("name", "pulls")

    def __init__(self, name: str, pulls):
        self.name = name
        self.pulls = pulls  # list of (parent_index, fn(adjoint)->contribution)


class Var:
    __slots__ = ("tape", "idx", "data", "requires_grad")

    def __init__(self, tape: "Tape", idx: int, data: np.ndarray, requires_grad: bool):
        self.tape = tape
        self.idx = idx
        self.data = data
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __truediv__(self, s):
        return div(self, s)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Var(idx={self.idx}, shape={self.data.shape})"


class Tape:
    """Single-owner, single-threaded op recorder."""

    def __init__(self, dtype=np.float64, check_finite: bool = True):
        self.dtype = np.dtype(dtype)
        self.check_finite = check_finite
        self.nodes: list[_Node] = []

    def leaf(self, array, requires_grad: bool = True) -> Var:
        data = np.asarray(array, dtype=self.dtype)
        v = self._record("leaf", data, [])
        v.requires_grad = requires_grad
        return v

    def constant(self, array) -> Var:
        return self.leaf(array, requires_grad=False)

    def _record(self, name: str, value: np.ndarray, pulls) -> Var:
        idx = len(self.nodes)
        if self.check_finite and value.size:
            lo, hi = value.min(), value.max()
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise NumericError(f"non-finite values in node {idx} ({name})")
        self.nodes.append(_Node(name, pulls))
        return Var(self, idx, value, any(True for _ in pulls))

    def backward(self, out: Var) -> list:
        """Adjoints for every node, seeded with d(out)/d(out) = 1.

        Pure with respect to recorded state: replaying on the same tape
        yields bit-identical gradients.
        """
        if out.tape is not self:
            raise ValueError("output does not belong to this tape")
        if out.data.shape != ():
            raise ValueError("backward requires a scalar output")
        grads: list = [None] * len(self.nodes)
        grads[out.idx] = np.ones((), dtype=self.dtype)
        for idx in range(out.idx, -1, -1):
            g = grads[idx]
            if g is None:
                continue
            for pidx, fn in self.nodes[idx].pulls:
                c = fn(g)
                grads[pidx] = c if grads[pidx] is None else grads[pidx] + c
        return grads


def _same_tape(*vs: Var) -> Tape:
    tape = vs[0].tape
    for v in vs[1:]:
        if v.tape is not tape:
            raise ValueError("operands recorded on different tapes")
    return tape


def _unary(name: str, a: Var, value: np.ndarray, pull: Callable) -> Var:
    pulls = [(a.idx, pull)] if a.requires_grad else []
    return a.tape._record(name, value, pulls)


# ---------------------------------------------------------------- arithmetic


def add(a: Var, b) -> Var:
    if not isinstance(b, Var):
        return _unary("add_scalar", a, a.data + float(b), lambda g: g)
    tape = _same_tape(a, b)
    if a.data.shape == b.data.shape:
        value = a.data + b.data
        pulls = []
        if a.requires_grad:
            pulls.append((a.idx, lambda g: g))
        if b.requires_grad:
            pulls.append((b.idx, lambda g: g))
        return tape._record("add", value, pulls)
    if a.data.ndim == 2 and b.data.ndim == 1 and a.data.shape[1] == b.data.shape[0]:
        value = a.data + b.data  # row broadcast (bias)
        pulls = []
        if a.requires_grad:
            pulls.append((a.idx, lambda g: g))
        if b.requires_grad:
            pulls.append((b.idx, lambda g: g.sum(axis=0)))
        return tape._record("add_bias", value, pulls)
    raise ValueError(f"add: incompatible shapes {a.data.shape} vs {b.data.shape}")


def neg(a: Var) -> Var:
    return _unary("neg", a, -a.data, lambda g: -g)


def sub(a: Var, b) -> Var:
    if not isinstance(b, Var):
        return _unary("sub_scalar", a, a.data - float(b), lambda g: g)
    return add(a, neg(b))


def mul(a: Var, b) -> Var:
    if not isinstance(b, Var):
        s = float(b)
        return _unary("scale", a, a.data * s, lambda g: g * s)
    tape = _same_tape(a, b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"mul: shape mismatch {a.data.shape} vs {b.data.shape}")
    value = a.data * b.data
    pulls = []
    if a.requires_grad:
        pulls.append((a.idx, lambda g, bd=b.data: g * bd))
    if b.requires_grad:
        pulls.append((b.idx, lambda g, ad=a.data: g * ad))
    return tape._record("mul", value, pulls)


def div(a: Var, s) -> Var:
    s = float(s)
    if s == 0.0:
        raise ZeroDivisionError("division by zero scalar")
    return _unary("div_scalar", a, a.data / s, lambda g: g / s)


def matmul(a: Var, b: Var) -> Var:
    tape = _same_tape(a, b)
    value = a.data @ b.data
    pulls = []
    if a.requires_grad:
        pulls.append((a.idx, lambda g, bd=b.data: g @ bd.T))
    if b.requires_grad:
        pulls.append((b.idx, lambda g, ad=a.data: ad.T @ g))
    return tape._record("matmul", value, pulls)


def transpose(a: Var) -> Var:
    return _unary("transpose", a, a.data.T, lambda g: g.T)


def dot(a: Var, b: Var) -> Var:
    tape = _same_tape(a, b)
    if a.data.ndim != 1 or b.data.ndim != 1:
        raise ValueError("dot expects 1-D operands")
    value = np.asarray(np.dot(a.data, b.data))
    pulls = []
    if a.requires_grad:
        pulls.append((a.idx, lambda g, bd=b.data: g * bd))
    if b.requires_grad:
        pulls.append((b.idx, lambda g, ad=a.data: g * ad))
    return tape._record("dot", value, pulls)


# -------------------------------------------------------------- elementwise


def relu(a: Var) -> Var:
    value = np.maximum(a.data, 0.0)
    mask = a.data > 0.0  # subgradient 0 at the kink
    return _unary("relu", a, value, lambda g: g * mask)


def tanh(a: Var) -> Var:
    value = np.tanh(a.data)
    return _unary("tanh", a, value, lambda g: g * (1.0 - value * value))


def exp(a: Var) -> Var:
    value = np.exp(a.data)
    return _unary("exp", a, value, lambda g: g * value)


def log(a: Var) -> Var:
    value = np.log(a.data)
    return _unary("log", a, value, lambda g, ad=a.data: g / ad)


# --------------------------------------------------------------- reductions


def sum_all(a: Var) -> Var:
    value = np.asarray(a.data.sum())
    shape = a.data.shape
    return _unary("sum", a, value, lambda g: np.broadcast_to(g, shape))


def mean_all(a: Var) -> Var:
    n = a.data.size
    value = np.asarray(a.data.mean())
    shape = a.data.shape
    return _unary("mean", a, value, lambda g: np.broadcast_to(g / n, shape))


def sum_rows(a: Var) -> Var:
    """Sum over axis 1 of a 2-D array."""
    value = a.data.sum(axis=1)
    cols = a.data.shape[1]
    return _unary("sum_rows", a, value, lambda g: np.broadcast_to(g[:, None], (g.shape[0], cols)))


def rowmax(a: Var) -> Var:
    """Max over axis 1; subgradient routed to the argmax (ties: lowest index)."""
    if a.data.ndim != 2:
        raise ValueError("rowmax expects a 2-D array")
    arg = np.argmax(a.data, axis=1)
    value = a.data[np.arange(a.data.shape[0]), arg]

    def pull(g, shape=a.data.shape, arg=arg):
        z = np.zeros(shape, dtype=g.dtype)
        z[np.arange(shape[0]), arg] = g
        return z

    return _unary("rowmax", a, value, pull)


def logsumexp_rows(a: Var) -> Var:
    """Row-wise log(sum(exp(.))), shift-stabilized."""
    m = a.data.max(axis=1)
    ex = np.exp(a.data - m[:, None])
    value = m + np.log(ex.sum(axis=1))
    soft = ex / ex.sum(axis=1)[:, None]
    return _unary("logsumexp_rows", a, value, lambda g: soft * g[:, None])


# ------------------------------------------------------- structural / rows


def slice_rows(a: Var, start: int, stop: int) -> Var:
    value = a.data[start:stop].copy()

    def pull(g, shape=a.data.shape, start=start, stop=stop):
        z = np.zeros(shape, dtype=g.dtype)
        z[start:stop] = g
        return z

    return _unary(f"slice_rows[{start}:{stop}]", a, value, pull)


def gather_rows(a: Var, cols) -> Var:
    """Pick a[i, cols[i]] for each row i."""
    cols = np.asarray(cols, dtype=np.intp)
    rows = np.arange(a.data.shape[0])
    value = a.data[rows, cols]

    def pull(g, shape=a.data.shape, rows=rows, cols=cols):
        z = np.zeros(shape, dtype=g.dtype)
        z[rows, cols] = g
        return z

    return _unary("gather_rows", a, value, pull)


def scatter_rows(base: np.ndarray, rows, src: Var) -> Var:
    """Copy of constant ``base`` with rows[i] replaced by src[i].

    Gradients flow only to ``src``; the untouched rows are constants.
    """
    rows = np.asarray(rows, dtype=np.intp)
    value = np.array(base, dtype=src.tape.dtype)
    value[rows] = src.data
    return _unary("scatter_rows", src, value, lambda g, rows=rows: g[rows])


def l2_normalize(a: Var, eps: float = EPS_NORM) -> Var:
    """Normalize each row (or a single vector) to unit Euclidean norm.

    Backward applies the projection Jacobian (I - zz^T)/||v|| per row.
    Rows with norm below ``eps`` are an error: a degenerate representation
    should fail loudly rather than emit garbage.
    """
    axis = a.data.ndim - 1
    if axis < 0 or a.data.ndim > 2:
        raise ValueError("l2_normalize expects a 1-D or 2-D array")
    norms = np.sqrt((a.data * a.data).sum(axis=axis, keepdims=True))
    if norms.size and norms.min() < eps:
        raise NumericError(f"l2_normalize: row norm {norms.min():.3e} below {eps:.1e}")
    value = a.data / norms

    def pull(g, out=value, norms=norms, axis=axis):
        proj = (g * out).sum(axis=axis, keepdims=True)
        return (g - out * proj) / norms

    return _unary("l2_normalize", a, value, pull)


# ----------------------------------------------------------------- drivers


def value_and_grad(f: Callable[[list[Var]], Var], params: Sequence[np.ndarray],
                   dtype=np.float64, check_finite: bool = True):
    """Evaluate f(params) and the gradient w.r.t. every parameter.

    ``f`` must be pure and composed of the primitives in this module; it
    receives the parameters already wrapped as tape Vars.
    """
    tape = Tape(dtype=dtype, check_finite=check_finite)
    vs = [tape.leaf(p, requires_grad=True) for p in params]
    out = f(vs)
    if not isinstance(out, Var) or out.data.shape != ():
        raise ValueError("f must return a scalar Var")
    grads = tape.backward(out)
    out_grads = [grads[v.idx] if grads[v.idx] is not None else np.zeros_like(v.data)
                 for v in vs]
    return float(out.data), out_grads


def evaluate(f: Callable[[list[Var]], Var], params: Sequence[np.ndarray],
             dtype=np.float64) -> float:
    """Forward-only evaluation on a throwaway tape."""
    tape = Tape(dtype=dtype)
    vs = [tape.leaf(p, requires_grad=False) for p in params]
    return float(f(vs).data)


def grad_check(f, params: Sequence[np.ndarray], h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error per coordinate is |analytic - fd| / max(1, |analytic|);
    intended for float64 only (the oracle needs the headroom).
    """
    params = [np.array(p, dtype=np.float64) for p in params]
    _, grads = value_and_grad(f, params)
    worst = 0.0
    for k, p in enumerate(params):
        flat = p.reshape(-1)
        gflat = grads[k].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = evaluate(f, params)
            flat[i] = orig - h
            fm = evaluate(f, params)
            flat[i] = orig
            fd = (fp - fm) / (2.0 * h)
            rel = abs(gflat[i] - fd) / max(1.0, abs(gflat[i]))
            worst = max(worst, rel)
    return worst
