"""Minimal reverse-mode autodiff over numpy arrays.

Tensors wrap float32/float64 ndarrays and record the primitive that produced
them; calling ``backward()`` on a scalar output walks the recorded graph in
reverse topological order and accumulates gradients additively over fan-out.
Only the primitives the byte-pooling model actually needs are provided; all
of them are 1-D/2-D, and anything batched is expressed as a Python loop over
rows by the caller.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import digamma, erf, gammaln

from .errors import GraphReuseError, NonDeterministicFunctionError, NonFiniteValueError, ShapeMismatchError

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)

# Additive mask value for disallowed attention positions.
NEG_INF = -1e9


class Tensor:
    """A node in the computation graph.

    ``values`` is always an ndarray; ``grad`` is filled in (same shape) by
    ``backward()`` for every tensor reachable from the output that requires
    gradients.
    """

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward", "_backward_ran")

    def __init__(self, values, requires_grad: bool = False, _parents=(), _backward=None):
        self.values = np.asarray(values)
        if not np.issubdtype(self.values.dtype, np.floating):
            self.values = self.values.astype(np.float32)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self._backward_ran = False

    @property
    def shape(self):
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    def item(self) -> float:
        return float(self.values)

    def detach(self) -> "Tensor":
        return Tensor(self.values.copy())

    def backward(self) -> None:
        """Reverse-mode pass from a scalar output.

        A graph may be walked once; a second call raises GraphReuseError
        because gradients would double-accumulate.
        """
        if self.values.size != 1:
            raise ShapeMismatchError("backward() requires a scalar output")
        if self._backward_ran:
            raise GraphReuseError("backward() already ran on this graph")
        self._backward_ran = True

        # Iterative post-order topo sort; the graphs get deep enough that
        # recursion would blow the interpreter stack.
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))

        self.grad = np.ones_like(self.values)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Operator sugar for the common arithmetic ops.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, dtype={self.values.dtype}, requires_grad={self.requires_grad})"


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.values.dtype if like is not None else np.float32
    return Tensor(np.asarray(x, dtype=dtype))


def _make(values: np.ndarray, parents: tuple, backward) -> Tensor:
    # values.sum() is nan/inf iff any element is non-finite (desk-scale
    # magnitudes cannot overflow the sum); one reduction beats isfinite+all.
    if not math.isfinite(values.sum()):
        raise NonFiniteValueError("forward produced NaN/Inf")
    out = Tensor.__new__(Tensor)
    out.values = values
    out.grad = None
    out._backward_ran = False
    if parents and (len(parents) == 1 and parents[0].requires_grad
                    or any(p.requires_grad for p in parents)):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        # first contribution: take a copy rather than zeros+add
        t.grad = np.array(g, dtype=t.values.dtype)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- elementwise & linear algebra ------------------------------------------

def add(a, b) -> Tensor:
    a = _as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, like=a)
    out = a.values + b.values

    def backward(g):
        _accum(a, _unbroadcast(g, a.values.shape))
        _accum(b, _unbroadcast(g, b.values.shape))

    return _make(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a = _as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, like=a)
    out = a.values * b.values

    def backward(g):
        _accum(a, _unbroadcast(g * b.values, a.values.shape))
        _accum(b, _unbroadcast(g * a.values, b.values.shape))

    return _make(out, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.values.ndim != 2 or b.values.ndim != 2 or a.values.shape[1] != b.values.shape[0]:
        raise ShapeMismatchError(f"matmul {a.values.shape} @ {b.values.shape}")
    out = a.values @ b.values

    def backward(g):
        _accum(a, g @ b.values.T)
        _accum(b, a.values.T @ g)

    return _make(out, (a, b), backward)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Fused x @ w + b for 2-D x; the workhorse of every block."""
    if x.values.ndim != 2 or x.values.shape[1] != w.values.shape[0]:
        raise ShapeMismatchError(f"linear {x.values.shape} @ {w.values.shape}")
    out = x.values @ w.values + b.values

    def backward(g):
        _accum(x, g @ w.values.T)
        _accum(w, x.values.T @ g)
        _accum(b, g.sum(axis=0))

    return _make(out, (x, w, b), backward)


def transpose(a: Tensor) -> Tensor:
    out = a.values.T.copy()

    def backward(g):
        _accum(a, g.T)

    return _make(out, (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    out = a.values.reshape(shape)

    def backward(g):
        _accum(a, g.reshape(a.values.shape))

    return _make(out, (a,), backward)


def gelu(a: Tensor) -> Tensor:
    """Exact (erf-based) GELU: x * Phi(x)."""
    x = a.values
    phi = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out = x * phi

    def backward(g):
        dens = _INV_SQRT2PI * np.exp(-0.5 * x * x)
        _accum(a, g * (phi + x * dens))

    return _make(out, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.values))

    def backward(g):
        _accum(a, g * out * (1.0 - out))

    return _make(out, (a,), backward)


def log(a: Tensor) -> Tensor:
    out = np.log(a.values)

    def backward(g):
        _accum(a, g / a.values)

    return _make(out, (a,), backward)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.values)

    def backward(g):
        _accum(a, g * out)

    return _make(out, (a,), backward)


def lgamma(a: Tensor) -> Tensor:
    out = gammaln(a.values)

    def backward(g):
        _accum(a, g * digamma(a.values))

    return _make(out, (a,), backward)


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clip values to [lo, hi]; gradient is zero where clipping was active."""
    out = np.clip(a.values, lo, hi)
    inside = (a.values >= lo) & (a.values <= hi)

    def backward(g):
        _accum(a, g * inside)

    return _make(out, (a,), backward)


def softmax_masked(a: Tensor, additive_mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis after adding ``additive_mask`` (e.g. -1e9
    on disallowed attention positions)."""
    z = a.values if additive_mask is None else a.values + additive_mask
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        _accum(a, out * (g - inner))

    return _make(out, (a,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Layer normalization over the last axis with learned scale/shift."""
    v = x.values
    mu = v.mean(axis=-1, keepdims=True)
    var = v.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (v - mu) * inv
    out = xhat * gain.values + bias.values

    def backward(g):
        _accum(gain, _unbroadcast(g * xhat, gain.values.shape))
        _accum(bias, _unbroadcast(g, bias.values.shape))
        n = v.shape[-1]
        gx = g * gain.values
        dxhat_sum = gx.sum(axis=-1, keepdims=True)
        dxhat_dot = (gx * xhat).sum(axis=-1, keepdims=True)
        _accum(x, inv * (gx - dxhat_sum / n - xhat * dxhat_dot / n))

    return _make(out, (x, gain, bias), backward)


# -- gather / scatter ---------------------------------------------------------

def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    out = table.values[ids]

    def backward(g):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.values)
            np.add.at(table.grad, ids, g)

    return _make(out, (table,), backward)


def take_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows by index; duplicated indices accumulate on backward."""
    idx = np.asarray(idx, dtype=np.int64)
    out = x.values[idx]

    def backward(g):
        if x.requires_grad:
            if x.grad is None:
                x.grad = np.zeros_like(x.values)
            np.add.at(x.grad, idx, g)

    return _make(out, (x,), backward)


def take_cols(x: Tensor, start: int, stop: int) -> Tensor:
    out = x.values[:, start:stop].copy()

    def backward(g):
        if x.requires_grad:
            if x.grad is None:
                x.grad = np.zeros_like(x.values)
            x.grad[:, start:stop] += g

    return _make(out, (x,), backward)


def concat_cols(parts: list[Tensor]) -> Tensor:
    out = np.concatenate([p.values for p in parts], axis=1)
    widths = [p.values.shape[1] for p in parts]

    def backward(g):
        ofs = 0
        for p, w in zip(parts, widths):
            _accum(p, g[:, ofs:ofs + w])
            ofs += w

    return _make(out, tuple(parts), backward)


def concat_rows(parts: list[Tensor]) -> Tensor:
    out = np.concatenate([p.values for p in parts], axis=0)
    heights = [p.values.shape[0] for p in parts]

    def backward(g):
        ofs = 0
        for p, h in zip(parts, heights):
            _accum(p, g[ofs:ofs + h])
            ofs += h

    return _make(out, tuple(parts), backward)


def segment_mean_pool(x: Tensor, seg_ids: np.ndarray, n_segments: int) -> Tensor:
    """Mean of the rows of ``x`` within each segment.

    ``seg_ids`` maps each row to a segment in [0, n_segments); every segment
    must be non-empty. The backward pass hands each member row 1/len of the
    segment's gradient.
    """
    seg_ids = np.asarray(seg_ids, dtype=np.int64)
    if seg_ids.shape[0] != x.values.shape[0]:
        raise ShapeMismatchError("segment ids must cover every row")
    counts = np.bincount(seg_ids, minlength=n_segments).astype(x.values.dtype)
    if np.any(counts == 0):
        raise ShapeMismatchError("empty segment in mean pool")
    acc = np.zeros((n_segments,) + x.values.shape[1:], dtype=x.values.dtype)
    np.add.at(acc, seg_ids, x.values)
    out = acc / counts[:, None]

    def backward(g):
        _accum(x, g[seg_ids] / counts[seg_ids][:, None])

    return _make(out, (x,), backward)


# -- reductions / losses -------------------------------------------------------

def tsum(a: Tensor) -> Tensor:
    # Compensated summation: these scalar reductions feed finite-difference
    # checks, where pairwise-sum roundoff would be the dominant noise.
    out = np.asarray(math.fsum(a.values.ravel()), dtype=a.values.dtype)

    def backward(g):
        _accum(a, np.broadcast_to(g, a.values.shape).copy())

    return _make(out, (a,), backward)


def tmean(a: Tensor) -> Tensor:
    n = a.values.size
    out = np.asarray(math.fsum(a.values.ravel()) / n, dtype=a.values.dtype)

    def backward(g):
        _accum(a, np.broadcast_to(g / n, a.values.shape).copy())

    return _make(out, (a,), backward)


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Per-position cross-entropy of integer targets against row softmaxes."""
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape[0] != logits.values.shape[0]:
        raise ShapeMismatchError("one target per logits row required")
    z = logits.values
    zmax = z.max(axis=-1, keepdims=True)
    e = np.exp(z - zmax)
    sums = e.sum(axis=-1)
    lse = np.log(sums) + zmax[:, 0]
    rows = np.arange(z.shape[0])
    out = lse - z[rows, targets]

    def backward(g):
        soft = e / sums[:, None]
        soft[rows, targets] -= 1.0
        _accum(logits, soft * g[:, None])

    return _make(out, (logits,), backward)


def straight_through(a: Tensor, threshold: float = 0.5) -> Tensor:
    """Hard threshold on the forward pass, identity gradient on the backward.

    The forward emits 1.0 where ``a >= threshold`` (ties resolve to 1) and
    0.0 elsewhere; the backward hands the incoming gradient to ``a``
    unchanged, which is what makes sampled hard decisions trainable.
    """
    out = (a.values >= threshold).astype(a.values.dtype)

    def backward(g):
        _accum(a, g)

    return _make(out, (a,), backward)


# Registry of the differentiable primitives this layer provides; property
# tests iterate over it.
PRIMITIVES = {
    "add": add,
    "mul": mul,
    "matmul": matmul,
    "transpose": transpose,
    "reshape": reshape,
    "gelu": gelu,
    "sigmoid": sigmoid,
    "log": log,
    "exp": exp,
    "lgamma": lgamma,
    "clamp": clamp,
    "softmax_masked": softmax_masked,
    "layer_norm": layer_norm,
    "embedding": embedding,
    "take_rows": take_rows,
    "take_cols": take_cols,
    "concat_cols": concat_cols,
    "concat_rows": concat_rows,
    "segment_mean_pool": segment_mean_pool,
    "sum": tsum,
    "mean": tmean,
    "cross_entropy": cross_entropy,
    "straight_through": straight_through,
}


def primitives() -> dict:
    """The set of differentiable operations this layer provides."""
    return dict(PRIMITIVES)


def grad_check(f, inputs: list[Tensor], eps: float = 1e-5, seed: int = 0) -> float:
    """Compare reverse-mode gradients of ``f`` against central differences.

    ``f(inputs, rng)`` must return a scalar Tensor and must be deterministic
    given the rng: a fresh ``numpy`` generator seeded with ``seed`` is passed
    to every evaluation, so all stochastic draws inside ``f`` are identical
    across evaluations. Returns the max over coordinates of
    ``|analytic - fd| / max(|analytic|, |fd|, 1e-8)``. Run in float64.
    """
    if not (1e-6 <= eps <= 1e-3):
        raise ValueError(f"eps {eps} outside [1e-6, 1e-3]")

    def run() -> Tensor:
        return f(inputs, np.random.default_rng(seed))

    out1 = run()
    out2 = run()
    if out1.values.size != 1:
        raise ShapeMismatchError("grad_check requires a scalar-valued function")
    if not np.array_equal(out1.values, out2.values):
        raise NonDeterministicFunctionError("two seeded forward passes disagree")

    for t in inputs:
        t.grad = None
    out1.backward()
    analytic = [np.zeros_like(t.values) if t.grad is None else t.grad.copy() for t in inputs]

    max_rel = 0.0
    for t, ana in zip(inputs, analytic):
        flat = t.values.reshape(-1)
        ana_flat = ana.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = run().item()
            flat[i] = orig - eps
            f_minus = run().item()
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * eps)
            a = float(ana_flat[i])
            rel = abs(a - fd) / max(abs(a), abs(fd), 1e-8)
            max_rel = max(max_rel, rel)
    return max_rel
