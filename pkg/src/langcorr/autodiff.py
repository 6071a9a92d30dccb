"""Reverse-mode differentiation over a small fixed set of dense-tensor ops.

Arrays are float32 by default; gradient checking promotes to float64. Every
op builds a node recording its parents and a closure that scatters the
output gradient back to them. ``backward()`` walks the graph in reverse
topological order. Only the ops needed by the policy architectures exist
here: embedding lookup, valid 1D/2D convolution, affine layers, ReLU,
concat/reshape, segment mean and softmax cross-entropy.
"""

from __future__ import annotations

import numpy as np


class Var:
    """A node in the computation graph: an array plus an optional grad."""

    __slots__ = ("data", "grad", "_parents", "_backward", "is_param")

    def __init__(self, data, parents=(), backward=None, is_param=False):
        self.data = np.asarray(data)
        self.grad = None
        self._parents = parents
        self._backward = backward
        self.is_param = is_param

    @property
    def shape(self):
        return self.data.shape

    @property
    def needs_grad(self):
        """Plain data leaves need no gradient; parameters and interior
        nodes do. Ops use this to skip dead gradient branches."""
        return self.is_param or bool(self._parents)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype)
        else:
            self.grad += g

    def backward(self):
        """Populate .grad on every node reachable from this scalar loss."""
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _as_var(x):
    return x if isinstance(x, Var) else Var(np.asarray(x))


def add(a: Var, b: Var) -> Var:
    a, b = _as_var(a), _as_var(b)
    out = Var(a.data + b.data, (a, b))

    def bwd(g):
        if a.needs_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.needs_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    out._backward = bwd
    return out


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def relu(x: Var) -> Var:
    out = Var(np.maximum(x.data, 0), (x,))
    out._backward = lambda g: x._accumulate(g * (x.data > 0))
    return out


def affine(x: Var, w: Var, b: Var) -> Var:
    """y = x @ w.T + b with w of shape (out_dim, in_dim)."""
    out = Var(x.data @ w.data.T + b.data, (x, w, b))

    def bwd(g):
        if x.needs_grad:
            x._accumulate(g @ w.data)
        gm = g.reshape(-1, g.shape[-1])
        xm = x.data.reshape(-1, x.data.shape[-1])
        w._accumulate(gm.T @ xm)
        b._accumulate(gm.sum(axis=0))

    out._backward = bwd
    return out


def embedding(table: Var, tokens: np.ndarray) -> Var:
    """Row lookup: tokens (..., L) of int ids -> (..., L, E)."""
    tokens = np.asarray(tokens)
    if tokens.min(initial=0) < 0 or tokens.max(initial=0) >= table.data.shape[0]:
        raise ValueError("token id out of range for embedding table")
    out = Var(table.data[tokens], (table,))

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, tokens.reshape(-1), g.reshape(-1, table.data.shape[1]))
        table._accumulate(gt)

    out._backward = bwd
    return out


def _skinny_matmul(a2d: np.ndarray, w: np.ndarray) -> np.ndarray:
    """a2d @ w for very narrow w. BLAS here degrades badly when the output
    has only a few columns, so pad the width up to 16 and slice back."""
    F = w.shape[1]
    if F >= 16 or a2d.shape[0] < 4096:
        return a2d @ w
    wpad = np.zeros((w.shape[0], 16), dtype=w.dtype)
    wpad[:, :F] = w
    return (a2d @ wpad)[:, :F]


def conv1d(x: Var, w: Var, b: Var, kernel: int, stride: int = 1) -> Var:
    """Valid 1D convolution. x: (B, L, Cin), w: (kernel*Cin, F), b: (F,)."""
    B, L, cin = x.data.shape
    if L < kernel:
        raise ValueError(f"conv1d input length {L} < kernel {kernel}")
    lout = (L - kernel) // stride + 1
    # (B, L', kernel, Cin) gather of the sliding windows, one copy per tap
    cols = np.empty((B, lout, kernel, cin), dtype=x.data.dtype)
    for k in range(kernel):
        cols[:, :, k] = x.data[:, k:k + lout * stride:stride]
    cols = cols.reshape(B, lout, kernel * cin)
    y = _skinny_matmul(cols.reshape(-1, kernel * cin), w.data)
    out = Var(y.reshape(B, lout, -1) + b.data, (x, w, b))

    def bwd(g):
        gm = g.reshape(-1, g.shape[-1])
        colm = cols.reshape(-1, cols.shape[-1])
        w._accumulate((gm.T @ colm).T)
        b._accumulate(gm.sum(axis=0))
        if x.needs_grad:
            gx = np.zeros_like(x.data)
            gcols = g @ w.data.T  # (B, L', kernel*Cin)
            for t in range(lout):
                gx[:, t * stride:t * stride + kernel] += \
                    gcols[:, t].reshape(B, kernel, cin)
            x._accumulate(gx)

    out._backward = bwd
    return out


def conv2d(x: Var, w: Var, b: Var, kernel: tuple[int, int], stride: int = 1) -> Var:
    """Valid 2D convolution. x: (B, H, W, Cin), w: (kh*kw*Cin, F), b: (F,)."""
    B, H, W, cin = x.data.shape
    kh, kw = kernel
    if H < kh or W < kw:
        raise ValueError(f"conv2d input {H}x{W} smaller than kernel {kh}x{kw}")
    hout = (H - kh) // stride + 1
    wout = (W - kw) // stride + 1
    cols = np.empty((B, hout, wout, kh, kw, cin), dtype=x.data.dtype)
    for di in range(kh):
        for dj in range(kw):
            cols[:, :, :, di, dj] = x.data[:, di:di + hout * stride:stride,
                                           dj:dj + wout * stride:stride]
    cols = cols.reshape(B, hout, wout, kh * kw * cin)
    y = _skinny_matmul(cols.reshape(-1, kh * kw * cin), w.data)
    out = Var(y.reshape(B, hout, wout, -1) + b.data, (x, w, b))

    def bwd(g):
        gm = g.reshape(-1, g.shape[-1])
        colm = cols.reshape(-1, cols.shape[-1])
        w._accumulate((gm.T @ colm).T)
        b._accumulate(gm.sum(axis=0))
        if x.needs_grad:
            gcols = g @ w.data.T
            gx = np.zeros_like(x.data)
            for i in range(hout):
                for j in range(wout):
                    gx[:, i * stride:i * stride + kh, j * stride:j * stride + kw] += \
                        gcols[:, i, j].reshape(B, kh, kw, cin)
            x._accumulate(gx)

    out._backward = bwd
    return out


def reshape(x: Var, shape) -> Var:
    out = Var(x.data.reshape(shape), (x,))
    out._backward = lambda g: x._accumulate(g.reshape(x.data.shape))
    return out


def concat(xs: list[Var], axis: int = -1) -> Var:
    xs = [_as_var(x) for x in xs]
    out = Var(np.concatenate([x.data for x in xs], axis=axis), tuple(xs))
    sizes = [x.data.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        for x, gpart in zip(xs, np.split(g, splits, axis=axis)):
            if x.needs_grad:
                x._accumulate(gpart)

    out._backward = bwd
    return out


def segment_mean(x: Var, seg_ids: np.ndarray, n_segments: int) -> Var:
    """Mean of rows of x (R, D) grouped by seg_ids into (n_segments, D)."""
    seg_ids = np.asarray(seg_ids)
    counts = np.bincount(seg_ids, minlength=n_segments).astype(x.data.dtype)
    acc = np.zeros((n_segments, x.data.shape[1]), dtype=x.data.dtype)
    np.add.at(acc, seg_ids, x.data)
    safe = np.maximum(counts, 1)[:, None]
    out = Var(acc / safe, (x,))
    out._backward = lambda g: x._accumulate((g / safe)[seg_ids])
    return out


def mean(x: Var) -> Var:
    n = x.data.size
    out = Var(np.asarray(x.data.mean(), dtype=x.data.dtype), (x,))
    out._backward = lambda g: x._accumulate(np.full_like(x.data, g / n))
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Plain (non-differentiable) softmax along the last axis."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: Var, targets: np.ndarray):
    """Mean NLL of integer targets; returns (loss Var scalar, probs array)."""
    targets = np.asarray(targets)
    A = logits.data.shape[-1]
    if targets.min(initial=0) < 0 or targets.max(initial=0) >= A:
        raise ValueError(f"target action id out of range [0, {A})")
    flat = logits.data.reshape(-1, A)
    t = targets.reshape(-1)
    probs = softmax(flat)
    n = flat.shape[0]
    nll = -np.log(np.maximum(probs[np.arange(n), t], 1e-30))
    out = Var(np.asarray(nll.mean(), dtype=logits.data.dtype), (logits,))

    def bwd(g):
        gl = probs.copy()
        gl[np.arange(n), t] -= 1.0
        gl *= g / n
        logits._accumulate(gl.reshape(logits.data.shape).astype(logits.data.dtype))

    out._backward = bwd
    return out, probs.reshape(logits.data.shape)
