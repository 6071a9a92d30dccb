"""Parameter storage, seeded initialization, Adam, and finite-difference checks."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad


class ParamStore:
    """Named map of parameter arrays with paired gradient slots.

    Initialization is a pure function of the seed and the order in which
    parameters are declared (declaration order is fixed by the model
    builders, so two stores built from the same config and seed are
    bit-identical).
    """

    def __init__(self, seed: int, dtype=np.float32):
        self.seed = seed
        self.dtype = np.dtype(dtype)
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._rng = np.random.default_rng(seed)

    def add(self, name: str, shape: tuple, fan_in: int, fan_out: int) -> None:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name}")
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        arr = self._rng.uniform(-limit, limit, size=shape).astype(self.dtype)
        self.params[name] = arr
        self.grads[name] = np.zeros(shape, dtype=self.dtype)

    def add_zeros(self, name: str, shape: tuple) -> None:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name}")
        self.params[name] = np.zeros(shape, dtype=self.dtype)
        self.grads[name] = np.zeros(shape, dtype=self.dtype)

    def as_vars(self) -> dict[str, ad.Var]:
        """Fresh graph leaves for one forward/backward pass."""
        return {k: ad.Var(v, is_param=True) for k, v in self.params.items()}

    def collect_grads(self, leaves: dict[str, ad.Var]) -> None:
        """Copy gradients off graph leaves after backward(); missing -> zero."""
        for k in self.params:
            g = leaves[k].grad
            self.grads[k] = np.zeros_like(self.params[k]) if g is None \
                else g.astype(self.dtype)

    def astype(self, dtype) -> "ParamStore":
        other = ParamStore.__new__(ParamStore)
        other.seed = self.seed
        other.dtype = np.dtype(dtype)
        other.params = {k: v.astype(dtype) for k, v in self.params.items()}
        other.grads = {k: np.zeros_like(v, dtype=dtype) for k, v in self.grads.items()}
        other._rng = None
        return other


class AdamState:
    def __init__(self, store: ParamStore, lr: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m = {k: np.zeros_like(v) for k, v in store.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in store.params.items()}


def adam_update(store: ParamStore, state: AdamState) -> None:
    """One Adam step over store.grads; aborts on non-finite gradients."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for name in sorted(store.params):
        g = store.grads[name]
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        store.params[name] -= (state.lr * mhat / (np.sqrt(vhat) + state.eps)).astype(store.dtype)


def grad_check(closure, store: ParamStore, h: float = 1e-3,
               param_names=None, max_entries_per_param: int = 8,
               rng: np.random.Generator | None = None) -> dict[str, float]:
    """Compare analytic gradients against central finite differences.

    closure(param_arrays: dict) -> Var scalar loss. The check runs in
    float64 regardless of the store's dtype. Returns max relative error per
    parameter block (relative to max(|analytic|, |numeric|, 1e-8)).
    """
    rng = rng or np.random.default_rng(0)
    s64 = store.astype(np.float64)
    leaves = {k: ad.Var(v, is_param=True) for k, v in s64.params.items()}
    loss = closure(leaves)
    loss.backward()
    report = {}
    names = param_names if param_names is not None else sorted(s64.params)
    for name in names:
        arr = s64.params[name]
        analytic = leaves[name].grad
        if analytic is None:
            analytic = np.zeros_like(arr)
        flat_idx = np.arange(arr.size)
        if arr.size > max_entries_per_param:
            flat_idx = rng.choice(arr.size, size=max_entries_per_param, replace=False)
        worst = 0.0
        for idx in flat_idx:
            orig = arr.flat[idx]
            arr.flat[idx] = orig + h
            lp = float(closure({k: ad.Var(v) for k, v in s64.params.items()}).data)
            arr.flat[idx] = orig - h
            lm = float(closure({k: ad.Var(v) for k, v in s64.params.items()}).data)
            arr.flat[idx] = orig
            numeric = (lp - lm) / (2 * h)
            a = float(analytic.flat[idx])
            denom = max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, abs(a - numeric) / denom)
        report[name] = worst
    return report


def mlp(x, leaves: dict, prefix: str, final_relu: bool = True):
    """Apply the dense stack registered under prefix ('<prefix>.0.w', ...)."""
    i = 0
    out = x
    while f"{prefix}.{i}.w" in leaves:
        out = ad.affine(out, leaves[f"{prefix}.{i}.w"], leaves[f"{prefix}.{i}.b"])
        last = f"{prefix}.{i + 1}.w" not in leaves
        if final_relu or not last:
            out = ad.relu(out)
        i += 1
    if i == 0:
        raise KeyError(f"no dense layers registered under {prefix!r}")
    return out


def add_mlp(store: ParamStore, prefix: str, in_dim: int, sizes: list[int]) -> None:
    d = in_dim
    for i, out_dim in enumerate(sizes):
        store.add(f"{prefix}.{i}.w", (out_dim, d), d, out_dim)
        store.add_zeros(f"{prefix}.{i}.b", (out_dim,))
        d = out_dim
