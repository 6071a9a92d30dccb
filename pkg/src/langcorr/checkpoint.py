"""Versioned binary checkpoints: parameters, Adam state, config fingerprint.

Layout: magic b"GPLCKPT1", uint32 record count, then per record a
length-prefixed utf-8 path, uint32 ndim, uint32 dims, raw little-endian
float32 payload. After the records: uint8 has_adam; if set, the four Adam
hyperparameters as float64, uint64 step counter, and per-parameter first
and second moment payloads in record order. Finally a length-prefixed JSON
config fingerprint. Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .nn import AdamState, ParamStore

MAGIC = b"GPLCKPT1"


def _write_str(f, s: str):
    raw = s.encode("utf-8")
    f.write(struct.pack("<I", len(raw)))
    f.write(raw)


def _read_str(f) -> str:
    (n,) = struct.unpack("<I", f.read(4))
    return f.read(n).decode("utf-8")


def _write_array(f, arr: np.ndarray):
    f.write(arr.astype("<f4", copy=False).tobytes())


def _read_array(f, shape) -> np.ndarray:
    n = int(np.prod(shape)) if shape else 1
    raw = f.read(4 * n)
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)


def save(path, store: ParamStore, adam: AdamState | None, config: dict) -> None:
    names = sorted(store.params)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(names)))
        for name in names:
            arr = store.params[name]
            _write_str(f, name)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            _write_array(f, arr)
        f.write(struct.pack("<B", 1 if adam is not None else 0))
        if adam is not None:
            f.write(struct.pack("<dddd", adam.lr, adam.beta1, adam.beta2, adam.eps))
            f.write(struct.pack("<Q", adam.step))
            for name in names:
                _write_array(f, adam.m[name])
                _write_array(f, adam.v[name])
        _write_str(f, json.dumps(config, sort_keys=True))


def load(path):
    """Returns (store, adam_or_None, config). Store seed is recorded in config."""
    with open(path, "rb") as f:
        if f.read(8) != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        (count,) = struct.unpack("<I", f.read(4))
        store = ParamStore.__new__(ParamStore)
        store.dtype = np.dtype(np.float32)
        store.params = {}
        store.grads = {}
        store._rng = None
        for _ in range(count):
            name = _read_str(f)
            (ndim,) = struct.unpack("<I", f.read(4))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim)) if ndim else ()
            store.params[name] = _read_array(f, shape)
            store.grads[name] = np.zeros(shape, dtype=np.float32)
        (has_adam,) = struct.unpack("<B", f.read(1))
        adam = None
        if has_adam:
            lr, b1, b2, eps = struct.unpack("<dddd", f.read(32))
            (step,) = struct.unpack("<Q", f.read(8))
            adam = AdamState.__new__(AdamState)
            adam.lr, adam.beta1, adam.beta2, adam.eps, adam.step = lr, b1, b2, eps, step
            adam.m = {}
            adam.v = {}
            for name in sorted(store.params):
                adam.m[name] = _read_array(f, store.params[name].shape)
                adam.v[name] = _read_array(f, store.params[name].shape)
        config = json.loads(_read_str(f))
        store.seed = config.get("seed", 0)
    return store, adam, config
