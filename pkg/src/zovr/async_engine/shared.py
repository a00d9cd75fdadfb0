"""Shared iterate with per-coordinate atomic access.

The cells live in a NumPy buffer; every access goes through the C routines in
``_atomics`` via ctypes, which releases the GIL for the duration of the call.
No lock ever guards the vector: a whole-vector read is a sequence of
independent per-coordinate atomic loads and may mix logical times.
"""

from __future__ import annotations

import ctypes

import numpy as np

from . import _atomics

_lib = ctypes.CDLL(_atomics.__file__)
_dptr = ctypes.POINTER(ctypes.c_double)
_iptr = ctypes.POINTER(ctypes.c_int64)

_lib.zovr_load.argtypes = [ctypes.c_void_p, ctypes.c_void_p, ctypes.c_int64]
_lib.zovr_load.restype = None
_lib.zovr_store.argtypes = [ctypes.c_void_p, ctypes.c_void_p, ctypes.c_int64]
_lib.zovr_store.restype = None
_lib.zovr_fetch_sub.argtypes = [ctypes.c_void_p, ctypes.c_void_p, ctypes.c_void_p, ctypes.c_int64]
_lib.zovr_fetch_sub.restype = None
_lib.zovr_fetch_add_i64.argtypes = [ctypes.c_void_p, ctypes.c_int64]
_lib.zovr_fetch_add_i64.restype = ctypes.c_int64
_lib.zovr_load_i64.argtypes = [ctypes.c_void_p]
_lib.zovr_load_i64.restype = ctypes.c_int64
_lib.zovr_store_i64.argtypes = [ctypes.c_void_p, ctypes.c_int64]
_lib.zovr_store_i64.restype = None


class SharedIterate:
    """``N`` word-atomic float64 cells."""

    def __init__(self, x0: np.ndarray):
        self._cells = np.ascontiguousarray(np.array(x0, dtype=np.float64))
        self.dim = self._cells.size
        self._addr = self._cells.ctypes.data

    def read(self, out: np.ndarray | None = None) -> np.ndarray:
        """Unsynchronized vector read: each coordinate loaded atomically on its own."""
        if out is None:
            out = np.empty(self.dim)
        _lib.zovr_load(self._addr, out.ctypes.data, self.dim)
        return out

    def write(self, values: np.ndarray) -> None:
        values = np.ascontiguousarray(values, dtype=np.float64)
        _lib.zovr_store(self._addr, values.ctypes.data, self.dim)

    def fetch_sub(self, block: np.ndarray, delta: np.ndarray) -> None:
        """``x[block[k]] -= delta[k]`` as one atomic read-modify-write per coordinate."""
        idx = np.ascontiguousarray(block, dtype=np.int64)
        d = np.ascontiguousarray(delta, dtype=np.float64)
        _lib.zovr_fetch_sub(self._addr, idx.ctypes.data, d.ctypes.data, idx.size)


class AtomicCounter:
    """64-bit counter with atomic fetch-add (iteration tickets, update tallies)."""

    def __init__(self, value: int = 0):
        self._cell = np.array([value], dtype=np.int64)
        self._addr = self._cell.ctypes.data

    def fetch_add(self, value: int = 1) -> int:
        return int(_lib.zovr_fetch_add_i64(self._addr, value))

    def load(self) -> int:
        return int(_lib.zovr_load_i64(self._addr))

    def store(self, value: int) -> None:
        _lib.zovr_store_i64(self._addr, value)
