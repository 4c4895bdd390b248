"""Sparse direct solver wrapper: UMFPACK when available, SuperLU otherwise.

The coupled Jacobian is an indefinite saddle-point matrix on which SuperLU's
partial pivoting produces extreme fill; UMFPACK's multifrontal factorization
handles it an order of magnitude faster.  The system library is bound here
directly (ctypes) because only the four core calls are needed.  Both backends
solve to machine precision, so the choice never affects results beyond
roundoff.
"""

from __future__ import annotations

import ctypes
import ctypes.util

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

_UMF_CONTROL = 20
_UMF_INFO = 90
_UMFPACK_A = 0
_UMFPACK_OK = 0
_UMF_STRATEGY = 5  # Control index
_UMF_ORDERING = 10  # Control index
_STRATEGY_SYMMETRIC = 3.0
_ORDERING_CHOLMOD = 0.0  # AMD/METIS hybrid; far less fill on saddle systems


def _load_umfpack():
    for name in ("libumfpack.so.5", "libumfpack.so", ctypes.util.find_library("umfpack")):
        if not name:
            continue
        try:
            lib = ctypes.CDLL(name)
        except OSError:
            continue
        try:
            for fn in ("umfpack_di_symbolic", "umfpack_di_numeric", "umfpack_di_solve",
                       "umfpack_di_free_symbolic", "umfpack_di_free_numeric", "umfpack_di_defaults"):
                getattr(lib, fn)
        except AttributeError:
            continue
        return lib
    return None


_LIB = _load_umfpack()
_c_double_p = ctypes.POINTER(ctypes.c_double)
_c_int_p = ctypes.POINTER(ctypes.c_int32)


class UmfpackLU:
    """LU factorization of a CSC matrix through the system UMFPACK."""

    def __init__(self, A: sp.csc_matrix):
        A = A.tocsc()
        A.sort_indices()
        n = A.shape[0]
        if A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        self.n = n
        self._Ap = np.ascontiguousarray(A.indptr, dtype=np.int32)
        self._Ai = np.ascontiguousarray(A.indices, dtype=np.int32)
        self._Ax = np.ascontiguousarray(A.data, dtype=np.float64)
        self._control = np.zeros(_UMF_CONTROL)
        self._info = np.zeros(_UMF_INFO)
        _LIB.umfpack_di_defaults(self._control.ctypes.data_as(_c_double_p))
        self._control[_UMF_STRATEGY] = _STRATEGY_SYMMETRIC
        self._control[_UMF_ORDERING] = _ORDERING_CHOLMOD
        sym = ctypes.c_void_p()
        status = _LIB.umfpack_di_symbolic(
            ctypes.c_int32(n), ctypes.c_int32(n),
            self._Ap.ctypes.data_as(_c_int_p), self._Ai.ctypes.data_as(_c_int_p),
            self._Ax.ctypes.data_as(_c_double_p),
            ctypes.byref(sym),
            self._control.ctypes.data_as(_c_double_p), self._info.ctypes.data_as(_c_double_p),
        )
        if status != _UMFPACK_OK:
            raise RuntimeError(f"umfpack symbolic failed with status {status}")
        num = ctypes.c_void_p()
        status = _LIB.umfpack_di_numeric(
            self._Ap.ctypes.data_as(_c_int_p), self._Ai.ctypes.data_as(_c_int_p),
            self._Ax.ctypes.data_as(_c_double_p),
            sym, ctypes.byref(num),
            self._control.ctypes.data_as(_c_double_p), self._info.ctypes.data_as(_c_double_p),
        )
        _LIB.umfpack_di_free_symbolic(ctypes.byref(sym))
        if status != _UMFPACK_OK:
            raise RuntimeError(f"umfpack numeric failed with status {status}")
        self._num = num

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.ascontiguousarray(b, dtype=np.float64)
        if b.ndim == 1:
            x = np.empty_like(b)
            status = _LIB.umfpack_di_solve(
                ctypes.c_int32(_UMFPACK_A),
                self._Ap.ctypes.data_as(_c_int_p), self._Ai.ctypes.data_as(_c_int_p),
                self._Ax.ctypes.data_as(_c_double_p),
                x.ctypes.data_as(_c_double_p), b.ctypes.data_as(_c_double_p),
                self._num,
                self._control.ctypes.data_as(_c_double_p), self._info.ctypes.data_as(_c_double_p),
            )
            if status != _UMFPACK_OK:
                raise RuntimeError(f"umfpack solve failed with status {status}")
            return x
        return np.stack([self.solve(col) for col in b.T], axis=1)

    def __del__(self):
        num = getattr(self, "_num", None)
        if num:
            try:
                _LIB.umfpack_di_free_numeric(ctypes.byref(num))
            except Exception:
                pass


def factorized_lu(A: sp.spmatrix):
    """Factor a sparse matrix; returns an object with .solve(b)."""
    A = A.tocsc()
    if _LIB is not None:
        try:
            return UmfpackLU(A)
        except RuntimeError:
            pass  # singular or failure: fall through for the clearer SuperLU error
    return spla.splu(A)


def umfpack_available() -> bool:
    return _LIB is not None
