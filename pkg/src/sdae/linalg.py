"""Dense float64 kernels used by every training loop.

Matrices are C-contiguous 2-D ``float64`` arrays, vectors 1-D ``float64`` arrays.
The parallel kernels give every output element to exactly one worker, which reduces
it in a fixed index order, so results are bitwise identical for any thread count.
"""

from __future__ import annotations

import os

import numba
import numpy as np
from numba import njit, prange
from scipy.special import expit

# columns handled by one worker in matvec_transposed; fixed so the partition never
# depends on the thread count
_COL_BLOCK = 64


class DimensionError(ValueError):
    """Operand shapes do not conform."""


def default_threads() -> int:
    return os.cpu_count() or 1


def resolve_threads(threads: int | None) -> int:
    """Clamp a requested thread count to what the numba pool can provide."""
    if threads is None:
        threads = default_threads()
    if threads < 1:
        raise ValueError(f"thread count must be >= 1, got {threads}")
    return min(int(threads), numba.config.NUMBA_NUM_THREADS)


def set_threads(threads: int | None) -> int:
    n = resolve_threads(threads)
    numba.set_num_threads(n)
    return n


@njit(parallel=True, cache=True)
def _matvec(W, x, out):
    rows, cols = W.shape
    for i in prange(rows):
        acc = 0.0
        for j in range(cols):
            acc += W[i, j] * x[j]
        out[i] = acc


@njit(parallel=True, cache=True)
def _matvec_t(W, y, out):
    rows, cols = W.shape
    nblocks = (cols + _COL_BLOCK - 1) // _COL_BLOCK
    for blk in prange(nblocks):
        j0 = blk * _COL_BLOCK
        j1 = min(cols, j0 + _COL_BLOCK)
        for j in range(j0, j1):
            out[j] = 0.0
        for i in range(rows):
            yi = y[i]
            for j in range(j0, j1):
                out[j] += W[i, j] * yi


@njit(parallel=True, cache=True)
def _rank1(W, scale, u, v):
    rows, cols = W.shape
    for i in prange(rows):
        s = scale * u[i]
        for j in range(cols):
            W[i, j] += s * v[j]


@njit(parallel=True, cache=True)
def _rank1_t(W, scale, u, v):
    rows, cols = W.shape
    for i in prange(rows):
        s = scale * v[i]
        for j in range(cols):
            W[i, j] += s * u[j]


def _check_matrix(W):
    if W.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {W.shape}")


def matvec(W: np.ndarray, x: np.ndarray, out: np.ndarray | None = None, threads: int | None = None) -> np.ndarray:
    """``W @ x``, rows partitioned across threads."""
    _check_matrix(W)
    if x.shape != (W.shape[1],):
        raise DimensionError(f"matvec: W is {W.shape}, x has shape {x.shape}")
    if out is None:
        out = np.empty(W.shape[0])
    set_threads(threads)
    _matvec(W, x, out)
    return out


def matvec_transposed(W: np.ndarray, y: np.ndarray, out: np.ndarray | None = None, threads: int | None = None) -> np.ndarray:
    """``W.T @ y`` without forming the transpose; output columns partitioned across threads."""
    _check_matrix(W)
    if y.shape != (W.shape[0],):
        raise DimensionError(f"matvec_transposed: W is {W.shape}, y has shape {y.shape}")
    if out is None:
        out = np.empty(W.shape[1])
    set_threads(threads)
    _matvec_t(W, y, out)
    return out


def rank1_update(W: np.ndarray, scale: float, u: np.ndarray, v: np.ndarray, transposed: bool = False,
                 threads: int | None = None) -> None:
    """In place ``W[i, j] += scale * u[i] * v[j]``.

    With ``transposed`` the roles swap, ``W[i, j] += scale * u[j] * v[i]``, which is how
    the decoder gradient (indexed on ``W.T``) is written back into the shared storage.
    """
    _check_matrix(W)
    rows, cols = W.shape
    if transposed:
        if u.shape != (cols,) or v.shape != (rows,):
            raise DimensionError(f"rank1_update(transposed): W is {W.shape}, u {u.shape}, v {v.shape}")
        set_threads(threads)
        _rank1_t(W, float(scale), u, v)
    else:
        if u.shape != (rows,) or v.shape != (cols,):
            raise DimensionError(f"rank1_update: W is {W.shape}, u {u.shape}, v {v.shape}")
        set_threads(threads)
        _rank1(W, float(scale), u, v)


def sigmoid_vec(x: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Logistic function, elementwise; saturates to exactly 0 or 1 far in the tails."""
    return expit(x, out=out)


def softmax_vec(x: np.ndarray) -> np.ndarray:
    if x.size < 1:
        raise DimensionError("softmax of an empty vector")
    e = np.exp(x - np.max(x))
    return e / e.sum()
