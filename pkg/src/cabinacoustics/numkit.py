"""Complex vector and CSR sparse-matrix kernels.

Vectors are plain ``numpy`` arrays of dtype ``complex128``. Every kernel comes
in a sequential flavour (the bit-reproducible reference) and a parallel
flavour that partitions rows or blocks across numba worker threads. The two
flavours produce bitwise identical results: each output row of ``spmv`` is
accumulated by exactly one worker in column order, and dot products reduce
fixed-size blocks whose partial sums are combined serially.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Iterator

import numba
import numpy as np
from numba import njit, prange

if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

__all__ = [
    "CsrMatrix",
    "csr_from_triplets",
    "csr_from_arrays",
    "identity",
    "spmv",
    "dot_hermitian",
    "norm2",
    "axpy",
    "as_cvector",
    "write_matrix_market",
    "read_matrix_market",
]

DOT_BLOCK = 2048
MM_HEADER = "%%MatrixMarket matrix coordinate complex general"


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """Complex sparse matrix in compressed sparse row layout."""

    nrows: int
    ncols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.nrows <= 0 or self.ncols <= 0:
            raise ValueError("CsrMatrix dimensions must be positive")
        ro, ci, va = self.row_offsets, self.col_indices, self.values
        if ro.shape != (self.nrows + 1,) or ro[0] != 0 or ro[-1] != ci.size:
            raise ValueError("row_offsets must have nrows+1 entries, start at 0 and end at nnz")
        if ci.size != va.size:
            raise ValueError("col_indices and values must have equal length")
        if np.any(np.diff(ro) < 0):
            raise ValueError("row_offsets must be nondecreasing")
        if ci.size:
            if ci.min() < 0 or ci.max() >= self.ncols:
                raise ValueError("column index out of range")
            # strictly increasing within each row
            step = np.diff(ci)
            row_start = np.zeros(ci.size, dtype=bool)
            row_start[ro[:-1][ro[:-1] < ci.size]] = True
            if np.any((step <= 0) & ~row_start[1:]):
                raise ValueError("column indices must be strictly increasing within a row")

    @property
    def nnz(self) -> int:
        return int(self.col_indices.size)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    def row_indices(self) -> np.ndarray:
        return np.repeat(np.arange(self.nrows), np.diff(self.row_offsets))

    def triplets(self) -> Iterator[tuple[int, int, complex]]:
        rows = self.row_indices()
        for r, c, v in zip(rows, self.col_indices, self.values):
            yield int(r), int(c), complex(v)

    def diagonal(self) -> np.ndarray:
        d = np.zeros(min(self.nrows, self.ncols), dtype=np.complex128)
        rows = self.row_indices()
        on = rows == self.col_indices
        d[rows[on]] = self.values[on]
        return d

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=np.complex128)
        out[self.row_indices(), self.col_indices] = self.values
        return out

    def submatrix(self, rows: np.ndarray, cols: np.ndarray) -> "CsrMatrix":
        """Extract ``A[rows][:, cols]`` keeping the stored order of each row."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        colmap = np.full(self.ncols, -1, dtype=np.int64)
        colmap[cols] = np.arange(cols.size)
        offsets = [0]
        idx, vals = [], []
        for r in rows:
            lo, hi = self.row_offsets[r], self.row_offsets[r + 1]
            local = colmap[self.col_indices[lo:hi]]
            keep = local >= 0
            idx.append(local[keep])
            vals.append(self.values[lo:hi][keep])
            offsets.append(offsets[-1] + int(keep.sum()))
        idx_arr = np.concatenate(idx) if idx else np.zeros(0, np.int64)
        val_arr = np.concatenate(vals) if vals else np.zeros(0, np.complex128)
        # columns may come out unsorted if ``cols`` is not increasing
        return csr_from_arrays(
            np.repeat(np.arange(rows.size), np.diff(offsets)), idx_arr, val_arr, rows.size, cols.size
        )

    def with_values(self, values: np.ndarray) -> "CsrMatrix":
        return CsrMatrix(self.nrows, self.ncols, self.row_offsets, self.col_indices,
                         np.asarray(values, dtype=np.complex128))


def csr_from_arrays(rows, cols, vals, nrows: int, ncols: int) -> CsrMatrix:
    """Build a CSR matrix from parallel triplet arrays, summing duplicates."""
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=np.complex128).ravel()
    if not (rows.size == cols.size == vals.size):
        raise ValueError("triplet arrays must have equal length")
    bad = (rows < 0) | (rows >= nrows) | (cols < 0) | (cols >= ncols)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise IndexError(
            f"triplet #{k} ({rows[k]}, {cols[k]}, {vals[k]}) out of range for {nrows}x{ncols} matrix"
        )
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if rows.size:
        new = np.ones(rows.size, dtype=bool)
        new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        starts = np.flatnonzero(new)
        vals = np.add.reduceat(vals, starts)
        rows, cols = rows[starts], cols[starts]
    offsets = np.zeros(nrows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=nrows), out=offsets[1:])
    return CsrMatrix(nrows, ncols, offsets, cols.copy(), vals.astype(np.complex128))


def csr_from_triplets(triplets: Iterable[tuple[int, int, complex]], nrows: int, ncols: int) -> CsrMatrix:
    trip = list(triplets)
    if not trip:
        return csr_from_arrays([], [], [], nrows, ncols)
    r, c, v = zip(*trip)
    return csr_from_arrays(r, c, v, nrows, ncols)


def identity(n: int) -> CsrMatrix:
    ar = np.arange(n)
    return csr_from_arrays(ar, ar, np.ones(n), n, n)


def as_cvector(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.complex128).reshape(-1)


# -- numba kernels ---------------------------------------------------------

@njit(cache=True)
def _spmv_seq(offsets, cols, vals, x, y):
    for i in range(offsets.size - 1):
        acc = 0j
        for k in range(offsets[i], offsets[i + 1]):
            acc += vals[k] * x[cols[k]]
        y[i] = acc


@njit(cache=True, parallel=True)
def _spmv_par(offsets, cols, vals, x, y):
    for i in prange(offsets.size - 1):
        acc = 0j
        for k in range(offsets[i], offsets[i + 1]):
            acc += vals[k] * x[cols[k]]
        y[i] = acc


@njit(cache=True)
def _dot_block(x, y, lo, hi):
    re = 0.0
    im = 0.0
    for i in range(lo, hi):
        xr = x[i].real
        xi = x[i].imag
        yr = y[i].real
        yi = y[i].imag
        re += xr * yr + xi * yi
        im += xr * yi - xi * yr
    return re, im


@njit(cache=True)
def _dot_seq(x, y, block):
    nb = (x.size + block - 1) // block
    pr = np.zeros(nb)
    pi = np.zeros(nb)
    for b in range(nb):
        pr[b], pi[b] = _dot_block(x, y, b * block, min((b + 1) * block, x.size))
    re = 0.0
    im = 0.0
    for b in range(nb):
        re += pr[b]
        im += pi[b]
    return complex(re, im)


@njit(cache=True, parallel=True)
def _dot_par(x, y, block):
    nb = (x.size + block - 1) // block
    pr = np.zeros(nb)
    pi = np.zeros(nb)
    for b in prange(nb):
        pr[b], pi[b] = _dot_block(x, y, b * block, min((b + 1) * block, x.size))
    re = 0.0
    im = 0.0
    for b in range(nb):
        re += pr[b]
        im += pi[b]
    return complex(re, im)


@njit(cache=True)
def _axpy_seq(a, x, y, out):
    for i in range(x.size):
        out[i] = a * x[i] + y[i]


@njit(cache=True, parallel=True)
def _axpy_par(a, x, y, out):
    for i in prange(x.size):
        out[i] = a * x[i] + y[i]


# -- public kernels --------------------------------------------------------

def spmv(A: CsrMatrix, x, parallel: bool = False) -> np.ndarray:
    """Return ``A @ x``; each row is accumulated left to right."""
    x = as_cvector(x)
    if x.size != A.ncols:
        raise ValueError(f"dimension mismatch: matrix has {A.ncols} columns, vector has {x.size} entries")
    y = np.empty(A.nrows, dtype=np.complex128)
    kernel = _spmv_par if parallel else _spmv_seq
    kernel(A.row_offsets, A.col_indices, A.values, x, y)
    return y


def dot_hermitian(x, y, parallel: bool = False) -> complex:
    """Conjugate-first inner product ``sum(conj(x_i) * y_i)``."""
    x = as_cvector(x)
    y = as_cvector(y)
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size == 0:
        return 0j
    kernel = _dot_par if parallel else _dot_seq
    return kernel(x, y, DOT_BLOCK)


_SAFE_LO, _SAFE_HI = 1e-150, 1e150


def norm2(x, parallel: bool = False) -> float:
    """Euclidean norm; rescales first when squaring would under- or overflow."""
    x = as_cvector(x)
    if x.size == 0:
        return 0.0
    nrm = float(np.sqrt(dot_hermitian(x, x, parallel).real))
    if _SAFE_LO < nrm < _SAFE_HI:
        return nrm
    big = float(np.max(np.abs(x)))
    if big == 0.0 or not np.isfinite(big):
        return big
    return big * float(np.sqrt(dot_hermitian(x / big, x / big, parallel).real))


def axpy(alpha: complex, x, y, parallel: bool = False) -> np.ndarray:
    """Return ``alpha * x + y`` as a new vector."""
    x = as_cvector(x)
    y = as_cvector(y)
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    out = np.empty_like(x)
    kernel = _axpy_par if parallel else _axpy_seq
    kernel(complex(alpha), x, y, out)
    return out


# -- Matrix Market ---------------------------------------------------------

def write_matrix_market(path, A: CsrMatrix) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(MM_HEADER + "\n")
        fh.write(f"{A.nrows} {A.ncols} {A.nnz}\n")
        for r, c, v in A.triplets():
            fh.write(f"{r + 1} {c + 1} {float(v.real)!r} {float(v.imag)!r}\n")


def read_matrix_market(path) -> CsrMatrix:
    with open(path, encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip().lower() != MM_HEADER.lower():
        raise ValueError(f"{path}: expected header {MM_HEADER!r}")
    body = [ln for ln in lines[1:] if ln.strip() and not ln.startswith("%")]
    try:
        nrows, ncols, nnz = (int(t) for t in body[0].split())
    except (IndexError, ValueError) as exc:
        raise ValueError(f"{path}: malformed size line") from exc
    if len(body) - 1 != nnz:
        raise ValueError(f"{path}: header declares {nnz} entries, found {len(body) - 1}")
    rows = np.empty(nnz, np.int64)
    cols = np.empty(nnz, np.int64)
    vals = np.empty(nnz, np.complex128)
    for k, ln in enumerate(body[1:]):
        parts = ln.split()
        if len(parts) != 4:
            raise ValueError(f"{path}: entry {k + 1} must have 'row col re im'")
        rows[k] = int(parts[0]) - 1
        cols[k] = int(parts[1]) - 1
        vals[k] = complex(float(parts[2]), float(parts[3]))
    return csr_from_arrays(rows, cols, vals, nrows, ncols)


def warmup(parallel: bool = True) -> None:
    """Trigger JIT compilation of every kernel."""
    A = identity(2)
    x = np.ones(2, dtype=np.complex128)
    for flag in ((False, True) if parallel else (False,)):
        spmv(A, x, flag)
        dot_hermitian(x, x, flag)
        axpy(1.0, x, x, flag)

