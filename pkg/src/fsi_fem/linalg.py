"""Sparse storage and direct solves.

Thin layer over :mod:`scipy.sparse` (CSR storage) and SuperLU (partial
pivoting, so symmetric indefinite saddle-point matrices are fine).
"""

from __future__ import annotations

import logging
import warnings

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10


class SingularMatrixError(np.linalg.LinAlgError):
    pass


class TripletBuffer:
    """Accumulates (row, col, value) chunks; duplicates are summed on finalize."""

    def __init__(self, shape):
        self.shape = (int(shape[0]), int(shape[1]))
        self._rows, self._cols, self._vals = [], [], []

    def add(self, rows, cols, vals):
        rows, cols, vals = (np.ravel(a) for a in np.broadcast_arrays(rows, cols, vals))
        self._rows.append(rows.astype(np.int64))
        self._cols.append(cols.astype(np.int64))
        self._vals.append(vals.astype(float))

    def extend(self, other: "TripletBuffer"):
        self._rows += other._rows
        self._cols += other._cols
        self._vals += other._vals

    def triplets(self):
        if not self._rows:
            return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
        return np.concatenate(self._rows), np.concatenate(self._cols), np.concatenate(self._vals)

    def finalize(self) -> sp.csr_matrix:
        return finalize(*self.triplets(), shape=self.shape)


def finalize(rows, cols, vals, shape) -> sp.csr_matrix:
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=float)
    n, m = shape
    if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= m):
        raise IndexError(f"triplet index out of range for shape {shape}")
    A = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    A.sum_duplicates()
    return A


class Factorization:
    """LU factors of one square sparse matrix, reusable across right-hand sides."""

    def __init__(self, A):
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        self.A = A
        self.last_residual = None
        if A.shape[0] == 0:
            self._lu = None
            return
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", spla.MatrixRankWarning)
                self._lu = spla.splu(A, permc_spec="COLAMD")
        except (RuntimeError, spla.MatrixRankWarning) as exc:
            raise SingularMatrixError(f"factorization failed: {exc}; {self._pivot_hint()}") from exc
        piv = np.abs(self._lu.U.diagonal())
        self.pivot_ratio = float(piv.min() / piv.max()) if piv.size and piv.max() > 0 else 0.0
        if self.pivot_ratio < 1e-13:
            log.warning("near-singular system: smallest/largest pivot = %.3e at row %d",
                        self.pivot_ratio, int(np.argmin(piv)))

    def _pivot_hint(self) -> str:
        A = self.A.tocsr()
        empty = np.flatnonzero(np.diff(A.indptr) == 0)
        if len(empty):
            return f"{len(empty)} structurally empty row(s), first {empty[0]}"
        return "no empty rows; matrix is numerically singular"

    @property
    def shape(self):
        return self.A.shape

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.A.shape[0]:
            raise ValueError(f"rhs has length {b.shape[0]}, matrix is {self.A.shape}")
        if self._lu is None:
            self.last_residual = 0.0
            return b.copy()
        x = self._lu.solve(b)
        r = self.A @ x - b
        self.last_residual = float(np.linalg.norm(r) / max(1.0, np.linalg.norm(b)))
        if not np.isfinite(self.last_residual):
            raise SingularMatrixError("solve produced non-finite values")
        if self.last_residual > RESIDUAL_TOL:
            log.warning("relative residual %.3e exceeds %.0e", self.last_residual, RESIDUAL_TOL)
        return x


def factorize(A) -> Factorization:
    return Factorization(A)


def solve(F: Factorization, b) -> np.ndarray:
    return F.solve(b)


def write_matrix_coo(A, path) -> None:
    """One ``row col value`` line per stored entry."""
    C = sp.coo_matrix(A)
    order = np.lexsort((C.col, C.row))
    with open(path, "w") as fh:
        fh.write(f"% {C.shape[0]} {C.shape[1]} {C.nnz}\n")
        for k in order:
            fh.write(f"{C.row[k]} {C.col[k]} {C.data[k]!r}\n")
