"""Matrix-free linear operators.

A :class:`LinearOperator` is a pair of closures (forward and transpose) plus
its shape. Operators never assemble dense storage unless asked to through
:meth:`LinearOperator.to_dense`, which is capped by ``DENSE_ENTRY_CAP``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse.linalg as spla

from . import _kernels

DENSE_ENTRY_CAP = 10**7


class DimensionError(ValueError):
    """Raised for invalid operator dimensions or mismatched operands."""


@dataclass(frozen=True)
class LinearOperator:
    rows: int
    cols: int
    forward_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    transpose_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    name: str = "operator"
    dense_fn: Optional[Callable[[], np.ndarray]] = field(default=None, repr=False)
    norm_est: Optional[float] = None   # known upper bound on the 2-norm, when cheap

    @property
    def shape(self):
        return (self.rows, self.cols)

    def forward(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.cols,):
            raise DimensionError(f"{self.name}: expected vector of length {self.cols}, got shape {v.shape}")
        return self.forward_fn(v)

    def transpose(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape != (self.rows,):
            raise DimensionError(f"{self.name}: expected vector of length {self.rows}, got shape {u.shape}")
        return self.transpose_fn(u)

    matvec = forward
    rmatvec = transpose

    def __matmul__(self, v):
        return self.forward(v)

    @property
    def T(self) -> "LinearOperator":
        dense_t = None
        if self.dense_fn is not None:
            dense_t = lambda: self.dense_fn().T  # noqa: E731
        return LinearOperator(self.cols, self.rows, self.transpose_fn, self.forward_fn,
                              name=f"{self.name}^T", dense_fn=dense_t, norm_est=self.norm_est)

    def to_dense(self, cap: int = DENSE_ENTRY_CAP) -> np.ndarray:
        """Materialize the operator; refuses when rows*cols exceeds ``cap``."""
        if self.rows * self.cols > cap:
            raise MemoryError(f"{self.name}: {self.rows}x{self.cols} exceeds dense cap of {cap} entries")
        if self.dense_fn is not None:
            return np.array(self.dense_fn(), dtype=float)
        M = np.empty((self.rows, self.cols))
        e = np.zeros(self.cols)
        for j in range(self.cols):
            e[j] = 1.0
            M[:, j] = self.forward_fn(e)
            e[j] = 0.0
        return M

    def as_scipy(self) -> spla.LinearOperator:
        return spla.LinearOperator(self.shape, matvec=self.forward_fn, rmatvec=self.transpose_fn,
                                   dtype=float)


def dense_operator(M, name="dense") -> LinearOperator:
    M = np.array(M, dtype=float)
    if M.ndim != 2:
        raise DimensionError("dense_operator needs a 2-D array")
    if not np.all(np.isfinite(M)):
        raise ValueError("dense_operator: matrix has non-finite entries")
    M.setflags(write=False)
    return LinearOperator(M.shape[0], M.shape[1], M.dot, M.T.dot, name=name, dense_fn=lambda: M,
                          norm_est=float(np.linalg.norm(M)))


def identity_operator(n: int) -> LinearOperator:
    if n < 1:
        raise DimensionError("identity_operator: n must be positive")
    return LinearOperator(n, n, np.array, np.array, name=f"I_{n}", dense_fn=lambda: np.eye(n),
                          norm_est=1.0)


def first_derivative_operator(n: int) -> LinearOperator:
    """The (n-1) x n stencil with rows (.., 1, -1, ..), no boundary wrap."""
    if n < 2:
        raise DimensionError(f"first_derivative_operator: n must be >= 2, got {n}")

    def dense():
        D = np.zeros((n - 1, n))
        idx = np.arange(n - 1)
        D[idx, idx] = 1.0
        D[idx, idx + 1] = -1.0
        return D

    return LinearOperator(n - 1, n,
                          lambda v: _kernels.diff_forward(v),
                          lambda u: _kernels.diff_adjoint(u),
                          name=f"L1_{n}", dense_fn=dense, norm_est=2.0)


def kron_stack_operator(N: int) -> LinearOperator:
    """[I_N kron L1; L1 kron I_N] acting on column-major vectorized N x N images."""
    if N < 2:
        raise DimensionError(f"kron_stack_operator: N must be >= 2, got {N}")
    half = N * (N - 1)

    def fwd(v):
        Dr, Dc = _kernels.grad2d_forward(v.reshape((N, N), order="F"))
        return np.concatenate([Dr.ravel(order="F"), Dc.ravel(order="F")])

    def adj(u):
        Dr = u[:half].reshape((N - 1, N), order="F")
        Dc = u[half:].reshape((N, N - 1), order="F")
        return _kernels.grad2d_adjoint(np.ascontiguousarray(Dr), np.ascontiguousarray(Dc)).ravel(order="F")

    def dense():
        L1 = first_derivative_operator(N).to_dense()
        I = np.eye(N)
        return np.vstack([np.kron(I, L1), np.kron(L1, I)])

    # L^T L = I kron L1^T L1 + L1^T L1 kron I has eigenvalues below 8
    return LinearOperator(2 * half, N * N, fwd, adj, name=f"L2d_{N}", dense_fn=dense,
                          norm_est=float(np.sqrt(8.0)))


class SparseBandedMatrix:
    """Row-compressed storage: per row, strictly increasing column indices and values."""

    def __init__(self, rows, cols, indptr, indices, data):
        self.rows = int(rows)
        self.cols = int(cols)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=float)
        if self.indptr.shape != (self.rows + 1,) or self.indptr[0] != 0 or self.indptr[-1] != len(self.indices):
            raise DimensionError("SparseBandedMatrix: malformed row pointer")
        if len(self.indices) != len(self.data):
            raise DimensionError("SparseBandedMatrix: indices and data differ in length")
        if len(self.indices) and (self.indices.min() < 0 or self.indices.max() >= self.cols):
            raise DimensionError("SparseBandedMatrix: column index out of range")
        for i in range(self.rows):
            seg = self.indices[self.indptr[i]:self.indptr[i + 1]]
            if np.any(np.diff(seg) <= 0):
                raise DimensionError(f"SparseBandedMatrix: row {i} column indices not strictly increasing")

    @classmethod
    def from_rows(cls, cols, rows_entries):
        """Build from a list of per-row ``[(col, value), ...]`` lists."""
        indptr = [0]
        indices, data = [], []
        for entries in rows_entries:
            for c, val in entries:
                indices.append(c)
                data.append(val)
            indptr.append(len(indices))
        return cls(len(rows_entries), cols, indptr, indices, data)

    @classmethod
    def banded_toeplitz(cls, n, coeffs):
        """n x n symmetric Toeplitz matrix with ``coeffs[d]`` on diagonals +-d."""
        band = len(coeffs) - 1
        rows = []
        for i in range(n):
            lo, hi = max(0, i - band), min(n - 1, i + band)
            rows.append([(j, coeffs[abs(i - j)]) for j in range(lo, hi + 1)])
        return cls.from_rows(n, rows)

    def matmat(self, X):
        return _kernels.csr_matmat(self.indptr, self.indices, self.data, np.ascontiguousarray(X))

    def rmatmat(self, Y):
        return _kernels.csr_rmatmat(self.indptr, self.indices, self.data, np.ascontiguousarray(Y), self.cols)

    def matvec(self, v):
        return self.matmat(v[:, None])[:, 0]

    def rmatvec(self, u):
        return self.rmatmat(u[:, None])[:, 0]

    def to_dense(self):
        M = np.zeros((self.rows, self.cols))
        for i in range(self.rows):
            sl = slice(self.indptr[i], self.indptr[i + 1])
            M[i, self.indices[sl]] = self.data[sl]
        return M

    def as_operator(self, name="banded") -> LinearOperator:
        return LinearOperator(self.rows, self.cols, self.matvec, self.rmatvec, name=name,
                              dense_fn=self.to_dense, norm_est=float(np.linalg.norm(self.data)))


def kron_separable_operator(T: SparseBandedMatrix, name="kron") -> LinearOperator:
    """T kron T on column-major vectorized images, applied as T X T^T."""
    if T.rows != T.cols:
        raise DimensionError("kron_separable_operator: T must be square")
    N = T.rows

    def fwd(v):
        X = v.reshape((N, N), order="F")
        Y = T.matmat(X)                   # T X
        return T.matmat(Y.T).T.ravel(order="F")   # (T (T X)^T)^T = T X T^T

    def adj(u):
        Y = u.reshape((N, N), order="F")
        Z = T.rmatmat(Y)
        return T.rmatmat(Z.T).T.ravel(order="F")

    def dense():
        Td = T.to_dense()
        return np.kron(Td, Td)

    tn = float(np.linalg.norm(T.data))
    return LinearOperator(N * N, N * N, fwd, adj, name=name, dense_fn=dense, norm_est=tn * tn)


def adjoint_mismatch(op: LinearOperator, rng=None, trials=20) -> float:
    """Largest |<u, A v> - <A^T u, v>| / (|u||v|) over random pairs."""
    rng = np.random.default_rng(rng)
    worst = 0.0
    for _ in range(trials):
        u = rng.standard_normal(op.rows)
        v = rng.standard_normal(op.cols)
        gap = abs(u @ op.forward(v) - op.transpose(u) @ v)
        worst = max(worst, gap / (np.linalg.norm(u) * np.linalg.norm(v)))
    return worst
