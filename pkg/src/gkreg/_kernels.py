"""Hot inner-loop kernels for the stencil and banded operators.

Each kernel has a numba ``@njit`` version and a pure-numpy version with the
same signature. The numba path is used when numba imports and the
environment variable ``GKREG_DISABLE_NUMBA`` is unset or ``0``.
"""
import os

import numpy as np
import scipy.sparse as sp

try:
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None

USE_NUMBA = njit is not None and os.environ.get("GKREG_DISABLE_NUMBA", "0") in ("", "0")


# ---------------------------------------------------------------------------
# numpy reference path

def np_diff_forward(v):
    return v[:-1] - v[1:]


def np_diff_adjoint(u):
    w = np.zeros(u.shape[0] + 1)
    w[:-1] += u
    w[1:] -= u
    return w


def np_grad2d_forward(X):
    # X is (N, N); returns differences down columns then across rows
    return X[:-1, :] - X[1:, :], X[:, :-1] - X[:, 1:]


def np_grad2d_adjoint(Dr, Dc):
    N = Dc.shape[0]
    W = np.zeros((N, N))
    W[:-1, :] += Dr
    W[1:, :] -= Dr
    W[:, :-1] += Dc
    W[:, 1:] -= Dc
    return W


def _csr(indptr, indices, data, ncols):
    return sp.csr_matrix((data, indices, indptr), shape=(indptr.shape[0] - 1, ncols))


def np_csr_matmat(indptr, indices, data, X):
    return np.asarray(_csr(indptr, indices, data, X.shape[0]) @ X)


def np_csr_rmatmat(indptr, indices, data, Y, out_rows):
    return np.asarray(_csr(indptr, indices, data, out_rows).T @ Y)


# ---------------------------------------------------------------------------
# numba path

if njit is not None:

    @njit(cache=True)
    def nb_diff_forward(v):
        n = v.shape[0]
        out = np.empty(n - 1)
        for i in range(n - 1):
            out[i] = v[i] - v[i + 1]
        return out

    @njit(cache=True)
    def nb_diff_adjoint(u):
        p = u.shape[0]
        w = np.zeros(p + 1)
        for i in range(p):
            w[i] += u[i]
            w[i + 1] -= u[i]
        return w

    @njit(cache=True)
    def nb_grad2d_forward(X):
        N = X.shape[0]
        Dr = np.empty((N - 1, N))
        Dc = np.empty((N, N - 1))
        for i in range(N - 1):
            for j in range(N):
                Dr[i, j] = X[i, j] - X[i + 1, j]
        for i in range(N):
            for j in range(N - 1):
                Dc[i, j] = X[i, j] - X[i, j + 1]
        return Dr, Dc

    @njit(cache=True)
    def nb_grad2d_adjoint(Dr, Dc):
        N = Dc.shape[0]
        W = np.zeros((N, N))
        for i in range(N - 1):
            for j in range(N):
                W[i, j] += Dr[i, j]
                W[i + 1, j] -= Dr[i, j]
        for i in range(N):
            for j in range(N - 1):
                W[i, j] += Dc[i, j]
                W[i, j + 1] -= Dc[i, j]
        return W

    @njit(cache=True)
    def nb_csr_matmat(indptr, indices, data, X):
        rows = indptr.shape[0] - 1
        ncol = X.shape[1]
        out = np.zeros((rows, ncol))
        for i in range(rows):
            for jj in range(indptr[i], indptr[i + 1]):
                a = data[jj]
                c = indices[jj]
                for t in range(ncol):
                    out[i, t] += a * X[c, t]
        return out

    @njit(cache=True)
    def nb_csr_rmatmat(indptr, indices, data, Y, out_rows):
        rows = indptr.shape[0] - 1
        ncol = Y.shape[1]
        out = np.zeros((out_rows, ncol))
        for i in range(rows):
            for jj in range(indptr[i], indptr[i + 1]):
                a = data[jj]
                c = indices[jj]
                for t in range(ncol):
                    out[c, t] += a * Y[i, t]
        return out

else:  # pragma: no cover
    nb_diff_forward = np_diff_forward
    nb_diff_adjoint = np_diff_adjoint
    nb_grad2d_forward = np_grad2d_forward
    nb_grad2d_adjoint = np_grad2d_adjoint
    nb_csr_matmat = np_csr_matmat
    nb_csr_rmatmat = np_csr_rmatmat


_NAMES = ("diff_forward", "diff_adjoint", "grad2d_forward", "grad2d_adjoint",
          "csr_matmat", "csr_rmatmat")


def backend(use_numba=None):
    """Return a dict of kernels for the requested backend (default: active one)."""
    if use_numba is None:
        use_numba = USE_NUMBA
    prefix = "nb_" if use_numba else "np_"
    return {name: globals()[prefix + name] for name in _NAMES}


_active = backend()
diff_forward = _active["diff_forward"]
diff_adjoint = _active["diff_adjoint"]
grad2d_forward = _active["grad2d_forward"]
grad2d_adjoint = _active["grad2d_adjoint"]
csr_matmat = _active["csr_matmat"]
csr_rmatmat = _active["csr_rmatmat"]
