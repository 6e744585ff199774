"""Golub-Kahan lower bidiagonalization of A with starting vector b.

Step j computes alpha_j, q_j from A^T p_j and then beta_{j+1}, p_{j+1} from
A q_j, so after k steps the state holds Q_k, P_{k+1} and the (k+1) x k
lower-bidiagonal B_k with A Q_k = P_{k+1} B_k.
"""
from __future__ import annotations

import numpy as np

from .operators import DimensionError, LinearOperator

BREAKDOWN_RTOL = 1e-14
REORTH_MAX_N = 10**4
DEFAULT_MAX_STEPS = 300


class ZeroRightHandSideError(ValueError):
    pass


class BreakdownError(RuntimeError):
    """Raised when asking for steps past a recorded breakdown."""


def _orthogonalize(r, V):
    # classical Gram-Schmidt, two passes
    if V.shape[1]:
        r -= V @ (V.T @ r)
        r -= V @ (V.T @ r)
    return r


class BidiagFactorization:
    """Incrementally extendable state (Q, P, alphas, betas).

    ``k`` is the number of committed basis vectors q_1..q_k. When the Krylov
    grade g is reached, ``breakdown_at`` is set to g and the product
    alpha_{g+1} * beta_{g+1} is stored as exactly zero.
    """

    def __init__(self, A: LinearOperator, b, reorthogonalize=None, max_steps=DEFAULT_MAX_STEPS):
        b = np.asarray(b, dtype=float)
        if b.shape != (A.rows,):
            raise DimensionError(f"b has shape {b.shape}, operator has {A.rows} rows")
        beta1 = float(np.linalg.norm(b))
        if beta1 == 0.0:
            raise ZeroRightHandSideError("right-hand side is zero")
        if reorthogonalize is None:
            reorthogonalize = A.cols <= REORTH_MAX_N
        self.A = A
        self.reorthogonalize = bool(reorthogonalize)
        self.max_steps = int(min(max_steps, A.cols, A.rows))
        m, n = A.rows, A.cols
        cap = self.max_steps + 1
        self._Q = np.zeros((n, cap))
        self._P = np.zeros((m, cap + 1))
        self.alphas = np.zeros(cap + 1)   # alphas[i] holds alpha_{i+1}
        self.betas = np.zeros(cap + 1)    # betas[i] holds beta_{i+1}
        self.k = 0
        self.breakdown_at = None
        self.breakdown_reason = None
        self.norm_est = beta1
        self.betas[0] = beta1
        self._P[:, 0] = b / beta1
        self._step()

    # -- recurrence ---------------------------------------------------------
    def _is_small(self, value):
        return value <= BREAKDOWN_RTOL * self.norm_est

    def _step(self):
        j = self.k  # zero-based index of the new q
        r = self.A.transpose(self._P[:, j])
        if j > 0:
            r = r - self.betas[j] * self._Q[:, j - 1]
        if self.reorthogonalize:
            r = _orthogonalize(r, self._Q[:, :j])
        alpha = float(np.linalg.norm(r))
        self.norm_est = max(self.norm_est, alpha)
        if self._is_small(alpha):
            self.alphas[j] = 0.0
            self.breakdown_at = j
            self.breakdown_reason = f"alpha_{j + 1} = 0"
            return
        self.alphas[j] = alpha
        self._Q[:, j] = r / alpha
        self.k = j + 1

        s = self.A.forward(self._Q[:, j]) - alpha * self._P[:, j]
        if self.reorthogonalize:
            s = _orthogonalize(s, self._P[:, :j + 1])
        beta = float(np.linalg.norm(s))
        self.norm_est = max(self.norm_est, beta)
        if self._is_small(beta):
            self.betas[j + 1] = 0.0
            self.alphas[j + 1] = 0.0
            self.breakdown_at = j + 1
            self.breakdown_reason = f"beta_{j + 2} = 0"
            return
        self.betas[j + 1] = beta
        self._P[:, j + 1] = s / beta

    def extend(self, steps=1):
        """Run up to ``steps`` more steps; stops quietly at breakdown or the step cap."""
        if self.breakdown_at is not None:
            raise BreakdownError(f"factorization broke down at step {self.breakdown_at}")
        for _ in range(steps):
            if self.breakdown_at is not None or self.k >= self.max_steps + 1:
                break
            self._step()
        return self

    def ensure(self, k):
        """Make the state valid for iterate k (needs alpha_{k+1}); returns the usable k."""
        while self.breakdown_at is None and self.k < k + 1 and self.k < self.max_steps + 1:
            self._step()
        return min(k, self.valid_k)

    # -- accessors ----------------------------------------------------------
    @property
    def broken_down(self):
        return self.breakdown_at is not None

    @property
    def valid_k(self):
        """Largest k for which the iterate x_k and the (k+1) x k projection are defined."""
        if self.breakdown_at is not None:
            return self.breakdown_at
        return self.k - 1

    def _check_k(self, k):
        if k < 1 or k > self.valid_k:
            raise IndexError(f"step {k} out of range (valid 1..{self.valid_k})")

    def Q(self, k=None):
        k = self.k if k is None else k
        if k > self.k:
            raise IndexError(f"only {self.k} basis vectors committed")
        return self._Q[:, :k]

    def P(self, k=None):
        # P_{k} has k columns; last column is zero if beta_k broke down
        k = self.k + 1 if k is None else k
        if k > self.k + 1:
            raise IndexError(f"only {self.k + 1} left basis vectors committed")
        return self._P[:, :k]

    def alpha(self, i):
        return float(self.alphas[i - 1])

    def beta(self, i):
        return float(self.betas[i - 1])

    def B(self, k):
        """Dense (k+1) x k lower-bidiagonal B_k."""
        if k < 1 or k > self.k:
            raise IndexError(f"B_{k} not available")
        Bk = np.zeros((k + 1, k))
        idx = np.arange(k)
        Bk[idx, idx] = self.alphas[:k]
        Bk[idx + 1, idx] = self.betas[1:k + 1]
        return Bk


def bidiag_init(A: LinearOperator, b, reorthogonalize=None, max_steps=DEFAULT_MAX_STEPS):
    return BidiagFactorization(A, b, reorthogonalize=reorthogonalize, max_steps=max_steps)


def bidiag_extend(state: BidiagFactorization, steps: int) -> BidiagFactorization:
    return state.extend(steps)


def projected_normal_matrix(state: BidiagFactorization, k: int) -> np.ndarray:
    """[B_k^T B_k ; alpha_{k+1} beta_{k+1} e_k^T], which equals Q_{k+1}^T A^T A Q_k."""
    state._check_k(k)
    Bk = state.B(k)
    M = np.zeros((k + 1, k))
    M[:k] = Bk.T @ Bk
    M[k, k - 1] = state.alphas[k] * state.betas[k]
    return M
