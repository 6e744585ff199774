"""Dense reference computations for small problems (n <= 500).

Everything here works on explicit matrices with SVD-based pseudo-inverses
and is deliberately independent of the matrix-free code paths, except that
callers may hand in a basis Q from a :class:`BidiagFactorization` so that
both sides are compared on the same subspace.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bidiag import BidiagFactorization, projected_normal_matrix

RCOND = 1e-12
MAX_DENSE_N = 500


@dataclass
class DenseOracleResult:
    k: int
    x_k_dense: np.ndarray
    x_Lk_dense: np.ndarray
    x_Lk_from_dense_xk: np.ndarray
    kappa_sequence: dict = field(default_factory=dict)
    identity_residuals: dict = field(default_factory=dict)
    truncated: bool = False


def pinv(M, rcond=RCOND, scale=0.0):
    """Moore-Penrose inverse with singular values below rcond * max(sigma_max, scale) dropped.

    ``scale`` gives an absolute reference for products such as L (I - Q Q^T)
    that are numerically zero (sigma_max near eps ||L||) once Q spans R^n.
    """
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros(M.T.shape)
    keep = s > rcond * max(s[0], scale)
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def dense_golub_kahan(A, b, k):
    """k steps of Golub-Kahan bidiagonalization on a dense matrix, each new
    vector reorthogonalized twice against its predecessors.

    Returns (Q, P, alphas, betas) holding q_1..q_j, p_1..p_{j'}, alpha_1..alpha_j
    and beta_1..beta_{j'}; fewer than k columns come back when a norm vanishes.
    """
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    scale = np.linalg.norm(A, 2)
    Q = np.zeros((n, k))
    P = np.zeros((m, k + 1))
    alphas, betas = [], [float(np.linalg.norm(b))]
    P[:, 0] = b / betas[0]
    nq, npv = 0, 1
    for j in range(k):
        r = A.T @ P[:, j] - (betas[j] * Q[:, j - 1] if j else 0.0)
        for _ in range(2):
            r -= Q[:, :j] @ (Q[:, :j].T @ r)
        alpha = float(np.linalg.norm(r))
        if alpha <= 1e-14 * scale:
            break
        alphas.append(alpha)
        Q[:, j] = r / alpha
        nq = j + 1
        s = A @ Q[:, j] - alpha * P[:, j]
        for _ in range(2):
            s -= P[:, :j + 1] @ (P[:, :j + 1].T @ s)
        beta = float(np.linalg.norm(s))
        if beta <= 1e-14 * scale:
            break
        betas.append(beta)
        P[:, j + 1] = s / beta
        npv = j + 2
    return Q[:, :nq], P[:, :npv], np.array(alphas), np.array(betas)


def _basis_pair(A, b, k, state):
    """(Q_k, Q_{k+1}) with Q_{k+1} padded by a zero column at the Krylov grade."""
    if state is not None:
        Qk = state.Q(k)
        Qk1 = state.Q(min(k + 1, state.k))
    else:
        Q, _, _, _ = dense_golub_kahan(A, b, k + 1)
        Qk, Qk1 = Q[:, :k], Q[:, :k + 1]
    if Qk1.shape[1] == k:
        Qk1 = np.column_stack([Qk1, np.zeros(Qk1.shape[0])])
    return Qk, Qk1


def dense_lsmr_iterate(A, b, Qk, Qk1, rcond=RCOND):
    """x_k = Q_k (Q_{k+1}^T A^T A Q_k)^+ Q_{k+1}^T A^T b."""
    AtA = A.T @ A
    return Qk @ (pinv(Qk1.T @ AtA @ Qk, rcond) @ (Qk1.T @ (A.T @ b)))


def dense_hybrid_solution(A, b, L, k, state: BidiagFactorization | None = None,
                          x_k=None, rcond=RCOND) -> DenseOracleResult:
    """x_k and x_{L,k} = x_k - (L (I - Q_k Q_k^T))^+ L x_k from dense pseudo-inverses.

    With ``state`` given its basis is used; otherwise the basis comes from
    :func:`dense_golub_kahan`. Asking for k past the Krylov grade truncates.

    ``x_Lk_dense`` applies the correction to ``x_k`` when one is passed in
    (isolating the correction from the conditioning of x_k itself, which is
    roughly sigma_k(A)^-2 and exceeds 1/eps late in the iteration);
    ``x_Lk_from_dense_xk`` always uses the pseudo-inverse iterate.
    """
    A = np.asarray(A, dtype=float)
    L = np.asarray(L, dtype=float)
    n = A.shape[1]
    if n > MAX_DENSE_N:
        raise ValueError(f"dense oracle limited to n <= {MAX_DENSE_N}")
    truncated = False
    if state is not None:
        avail = state.ensure(k)
    else:
        # at the Krylov grade g only q_1..q_g come back
        avail = min(k, dense_golub_kahan(A, b, k + 1)[0].shape[1])
    if avail < k:
        truncated, k = True, avail
    Qk, Qk1 = _basis_pair(A, b, k, state)
    x_dense = dense_lsmr_iterate(A, b, Qk, Qk1, rcond)
    correction = pinv(L @ (np.eye(n) - Qk @ Qk.T), rcond, scale=np.linalg.norm(L, 2))
    x_L_dense = x_dense - correction @ (L @ x_dense)
    x_L = x_L_dense if x_k is None else x_k - correction @ (L @ x_k)
    residuals = {}
    if state is not None:
        residuals = dict(zip(("bidiag", "normal"), factorization_residuals(A, state, k)))
    return DenseOracleResult(k, x_dense, x_L, x_L_dense, identity_residuals=residuals,
                             truncated=truncated)


def dense_constrained_solution(A, b, L, Qk, Qk1, rcond=RCOND):
    """Solve  min ||L x|| over the least-squares solutions of B_proj x = A^T b
    by parametrizing the solution set, without using the closed form for x_{L,k}."""
    A = np.asarray(A, dtype=float)
    L = np.asarray(L, dtype=float)
    n = A.shape[1]
    B_proj = Qk1 @ (Qk1.T @ A.T @ A @ Qk) @ Qk.T
    x_p = np.linalg.lstsq(B_proj, A.T @ b, rcond=None)[0]
    # null space of B_proj from its SVD
    U, s, Vt = np.linalg.svd(B_proj)
    rank = int(np.sum(s > rcond * s[0]))
    N = Vt[rank:].T
    w = np.linalg.lstsq(L @ N, -(L @ x_p), rcond=None)[0]
    return x_p + N @ w


def projector_identity_residual(state: BidiagFactorization, k, rcond=RCOND):
    """max |B_proj^+ B_proj - Q_k Q_k^T| for the n x n projected operator."""
    Qk = state.Q(k)
    Qk1 = state.Q(k + 1) if state.k > k else np.column_stack([state.Q(k), np.zeros(Qk.shape[0])])
    B_proj = Qk1 @ projected_normal_matrix(state, k) @ Qk.T
    return float(np.max(np.abs(pinv(B_proj, rcond) @ B_proj - Qk @ Qk.T)))


def orthogonal_complement(Qk):
    """Columns completing Q_k to an orthogonal n x n matrix."""
    n, k = Qk.shape
    Qfull, _ = np.linalg.qr(Qk, mode="complete")
    return Qfull[:, k:]


def condition_number(M, floor=1e-14):
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[-1] <= floor * s[0]:
        return float("inf")
    return float(s[0] / s[-1])


def conditioning_sequence(L, state_or_Q, k_range):
    """kappa(L Q_k^perp) for each k in k_range where p >= n - k.

    Returns ``{k: kappa}``; values of ``inf`` flag a numerically singular product.
    """
    L = np.asarray(L, dtype=float)
    p, n = L.shape
    Q = state_or_Q.Q() if isinstance(state_or_Q, BidiagFactorization) else np.asarray(state_or_Q)
    out = {}
    for k in k_range:
        if k > Q.shape[1] or p < n - k or k >= n:
            continue
        out[k] = condition_number(L @ orthogonal_complement(Q[:, :k]))
    return out


def factorization_residuals(A, state: BidiagFactorization, k):
    """(max|A Q_k - P_{k+1} B_k|, max|Q_{k+1}^T A^T A Q_k - projected|)."""
    A = np.asarray(A, dtype=float)
    Qk = state.Q(k)
    r1 = float(np.max(np.abs(A @ Qk - state.P(k + 1) @ state.B(k))))
    Qk1 = state.Q(k + 1) if state.k > k else np.column_stack([Qk, np.zeros(Qk.shape[0])])
    r2 = float(np.max(np.abs(Qk1.T @ A.T @ A @ Qk - projected_normal_matrix(state, k))))
    return r1, r2


def null_spaces_intersect(A, L, rtol=1e-10):
    """True when N(A) and N(L) share a nonzero vector (dense check)."""
    stacked = np.vstack([np.asarray(A, dtype=float), np.asarray(L, dtype=float)])
    s = np.linalg.svd(stacked, compute_uv=False)
    return bool(s[-1] <= rtol * s[0]) or stacked.shape[0] < stacked.shape[1]
