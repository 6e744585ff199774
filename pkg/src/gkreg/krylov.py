"""LSQR (the inner solver) and the LSMR iterate built from a stored factorization."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr, solve_triangular

from .bidiag import BidiagFactorization, projected_normal_matrix
from .operators import DimensionError, LinearOperator

CONVERGED = "converged"
MAX_ITERATIONS = "max_iterations"
EXACT_BREAKDOWN = "exact_breakdown"


@dataclass
class LsqrOptions:
    tol: float = 1e-6
    max_iterations: int | None = None   # None means 2 * cols
    atol_absolute_floor: float = 1e-14

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class LsqrReport:
    solution: np.ndarray
    iterations: int
    final_relative_residual: float
    stop_reason: str
    normal_residual: float = 0.0
    norm_est: float = 0.0


def lsqr_solve(op: LinearOperator, rhs, opts: LsqrOptions | None = None) -> LsqrReport:
    """Minimize ||op z - rhs|| from z = 0 with the Paige-Saunders recurrences.

    Stops when ||r|| <= tol (||rhs|| + ||op|| ||z||) or
    ||op^T r|| <= tol ||op|| ||r||, where ||op|| is the running Frobenius
    estimate from the bidiagonal entries. A bidiagonal entry below
    ``atol_absolute_floor`` times the operator scale (``op.norm_est`` when
    known) counts as an exact breakdown.
    """
    opts = opts or LsqrOptions()
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (op.rows,):
        raise DimensionError(f"rhs has shape {rhs.shape}, operator has {op.rows} rows")
    tol = opts.tol
    maxit = opts.max_iterations or 2 * op.cols
    scale = op.norm_est or 0.0

    x = np.zeros(op.cols)
    beta = float(np.linalg.norm(rhs))
    if beta == 0.0:
        return LsqrReport(x, 0, 0.0, CONVERGED)
    u = rhs / beta
    v = op.transpose(u)
    alpha = float(np.linalg.norm(v))
    floor = opts.atol_absolute_floor
    anorm = alpha
    if alpha <= floor * scale or alpha == 0.0:
        # rhs orthogonal to range(op): z = 0 is the least-squares solution
        return LsqrReport(x, 0, 1.0, EXACT_BREAKDOWN)
    v = v / alpha
    w = v.copy()

    bnorm = beta
    phibar, rhobar = beta, alpha
    anorm_sq = 0.0
    xnorm = 0.0
    xxnorm = 0.0
    z = 0.0
    cs2, sn2 = -1.0, 0.0
    rnorm = beta
    arnorm = alpha * beta
    reason = MAX_ITERATIONS
    itn = 0
    while itn < maxit:
        itn += 1
        u = op.forward(v) - alpha * u
        beta = float(np.linalg.norm(u))
        anorm_sq += alpha * alpha + beta * beta
        anorm = math.sqrt(anorm_sq)
        cutoff = floor * max(anorm, scale)
        if beta > cutoff:
            u /= beta
            v = op.transpose(u) - beta * v
            alpha = float(np.linalg.norm(v))
            if alpha > cutoff:
                v /= alpha
            else:
                alpha = 0.0
        else:
            beta = 0.0

        rho = math.hypot(rhobar, beta)
        cs = rhobar / rho
        sn = beta / rho
        theta = sn * alpha
        rhobar = -cs * alpha
        phi = cs * phibar
        phibar = sn * phibar

        x += (phi / rho) * w
        w = v - (theta / rho) * w

        # running estimate of ||x||
        delta = sn2 * rho
        gambar = -cs2 * rho
        rhs_z = phi - delta * z
        zbar = rhs_z / gambar
        xnorm = math.sqrt(xxnorm + zbar * zbar)
        gamma = math.hypot(gambar, theta)
        cs2 = gambar / gamma
        sn2 = theta / gamma
        z = rhs_z / gamma
        xxnorm += z * z

        rnorm = phibar
        arnorm = alpha * abs(cs * phibar)
        if beta == 0.0 or alpha == 0.0:
            reason = EXACT_BREAKDOWN
            break
        if rnorm <= tol * (bnorm + anorm * xnorm):
            reason = CONVERGED
            break
        if arnorm <= tol * anorm * rnorm:
            reason = CONVERGED
            break

    return LsqrReport(x, itn, rnorm / bnorm, reason, normal_residual=arnorm, norm_est=anorm)


def lsmr_iterate(state: BidiagFactorization, k: int) -> np.ndarray:
    """x_k = Q_k y_k with y_k = argmin ||M y - alpha_1 beta_1 e_1||, M = [B^T B; a b e_k^T].

    M has condition number near sigma_k(A)^-2, so past the numerical rank a
    plain QR solve loses residual optimality. Column-pivoted QR truncated at
    the numerical rank keeps ||A^T (b - A x_k)|| nonincreasing in k.
    """
    M = projected_normal_matrix(state, k)
    rhs = np.zeros(k + 1)
    rhs[0] = state.alpha(1) * state.beta(1)
    Qm, R, perm = qr(M, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > np.finfo(float).eps * (k + 1) * d[0]))
    y = np.zeros(k)
    y[perm[:rank]] = solve_triangular(R[:rank, :rank], (Qm.T @ rhs)[:rank])
    return state.Q(k) @ y
