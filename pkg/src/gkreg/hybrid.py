"""hyb-LSMR: the LSMR iterate x_k corrected by the min-norm solution of the
deflated problem  min_z ||L (I - Q_k Q_k^T) z - L x_k||.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .bidiag import BidiagFactorization, bidiag_init
from .krylov import MAX_ITERATIONS, LsqrOptions, LsqrReport, lsmr_iterate, lsqr_solve
from .operators import DimensionError, LinearOperator
from .problems import ProblemInstance, relative_error


class InnerSolverWarning(UserWarning):
    pass


def deflated_operator(L: LinearOperator, state: BidiagFactorization, k: int) -> LinearOperator:
    """Implicit L (I - Q_k Q_k^T); one L (or L^T) and one Q/Q^T pair per application."""
    n = state.A.cols
    if L.cols != n:
        raise DimensionError(f"L has {L.cols} columns, A has {n}")
    if k < 0 or k > state.k:
        raise IndexError(f"k={k} exceeds {state.k} committed basis vectors")
    if k == 0:
        return L
    Q = state.Q(k)

    def fwd(v):
        return L.forward(v - Q @ (Q.T @ v))

    def adj(u):
        w = L.transpose(u)
        return w - Q @ (Q.T @ w)

    def dense():
        return L.to_dense() @ (np.eye(n) - Q @ Q.T)

    return LinearOperator(L.rows, n, fwd, adj, name=f"{L.name}(I-QQ^T)_{k}", dense_fn=dense,
                          norm_est=L.norm_est)


def hybrid_step(state: BidiagFactorization, L: LinearOperator, k: int,
                opts: LsqrOptions | None = None):
    """Return (x_Lk, x_k, report) for iterate k."""
    x_k = lsmr_iterate(state, k)
    report = lsqr_solve(deflated_operator(L, state, k), L.forward(x_k), opts)
    if report.stop_reason == MAX_ITERATIONS:
        warnings.warn(f"inner LSQR hit {report.iterations} iterations at k={k}", InnerSolverWarning,
                      stacklevel=2)
    return x_k - report.solution, x_k, report


@dataclass
class StepRecord:
    k: int
    x_k: np.ndarray
    z_k: np.ndarray
    x_Lk: np.ndarray
    relative_error: float
    residual_norm: float
    inner_iterations: int
    inner_stop_reason: str
    elapsed: float       # seconds, cumulative since the run started


@dataclass
class HybridRun:
    records: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    stop_reason: str = "k_max"

    @property
    def ks(self):
        return [r.k for r in self.records]

    @property
    def relative_errors(self):
        return np.array([r.relative_error for r in self.records])

    @property
    def residual_norms(self):
        return np.array([r.residual_norm for r in self.records])

    @property
    def inner_iterations(self):
        return [r.inner_iterations for r in self.records]

    def record(self, k):
        return self.records[k - 1]


def hyb_lsmr(problem: ProblemInstance, k_max: int, opts: LsqrOptions | None = None,
             reorthogonalize=None, keep_vectors=True) -> HybridRun:
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    opts = opts or LsqrOptions()
    A, L, b = problem.A, problem.L, problem.b
    t0 = time.perf_counter()
    state = bidiag_init(A, b, reorthogonalize=reorthogonalize, max_steps=max(k_max, 1))
    run = HybridRun(metadata={
        "problem": problem.name,
        "n": A.cols,
        "epsilon": problem.epsilon,
        "seed": problem.seed,
        "tol": opts.tol,
        "reorthogonalize": state.reorthogonalize,
        "k_max": k_max,
    })
    for k in range(1, k_max + 1):
        if state.ensure(k) < k:
            run.stop_reason = f"breakdown at k={state.breakdown_at} ({state.breakdown_reason})"
            break
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", InnerSolverWarning)
            x_Lk, x_k, rep = hybrid_step(state, L, k, opts)
        err = relative_error(L, x_Lk, problem.x_true) if problem.x_true is not None else float("nan")
        res = float(np.linalg.norm(A.forward(x_Lk) - b))
        rec = StepRecord(k, x_k, rep.solution, x_Lk, err, res, rep.iterations, rep.stop_reason,
                         time.perf_counter() - t0)
        if not keep_vectors and k > 1:
            prev = run.records[-1]
            prev.x_k = prev.z_k = prev.x_Lk = None
        run.records.append(rec)
    run.metadata["breakdown_at"] = state.breakdown_at
    return run


def select_best_k(run: HybridRun) -> int:
    if not run.records:
        raise ValueError("empty run")
    errs = run.relative_errors
    if np.all(np.isnan(errs)):
        raise ValueError("run has no x_true-based errors")
    return int(run.records[int(np.nanargmin(errs))].k)   # argmin returns the first minimum


def select_k_discrepancy(run, noise_norm: float, tau: float = 1.01):
    """Smallest k with ||A x_Lk - b|| <= tau ||e||; returns (k, crossed)."""
    if noise_norm <= 0:
        raise ValueError("noise_norm must be positive")
    if tau < 1:
        raise ValueError("tau must be >= 1")
    residuals = run.residual_norms if isinstance(run, HybridRun) else np.asarray(run, dtype=float)
    if len(residuals) == 0:
        raise ValueError("empty run")
    hits = np.nonzero(residuals <= tau * noise_norm)[0]
    if len(hits):
        return int(hits[0]) + 1, True
    return len(residuals), False
