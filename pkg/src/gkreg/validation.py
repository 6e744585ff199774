"""Small dense checks behind ``gkreg validate``. Every instance has n <= 60."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import hybrid, oracle
from .bidiag import bidiag_init, projected_normal_matrix
from .krylov import LsqrOptions, lsmr_iterate
from .operators import identity_operator
from .problems import make_problem

TAGS = ("thm31", "identity", "factor", "thm32", "lsmr")
WELL_DETERMINED_COND = 1e8


@dataclass
class CheckResult:
    tag: str
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _closed_form(name, n=40, k_max=15, tol=1e-10, seed=0):
    p = make_problem(name, n, 1e-2, "d1", seed)
    A, L = p.A.to_dense(), p.L.to_dense()
    state = bidiag_init(p.A, p.b)
    worst = worst_full = 0.0
    ks = 0
    for k in range(1, k_max + 1):
        if state.ensure(k) < k:
            break
        x_Lk, x_k, _ = hybrid.hybrid_step(state, p.L, k, LsqrOptions(tol=tol))
        ref = oracle.dense_hybrid_solution(A, p.b, L, k, state=state, x_k=x_k)
        worst = max(worst, np.linalg.norm(x_Lk - ref.x_Lk_dense) / np.linalg.norm(ref.x_Lk_dense))
        if np.linalg.cond(projected_normal_matrix(state, k)) < WELL_DETERMINED_COND:
            full = ref.x_Lk_from_dense_xk
            worst_full = max(worst_full, np.linalg.norm(x_Lk - full) / np.linalg.norm(full))
        ks = k
    ok = worst <= 1e-6 and worst_full <= 1e-6
    return ok, f"k=1..{ks}: max rel diff {worst:.2e} (shared x_k), {worst_full:.2e} (dense x_k)"


def _identity_reduction(n=60, k_max=20):
    p = make_problem("shaw", n, 1e-2, "identity", 0)
    state = bidiag_init(p.A, p.b)
    I = identity_operator(n)
    worst = 0.0
    for k in range(1, k_max + 1):
        if state.ensure(k) < k:
            break
        x_Ik, x_k, _ = hybrid.hybrid_step(state, I, k, LsqrOptions(tol=1e-10))
        worst = max(worst, np.linalg.norm(x_Ik - x_k) / np.linalg.norm(x_k))
    return worst <= 1e-8, f"max ||x_Ik - x_k|| / ||x_k|| = {worst:.2e}"


def _factorization(n=60, k_max=20):
    p = make_problem("shaw", n, 1e-2, "d1", 0)
    A = p.A.to_dense()
    state = bidiag_init(p.A, p.b)
    r1 = r2 = 0.0
    for k in range(1, k_max + 1):
        if state.ensure(k) < k:
            break
        a, b = oracle.factorization_residuals(A, state, k)
        r1, r2 = max(r1, a), max(r2, b)
    ok = r1 <= 1e-10 * state.norm_est and r2 <= 1e-9
    return ok, f"AQ-PB {r1:.2e} (bound {1e-10 * state.norm_est:.2e}), projected normal {r2:.2e}"


def _conditioning(n=40):
    p = make_problem("shaw", n, 1e-2, "d1", 0)
    L = p.L.to_dense()
    state = bidiag_init(p.A, p.b)
    state.ensure(n)
    kappas = oracle.conditioning_sequence(L, state, range(2, state.k + 1))
    ks = sorted(kappas)
    bad = [k for a, k in zip(ks, ks[1:]) if kappas[k] > kappas[a] * (1 + 1e-8)]
    return not bad, f"k={ks[0]}..{ks[-1]}, kappa {kappas[ks[0]]:.3g} -> {kappas[ks[-1]]:.3g}, violations {bad}"


def _lsmr_optimality(n=60, k_max=20):
    p = make_problem("shaw", n, 1e-2, "d1", 0)
    A = p.A.to_dense()
    state = bidiag_init(p.A, p.b)
    slack = 1e-12 * np.linalg.norm(A.T @ p.b)
    prev, bad = np.inf, []
    for k in range(1, k_max + 1):
        if state.ensure(k) < k:
            break
        r = np.linalg.norm(A.T @ (p.b - A @ lsmr_iterate(state, k)))
        if r > prev + slack:
            bad.append(k)
        prev = r
    return not bad, f"||A^T r_k|| nonincreasing, violations {bad}"


def _checks():
    return [
        ("thm31", "x_Lk iterative vs dense pseudo-inverse, shaw(40)", lambda: _closed_form("shaw")),
        ("thm31", "x_Lk iterative vs dense pseudo-inverse, deriv2(40)", lambda: _closed_form("deriv2")),
        ("thm31", "x_Lk iterative vs dense pseudo-inverse, gravity(40)", lambda: _closed_form("gravity")),
        ("identity", "L = I gives x_k, shaw(60)", _identity_reduction),
        ("factor", "AQ = PB and projected normal identity, shaw(60)", _factorization),
        ("thm32", "kappa(L Q_k^perp) nonincreasing, shaw(40)", _conditioning),
        ("lsmr", "LSMR normal residual nonincreasing, shaw(60)", _lsmr_optimality),
    ]


def run_checks(filter_tag=None):
    if filter_tag is not None and filter_tag not in TAGS:
        raise ValueError(f"unknown filter {filter_tag!r}; choose from {', '.join(TAGS)}")
    results = []
    for tag, name, fn in _checks():
        if filter_tag and tag != filter_tag:
            continue
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(tag, name, bool(ok), detail, time.perf_counter() - t0))
    return results
