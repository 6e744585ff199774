import numpy as np
import pytest

from gkreg.bidiag import bidiag_init, projected_normal_matrix
from gkreg.hybrid import hybrid_step
from gkreg.krylov import LsqrOptions, lsmr_iterate
from gkreg.operators import dense_operator, identity_operator
from gkreg.oracle import (
    condition_number,
    conditioning_sequence,
    dense_constrained_solution,
    dense_golub_kahan,
    dense_hybrid_solution,
    factorization_residuals,
    null_spaces_intersect,
    orthogonal_complement,
    pinv,
    projector_identity_residual,
)
from gkreg.problems import make_problem


def _shaw(n=40, L="d1"):
    p = make_problem("shaw", n, 1e-2, L, 0)
    return p, p.A.to_dense(), p.L.to_dense()


def test_pinv_matches_numpy(rng):
    M = rng.standard_normal((7, 4)) @ rng.standard_normal((4, 9))
    np.testing.assert_allclose(pinv(M), np.linalg.pinv(M, rcond=1e-12), atol=1e-10)


def test_identity_L_gives_x_k():
    p, A, _ = _shaw(40, "identity")
    for k in (1, 3, 6):
        res = dense_hybrid_solution(A, p.b, np.eye(40), k)
        np.testing.assert_allclose(res.x_Lk_dense, res.x_k_dense, atol=1e-12 * np.linalg.norm(res.x_k_dense))


def test_matches_hybrid_step_k6():
    p, A, L = _shaw()
    s = bidiag_init(p.A, p.b)
    s.ensure(6)
    x_Lk, _, _ = hybrid_step(s, p.L, 6, LsqrOptions(tol=1e-10))
    res = dense_hybrid_solution(A, p.b, L, 6)   # basis from the dense process, x_k from pinv
    assert np.linalg.norm(x_Lk - res.x_Lk_dense) <= 1e-6 * np.linalg.norm(res.x_Lk_dense)


def test_closed_form_equals_constrained_minimizer():
    p, A, L = _shaw()
    Q, _, _, _ = dense_golub_kahan(A, p.b, 6)
    for k in (2, 5):
        closed = dense_hybrid_solution(A, p.b, L, k).x_Lk_dense
        direct = dense_constrained_solution(A, p.b, L, Q[:, :k], Q[:, :k + 1])
        assert np.linalg.norm(closed - direct) <= 1e-8 * np.linalg.norm(closed)


@pytest.mark.parametrize("k", range(1, 7))
def test_projector_identity(k):
    p, _, _ = _shaw()
    s = bidiag_init(p.A, p.b)
    s.ensure(k)
    assert projector_identity_residual(s, k) <= 1e-10


def test_truncates_past_grade():
    A = np.diag(np.arange(1.0, 7.0))
    b = np.array([1.0, 0, 2.0, 0, 0, 3.0])
    res = dense_hybrid_solution(A, b, np.eye(6), 5)
    assert res.truncated and res.k == 3
    np.testing.assert_allclose(A @ res.x_k_dense, b, atol=1e-12)


def test_size_limit():
    with pytest.raises(ValueError):
        dense_hybrid_solution(np.eye(501), np.ones(501), np.eye(501), 1)


def test_cutoff_insensitivity():
    for name in ("shaw", "heat", "gravity", "deriv2"):
        p = make_problem(name, 40, 1e-2, "d1", 0)
        A, L = p.A.to_dense(), p.L.to_dense()
        s = bidiag_init(p.A, p.b)
        for k in range(1, 16):
            if s.ensure(k) < k:
                break
            x_k = lsmr_iterate(s, k)
            well = np.linalg.cond(projected_normal_matrix(s, k)) < 1e8
            runs = [dense_hybrid_solution(A, p.b, L, k, state=s, x_k=x_k, rcond=rc) for rc in (1e-13, 1e-12, 1e-11)]
            ref = runs[1]
            for other in (runs[0], runs[2]):
                assert np.linalg.norm(other.x_Lk_dense - ref.x_Lk_dense) <= 1e-8 * np.linalg.norm(ref.x_Lk_dense)
                if well:
                    d = np.linalg.norm(other.x_Lk_from_dense_xk - ref.x_Lk_from_dense_xk)
                    assert d <= 1e-8 * np.linalg.norm(ref.x_Lk_from_dense_xk)


def test_conditioning_sequence_nonincreasing():
    p, _, L = _shaw()
    s = bidiag_init(p.A, p.b)
    s.ensure(40)
    kappas = conditioning_sequence(L, s, range(2, 31))
    ks = sorted(kappas)
    assert ks[0] == 2 and ks[-1] == s.k     # the Krylov grade caps the range
    for a, b in zip(ks, ks[1:]):
        assert kappas[b] <= kappas[a] * (1 + 1e-8)


def test_conditioning_sequence_last_column():
    # k = n - 1 leaves a single complement column, kappa of a nonzero vector is 1
    n = 12
    p = make_problem("heat", n, 1e-2, "d1", 0)
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((n, n - 1)))
    kap = conditioning_sequence(p.L.to_dense(), Q, [n - 1])
    assert kap[n - 1] >= 1.0 and kap[n - 1] == pytest.approx(1.0)


def test_conditioning_skips_outside_hypothesis():
    # p = 3 rows, n = 8: only k >= 5 satisfies p >= n - k
    L = np.random.default_rng(1).standard_normal((3, 8))
    Q, _ = np.linalg.qr(np.random.default_rng(2).standard_normal((8, 7)))
    assert sorted(conditioning_sequence(L, Q, range(1, 8))) == [5, 6, 7]


def test_orthogonal_L_gives_kappa_one(rng):
    n = 15
    Lq, _ = np.linalg.qr(rng.standard_normal((n, n)))
    Q, _ = np.linalg.qr(rng.standard_normal((n, 10)))   # any nested basis works
    for k, kap in conditioning_sequence(Lq, Q, range(1, 11)).items():
        assert kap == pytest.approx(1.0, abs=1e-12), k


def test_orthogonal_complement(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((9, 4)))
    C = orthogonal_complement(Q)
    full = np.hstack([Q, C])
    np.testing.assert_allclose(full.T @ full, np.eye(9), atol=1e-13)


def test_condition_number_flags_singular():
    assert condition_number(np.diag([1.0, 0.0])) == float("inf")
    assert condition_number(np.diag([4.0, 2.0])) == pytest.approx(2.0)


def test_factorization_residuals_identity():
    s = bidiag_init(identity_operator(2), np.array([1.0, 0.0]))
    assert factorization_residuals(np.eye(2), s, 1) == (0.0, 0.0)


def test_factorization_residuals_shaw60():
    p = make_problem("shaw", 60, 1e-2, "d1", 0)
    s = bidiag_init(p.A, p.b)
    s.ensure(10)
    r1, r2 = factorization_residuals(p.A.to_dense(), s, 10)
    assert r1 <= 1e-9 and r2 <= 1e-9


def test_factorization_residuals_without_reorthogonalization():
    p = make_problem("shaw", 60, 1e-2, "d1", 0)
    s = bidiag_init(p.A, p.b, reorthogonalize=False)
    k = s.ensure(30)
    Q = s.Q(k)
    r1, r2 = factorization_residuals(p.A.to_dense(), s, k)
    # reported, not bounded: orthogonality is lost but the numbers stay finite
    assert np.isfinite(r1) and np.isfinite(r2)
    assert np.max(np.abs(Q.T @ Q - np.eye(k))) > 1e-8


def test_null_space_intersection():
    A = np.diag([1.0, 0.0])
    assert not null_spaces_intersect(A, np.array([[0.0, 1.0]]))
    assert null_spaces_intersect(A, np.array([[1.0, 0.0]]))


def test_dense_process_matches_operator_process():
    p, A, _ = _shaw(30)
    Q, P, alphas, betas = dense_golub_kahan(A, p.b, 8)
    s = bidiag_init(dense_operator(A), p.b)
    s.ensure(8)
    np.testing.assert_allclose(alphas, s.alphas[:8], rtol=1e-8)
    np.testing.assert_allclose(betas, s.betas[:9], rtol=1e-8)
