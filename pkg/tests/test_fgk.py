import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexgk.fgk import (
    BreakdownError,
    ZeroResidualError,
    error_apply,
    factorization_residuals,
    fgk_init,
    fgk_step,
    inexact_adjoint_apply,
    rbar_apply,
)
from flexgk.operators import DenseOperator, DiagonalOperator

SQ2 = np.sqrt(2.0)


def two_by_two(steps=1, diags=None):
    op = DenseOperator(np.diag([2.0, 1.0]))
    diags = diags or [np.ones(2)] * (steps + 1)
    st_ = fgk_init(op, np.array([1.0, 1.0]), diags[0])
    for d in diags[1 : steps + 1]:
        fgk_step(st_, d)
    return st_


def random_run(seed, m=None, n=None, k=None, weights="random"):
    rng = np.random.default_rng(seed)
    m = m or int(rng.integers(8, 61))
    n = n or int(rng.integers(4, min(m, 60) + 1))
    k = k or int(rng.integers(1, min(15, n - 1) + 1))
    A = rng.standard_normal((m, n))
    op = DenseOperator(A)

    def diag():
        return rng.uniform(0.2, 5.0, m) if weights == "random" else np.ones(m)

    state = fgk_init(op, rng.standard_normal(m), diag())
    for _ in range(k):
        fgk_step(state, diag())
    return A, state


# ---- init / step examples -------------------------------------------------


def test_init_two_by_two():
    s = two_by_two(steps=0)
    assert s.beta == pytest.approx(SQ2, rel=1e-15)
    np.testing.assert_allclose(s.U[:, 0], [1 / SQ2, 1 / SQ2], rtol=1e-15)
    assert s.t11 == pytest.approx(np.sqrt(2.5), rel=1e-15)
    np.testing.assert_allclose(s.V[:, 0], np.array([2.0, 1.0]) / np.sqrt(5.0), rtol=1e-15)
    assert s.k == 0


def test_init_identity_cases():
    e1 = np.eye(4)[0]
    s = fgk_init(DiagonalOperator(np.ones(4)), e1, np.ones(4))
    assert s.beta == 1.0 and s.t11 == 1.0
    np.testing.assert_array_equal(s.U[:, 0], e1)
    np.testing.assert_array_equal(s.V[:, 0], e1)

    s = fgk_init(DiagonalOperator(np.ones(4)), e1, np.array([4.0, 1, 1, 1]))
    np.testing.assert_array_equal(s.Y[:, 0], 4 * e1)
    assert s.t11 == 4.0
    np.testing.assert_array_equal(s.V[:, 0], e1)


def test_init_errors():
    op = DenseOperator(np.eye(3))
    with pytest.raises(ZeroResidualError):
        fgk_init(op, np.zeros(3), np.ones(3))
    with pytest.raises(BreakdownError):
        fgk_init(DenseOperator(np.array([[1.0, 0.0], [0.0, 0.0]])), np.array([0.0, 1.0]), np.ones(2))
    with pytest.raises(ValueError):
        fgk_init(op, np.ones(3), np.array([1.0, -1.0, 1.0]))


def test_step_two_by_two():
    s = two_by_two(steps=1)
    assert s.M[0, 0] == pytest.approx(np.sqrt(2.5), rel=1e-14)
    assert s.M[1, 0] == pytest.approx(3 / np.sqrt(10.0), rel=1e-14)
    np.testing.assert_allclose(s.U[:, 1], np.array([1.0, -1.0]) / SQ2, atol=1e-15)
    assert s.k == 1 and len(s.weight_diags) == 2


def test_identity_breaks_down_at_first_step():
    s = fgk_init(DiagonalOperator(np.ones(3)), np.eye(3)[0], np.ones(3))
    fgk_step(s, np.ones(3))
    assert s.breakdown == "u"
    assert s.M[1, 0] == 0.0
    with pytest.raises(BreakdownError):
        fgk_step(s, np.ones(3))


def test_fixed_identity_weights_bidiagonal():
    rng = np.random.default_rng(11)
    op = DenseOperator(rng.standard_normal((30, 20)))
    s = fgk_init(op, rng.standard_normal(30), np.ones(30))
    for _ in range(10):
        fgk_step(s, np.ones(30))
    M, T = s.M, s.T
    assert np.max(np.abs(np.triu(M, 1))) <= 1e-10
    assert np.max(np.abs(np.tril(M, -2))) == 0.0
    assert np.max(np.abs(np.triu(T, 2))) <= 1e-10
    # T = B^T: superdiagonal of T equals subdiagonal of M
    np.testing.assert_allclose(np.diag(T, 1), np.diag(M, -1), rtol=1e-10)
    np.testing.assert_allclose(np.diag(T)[:-1], np.diag(M), rtol=1e-10)
    H = s.T[: s.k, :] @ s.M
    np.testing.assert_allclose(H, H.T, atol=1e-10 * np.abs(H).max())
    assert np.linalg.eigvalsh(0.5 * (H + H.T)).min() > 0


# ---- Rbar, E_i ------------------------------------------------------------


def test_rbar_rank_one_at_k0():
    s = two_by_two(steps=0)
    u = np.array([3.0, -1.0])
    np.testing.assert_allclose(rbar_apply(s, u), s.U[:, 0] * (s.U[:, 0] @ u), atol=1e-15)


def test_rbar_orthogonal_vector():
    rng = np.random.default_rng(0)
    op = DenseOperator(rng.standard_normal((10, 6)))
    s = fgk_init(op, rng.standard_normal(10), rng.uniform(1, 2, 10))
    fgk_step(s, rng.uniform(1, 2, 10))
    u = rng.standard_normal(10)
    u -= s.U @ (s.U.T @ u)
    assert np.linalg.norm(rbar_apply(s, u)) <= 1e-14


def test_rbar_fixed_weights_on_range():
    rng = np.random.default_rng(1)
    d = rng.uniform(0.5, 3, 12)
    op = DenseOperator(rng.standard_normal((12, 7)))
    s = fgk_init(op, rng.standard_normal(12), d)
    for _ in range(3):
        fgk_step(s, d)
    u = s.U @ rng.standard_normal(4)
    np.testing.assert_allclose(rbar_apply(s, u), d * u, atol=1e-13)


def test_error_apply_examples():
    s = two_by_two(steps=1, diags=[np.array([2.0, 1.0]), np.ones(2)])
    np.testing.assert_array_equal(error_apply(s, 1, np.array([1.0, 1.0])), [1.0, 0.0])
    np.testing.assert_array_equal(error_apply(s, 2, np.array([5.0, 7.0])), 0.0)
    with pytest.raises(IndexError):
        error_apply(s, 0, np.ones(2))
    with pytest.raises(IndexError):
        error_apply(s, 3, np.ones(2))


def test_error_apply_fixed_weights_zero():
    _, s = random_run(3, weights="unit")
    for i in range(1, s.k + 2):
        assert not np.any(error_apply(s, i, np.ones(s.U.shape[0])))


# ---- factorization residuals -------------------------------------------


def test_residuals_fixed_identity_weights():
    rng = np.random.default_rng(2)
    op = DenseOperator(rng.standard_normal((30, 20)))
    s = fgk_init(op, rng.standard_normal(30), np.ones(30))
    for _ in range(8):
        fgk_step(s, np.ones(30))
    assert max(factorization_residuals(s)) <= 1e-10


def test_residuals_lp_weights_two_by_two():
    from flexgk.weights import lp_weights

    op = DenseOperator(np.diag([2.0, 1.0]))
    r0 = np.array([1.0, 1.0])
    s = fgk_init(op, r0, lp_weights(-r0, 1.0, 0.1))
    x1 = s.V[:, 0] * 0.3
    fgk_step(s, lp_weights(op.apply(x1) - r0, 1.0, 0.1))
    assert max(factorization_residuals(s)) <= 1e-12


def test_residuals_need_a_step():
    with pytest.raises(ValueError):
        factorization_residuals(two_by_two(steps=0))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_invariants_random_weights(seed):
    A, s = random_run(seed)
    normA = np.linalg.norm(A, 2)
    res = factorization_residuals(s)
    assert max(res) <= 1e-10 * normA
    assert abs(res.flexible - res.inexact) <= 1e-12 * max(1.0, normA)
    k = s.k
    assert np.linalg.norm(s.U.T @ s.U - np.eye(k + 1)) <= 1e-10
    assert np.linalg.norm(s.V.T @ s.V - np.eye(k + 1)) <= 1e-10
    assert np.all(np.tril(s.M, -2) == 0.0)
    assert np.all(np.tril(s.T, -1) == 0.0)
    assert all(np.all(d > 0) for d in s.weight_diags)

    # projected right-hand side: V_k^T (A+E)^T R_{k+1}^{-1} r0 = beta t11 e1
    r0 = s.beta * s.U[:, 0]
    lhs = s.Vk.T @ inexact_adjoint_apply(s, r0)
    rhs = np.zeros(k)
    rhs[0] = s.beta * s.t11
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * max(1.0, np.linalg.norm(rhs))

    # T_{k,k+1} M_k = M_k^T (U^T Y) M_k
    H = s.T[:k, :] @ s.M
    G = s.M.T @ (s.U.T @ s.Y) @ s.M
    assert np.linalg.norm(H - G) <= 1e-10 * max(1.0, np.linalg.norm(H))


def test_copy_is_independent():
    _, s = random_run(5, k=3)
    c = s.copy()
    fgk_step(c, np.ones(c.U.shape[0]))
    assert c.k == s.k + 1
    assert s.M.shape == (4, 3)


def test_capacity_growth():
    rng = np.random.default_rng(9)
    op = DenseOperator(rng.standard_normal((50, 40)))
    s = fgk_init(op, rng.standard_normal(50), np.ones(50), capacity=2)
    for _ in range(20):
        fgk_step(s, rng.uniform(0.5, 2, 50))
    assert s.M.shape == (21, 20)
    assert max(factorization_residuals(s)) <= 1e-10 * np.linalg.norm(op.matrix, 2)


def test_no_reorth_still_factorizes():
    rng = np.random.default_rng(4)
    op = DenseOperator(rng.standard_normal((20, 10)))
    s = fgk_init(op, rng.standard_normal(20), np.ones(20), reorth=False)
    for _ in range(5):
        fgk_step(s, np.ones(20))
    assert factorization_residuals(s).left <= 1e-10
