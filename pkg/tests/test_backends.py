"""The compiled core and the numpy fallback must agree."""
import numpy as np
import pytest

from ppsvm import _backend, _fallback
from ppsvm.kernels import KernelSpec, gram

_core = pytest.importorskip("ppsvm._core")


def problem(seed, n=70, kernel=KernelSpec.rbf(0.4)):
    gen = np.random.default_rng(seed)
    y = np.where(np.arange(n) % 3 == 0, 1.0, -1.0)
    X = gen.standard_normal((n, 4)) + 0.8 * y[:, None]
    Q = np.ascontiguousarray(np.outer(y, y) * gram(kernel, X))
    return Q, y


def test_backend_name_is_known():
    assert _backend.NAME in ("compiled", "python")


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("C", [0.5, 10.0])
def test_smo_same_trajectory(seed, C):
    Q, y = problem(seed)
    a1, g1, it1, ok1, t1 = _core.smo_solve(Q, y, C, 1e-5, 10**6, True)
    a2, g2, it2, ok2, t2 = _fallback.smo_solve(Q, y, C, 1e-5, 10**6, True)
    assert ok1 and ok2 and it1 == it2
    np.testing.assert_allclose(a1, a2, rtol=0, atol=1e-12)
    np.testing.assert_allclose(g1, g2, rtol=0, atol=1e-10)
    np.testing.assert_allclose(t1, t2, rtol=1e-12)


def test_smo_budget_exhaustion_agrees():
    Q, y = problem(0)
    r1 = _core.smo_solve(Q, y, 10.0, 1e-8, 5, False)
    r2 = _fallback.smo_solve(Q, y, 10.0, 1e-8, 5, False)
    assert (r1[2], r1[3], r1[4]) == (r2[2], r2[3], r2[4]) == (5, False, None)


@pytest.mark.parametrize("d", [3, 40])
def test_mgs_agrees_to_rounding(d):
    A = np.random.default_rng(d).standard_normal((d, d))
    Q1, ok1 = _core.mgs_orthonormalize(A, 1e-8)
    Q2, ok2 = _fallback.mgs_orthonormalize(A, 1e-8)
    assert ok1 and ok2
    np.testing.assert_allclose(Q1, Q2, rtol=0, atol=1e-12)
    assert np.max(np.abs(Q1.T @ Q1 - np.eye(d))) <= 1e-13


def test_mgs_flags_rank_deficiency():
    A = np.ones((4, 4))
    assert not _core.mgs_orthonormalize(A, 1e-8)[1]
    assert not _fallback.mgs_orthonormalize(A, 1e-8)[1]


def test_compensated_distances_agree():
    gen = np.random.default_rng(3)
    A, B = gen.standard_normal((5, 1300)), gen.standard_normal((6, 1300))
    np.testing.assert_allclose(_core.sq_dists_compensated(A, B),
                               _fallback.sq_dists_compensated(A, B), rtol=1e-15)
