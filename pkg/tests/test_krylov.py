import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import linalg as la

from curvedt.errors import ConvergenceError
from curvedt.krylov import gmres, gmres_batch


def _well_conditioned(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return a / np.sqrt(n) + 3 * np.eye(n)


def test_dense_oracle(rng):
    a = _well_conditioned(rng, 50)
    b = rng.normal(size=50) + 1j * rng.normal(size=50)
    x, stats = gmres(lambda v: a @ v, b, tol=1e-12)
    ref = la.lu_solve(la.lu_factor(a), b)
    assert np.linalg.norm(x - ref) <= 1e-8 * np.linalg.norm(ref)
    assert stats.converged and stats.residual <= 1e-12


def test_identity_one_step(rng):
    b = rng.normal(size=20) + 1j * rng.normal(size=20)
    x, stats = gmres(lambda v: v, b)
    assert np.allclose(x, b, rtol=1e-14, atol=0)
    assert stats.iterations == 1


def test_diagonal_monotone():
    n = 100
    d = np.arange(1, n + 1, dtype=float)
    b = np.ones(n)
    x, stats = gmres(lambda v: d * v, b, tol=1e-10, restart=n)
    assert np.allclose(x, 1 / d, rtol=1e-8)
    h = np.array(stats.history)
    assert np.all(np.diff(h) <= 1e-15)


def test_monotone_within_cycles_with_restart(rng):
    a = _well_conditioned(rng, 60)
    b = rng.normal(size=60)
    restart = 5
    _, stats = gmres(lambda v: a @ v, b, tol=1e-10, restart=restart)
    h = np.array(stats.history)
    for start in range(0, len(h), restart):
        assert np.all(np.diff(h[start:start + restart]) <= 1e-15)


def test_zero_rhs():
    x, stats = gmres(lambda v: 2 * v, np.zeros(8))
    assert not np.any(x) and stats.iterations == 0 and stats.converged


def test_maxit_reports_best_iterate(rng):
    a = _well_conditioned(rng, 40)
    b = rng.normal(size=40)
    with pytest.raises(ConvergenceError) as info:
        gmres(lambda v: a @ v, b, tol=1e-14, restart=3, maxit=4)
    err = info.value
    assert err.x is not None and err.x.shape == (40,)
    assert not err.stats.converged and err.stats.iterations <= 4
    assert err.stats.residual == pytest.approx(np.linalg.norm(b - a @ err.x) / np.linalg.norm(b), rel=1e-6)


def test_batch_matches_single(rng):
    a = _well_conditioned(rng, 30)
    B = rng.normal(size=(30, 4)) + 1j * rng.normal(size=(30, 4))
    X, stats = gmres_batch(lambda V: a @ V, B, tol=1e-11)
    for i in range(4):
        x, _ = gmres(lambda v: a @ v, B[:, i], tol=1e-11)
        assert np.allclose(X[:, i], x, rtol=1e-9, atol=0)
        assert stats[i].residual <= 1e-11


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**32 - 1))
def test_residual_meets_tolerance(n, seed):
    rng = np.random.default_rng(seed)
    a = _well_conditioned(rng, n)
    b = rng.normal(size=n) + 1j * rng.normal(size=n)
    x, stats = gmres(lambda v: a @ v, b, tol=1e-8, restart=10)
    assert np.linalg.norm(a @ x - b) / np.linalg.norm(b) <= 1e-8 * (1 + 1e-6)
