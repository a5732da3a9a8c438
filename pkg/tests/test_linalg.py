import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dsfnewton import linalg as LA


def rand_sym(rng, p, scale=1.0):
    a = rng.standard_normal((p, p)) * scale
    return (a + a.T) / 2


def rand_spd(rng, p, cond=None):
    a = rng.standard_normal((p, p))
    if cond is None:
        return a.T @ a + np.eye(p)
    q, _ = np.linalg.qr(a)
    return (q * np.geomspace(1.0, cond, p)) @ q.T


def test_symmetric_storage_round_trip():
    rng = np.random.default_rng(0)
    a = rand_sym(rng, 6)
    packed = LA.upper_triangle(a)
    assert packed.size == 21
    back = LA.from_upper_triangle(packed, 6)
    assert np.array_equal(back, back.T)
    assert np.array_equal(back, LA.symmetrize(a))


def test_top_two_eigen_examples():
    lam1, w1, lam2 = LA.top_two_eigen(np.diag([3.0, -5.0, 1.0]))
    assert lam1 == pytest.approx(-5) and lam2 == pytest.approx(3)
    assert np.allclose(w1, [0, 1, 0])
    lam1, w1, lam2 = LA.top_two_eigen(np.zeros((4, 4)))
    assert lam1 == 0 and lam2 == 0
    lam1, w1, lam2 = LA.top_two_eigen(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert lam1 == pytest.approx(3) and lam2 == pytest.approx(1)
    assert np.allclose(w1, np.array([1, 1]) / np.sqrt(2))


def test_top_two_eigen_tie_prefers_positive():
    lam1, w1, lam2 = LA.top_two_eigen(np.diag([-2.0, 2.0, 1.0]))
    assert lam1 == 2.0 and lam2 == 2.0
    assert np.allclose(w1, [0, 1, 0])


def test_top_two_eigen_rejects_nonfinite():
    a = np.eye(3)
    a[0, 1] = a[1, 0] = np.nan
    with pytest.raises(LA.EigenError):
        LA.top_two_eigen(a)


def test_sign_convention():
    rng = np.random.default_rng(1)
    for _ in range(20):
        _, w1, _ = LA.top_two_eigen(rand_sym(rng, 5))
        assert w1[np.flatnonzero(w1)[0]] > 0
        assert np.linalg.norm(w1) == pytest.approx(1.0)


def test_rank1_truncate_examples():
    u = np.array([3.0, 4.0]) / 5
    inn = LA.rank1_truncate(4 * np.outer(u, u))
    assert inn.s == 1 and inn.r == pytest.approx(0, abs=1e-12)
    assert np.allclose(inn.h, 2 * u)
    inn = LA.rank1_truncate(np.zeros((3, 3)))
    assert inn.s == 1 and inn.r == 0 and not inn.h.any()
    inn = LA.rank1_truncate(np.diag([-4.0, 1.0]))
    assert inn.s == -1 and inn.r == pytest.approx(1)
    assert np.allclose(inn.h, [2, 0])
    assert np.linalg.norm(np.diag([-4.0, 1.0]) - inn.matrix(), 2) == pytest.approx(1)


@given(st.integers(1, 12), st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
@settings(max_examples=100, deadline=None)
def test_eckart_young_witness(p, seed, scale):
    rng = np.random.default_rng(seed)
    a = rand_sym(rng, p, scale)
    inn = LA.rank1_truncate(a)
    lam = np.linalg.eigvalsh(a - inn.matrix())
    resid = np.max(np.abs(lam))
    assert abs(resid - inn.r) <= 1e-9 * max(1.0, np.max(np.abs(np.linalg.eigvalsh(a))))
    lam1, w1, _ = LA.top_two_eigen(a)
    assert np.linalg.norm(a @ w1 - lam1 * w1) <= 1e-9 * max(1.0, np.linalg.norm(a, 2))


def test_spd_solve_examples():
    rng = np.random.default_rng(2)
    g = rng.standard_normal(4)
    assert np.allclose(LA.spd_solve(np.eye(4), g), g)
    assert np.allclose(LA.spd_solve(np.diag([2.0, 4.0]), [2.0, 8.0]), [1, 2])
    a = rng.standard_normal((5, 5))
    h = a.T @ a + np.eye(5)
    g = rng.standard_normal(5)
    assert np.linalg.norm(h @ LA.spd_solve(h, g) - g) <= 1e-10


def test_spd_solve_rejects_indefinite():
    with pytest.raises(LA.SPDError):
        LA.spd_solve(np.diag([1.0, -1.0]), [1.0, 1.0])


@given(st.integers(1, 15), st.integers(0, 2**32 - 1), st.floats(1.0, 1e6))
@settings(max_examples=80, deadline=None)
def test_spd_round_trip(p, seed, cond):
    rng = np.random.default_rng(seed)
    h = rand_spd(rng, p, cond)
    g = rng.standard_normal(p)
    d = LA.spd_solve(h, g)
    assert np.linalg.norm(h @ d - g) <= 1e-10 * (np.linalg.norm(h, 2) * np.linalg.norm(d) + np.linalg.norm(g))


def test_smw_examples():
    rng = np.random.default_rng(3)
    base = rand_spd(rng, 4)
    g = rng.standard_normal(4)
    f = LA.cholesky(base)
    assert np.allclose(LA.smw_solve(f, [], g), LA.spd_solve(base, g))
    e1 = np.eye(3)[0]
    d = LA.smw_solve(LA.cholesky(np.eye(3)), [(1.0, e1)], np.array([2.0, 1.0, 1.0]))
    assert np.allclose(d, [1, 1, 1])


def test_smw_breakdown():
    e1 = np.eye(2)[0]
    with pytest.raises(LA.SMWBreakdown):
        LA.smw_solve(LA.cholesky(np.eye(2)), [(-1.0, e1)], np.ones(2))


@pytest.mark.parametrize("seed", range(200))
def test_smw_matches_explicit_assembly(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(2, 10))
    k = int(rng.integers(1, 5))
    base = rand_spd(rng, p)
    updates = []
    full = base.copy()
    for _ in range(k):
        s = float(rng.choice([-1.0, 1.0]))
        h = rng.standard_normal(p) * (0.3 if s < 0 else 1.0)
        if s < 0 and np.linalg.eigvalsh(full - np.outer(h, h))[0] <= 0.1:
            s = 1.0
        updates.append((s, h))
        full = full + s * np.outer(h, h)
    g = rng.standard_normal(p)
    d = LA.smw_solve(LA.cholesky(base), updates, g)
    ref = np.linalg.solve(full, g)
    assert np.linalg.norm(d - ref) <= 1e-9 * max(1.0, np.linalg.norm(ref))
