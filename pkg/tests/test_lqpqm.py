import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from iva_lqpqm import lqpqm
from iva_lqpqm.errors import MaxIterationsExceeded, NotPositiveDefinite, PoleEvaluation
from iva_lqpqm.lqpqm import LqpqmProblem

from oracles import grid_minimum, lqpqm_objective, random_lqpqm, random_pd, random_psd, restart_descent, secular_root_scan

GOLDEN = (3 + np.sqrt(5)) / 2
seeds = st.integers(0, 2**32 - 1)


def canonical_gradient(U, v, z, y):
    r = y + v
    den = np.real(np.conj(r) @ U @ r) + z
    return y - U @ r / den


# ---------------------------------------------------------------- problem types


def test_problem_validation():
    with pytest.raises(ValueError):
        LqpqmProblem(np.eye(2), np.zeros(2), np.eye(2), np.zeros(2), -1.0)
    with pytest.raises(ValueError):
        LqpqmProblem(np.eye(2), np.zeros(3), np.eye(2), np.zeros(2), 0.0)
    with pytest.raises(ValueError):
        LqpqmProblem(np.array([[1.0, 1.0], [0.0, 1.0]]), np.zeros(2), np.eye(2), np.zeros(2), 0.0)
    with pytest.raises(NotPositiveDefinite):
        lqpqm.solve(LqpqmProblem(np.diag([1.0, -1.0]), np.zeros(2), np.eye(2), np.ones(2), 0.0))


def test_to_canonical_identity_case(rng):
    C = random_psd(rng, 3)
    c = lqpqm.to_canonical(LqpqmProblem(np.eye(3), np.zeros(3), C, np.zeros(3), 0.0))
    np.testing.assert_allclose(c.U, C, atol=1e-12)
    np.testing.assert_allclose(c.v, 0)


def test_to_canonical_hand_example(rng):
    p = LqpqmProblem(np.array([[4.0]]), np.array([1.0]), np.array([[1.0]]), np.array([0.0]), 0.0)
    c = lqpqm.to_canonical(p)
    np.testing.assert_allclose(c.G, [[2.0]])
    np.testing.assert_allclose(c.U, [[0.25]])
    np.testing.assert_allclose(c.v, [2.0])
    q = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    diffs = [p.objective(q[i : i + 1]) - c.objective(c.G @ (q[i : i + 1] - p.b)) for i in range(5)]
    np.testing.assert_allclose(diffs, diffs[0], atol=1e-12)


@given(seeds)
def test_to_canonical_probe_points(seed):
    rng = np.random.default_rng(seed)
    A, b, C, d, z = random_lqpqm(rng, 4)
    p = LqpqmProblem(A, b, C, d, z)
    c = lqpqm.to_canonical(p)
    np.testing.assert_allclose(c.U, np.linalg.inv(c.G).conj().T @ C @ np.linalg.inv(c.G), atol=1e-9)
    Q = rng.standard_normal((20, 4)) + 1j * rng.standard_normal((20, 4))
    diffs = np.array([p.objective(q) - c.objective(c.G @ (q - b)) for q in Q])
    assert np.ptp(diffs) <= 1e-9 * max(1.0, np.max(np.abs(diffs)))
    np.testing.assert_allclose(c.to_original(c.G @ (Q[0] - b)), Q[0], atol=1e-12)


# ---------------------------------------------------------------- secular equation


def test_secular_f_hand_values():
    assert lqpqm.secular_f(2.0, [1.0], [1.0], 0.0) == pytest.approx(2.0)
    assert abs(lqpqm.secular_f(GOLDEN, [1.0], [1.0], 0.0)) <= 1e-12
    assert lqpqm.secular_f(3.0, [1.0, 2.0], [0.0, 0.0], 1.5) == pytest.approx(-1.5)


def test_secular_f_prime_matches_finite_difference(rng):
    phi = np.array([0.3, 1.0, 2.0])
    vt = np.array([0.5, 1.0 + 1j, 0.2])
    for lam in (2.5, 4.0, 10.0):
        h = 1e-6
        fd = (lqpqm.secular_f(lam + h, phi, vt, 0.7) - lqpqm.secular_f(lam - h, phi, vt, 0.7)) / (2 * h)
        assert lqpqm.secular_f_prime(lam, phi, vt, 0.7) == pytest.approx(fd, rel=1e-6)


def test_secular_pole_raises():
    with pytest.raises(PoleEvaluation):
        lqpqm.secular_f(1.0, [1.0], [1.0], 0.0)
    # a pole outside the support is not a pole
    assert np.isfinite(lqpqm.secular_f(1.0, [1.0, 2.0], [0.0, 1.0], 0.0))


def test_init_cubic_examples():
    assert lqpqm.init_cubic_poly(1.0, 1.0, 0.0) == pytest.approx(GOLDEN, rel=1e-14)
    assert lqpqm.init_cubic_poly(1.0, 0.0, 0.0) == pytest.approx(1.0, rel=1e-12)
    assert lqpqm.init_cubic_poly(3.0, 0.0, 0.0) == pytest.approx(3.0, rel=1e-12)


@given(seeds)
def test_init_cubic_residual(seed):
    rng = np.random.default_rng(seed)
    p, v, z = rng.exponential(), rng.exponential(), rng.exponential()
    lam = lqpqm.init_cubic_poly(p, v, z)
    coeffs = [-1.0, p * v + 2 * p + z, -(p + 2 * z) * p, p * p * z]
    scale = sum(abs(c) * max(1.0, abs(lam)) ** (3 - i) for i, c in enumerate(coeffs))
    assert abs(np.polyval(coeffs, lam)) <= 1e-8 * scale


def test_solve_secular_examples():
    assert lqpqm.solve_secular([1.0], [1.0], 0.0) == pytest.approx(GOLDEN, rel=1e-12)
    lam = lqpqm.solve_secular([1.0, 2.0], [0.0, 1.0], 5.0)
    assert lam > 5
    assert abs(lqpqm.secular_f(lam, [1.0, 2.0], [0.0, 1.0], 5.0)) <= 1e-11 * lam
    ref, _ = secular_root_scan([1.0, 2.0], [0.0, 1.0], 5.0)
    assert lam == pytest.approx(ref, rel=1e-9)
    lam = lqpqm.solve_secular([1.0], [1e-6], 10.0)
    assert lam == pytest.approx(10 + 100 * 1e-12 / 81, rel=1e-12)


def test_solve_secular_empty_support():
    with pytest.raises(ValueError):
        lqpqm.solve_secular([1.0, 2.0], [0.0, 0.0], 1.0)


def test_iteration_cap_raises():
    with pytest.raises(MaxIterationsExceeded):
        lqpqm.solve_secular_batch(np.array([[0.2, 0.5, 1.0]]), np.array([[1.0, 1.0, 1.0]]), np.array([3.0]), max_iter=0)


@given(seeds, st.integers(1, 6))
def test_root_location_and_slope(seed, d):
    rng = np.random.default_rng(seed)
    phi = rng.exponential(size=d)
    vt = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    z = float(rng.exponential() * rng.integers(0, 2))
    lam = lqpqm.solve_secular(phi, vt, z)
    assert lam > max(phi.max(), z)
    assert lqpqm.secular_f_prime(lam, phi, vt, z) < 0


def _all_zeros(phi, vsq, z):
    S = phi * vsq > 0
    poles = np.unique(phi[S])
    edges = np.concatenate([[1e-9], poles, [100 * max(poles.max(), z, 1.0)]])
    zeros = []
    f = lambda lam: lam**2 * np.sum(phi[S] * vsq[S] / (lam[:, None] - phi[S]) ** 2, axis=1) - lam + z
    for a, b in zip(edges[:-1], edges[1:]):
        w = b - a
        grid = np.linspace(a + 1e-9 * w, b - 1e-9 * w, 20001)
        vals = f(grid)
        for i in np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]:
            lo, hi = grid[i], grid[i + 1]
            flo = vals[i]
            for _ in range(100):
                m = 0.5 * (lo + hi)
                fm = f(np.array([m]))[0]
                if np.sign(fm) == np.sign(flo):
                    lo, flo = m, fm
                else:
                    hi = m
            zeros.append(0.5 * (lo + hi))
    return np.array(sorted(zeros))


@given(seeds, st.integers(1, 4))
def test_zero_ordering_of_stationary_values(seed, d):
    rng = np.random.default_rng(seed)
    phi = rng.uniform(0.1, 2.0, size=d)
    vt = (rng.standard_normal(d) + 1j * rng.standard_normal(d)) * 0.3
    z = float(rng.uniform(0, 0.5))
    zeros = _all_zeros(phi, np.abs(vt) ** 2, z)
    assert zeros.size >= 1
    g = np.array([lqpqm.stationary_value(lam, phi, vt, z) for lam in zeros])
    assert np.all(np.diff(g) <= 1e-9 * (1 + np.abs(g[:-1])))
    assert zeros[-1] == pytest.approx(lqpqm.solve_secular(phi, vt, z), rel=1e-8)


# ---------------------------------------------------------------- full solver


def test_solve_worked_example():
    p = LqpqmProblem(np.eye(1), np.zeros(1), np.eye(1), -np.ones(1), 0.0)
    s = lqpqm.solve(p)
    assert s.lambda_star == pytest.approx(GOLDEN, rel=1e-12)
    assert s.q_star[0] == pytest.approx((np.sqrt(5) - 1) / 2, abs=1e-12)
    grid = np.arange(-5, 5 + 1e-9, 1e-4)
    vals = grid**2 - np.log((grid + 1) ** 2)
    assert abs(grid[np.nanargmin(vals)] - s.q_star[0].real) <= 1e-4
    assert s.objective_value == pytest.approx(p.objective(s.q_star), abs=1e-12)


def test_solve_special_case_y_zero():
    p = LqpqmProblem(np.eye(2), np.zeros(2), np.diag([1.0, 2.0]), np.zeros(2), 3.0)
    s = lqpqm.solve(p)
    np.testing.assert_allclose(s.q_star, 0, atol=1e-14)
    assert s.lambda_star == 3.0
    assert s.objective_value == pytest.approx(-np.log(3.0))


def test_solve_special_case_top_eigenvector():
    p = LqpqmProblem(np.eye(2), np.zeros(2), np.diag([1.0, 2.0]), np.zeros(2), 0.5)
    s = lqpqm.solve(p)
    assert s.lambda_star == pytest.approx(2.0)
    np.testing.assert_allclose(np.abs(s.q_star), [0, np.sqrt(0.75)], atol=1e-12)
    ys = np.linspace(-2, 2, 801)
    Y1, Y2 = np.meshgrid(ys, ys, indexing="ij")
    vals = Y1**2 + Y2**2 - np.log(Y1**2 + 2 * Y2**2 + 0.5)
    assert s.objective_value <= vals.min() + 1e-9


def test_solve_zero_C_returns_b():
    b = np.array([1.0 + 2j, -0.5])
    s = lqpqm.solve(LqpqmProblem(random_pd(np.random.default_rng(0), 2), b, np.zeros((2, 2)), np.ones(2), 2.0))
    np.testing.assert_allclose(s.q_star, b, atol=1e-14)
    assert s.objective_value == pytest.approx(-np.log(2.0))


def test_solve_hard_case_beats_secular_only_point():
    # top eigenvector of U orthogonal to v: the minimizer sits on lambda = phi_top
    p = LqpqmProblem(np.eye(2), np.zeros(2), np.diag([1.0, 10.0]), -np.array([1.0, 0.0]), 0.0)
    s = lqpqm.solve(p)
    assert s.lambda_star == pytest.approx(10.0)
    ref, _ = grid_minimum(p.A, p.b, p.C, p.d, p.z)
    assert s.objective_value <= ref + 1e-6
    assert s.objective_value == pytest.approx(-1.41371, abs=1e-4)


@given(seeds, st.integers(1, 8))
def test_stationarity_and_objective_consistency(seed, d):
    rng = np.random.default_rng(seed)
    A, b, C, dv, z = random_lqpqm(rng, d)
    p = LqpqmProblem(A, b, C, dv, z)
    s = lqpqm.solve(p)
    c = lqpqm.to_canonical(p)
    grad = canonical_gradient(c.U, c.v, c.z, s.y_star)
    assert np.linalg.norm(grad) <= 1e-8 * (1 + np.linalg.norm(s.y_star))
    assert s.objective_value == pytest.approx(p.objective(s.q_star), abs=1e-9)
    assert np.isfinite(s.objective_value)


@given(seeds, st.integers(1, 2))
def test_global_optimality_against_restarts(seed, d):
    rng = np.random.default_rng(seed)
    A, b, C, dv, z = random_lqpqm(rng, d)
    s = lqpqm.solve(LqpqmProblem(A, b, C, dv, z))
    best, _ = restart_descent(A, b, C, dv, z, rng, restarts=20, steps=500)
    assert s.objective_value <= best + 1e-6


def test_scale_robustness(rng):
    for _ in range(20):
        A, b, C, d, z = random_lqpqm(rng, 3)
        s1 = lqpqm.solve(LqpqmProblem(A, b, C, d, z))
        s2 = lqpqm.solve(LqpqmProblem(A, b, 1e12 * C, d, 1e12 * z))
        assert np.linalg.norm(s2.q_star - s1.q_star) <= 1e-6 * max(1.0, np.linalg.norm(s1.q_star))


def test_batch_matches_single(rng):
    probs = [random_lqpqm(rng, 3) for _ in range(10)]
    out = lqpqm.solve_batch(*(np.stack([p[i] for p in probs]) for i in range(5)))
    for i, p in enumerate(probs):
        s = lqpqm.solve(LqpqmProblem(*p))
        np.testing.assert_allclose(out["q"][i], s.q_star, atol=1e-12)
        assert out["objective"][i] == pytest.approx(lqpqm_objective(*p, s.q_star), abs=1e-10)
