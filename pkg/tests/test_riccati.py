import numpy as np
import pytest

from halfline_lq import (
    ConfigError,
    CostSpec,
    SolverError,
    fractional_power,
    gain,
    solve_riccati_mild,
    solve_riccati_ode,
    trace_term,
)
from halfline_lq.riccati import RiccatiProblem

from conftest import tiny_problem


def _scalar_exact(a, b, c, sigma):
    # p' = c - 2 a p - b^2 p^2 in sigma = T - t, p(0) = 0
    g = np.sqrt(a * a + b * b * c)
    e = np.exp(-2 * g * sigma)
    return c * (1 - e) / (g + a + (g - a) * e)


def _scalar(a=0.7, b=1.3, c=2.0):
    cost = CostSpec(np.array([[np.sqrt(c)]]), np.zeros((1, 1)))
    return RiccatiProblem.build(np.array([[-a]]), np.array([b]), cost), cost


@pytest.mark.parametrize("solver,m", [(solve_riccati_ode, 400), (solve_riccati_mild, 800)])
def test_scalar_surrogate(solver, m):
    prob, cost = _scalar()
    sol = solver(None, prob, cost, 0.0, 2.0, m)
    exact = _scalar_exact(0.7, 1.3, 2.0, 2.0 - sol.times)
    assert np.max(np.abs(sol.P_mats[:, 0, 0] - exact)) <= 1e-6


def test_scalar_ode_high_accuracy():
    prob, cost = _scalar(0.2, 0.5, 1.0)
    sol = solve_riccati_ode(None, prob, cost, 0.0, 1.0, 100)
    assert np.max(np.abs(sol.P_mats[:, 0, 0] - _scalar_exact(0.2, 0.5, 1.0, 1 - sol.times))) <= 1e-10


def test_zero_cost_gives_zero():
    g, A, bi = tiny_problem()
    cost = CostSpec.zero(A.n)
    ode = solve_riccati_ode(A, bi, cost, 0.0, 1.0, 50)
    assert np.all(ode.P_mats == 0)
    mild = solve_riccati_mild(A, bi, cost, 0.0, 1.0, 50)
    assert mild.iterations == 1 and np.all(mild.P_mats == 0)
    assert np.all(gain(ode, 0.3) == 0)
    assert trace_term(ode, bi, 1.0) == 0.0


def test_no_quadratic_term_matches_direct_quadrature():
    from scipy.integrate import quad_vec
    from scipy.linalg import expm

    g, A, bi = tiny_problem(n=16)
    c = 1 + 0.5 * np.sin(g.nodes)
    G = np.diag(np.exp(-g.nodes))
    cost = CostSpec(np.diag(c), G)
    sol = solve_riccati_mild(A, np.zeros(A.n), cost, 0.0, 1.0, 100, tol=1e-14)
    M = A.matrix
    CtC = cost.CtC
    for k in (0, 40, 90):
        s_end = 1.0 - sol.times[k]
        E = expm(s_end * M)
        ref = E.T @ G @ E
        ref += quad_vec(lambda s: expm(s * M.T) @ CtC @ expm(s * M), 0, s_end, epsabs=1e-13, epsrel=1e-12)[0]
        assert np.max(np.abs(sol.P_mats[k] - ref)) <= 1e-8 * max(1, np.abs(ref).max())


def test_solvers_agree_small(small, small_riccati):
    mild = solve_riccati_mild(small.A, small_riccati.problem, small.cost, 0.0, 1.0, 200)
    d = np.linalg.norm(mild.P_mats - small_riccati.P_mats, axis=(1, 2))
    assert d.max() <= 1e-4 * np.linalg.norm(small_riccati.P_mats, axis=(1, 2)).max()
    assert mild.residual <= 1e-12


def test_sigma_plus_membership(reference_riccati):
    P = reference_riccati.P_mats
    assert np.max(np.abs(P - np.swapaxes(P, 1, 2))) <= 1e-10
    assert min(np.linalg.eigvalsh(Pk)[0] for Pk in P[::10]) >= -1e-10


def test_terminal_condition_exact(small):
    G = np.diag(0.3 * np.exp(-((small.grid.nodes - 2) ** 2)))
    cost = CostSpec(np.eye(small.A.n), G)
    sol = solve_riccati_ode(small.A, small.bi, cost, 0.0, 1.0, 60)
    assert np.array_equal(sol.P_mats[-1], G)
    assert np.array_equal(sol.P_at(1.0), G)


def test_quadratic_term_identity(small, small_riccati):
    """P b b^T P equals (E* V_P)^T (E* V_P) with V_P = (lambda0 - A^T)^(1-alpha) P."""
    bi = small.bi
    F = fractional_power(small.A, bi.lambda0, 1 - bi.alpha).matrix
    for k in (0, 77, 150):
        P = small_riccati.P_mats[k]
        row = bi.e_ortho @ F.T @ P
        lhs = np.outer(P @ bi.b_ortho, P @ bi.b_ortho)
        assert np.max(np.abs(lhs - np.outer(row, row))) <= 1e-9 * np.abs(lhs).max()


def test_gain_consistency(small, small_riccati):
    bi, sol = small.bi, small_riccati
    F = fractional_power(small.A, bi.lambda0, 1 - bi.alpha).matrix
    for k in (0, 50, 199):
        ref = bi.e_ortho @ F.T @ sol.P_mats[k]
        assert np.max(np.abs(gain(sol, sol.times[k]) - ref)) <= 1e-10 * max(1, np.abs(ref).max())
    assert np.max(np.abs(gain(sol, 1.0))) <= 1e-12
    with pytest.raises(ConfigError):
        gain(sol, 1.5)


def test_gain_interpolates(small_riccati):
    sol = small_riccati
    t = 0.5 * (sol.times[10] + sol.times[11])
    assert np.allclose(gain(sol, t), 0.5 * (sol.gain_cache[10] + sol.gain_cache[11]), rtol=1e-13, atol=1e-15)


def test_monotone_in_terminal_weight(small):
    n = small.A.n
    G2 = np.diag(np.exp(-0.5 * (small.grid.nodes - 3) ** 2))
    P1 = solve_riccati_ode(small.A, small.bi, CostSpec(np.eye(n), np.zeros((n, n))), 0.0, 1.0, 100).P_mats
    P2 = solve_riccati_ode(small.A, small.bi, CostSpec(np.eye(n), G2), 0.0, 1.0, 100).P_mats
    for k in range(0, 101, 10):
        assert np.linalg.eigvalsh(P2[k] - P1[k])[0] >= -1e-8


def test_vp_report(reference_riccati):
    rep = reference_riccati.alpha_norm_report
    w = rep["weighted_VP"]
    assert np.isfinite(rep["sup_weighted_VP"]) and rep["sup_weighted_VP"] > 0
    assert w[-1] <= 0.1 * w.max()
    assert rep["sup_P"] == pytest.approx(rep["P_norm"].max())


def test_trace_integrand_stable_under_doubling(reference, reference_riccati):
    fine = solve_riccati_ode(reference.A, reference_riccati.problem, reference.cost, 0.0, 1.0, 800)
    a, b = trace_term(reference_riccati), trace_term(fine)
    assert abs(a - b) <= 0.01 * abs(b)
    assert np.max(np.abs(fine.trace_integrand[::2] - reference_riccati.trace_integrand)) <= 0.01 * np.abs(
        fine.trace_integrand
    ).max()


def test_trace_term_against_extrapolated_quadrature(reference, reference_riccati):
    """Exact-cell trace integral against Aitken-extrapolated trapezoid sums."""
    sums = []
    for m in (400, 800, 1600):
        sol = solve_riccati_ode(reference.A, reference_riccati.problem, reference.cost, 0.0, 1.0, m)
        sums.append(np.trapezoid(sol.trace_integrand, sol.times))
    s0, s1, s2 = sums
    extrapolated = s2 - (s2 - s1) ** 2 / ((s2 - s1) - (s1 - s0))
    value = trace_term(reference_riccati, reference.bi, 1.0)
    assert value == pytest.approx(extrapolated, rel=1e-6)
    assert trace_term(reference_riccati, reference.bi, 0.5) == pytest.approx(0.5 * value, rel=1e-15)


def test_trace_term_subinterval(small_riccati):
    sol = small_riccati
    whole = trace_term(sol)
    mid = 0.5 * (sol.times[99] + sol.times[100])
    assert trace_term(sol, None, 1.0, 0.0, mid) + trace_term(sol, None, 1.0, mid, 1.0) == pytest.approx(whole, rel=1e-12)
    assert trace_term(sol, None, 1.0, 0.3, 0.3) == 0.0


def test_trace_term_rejects(small_riccati):
    with pytest.raises(ConfigError):
        trace_term(small_riccati, None, 0.3)
    with pytest.raises(ConfigError):
        trace_term(small_riccati, None, 1.0, 0.5, 2.0)


def test_solver_input_errors():
    g, A, bi = tiny_problem()
    cost = CostSpec.identity(A.n)
    with pytest.raises(ConfigError):
        solve_riccati_ode(A, bi, cost, 1.0, 1.0, 100)
    with pytest.raises(ConfigError):
        solve_riccati_ode(A, bi, cost, 0.0, 1.0, 10)
    with pytest.raises(ConfigError):
        solve_riccati_mild(A, bi, cost, 0.0, 1.0, 100, tol=0.0)


def test_mild_nonconvergence_reports_residual():
    g, A, bi = tiny_problem()
    with pytest.raises(SolverError, match="residual"):
        solve_riccati_mild(A, bi, CostSpec.identity(A.n), 0.0, 1.0, 60, max_iter=2)


def test_ode_instability_raises():
    cost = CostSpec(np.array([[1.0]]), np.zeros((1, 1)))
    prob = RiccatiProblem.build(np.array([[60.0]]), np.array([1e-6]), cost)
    with pytest.raises(SolverError, match="smaller steps"):
        solve_riccati_ode(None, prob, cost, 0.0, 1.0, 50)


def test_cost_spec_validation():
    with pytest.raises(ConfigError):
        CostSpec(np.eye(2), np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ConfigError):
        CostSpec(np.eye(2), -np.eye(2))
    with pytest.raises(ConfigError):
        CostSpec(np.eye(2), np.ones((2, 3)))
