import io
import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from holobeam.subsolvers import (
    Infeasible,
    MaxIterations,
    MaxMinQpProblem,
    NoBracket,
    bisection_tau,
    solve_maxmin_qp,
)

seeds = st.integers(0, 2**32 - 1)


def random_problem(rng, q=2, n=4, box=True, budget=None):
    """Concave quadratics whose unconstrained maximizers lie partly outside the feasible set."""
    curv = []
    for _ in range(q):
        A = rng.standard_normal((n, n))
        curv.append(A @ A.T / n + 0.05 * np.eye(n))
    lin = rng.standard_normal((q, n))
    R = rng.standard_normal((n, n))
    R = R @ R.T / n + 0.1 * np.eye(n)
    return MaxMinQpProblem(
        constants=rng.uniform(-1, 1, q),
        linears=lin,
        curvatures=np.array(curv),
        power=R,
        budget=budget if budget is not None else rng.uniform(0.2, 2.0),
        lower=np.zeros(n) if box else None,
        upper=rng.uniform(0.5, 1.5, n) if box else None,
    )


def grid_values(p, axes):
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    quad = np.einsum("si,jik,sk->sj", mesh, p.curvatures, mesh)
    vals = (p.constants + 2.0 * mesh @ p.linears.T - quad).min(axis=1)
    feasible = np.einsum("si,ik,sk->s", mesh, p.power, mesh) <= p.budget
    vals[~feasible] = -np.inf
    return mesh, vals


def polish(p, starts):
    """Local epigraph refinement of grid points with SLSQP."""
    n = p.n
    best = -np.inf
    cons = [
        {"type": "ineq", "fun": lambda v: p.values(v[:n]) - v[n]},
        {"type": "ineq", "fun": lambda v: p.budget - v[:n] @ p.power @ v[:n]},
    ]
    bounds = list(zip(p.lower, p.upper)) + [(None, None)]
    for z in starts:
        res = minimize(lambda v: -v[n], np.append(z, p.objective(z)), method="SLSQP", bounds=bounds,
                       constraints=cons, options={"ftol": 1e-12, "maxiter": 500})
        z = np.clip(res.x[:n], p.lower, p.upper)
        if p.violation(z) <= 1e-9:
            best = max(best, p.objective(z))
    return best


class TestExamples:
    def test_unconstrained_stationary_point(self):
        p = MaxMinQpProblem([0.5], [[1.0, 0.0, 0.0]], [np.eye(3)], np.eye(3), 1e6)
        rep = solve_maxmin_qp(p)
        np.testing.assert_allclose(rep.x, [1, 0, 0], atol=1e-6)
        assert rep.objective == pytest.approx(1.5, abs=1e-8)

    def test_clipped_scalar(self):
        # -(x - 2)^2 = -4 + 2*2x - x^2
        p = MaxMinQpProblem([-4.0], [[2.0]], [[[1.0]]], [[1.0]], 100.0, lower=[0.0], upper=[1.0])
        rep = solve_maxmin_qp(p)
        assert rep.x[0] == pytest.approx(1.0, abs=1e-6)
        assert rep.objective == pytest.approx(-1.0, abs=1e-6)

    def test_two_variable_dense_grid(self, rng):
        p = random_problem(rng, q=2, n=2)
        axes = [np.arange(0.0, hi + 1e-12, 1e-3) for hi in p.upper]
        _, vals = grid_values(p, axes)
        rep = solve_maxmin_qp(p)
        assert abs(rep.objective - vals.max()) <= 2e-3
        assert rep.objective >= vals.max() - 1e-9

    @pytest.mark.parametrize("seed", range(5))
    def test_four_variable_grid_oracle(self, seed):
        p = random_problem(np.random.default_rng(seed), q=2, n=4)
        axes = [np.linspace(0.0, hi, 21) for hi in p.upper]
        mesh, vals = grid_values(p, axes)
        top = mesh[np.argsort(vals)[-10:]]
        oracle = max(vals.max(), polish(p, top))
        rep = solve_maxmin_qp(p)
        assert abs(rep.objective - oracle) <= 2e-3
        assert rep.objective >= oracle - 1e-7


class TestProperties:
    @settings(max_examples=30, deadline=None)
    @given(seeds, st.integers(1, 4), st.integers(1, 8), st.booleans())
    def test_certified_feasible_solution(self, seed, q, n, box):
        p = random_problem(np.random.default_rng(seed), q=q, n=n, box=box)
        rep = solve_maxmin_qp(p, tol=1e-8)
        assert rep.converged
        assert rep.max_violation <= 1e-6
        assert rep.kkt_residual <= 1e-8 * max(1.0, abs(rep.objective))
        assert np.all(p.values(rep.x) >= rep.objective - 1e-8)

    @settings(max_examples=30, deadline=None)
    @given(seeds)
    def test_warm_start_never_worse(self, seed):
        rng = np.random.default_rng(seed)
        p = random_problem(rng, q=3, n=5)
        x0 = rng.uniform(0, 1, 5) * p.upper
        pw = x0 @ p.power @ x0
        if pw > p.budget:
            x0 *= np.sqrt(p.budget / pw)
        rep = solve_maxmin_qp(p, x0=x0)
        assert rep.objective >= p.objective(x0) - 1e-9

    def test_cold_and_warm_agree(self, rng):
        p = random_problem(rng, q=3, n=6)
        a = solve_maxmin_qp(p)
        b = solve_maxmin_qp(p, x0=a.x)
        assert b.objective == pytest.approx(a.objective, abs=1e-7)


class TestFailures:
    def test_iteration_cap_carries_report(self, rng):
        p = random_problem(rng, q=3, n=6)
        with pytest.raises(MaxIterations) as err:
            solve_maxmin_qp(p, max_iter=2)
        rep = err.value.report
        assert rep is not None and not rep.converged
        assert rep.x.shape == (6,)
        assert rep.max_violation <= 1e-6

    def test_nonpositive_budget(self):
        with pytest.raises(Infeasible):
            MaxMinQpProblem([0.0], [[1.0]], [[[1.0]]], [[1.0]], 0.0)

    def test_box_excluding_origin(self):
        p = MaxMinQpProblem([0.0], [[1.0]], [[[1.0]]], [[1.0]], 1.0, lower=[0.5], upper=[1.0])
        with pytest.raises(Infeasible):
            solve_maxmin_qp(p)

    def test_trace_lines(self, rng):
        buf = io.StringIO()
        solve_maxmin_qp(random_problem(rng), trace=buf)
        lines = [json.loads(s) for s in buf.getvalue().splitlines()]
        assert lines and {"iter", "kappa", "decrement", "step", "t"} <= set(lines[0])
        assert all(a["iter"] < b["iter"] for a, b in itertools.pairwise(lines))


class TestBisection:
    def test_rational_root(self):
        assert bisection_tau(lambda t: 4.0 / (1.0 + t), 1.0) == pytest.approx(3.0, rel=1e-9)

    def test_exponential_root(self):
        assert bisection_tau(lambda t: np.exp(-t), np.exp(-1.0)) == pytest.approx(1.0, rel=1e-9)

    def test_no_bracket(self):
        with pytest.raises(NoBracket):
            bisection_tau(lambda t: 1.0 / (1.0 + t), 1.0)

    def test_iteration_budget(self):
        calls = []

        def g(t):
            calls.append(t)
            return np.exp(-t)

        tau = bisection_tau(g, 0.3, tol=1e-10)
        assert abs(np.exp(-tau) - 0.3) <= 1e-10 * 0.3
        # g(0), g(1), g(2) find the bracket; the rest are halvings
        assert 10 < len(calls) - 3 <= 60

    def test_cap(self):
        with pytest.raises(MaxIterations):
            bisection_tau(lambda t: np.exp(-t), 0.3, tol=1e-15, max_iter=5)

    @settings(max_examples=50, deadline=None)
    @given(seeds)
    def test_power_residual(self, seed):
        # power of a diagonalized regularized solve, the form every closed form produces
        rng = np.random.default_rng(seed)
        lam = rng.uniform(0.01, 10.0, 6)
        u = rng.standard_normal(6)

        def g(t):
            return float(np.sum(lam * (u / (1.0 + t * lam)) ** 2))

        P = 0.3 * g(0.0)
        tau = bisection_tau(g, P, tol=1e-10)
        assert abs(g(tau) - P) <= 1e-8 * P
