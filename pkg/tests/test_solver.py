import io
import json

import numpy as np
import pytest

from siflab.closed_forms import radial_exact
from siflab.discrete_operator import Field, apply_operator, residual_field
from siflab.model import ParameterError, derive_params, rhs
from siflab.solver import (
    BoundarySpec,
    SolveOptions,
    SolverError,
    jsonl_sink,
    make_problem,
    make_subsolution,
    make_supersolution,
    minimality_probe,
    solve_limit,
    solve_penalized,
)


@pytest.fixture(scope="module")
def radial_1d():
    p = derive_params(0.5, 0.1)
    prob = make_problem(p, 1, 1.0, 0.01)
    return prob, solve_penalized(prob)


def test_boundary_spec_validation():
    with pytest.raises(ParameterError):
        BoundarySpec(kind="neumann")
    with pytest.raises(ParameterError):
        BoundarySpec(kind="constant", value=-1.0)
    with pytest.raises(ParameterError):
        SolveOptions(tol=0.0)
    with pytest.raises(ParameterError):
        SolveOptions(method="multigrid")


def test_radial_compat_data(radial_1d):
    prob, _ = radial_1d
    p = prob.params
    g = prob.grid
    assert prob.dirichlet_mask[0] and prob.dirichlet_mask[-1]
    assert prob.boundary_data[0] == pytest.approx(p.c_alpha * 1.1**p.alpha, rel=1e-14)
    c = g.center_index()
    assert prob.dirichlet_mask[c] and prob.boundary_data[c] == pytest.approx(p.c_alpha * p.eps_alpha)


def test_solution_matches_exact_radial(radial_1d):
    prob, res = radial_1d
    p = prob.params
    assert res.converged and res.start in ("subsolution", "supersolution")
    exact = radial_exact(prob.grid.radius, p)
    assert np.abs(res.field.values - exact).max() <= 5e-3
    assert np.all(res.field.values >= 0)
    assert np.array_equal(res.field.values[prob.dirichlet_mask], prob.boundary_data[prob.dirichlet_mask])
    r = residual_field(res.field, p, prob.dirs, fixed=prob.dirichlet_mask).values
    assert np.abs(r).max() <= 1e-6
    assert res.field.values.max() <= prob.boundary_max * (1 + 1e-12)


def test_solution_symmetric(radial_1d):
    _, res = radial_1d
    v = res.field.values
    assert np.allclose(v, v[::-1], rtol=0, atol=1e-12)


def test_supersolution_is_infinity_harmonic_and_above():
    p = derive_params(0.0, 0.1)
    prob = make_problem(p, 1, 1.0, 0.02)
    sup = make_supersolution(prob)
    L = apply_operator(sup, prob.dirs).values
    assert np.abs(L[~prob.dirichlet_mask]).max() <= 1e-8
    sol = solve_penalized(prob).field
    assert np.all(sup.values >= sol.values - 1e-10)


def test_subsolution_below_solution():
    p = derive_params(0.5, 0.1)
    prob = make_problem(p, 1, 1.0, 0.02)
    sub = make_subsolution(prob)
    sol = solve_penalized(prob).field
    assert np.all(sub.values <= sol.values + 1e-10)
    with pytest.raises(ParameterError):
        make_subsolution(prob.limit())


def test_explicit_agrees_with_newton():
    p = derive_params(0.3, 0.2)
    prob = make_problem(p, 1, 1.0, 0.05)
    a = solve_penalized(prob).field.values
    b = solve_penalized(prob, SolveOptions(method="explicit", tol=1e-12)).field.values
    assert np.abs(a - b).max() <= 1e-6


def test_minimality_probe_ordered():
    p = derive_params(0.0, 0.1)
    prob = make_problem(p, 1, 1.0, 0.02)
    probe = minimality_probe(prob)
    assert probe["ordered"] and probe["min_gap"] >= -probe["tol"]


def test_constant_boundary_and_pinned_zero_2d():
    p = derive_params(0.0, 0.1)
    bc = BoundarySpec(kind="constant", value=1.0, pin_zero=(((0.0, 0.0), 0.3),))
    prob = make_problem(p, 2, 1.0, 0.1, boundary=bc)
    res = solve_penalized(prob)
    v = res.field.values
    assert np.all(v[prob.grid.radius <= 0.3] == 0.0)
    assert np.all((v >= 0) & (v <= 1.0 + 1e-12))
    assert np.allclose(v, v.T, atol=1e-10) and np.allclose(v, v[::-1], atol=1e-10)


def test_tabulated_boundary_nearest_value():
    p = derive_params(0.0, 0.1)
    bc = BoundarySpec(kind="tabulated", table=(np.array([[-1.0], [1.0]]), np.array([0.5, 2.0])))
    prob = make_problem(p, 1, 1.0, 0.05, boundary=bc)
    assert prob.boundary_data[0] == 0.5 and prob.boundary_data[-1] == 2.0
    assert not prob.dirichlet_mask[prob.grid.center_index()]
    v = solve_penalized(prob).field.values
    assert v[0] == 0.5 and v[-1] == 2.0
    assert np.all((v >= 0) & (v <= 2.0))
    # interior sits on the flat state at the cutoff δε^α/2 where the source vanishes
    p_cut = 0.5 * p.delta * p.eps_alpha
    assert np.allclose(v[3:-3], p_cut, rtol=1e-8)
    bad = BoundarySpec(kind="tabulated", table=(np.zeros((2, 2)), np.ones(2)))
    with pytest.raises(ParameterError):
        make_problem(p, 1, 1.0, 0.05, boundary=bad)


def test_disk_solution_symmetric():
    p = derive_params(0.5, 0.1)
    prob = make_problem(p, 2, 1.0, 0.05, geometry="disk")
    v = solve_penalized(prob).field.values
    assert np.allclose(v, v.T, atol=1e-12) and np.allclose(v, v[::-1, :], atol=1e-12)
    exact = radial_exact(prob.grid.radius, p)
    inside = prob.grid.radius < 1.0
    assert np.abs(v - exact)[inside].max() <= 0.05


def test_solver_error_carries_trace():
    p = derive_params(0.0, 0.1)
    prob = make_problem(p, 1, 1.0, 0.01)
    with pytest.raises(SolverError) as ei:
        solve_penalized(prob, SolveOptions(method="explicit", max_iters=3))
    assert "history" in ei.value.trace


def test_progress_sink_records():
    p = derive_params(0.0, 0.1)
    prob = make_problem(p, 1, 1.0, 0.05)
    buf = io.StringIO()
    solve_penalized(prob, SolveOptions(log_every=1), sink=jsonl_sink(buf))
    recs = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert recs and {"stage", "iteration", "update_sup", "residual_sup"} <= set(recs[0])


def test_solve_limit_trace():
    p = derive_params(0.0, 0.1)
    prob = make_problem(p, 1, 1.0, 0.01)
    eps = [0.1 * 2.0**-k for k in range(4)]
    f, trace, results = solve_limit(prob, eps)
    assert trace.include_limit and trace.epsilons[-1] == 0.0
    assert len(results) == 5 and len(trace.differences) == 4
    assert trace.geometric
    assert all(b < a for a, b in zip(trace.differences, trace.differences[1:]))
    # the limit is close to the infinity-ground-state profile C_α|x|^α
    exact0 = radial_exact(prob.grid.radius, p, epsilon=0.0)
    assert np.abs(f.values - exact0).max() <= 0.05
    assert np.all(f.values >= 0)
    with pytest.raises(ParameterError):
        solve_limit(prob, [0.1, 0.2])
    with pytest.raises(ParameterError):
        solve_limit(prob, [])


def test_rhs_vanishes_on_limit_zero_set():
    p = derive_params(0.0, 0.1)
    prob = make_problem(p, 1, 1.0, 0.02)
    f, _, _ = solve_limit(prob, [0.1, 0.05])
    pl = p.limit()
    zero = f.values == 0.0
    assert np.all(rhs(f.values[zero], pl) == 0.0)
