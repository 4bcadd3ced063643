import math

import numpy as np
import pytest

from siflab.closed_forms import (
    BarrierSpec,
    RadialSolution,
    SingularPointError,
    aronson,
    barrier_derivatives,
    barrier_inf_laplacian,
    barrier_scaled,
    barrier_value,
    barrier_value_left,
    boundary_for_radius,
    radial_exact,
    radial_ode_residual,
    radius_for_boundary,
    verify_supersolution,
)
from siflab.model import ParameterError, derive_params, max_admissible_delta


def test_radial_exact_examples():
    p = derive_params(0.0, 0.1)
    assert radial_exact(0.0, p) == pytest.approx(p.c_alpha * 0.1 ** (4 / 3), rel=1e-15)
    assert radial_exact(1.0, p, epsilon=0.0) == pytest.approx((81 / 64) ** (1 / 3), rel=1e-14)
    assert radial_exact(0.0, p, epsilon=0.0) == 0.0
    with pytest.raises(ParameterError):
        radial_exact(-1.0, p)


@pytest.mark.parametrize("g", [round(0.1 * k, 1) for k in range(10)])
@pytest.mark.parametrize("eps", [0.0, 1e-3, 1e-1])
def test_radial_ode_identity(g, eps):
    p = derive_params(g, 0.5)
    s = np.geomspace(1e-6, 10.0, 10_000)
    res = radial_ode_residual(s, p, epsilon=eps)
    scale = radial_exact(s, p, epsilon=eps) ** (-g)
    assert np.max(np.abs(res) / scale) <= 1e-10


def test_radial_residual_is_sensitive_to_coefficient():
    p = derive_params(0.0, 0.1)
    s = np.linspace(0.1, 1.0, 10)
    res = radial_ode_residual(s, p, epsilon=0.0, coefficient=1.01 * p.c_alpha)
    # (1.01^3 - 1) ≈ 0.0303 for γ = 0
    assert np.allclose(res, 1.01**3 - 1, rtol=1e-10)


def test_radial_singular_point():
    p = derive_params(0.3, 0.1)
    with pytest.raises(SingularPointError):
        radial_ode_residual(0.0, p, epsilon=0.0)
    assert abs(radial_ode_residual(0.0, p)) < 1e-10


def test_radius_for_boundary():
    p = derive_params(0.0, 0.1)
    assert radius_for_boundary(p.c_alpha, p) == pytest.approx(1.0, rel=1e-15)
    assert radius_for_boundary(2 * p.c_alpha, p) == pytest.approx(2**0.75, rel=1e-14)
    assert radius_for_boundary(2 * p.c_alpha, p) == pytest.approx(1.68179, abs=5e-6)
    for C in (0.3, 1.0, 7.5):
        R = radius_for_boundary(C, p)
        assert boundary_for_radius(R, p, epsilon=0.0) == pytest.approx(C, rel=1e-12)
    with pytest.raises(ParameterError):
        radius_for_boundary(0.0, p)


def test_radial_solution_compatibility():
    p = derive_params(0.5, 0.1)
    sol = RadialSolution(p, 1.0)
    assert sol.boundary_value == pytest.approx(p.c_alpha * 1.1**p.alpha)
    assert sol.minimum == pytest.approx(sol(0.0))
    with pytest.raises(ParameterError):
        RadialSolution(p, 1.0, boundary_value=1.0)


def _spec(g=0.0, eta=2.0, delta=None):
    return BarrierSpec(eta=eta, params=derive_params(g, 0.1), delta_override=delta)


def test_barrier_values():
    b = _spec(0.5, 3.0)
    d, a, eta = b.delta, b.params.alpha, b.eta
    assert barrier_value(0.5 * b.core_radius, b) == d
    assert barrier_value(b.core_radius, b) == pytest.approx(d)
    assert barrier_value(eta, b) == pytest.approx(d * (eta**a + 1), rel=1e-14)
    big = BarrierSpec(eta=50.0, params=b.params)
    assert barrier_value(100.0, big) >= big.delta * 50.0**a
    assert b.A == pytest.approx(d * a * a * eta ** (a - 2))
    assert b.D == pytest.approx(d * (1 - eta**a))
    with pytest.raises(ParameterError):
        BarrierSpec(eta=0.5, params=b.params)


@pytest.mark.parametrize("g", [0.0, 0.5, 0.9])
@pytest.mark.parametrize("eta", [1.0, 2.0, 10.0])
def test_barrier_c1_matching(g, eta):
    b = _spec(g, eta)
    for r0 in (b.core_radius, eta):
        left = barrier_value_left(r0, b)
        right = barrier_value(r0, b)
        assert left == pytest.approx(right, rel=1e-12)
        dl = barrier_derivatives(np.array([r0 * (1 - 1e-9)]), b)[1][0]
        dr = barrier_derivatives(np.array([r0]), b)[1][0]
        assert dl == pytest.approx(dr, rel=1e-7, abs=1e-12)
    # one-sided analytic derivatives at the two breakpoints
    a, d = b.params.alpha, b.delta
    assert barrier_derivatives(np.array([eta]), b)[1][0] == pytest.approx(2 * d * a * eta ** (a - 1), rel=1e-12)


def test_barrier_monotone():
    b = _spec(0.3, 4.0)
    r = np.linspace(0, 40, 40001)
    assert np.all(np.diff(barrier_value(r, b)) >= 0)


def test_barrier_inf_laplacian_branches():
    b = _spec(0.0, 2.0)
    d, a = b.delta, b.params.alpha
    assert barrier_inf_laplacian(0.5 * b.core_radius, b) == 0.0
    assert barrier_inf_laplacian(b.eta, b) == pytest.approx(8 * d**3 * (4 / 3) ** 3 / 3, rel=1e-12)
    b5 = _spec(0.5, 3.0)
    d, a, eta = b5.delta, b5.params.alpha, b5.eta
    r = np.linspace(b5.core_radius, eta * (1 - 1e-12), 1001)
    assert np.max(barrier_inf_laplacian(r, b5)) <= 8 * d**3 * a**4 * eta ** (-a * 0.5) * (1 + 1e-12)


@pytest.mark.parametrize("g", [0.0, 0.5, 0.9])
@pytest.mark.parametrize("eta", [1.0, 2.0, 10.0])
def test_verify_supersolution(g, eta):
    ok = verify_supersolution(_spec(g, eta))
    assert ok.passed and ok.max_violation == 0.0
    bad = verify_supersolution(_spec(g, eta, delta=10 * max_admissible_delta(g)))
    assert not bad.passed and bad.max_violation > 0
    assert _spec(g, eta).core_radius <= bad.location <= eta


def test_verify_supersolution_sample_floor():
    with pytest.raises(ParameterError):
        verify_supersolution(_spec(), n_samples=50)


def test_barrier_scaled():
    p = derive_params(0.5, 0.1)
    r = 0.4
    ea = p.eps_alpha
    assert barrier_scaled(0.5 * p.sigma * r, r, p) == pytest.approx(p.delta * ea)
    at_r = barrier_scaled(r, r, p)
    assert at_r == pytest.approx(p.delta * ea * ((r / p.epsilon) ** p.alpha + 1), rel=1e-12)
    assert at_r >= p.delta * r**p.alpha
    x = np.linspace(0, 2, 101)
    direct = ea * np.asarray(barrier_value(x / p.epsilon, BarrierSpec(eta=r / p.epsilon, params=p)))
    assert np.allclose(barrier_scaled(x, r, p), direct, rtol=1e-12, atol=0)
    eq = barrier_scaled(x, p.epsilon, p)
    assert np.allclose(eq, ea * np.asarray(barrier_value(x / p.epsilon, BarrierSpec(1.0, p))), rtol=1e-12)
    with pytest.raises(ParameterError):
        barrier_scaled(0.1, 0.05, p)


def test_aronson():
    assert aronson(1.0, 1.0) == 0.0
    assert aronson(1.0, 0.0) == 1.0
    assert aronson(8.0, 1.0) == pytest.approx(15.0, rel=1e-14)
    assert aronson(-8.0, -1.0) == aronson(8.0, 1.0)
    assert math.isfinite(aronson(0.0, 0.0))
