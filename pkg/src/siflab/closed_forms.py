"""Exact analytic objects: the radial solution family, the radial barrier
Φ_η and its ε-rescaling, and Aronson's infinity-harmonic function.

All radial functions take the radius ``r = |x|`` and are vectorized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from siflab.model import ParameterError, ProblemParams, max_admissible_delta, penalty_base


class SingularPointError(ValueError):
    """Closed-form derivative requested at the tip of the limiting profile."""


def _radius(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ParameterError("r", "radius must be nonnegative")
    return r


def _ret(a: np.ndarray):
    return a if a.ndim else float(a)


# -- radial family ω_ε(s) = C_α (s + ε)^α --------------------------------


def radial_exact(s, p: ProblemParams, epsilon: float | None = None, coefficient: float | None = None):
    """ω_ε(s) = C_α (s+ε)^α.  ``epsilon=0`` gives the limiting profile C_α s^α."""
    eps = p.epsilon if epsilon is None else epsilon
    c = p.c_alpha if coefficient is None else coefficient
    return _ret(c * (_radius(s) + eps) ** p.alpha)


def radial_derivatives(s, p: ProblemParams, epsilon: float | None = None, coefficient: float | None = None):
    """(ω, ω', ω'') of the radial family in closed form."""
    eps = p.epsilon if epsilon is None else epsilon
    c = p.c_alpha if coefficient is None else coefficient
    t = _radius(s) + eps
    a = p.alpha
    return c * t**a, c * a * t ** (a - 1.0), c * a * (a - 1.0) * t ** (a - 2.0)


def radial_ode_residual(s, p: ProblemParams, epsilon: float | None = None, coefficient: float | None = None):
    """ω''(ω')² - ω^(-γ) for the radial family; zero for the exact coefficient."""
    eps = p.epsilon if epsilon is None else epsilon
    t = _radius(s) + eps
    if np.any(t <= 0):
        raise SingularPointError("radial ODE is singular at s = 0 when epsilon = 0")
    w, w1, w2 = radial_derivatives(s, p, eps, coefficient)
    return _ret(w2 * w1 * w1 - w ** (-p.gamma))


def boundary_for_radius(R: float, p: ProblemParams, epsilon: float | None = None) -> float:
    """Compatible boundary value C_ε = C_α (R+ε)^α."""
    eps = p.epsilon if epsilon is None else epsilon
    return p.c_alpha * (R + eps) ** p.alpha


def radius_for_boundary(C: float, p: ProblemParams) -> float:
    """Radius R = (C/C_α)^(1/α) on which C_α|x|^α attains the value C."""
    if C <= 0:
        raise ParameterError("C", f"boundary value must be positive, got {C}")
    return (C / p.c_alpha) ** (1.0 / p.alpha)


@dataclass(frozen=True)
class RadialSolution:
    params: ProblemParams
    R: float
    boundary_value: float = field(default=math.nan)

    def __post_init__(self):
        if self.R <= 0:
            raise ParameterError("R", f"must be positive, got {self.R}")
        expected = boundary_for_radius(self.R, self.params)
        if math.isnan(self.boundary_value):
            object.__setattr__(self, "boundary_value", expected)
        elif abs(self.boundary_value - expected) > 1e-12 * abs(expected):
            raise ParameterError(
                "boundary_value",
                f"incompatible with R={self.R}: expected C_alpha (R+eps)^alpha = {expected!r}",
            )

    def __call__(self, r):
        return radial_exact(r, self.params)

    @property
    def minimum(self) -> float:
        """inf over B_R, attained at the origin: C_α ε^α."""
        return self.params.c_alpha * self.params.eps_alpha


# -- barrier Φ_η ------------------------------------------------------------


@dataclass(frozen=True)
class BarrierSpec:
    """Radial supersolution Φ_η: flat core, quadratic annulus, power tail.

    ``delta_override`` lets a deliberately inadmissible δ be examined; it is
    only meant for the negative verification runs.
    """

    eta: float
    params: ProblemParams
    delta_override: float | None = None

    def __post_init__(self):
        if not self.eta >= 1.0:
            raise ParameterError("eta", f"must be >= 1, got {self.eta}")
        if self.delta_override is not None and self.delta_override <= 0:
            raise ParameterError("delta", f"must be positive, got {self.delta_override}")

    @property
    def delta(self) -> float:
        return self.params.delta if self.delta_override is None else self.delta_override

    @property
    def admissible(self) -> bool:
        return self.delta <= max_admissible_delta(self.params.gamma)

    @property
    def core_radius(self) -> float:
        return self.params.sigma * self.eta

    @property
    def A(self) -> float:
        return self.delta * self.params.alpha**2 * self.eta ** (self.params.alpha - 2.0)

    @property
    def D(self) -> float:
        return self.delta * (1.0 - self.eta**self.params.alpha)


def barrier_derivatives(r, b: BarrierSpec):
    """(Φ, Φ', Φ'') per branch.  Breakpoints take the outer (right) branch."""
    r = _radius(r)
    a, d, eta = b.params.alpha, b.delta, b.eta
    r0 = b.core_radius
    phi = np.full_like(r, d)
    d1 = np.zeros_like(r)
    d2 = np.zeros_like(r)
    mid = (r >= r0) & (r < eta)
    q = r[mid] - r0
    phi[mid] = d * (a * a * eta ** (a - 2.0) * q * q + 1.0)
    d1[mid] = 2.0 * d * a * a * eta ** (a - 2.0) * q
    d2[mid] = 2.0 * d * a * a * eta ** (a - 2.0)
    out = r >= eta
    ro = r[out]
    # continuity at r = η forces the constant -η^α here (not -η²)
    phi[out] = d * (2.0 * ro**a - eta**a + 1.0)
    d1[out] = 2.0 * d * a * ro ** (a - 1.0)
    d2[out] = 2.0 * d * a * (a - 1.0) * ro ** (a - 2.0)
    return phi, d1, d2


def barrier_value(r, b: BarrierSpec):
    return _ret(barrier_derivatives(r, b)[0])


def barrier_value_left(r, b: BarrierSpec):
    """Branch value approached from the left of each breakpoint."""
    r = _radius(r)
    a, d, eta = b.params.alpha, b.delta, b.eta
    q = np.clip(r - b.core_radius, 0.0, None)
    mid = d * (a * a * eta ** (a - 2.0) * q * q + 1.0)
    inner = np.where(r <= b.core_radius, d, mid)
    outer = d * (2.0 * r**a - eta**a + 1.0)
    return _ret(np.where(r <= eta, inner, outer))


def barrier_inf_laplacian(r, b: BarrierSpec):
    """Φ''(Φ')², the infinity Laplacian of the radial barrier."""
    _, d1, d2 = barrier_derivatives(r, b)
    return _ret(d2 * d1 * d1)


def _barrier_rhs(phi: np.ndarray, b: BarrierSpec) -> np.ndarray:
    p = b.params
    return penalty_base(phi, b.delta, p.ramp) * phi ** (-p.gamma)


@dataclass
class VerificationReport:
    name: str
    passed: bool
    max_violation: float
    location: float
    n_samples: int
    slack: float
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "check": self.name,
            "pass": self.passed,
            "max_violation": self.max_violation,
            "location": self.location,
            "n_samples": self.n_samples,
            "slack": self.slack,
            **self.details,
        }


def verify_supersolution(b: BarrierSpec, n_samples: int = 4096, slack: float = 1e-12) -> VerificationReport:
    """Sample Δ∞Φ_η <= B(Φ_η)Φ_η^(-γ) on a log-uniform radius mesh over [0, 10η].

    Breakpoints ση and η are sampled from both sides.  A violation marks the
    report as failed; no exception is raised.
    """
    if n_samples < 100:
        raise ParameterError("n_samples", f"must be >= 100, got {n_samples}")
    eta = b.eta
    r = np.concatenate(([0.0], np.geomspace(1e-6 * eta, 10.0 * eta, n_samples - 1)))
    r = np.sort(np.concatenate((r, [b.core_radius, eta])))
    lhs = barrier_inf_laplacian(r, b)
    rhs_v = _barrier_rhs(barrier_derivatives(r, b)[0], b)
    # left-hand limits at the two breakpoints
    brk = np.array([b.core_radius, eta])
    a, d = b.params.alpha, b.delta
    lhs_left = np.array([0.0, 8.0 * d**3 * a**6 * eta ** (3.0 * (a - 2.0)) * (eta - b.core_radius) ** 2])
    rhs_left = _barrier_rhs(np.asarray(barrier_value_left(brk, b)), b)
    all_r = np.concatenate((r, brk))
    viol = np.concatenate((lhs - rhs_v, lhs_left - rhs_left))
    k = int(np.argmax(viol))
    worst = float(max(viol[k], 0.0))
    return VerificationReport(
        name="barrier_supersolution",
        passed=bool(worst <= slack),
        max_violation=worst,
        location=float(all_r[k]),
        n_samples=int(all_r.size),
        slack=slack,
        details={"eta": eta, "delta": d, "gamma": b.params.gamma, "max_lhs_minus_rhs": float(viol[k])},
    )


def barrier_scaled(x_norm, r: float, p: ProblemParams, delta: float | None = None):
    """Φ_ε(x) = ε^α Φ_{r/ε}(x/ε); requires r >= ε."""
    if p.is_limit:
        raise ParameterError("epsilon", "scaled barrier needs epsilon > 0")
    if r < p.epsilon:
        raise ParameterError("r", f"must satisfy r >= epsilon={p.epsilon}, got {r}")
    b = BarrierSpec(eta=r / p.epsilon, params=p, delta_override=delta)
    return _ret(p.eps_alpha * np.asarray(barrier_value(_radius(x_norm) / p.epsilon, b)))


# -- Aronson ----------------------------------------------------------------


def aronson(x, y):
    """|x|^(4/3) - |y|^(4/3), an infinity-harmonic function off the axes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return _ret(np.abs(x) ** (4.0 / 3.0) - np.abs(y) ** (4.0 / 3.0))
