"""Problem parameters, exponent arithmetic and the penalization B, B_ε."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

RAMPS = ("linear", "smoothstep")


class ParameterError(ValueError):
    """A parameter lies outside its admissible domain.

    ``field`` names the offending parameter.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def growth_exponent(gamma: float) -> float:
    return 4.0 / (3.0 + gamma)


def max_admissible_delta(gamma: float) -> float:
    """Largest penalty threshold for which the radial barrier is a supersolution.

    The middle-annulus requirement ``8 δ³ α⁴ <= (2δ)^(-γ)`` binds (the outer
    one carries ``α - 1 < α``) and solves to ``δ = α^(-α) / 2``.
    """
    _check_gamma(gamma)
    alpha = growth_exponent(gamma)
    return 0.5 * alpha ** (-alpha)


def _check_gamma(gamma: float) -> None:
    if not (isinstance(gamma, (int, float)) and math.isfinite(gamma)):
        raise ParameterError("gamma", f"must be a finite real, got {gamma!r}")
    if not 0.0 <= gamma < 1.0:
        raise ParameterError("gamma", f"must satisfy 0 <= gamma < 1, got {gamma}")


@dataclass(frozen=True)
class ProblemParams:
    """Single source of truth for the constants of one penalized problem.

    Build with :func:`derive_params`; ``epsilon == 0`` is reserved for the
    limiting problem and is only produced by :meth:`limit`.
    """

    gamma: float
    epsilon: float
    delta: float
    alpha: float
    sigma: float
    c_alpha: float
    ramp: str = "linear"

    def __post_init__(self):
        _check_gamma(self.gamma)
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0.0):
            raise ParameterError("epsilon", f"must be >= 0, got {self.epsilon}")
        dmax = max_admissible_delta(self.gamma)
        if not 0.0 < self.delta <= dmax:
            raise ParameterError(
                "delta", f"must lie in (0, {dmax!r}] for gamma={self.gamma}, got {self.delta}"
            )
        if self.ramp not in RAMPS:
            raise ParameterError("ramp", f"must be one of {RAMPS}, got {self.ramp!r}")

    @property
    def is_limit(self) -> bool:
        return self.epsilon == 0.0

    @property
    def eps_alpha(self) -> float:
        """ε^α, the natural value scale of the penalization."""
        return self.epsilon ** self.alpha

    @property
    def cutoff(self) -> float:
        """δε^α/2: below this level the right-hand side vanishes identically."""
        return 0.5 * self.delta * self.eps_alpha

    def with_epsilon(self, epsilon: float) -> "ProblemParams":
        if epsilon <= 0.0:
            raise ParameterError("epsilon", f"must be > 0, got {epsilon}")
        return replace(self, epsilon=float(epsilon))

    def limit(self) -> "ProblemParams":
        """Same constants with ε = 0 (the unpenalized free-boundary problem)."""
        return replace(self, epsilon=0.0)

    def as_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "alpha": self.alpha,
            "sigma": self.sigma,
            "c_alpha": self.c_alpha,
            "ramp": self.ramp,
        }


def derive_params(
    gamma: float, epsilon: float, delta: float | None = None, ramp: str = "linear"
) -> ProblemParams:
    """Derive α, σ, C_α from γ and fill in the default δ.

    >>> p = derive_params(0.0, 0.1)
    >>> p.alpha, p.sigma
    (1.3333333333333333, 0.25)
    """
    _check_gamma(gamma)
    if not (isinstance(epsilon, (int, float)) and math.isfinite(epsilon) and epsilon > 0):
        raise ParameterError("epsilon", f"must be a positive real, got {epsilon!r}")
    dmax = max_admissible_delta(gamma)
    if delta is None:
        delta = 0.5 * dmax
    elif not 0.0 < delta <= dmax:
        raise ParameterError(
            "delta", f"must lie in (0, max_admissible_delta={dmax!r}], got {delta}"
        )
    gamma = float(gamma)
    alpha = 4.0 / (3.0 + gamma)
    sigma = (1.0 - gamma) / 4.0
    c_alpha = (1.0 / (alpha**3 * (alpha - 1.0))) ** (1.0 / (3.0 + gamma))
    return ProblemParams(
        gamma=gamma,
        epsilon=float(epsilon),
        delta=float(delta),
        alpha=alpha,
        sigma=sigma,
        c_alpha=c_alpha,
        ramp=ramp,
    )


def penalty_base(s, delta: float, ramp: str = "linear"):
    """Lipschitz cutoff B: 0 for s <= δ/2, 1 for s >= δ, a ramp in between."""
    if delta <= 0:
        raise ParameterError("delta", f"must be positive, got {delta}")
    t = np.clip((np.asarray(s, dtype=float) - 0.5 * delta) / (0.5 * delta), 0.0, 1.0)
    if ramp == "linear":
        out = t
    elif ramp == "smoothstep":
        out = t * t * (3.0 - 2.0 * t)
    else:
        raise ParameterError("ramp", f"must be one of {RAMPS}, got {ramp!r}")
    return out if out.ndim else float(out)


def penalty_lipschitz(delta: float, ramp: str = "linear") -> float:
    return (2.0 if ramp == "linear" else 3.0) / delta


def penalty_eps(s, p: ProblemParams):
    """B_ε(s) = B(s/ε^α); the indicator of s > 0 when ε = 0."""
    if p.is_limit:
        out = (np.asarray(s, dtype=float) > 0).astype(float)
        return out if out.ndim else float(out)
    return penalty_base(np.asarray(s, dtype=float) / p.eps_alpha, p.delta, p.ramp)


def rhs(s, p: ProblemParams):
    """Right-hand side B_ε(s) s^(-γ), hard-zeroed at or below δε^α/2."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or np.any(np.isnan(s)):
        raise ParameterError("s", "right-hand side is only defined for s >= 0")
    live = s > p.cutoff
    out = np.zeros_like(s)
    sl = s[live]
    out[live] = penalty_eps(sl, p) * sl ** (-p.gamma)
    return out if out.ndim else float(out)


def rhs_derivative(s, p: ProblemParams):
    """d/ds of :func:`rhs` (one-sided choice at the ramp corners)."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    live = s > p.cutoff
    sl = s[live]
    b = penalty_eps(sl, p)
    db = np.zeros_like(sl)
    if not p.is_limit:
        a = p.delta * p.eps_alpha
        ramp = sl < a
        t = (sl[ramp] - 0.5 * a) / (0.5 * a)
        if p.ramp == "linear":
            db[ramp] = 2.0 / a
        else:
            db[ramp] = 6.0 * t * (1.0 - t) * 2.0 / a
    out[live] = db * sl ** (-p.gamma) - p.gamma * b * sl ** (-p.gamma - 1.0)
    return out


def rhs_lipschitz(p: ProblemParams) -> float:
    """A global Lipschitz constant of :func:`rhs` on [0, ∞) (ε > 0 only)."""
    if p.is_limit:
        return math.inf
    low = p.cutoff
    return penalty_lipschitz(p.delta * p.eps_alpha, p.ramp) * low ** (-p.gamma) + (
        p.gamma * low ** (-p.gamma - 1.0)
    )


def rhs_sup(p: ProblemParams) -> float:
    """sup over s >= 0 of :func:`rhs`."""
    if p.is_limit:
        return math.inf
    a = p.delta * p.eps_alpha
    top = a ** (-p.gamma)
    if p.ramp == "linear":
        # B s^-γ is increasing on the linear ramp, so the sup sits at s = δε^α
        return top
    s = np.linspace(0.5 * a, a, 4097)
    return max(top, float(np.max(rhs(s, p))))
