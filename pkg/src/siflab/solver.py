"""Discrete minimal solutions of the penalized problem and the ε → 0 limit.

The clamped pseudo-time iteration ``u <- max(u + τ (L_h u - f(u)), 0)`` has
fixed points characterised by the complementarity system

    u >= 0,   f(u) - L_h u >= 0,   u · (f(u) - L_h u) = 0,

i.e. ``min(u, f(u) - L_h u) = 0`` at free nodes.  Two routes reach it:

* ``method="explicit"``: the damped Jacobi iteration itself, with a
  node-local stable step.  Cheap per sweep but needs O(h^-2) sweeps.
* ``method="newton"`` (default): semismooth Newton on the min-function with
  the extremal directions frozen per step and a backtracking line search.

Both start from the discrete subsolution, which is itself reached from the
infinity-harmonic supersolution.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from siflab.closed_forms import radial_exact
from siflab.discrete_operator import (
    DirectionSet,
    Field,
    Grid,
    Stencil,
    build_stencil,
    direction_set,
    evaluate,
    make_grid,
)
from siflab.model import ParameterError, ProblemParams, rhs, rhs_derivative, rhs_lipschitz, rhs_sup

logger = logging.getLogger(__name__)

BOUNDARY_KINDS = ("radial_compat", "constant", "tabulated")
METHODS = ("newton", "explicit")
_KEEP = 0.1


class SolverError(RuntimeError):
    """Non-convergence or a non-finite iterate; ``trace`` holds the diagnostics."""

    def __init__(self, message: str, trace: dict | None = None):
        super().__init__(message)
        self.trace = trace or {}


@dataclass(frozen=True)
class BoundarySpec:
    """Dirichlet data φ_ε.

    ``radial_compat`` samples ω_ε(|x|) on the boundary carriers and pins the
    origin to ω_ε(0) = C_α ε^α: ω_ε has a conical tip there and solves the
    equation only on the punctured ball.  ``pin_zero`` adds disks
    ``(center, radius)`` held at 0.
    """

    kind: str = "radial_compat"
    value: float = 0.0
    table: tuple | None = None  # (points (N, dim), values (N,))
    pin_zero: tuple = ()
    pin_origin: bool | None = None

    def __post_init__(self):
        if self.kind not in BOUNDARY_KINDS:
            raise ParameterError("boundary", f"kind must be one of {BOUNDARY_KINDS}, got {self.kind!r}")
        if self.kind == "constant" and not self.value >= 0:
            raise ParameterError("boundary.value", f"boundary data must be >= 0, got {self.value}")
        if self.kind == "tabulated" and self.table is None:
            raise ParameterError("boundary.path", "tabulated boundary needs a table")

    @property
    def pins_origin(self) -> bool:
        return self.kind == "radial_compat" if self.pin_origin is None else self.pin_origin

    def assemble(self, grid: Grid, p: ProblemParams) -> tuple[np.ndarray, np.ndarray]:
        """(dirichlet mask, data array) over the whole grid."""
        mask = grid.boundary_mask.copy()
        data = np.zeros(grid.shape)
        if self.kind == "radial_compat":
            data[mask] = np.asarray(radial_exact(grid.radius[mask], p))
        elif self.kind == "constant":
            data[mask] = self.value
        else:
            pts, vals = (np.asarray(a, dtype=float) for a in self.table)
            pts = pts.reshape(len(vals), -1)
            if pts.shape[1] != grid.dim:
                raise ParameterError("boundary.path", "table dimension does not match the grid")
            where = np.argwhere(mask)
            nodes = grid.points()[np.ravel_multi_index(where.T, grid.shape)]
            d2 = ((nodes[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
            data[mask] = vals[np.argmin(d2, axis=1)]
        if self.pins_origin:
            c = grid.center_index()
            if abs(grid.radius[c]) > 1e-12:
                raise ParameterError("boundary", "origin is not a grid node; cannot pin it")
            mask[c] = True
            data[c] = float(radial_exact(0.0, p))
        for center, radius in self.pin_zero:
            off = sum((x - c0) ** 2 for x, c0 in zip(grid.coords, np.atleast_1d(center)))
            disk = np.sqrt(off) <= radius + 1e-12
            mask |= disk
            data[disk] = 0.0
        if np.any(data[mask] < 0) or not np.all(np.isfinite(data[mask])):
            raise ParameterError("boundary", "boundary data must be finite and >= 0")
        return mask, data


@dataclass(frozen=True, eq=False)
class PenalizedProblem:
    params: ProblemParams
    grid: Grid
    boundary: BoundarySpec
    dirs: DirectionSet

    def __post_init__(self):
        if self.dirs.reach > self.grid.reach:
            raise ParameterError("grid", "grid boundary band is thinner than the stencil reach")
        mask, data = self.boundary.assemble(self.grid, self.params)
        object.__setattr__(self, "dirichlet_mask", mask)
        object.__setattr__(self, "boundary_data", data)

    @property
    def free_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.dirichlet_mask.ravel())

    @property
    def boundary_max(self) -> float:
        return float(self.boundary_data[self.dirichlet_mask].max())

    def with_params(self, p: ProblemParams) -> "PenalizedProblem":
        return PenalizedProblem(p, self.grid, self.boundary, self.dirs)

    def with_epsilon(self, eps: float) -> "PenalizedProblem":
        return self.with_params(self.params.with_epsilon(eps))

    def limit(self) -> "PenalizedProblem":
        return self.with_params(self.params.limit())

    def stencil(self) -> Stencil:
        return build_stencil(self.grid, self.dirs, self.free_nodes)

    def apply_boundary(self, values: np.ndarray) -> np.ndarray:
        u = np.array(values, dtype=float).reshape(self.grid.shape)
        u[self.dirichlet_mask] = self.boundary_data[self.dirichlet_mask]
        return u


def make_problem(
    params: ProblemParams,
    dim: int = 1,
    R: float = 1.0,
    h: float = 0.01,
    geometry: str = "box",
    boundary: BoundarySpec | None = None,
    ring: int = 8,
) -> PenalizedProblem:
    dirs = direction_set(dim, ring)
    grid = make_grid(dim, R, h, geometry, reach=dirs.reach)
    return PenalizedProblem(params, grid, boundary or BoundarySpec(), dirs)


@dataclass(frozen=True)
class SolveOptions:
    tol: float = 1e-10
    max_iters: int = 10**6
    damping_safety: float = 0.5
    log_every: int = 0
    method: str = "newton"
    newton_max_iters: int = 200
    obstacle: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ParameterError("tol", f"must be positive, got {self.tol}")
        if not 0 < self.damping_safety <= 1:
            raise ParameterError("damping_safety", f"must lie in (0, 1], got {self.damping_safety}")
        if self.method not in METHODS:
            raise ParameterError("method", f"must be one of {METHODS}, got {self.method!r}")
        if self.max_iters < 1 or self.newton_max_iters < 1:
            raise ParameterError("max_iters", "must be positive")


@dataclass
class SolveResult:
    field: Field
    iterations: int
    final_update_sup: float
    residual_sup: float
    converged: bool
    contact_nodes: int = 0
    monotone_violations: int = 0
    history: list = field(default_factory=list)
    start: str = "given"

    def summary(self) -> dict:
        return {
            "start": self.start,
            "iterations": self.iterations,
            "final_update_sup": self.final_update_sup,
            "residual_sup": self.residual_sup,
            "converged": self.converged,
            "contact_nodes": self.contact_nodes,
        }


Sink = Callable[[dict], None]


def jsonl_sink(stream) -> Sink:
    """Progress sink writing one JSON record per line."""

    def emit(rec: dict) -> None:
        stream.write(json.dumps(rec, sort_keys=True) + "\n")

    return emit


# -- residual maps ----------------------------------------------------------


class _Source:
    """Right-hand side as a function of the free-node values."""

    def __init__(self, p: ProblemParams | None, constant: float | None = None):
        self.p = p
        self.constant = constant

    def __call__(self, u):
        if self.constant is not None:
            return np.full_like(u, self.constant)
        return rhs(np.maximum(u, 0.0), self.p)

    def derivative(self, u):
        if self.constant is not None:
            return np.zeros_like(u)
        return rhs_derivative(np.maximum(u, 0.0), self.p)

    def lipschitz(self) -> float:
        return 0.0 if self.constant is not None else rhs_lipschitz(self.p)


def _operator_jacobian(st: Stencil, ev, n: int, normalized: bool) -> sp.csr_matrix:
    """d(L_h u)/du at the stencil nodes (rows) for the frozen extremal directions.

    ``normalized`` differentiates ``D+ - D-`` instead (the infinity-harmonic
    equation in its normalized form).
    """
    a, b = ev.d_plus, ev.d_minus
    lM, lm = ev.len_max, ev.len_min
    if normalized:
        da, db = np.ones_like(a), -np.ones_like(b)
    else:
        ell = 0.5 * (lM + lm)
        da = (2 * a * b - b * b) / ell
        db = (a * a - 2 * a * b) / ell
    m = st.nodes.size
    rows = np.tile(np.arange(m), 3)
    cols = np.concatenate((ev.i_max, ev.i_min, st.nodes))
    vals = np.concatenate((da / lM, -db / lm, -da / lM + db / lm))
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, n))


def _linear_solve(A: sp.csr_matrix, b: np.ndarray) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            x = spla.spsolve(A.tocsc(), b)
        except (spla.MatrixRankWarning, RuntimeError):
            return None
    if not np.all(np.isfinite(x)):
        return None
    return np.atleast_1d(x)


def _solve_regularized(A: sp.csr_matrix, b: np.ndarray) -> np.ndarray:
    x = _linear_solve(A, b)
    mu = 1e-12 * max(1.0, abs(A).max())
    eye = sp.identity(A.shape[0], format="csr")
    while x is None and mu < 1e12:
        x = _linear_solve(A + mu * eye, b)
        mu *= 100.0
    if x is None:
        raise SolverError("Newton system is singular")
    return x


def _newton(
    prob: PenalizedProblem,
    u0: np.ndarray,
    src: _Source | None,
    opts: SolveOptions,
    sink: Sink | None,
    label: str,
) -> SolveResult:
    """Damped Newton with the extremal directions frozen per step.

    ``src=None`` solves the normalized homogeneous equation D+ = D-.
    Otherwise the target is ``f(u) - L_h u = 0`` at free nodes; with
    ``opts.obstacle`` the clamp at 0 is honoured through the min-function
    ``min(u, f(u) - L_h u)``.  Steps never shrink a positive value by more
    than a factor ``_KEEP``: a full step into u <= 0 would land on the
    flat zero state, which the product-form operator cannot leave.
    """
    st = prob.stencil()
    free = st.nodes
    n = prob.grid.size
    u = prob.apply_boundary(u0).ravel().copy()
    normalized = src is None
    obstacle = opts.obstacle and not normalized

    def residual(v):
        ev = evaluate(st, v)
        if normalized:
            return ev, ev.d_plus - ev.d_minus
        g = src(v[free]) - ev.L
        return ev, (np.minimum(v[free], g) if obstacle else g)

    ev, phi = residual(u)
    history = []
    step_sup = math.inf
    it = 0
    for it in range(1, opts.newton_max_iters + 1):
        J = _operator_jacobian(st, ev, n, normalized)[:, free]
        if normalized:
            A = J
        else:
            A = sp.diags(src.derivative(u[free])) - J
            if obstacle:
                bound = u[free] <= src(u[free]) - ev.L
                if np.any(bound):
                    A = sp.diags((~bound).astype(float)) @ A + sp.diags(bound.astype(float))
        du = _solve_regularized(A.tocsr(), -phi)
        merit = float(np.dot(phi, phi))
        lam = 1.0
        base = u[free]
        while True:
            trial = u.copy()
            cand = base + lam * du
            if not normalized:
                floor = np.where(base > 0, _KEEP * base, 0.0)
                cand = np.maximum(cand, floor)
            trial[free] = cand
            ev_t, phi_t = residual(trial)
            ok = bool(np.all(np.isfinite(phi_t)))
            if ok and (float(np.dot(phi_t, phi_t)) <= (1.0 - 1e-4 * lam) * merit or lam < 1e-6):
                break
            if not ok and lam < 1e-6:
                raise SolverError(f"{label}: line search found no finite iterate", {"history": history})
            lam *= 0.5
        step_sup = float(np.max(np.abs(trial[free] - base))) if free.size else 0.0
        u, ev, phi = trial, ev_t, phi_t
        res_sup = float(np.max(np.abs(phi))) if phi.size else 0.0
        rec = {"stage": label, "iteration": it, "update_sup": step_sup, "residual_sup": res_sup, "step": lam}
        history.append(rec)
        if sink and opts.log_every and it % opts.log_every == 0:
            sink(rec)
        if step_sup <= opts.tol:
            break
    res_sup = float(np.max(np.abs(phi))) if phi.size else 0.0
    contact = 0 if normalized else int(np.sum(u[free] <= 0.0))
    return SolveResult(
        field=Field(prob.grid, u.reshape(prob.grid.shape)),
        iterations=it,
        final_update_sup=step_sup,
        residual_sup=res_sup,
        converged=step_sup <= opts.tol,
        contact_nodes=contact,
        history=history,
    )


def _explicit(
    prob: PenalizedProblem,
    u0: np.ndarray,
    src: _Source | None,
    opts: SolveOptions,
    sink: Sink | None,
    label: str,
) -> SolveResult:
    """Damped Jacobi pseudo-time iteration with clamping to [0, max φ].

    ``src=None`` uses the monotone averaging update toward D+ = D-.
    """
    st = prob.stencil()
    free = st.nodes
    h = prob.grid.h
    top = prob.boundary_max
    u = prob.apply_boundary(u0).ravel().copy()
    lip = 0.0 if src is None else src.lipschitz()
    if not math.isfinite(lip):
        raise SolverError(f"{label}: explicit iteration needs a Lipschitz right-hand side (epsilon > 0)")
    history = []
    violations = 0
    upd = math.inf
    it = 0
    for it in range(1, opts.max_iters + 1):
        ev = evaluate(st, u)
        uc = u[free]
        if src is None:
            target = (ev.len_min * u[ev.i_max] + ev.len_max * u[ev.i_min]) / (ev.len_max + ev.len_min)
            new = uc + opts.damping_safety * (target - uc)
        else:
            ell = 0.5 * (ev.len_max + ev.len_min)
            grad = np.maximum(np.maximum(ev.d_plus, ev.d_minus), h)
            tau = opts.damping_safety * ell**2 / (3.0 * grad**2 + lip * ell**2)
            new = uc + tau * (ev.L - src(uc))
        new = np.clip(new, 0.0, top)
        if not np.all(np.isfinite(new)):
            raise SolverError(f"{label}: non-finite iterate at sweep {it}", {"history": history})
        diff = new - uc
        upd = float(np.max(np.abs(diff))) if diff.size else 0.0
        log_now = opts.log_every and it % opts.log_every == 0
        if log_now:
            if np.any(diff < -1e-14 * max(1.0, top)):
                violations += 1
            res = float(np.max(np.abs(ev.L - (0.0 if src is None else src(uc))))) if diff.size else 0.0
            rec = {"stage": label, "iteration": it, "update_sup": upd, "residual_sup": res}
            history.append(rec)
            if sink:
                sink(rec)
        u[free] = new
        if upd <= opts.tol:
            break
    if upd > opts.tol:
        raise SolverError(
            f"{label}: explicit iteration did not reach tol={opts.tol} in {opts.max_iters} sweeps "
            f"(last update {upd:.3e})",
            {"history": history, "final_update_sup": upd},
        )
    ev = evaluate(st, u)
    if src is None:
        res = ev.d_plus - ev.d_minus
    else:
        res = np.minimum(u[free], src(u[free]) - ev.L)
    return SolveResult(
        field=Field(prob.grid, u.reshape(prob.grid.shape)),
        iterations=it,
        final_update_sup=upd,
        residual_sup=float(np.max(np.abs(res))) if res.size else 0.0,
        converged=True,
        contact_nodes=0 if src is None else int(np.sum(u[free] <= 0.0)),
        monotone_violations=violations,
        history=history,
    )


def _run(prob, u0, src, opts, sink, label, require=True) -> SolveResult:
    runner = _newton if opts.method == "newton" else _explicit
    res = runner(prob, u0, src, opts, sink, label)
    if require and not res.converged:
        raise SolverError(
            f"{label}: no convergence after {res.iterations} steps "
            f"(update {res.final_update_sup:.3e}, residual {res.residual_sup:.3e})",
            {"history": res.history, **res.summary()},
        )
    return res


def laplace_guess(prob: PenalizedProblem) -> np.ndarray:
    """Discrete harmonic extension of the Dirichlet data (axis stencil)."""
    g = prob.grid
    free = prob.free_nodes
    n = g.size
    u = prob.apply_boundary(np.zeros(g.shape)).ravel()
    rows, cols, vals = [], [], []
    m = free.size
    multi = np.array(np.unravel_index(free, g.shape))
    for ax in range(g.dim):
        for s in (-1, 1):
            shifted = multi.copy()
            shifted[ax] += s
            rows.append(np.arange(m))
            cols.append(np.ravel_multi_index(tuple(shifted), g.shape))
            vals.append(np.ones(m))
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, n))
    Af = A[:, free] - 2.0 * g.dim * sp.identity(m, format="csr")
    mask = np.ones(n, dtype=bool)
    mask[free] = False
    b = -(A[:, mask] @ u[mask])
    u[free] = spla.spsolve(Af.tocsc(), b)
    return u.reshape(g.shape)


def make_supersolution(prob: PenalizedProblem, opts: SolveOptions = SolveOptions(), sink: Sink | None = None) -> Field:
    """Discrete infinity-harmonic extension of the boundary data (D+ = D-)."""
    res = _run(prob, laplace_guess(prob), None, opts, sink, "supersolution")
    return res.field


def subsolution_source(p: ProblemParams, floor: float = 0.0) -> float:
    """sup of the right-hand side over s >= ``floor``.

    With ``floor`` the least Dirichlet value this dominates f(u) for every
    field that stays above its data.  At floor = 0 it is sup f = δ^(-γ) ε^(-αγ).
    """
    if floor > p.delta * p.eps_alpha:
        return float(rhs(floor, p))
    return rhs_sup(p)


def make_subsolution(
    prob: PenalizedProblem,
    opts: SolveOptions = SolveOptions(),
    sink: Sink | None = None,
    start: Field | None = None,
) -> Field:
    """Solve L_h u = sup f with the data of ``prob`` (clamped at 0)."""
    if prob.params.is_limit:
        raise ParameterError("epsilon", "the subsolution needs epsilon > 0")
    if start is None:
        start = make_supersolution(prob, opts, sink)
    floor = float(prob.boundary_data[prob.dirichlet_mask].min())
    level = subsolution_source(prob.params, floor)
    res = _run(prob, start.values, _Source(None, constant=level), opts, sink, "subsolution")
    low = float(res.field.values.min())
    if low < floor and level < rhs_sup(prob.params):
        # the field dipped below its data; fall back to the global bound
        res = _run(prob, start.values, _Source(None, constant=rhs_sup(prob.params)), opts, sink, "subsolution")
    return res.field


def solve_penalized(
    prob: PenalizedProblem,
    opts: SolveOptions = SolveOptions(),
    init: Field | None = None,
    sink: Sink | None = None,
) -> SolveResult:
    """Discrete solution of (P_ε) reached from the subsolution (or ``init``).

    When the constant-source subsolution has no positive discrete solution
    (its source is too strong for the data, so it would have to touch 0 and
    stall on the flat zero state) the supersolution is used instead; the
    result's ``start`` field records which one it was.
    """
    start = "given"
    if init is None:
        try:
            init = make_subsolution(prob, opts, sink)
            start = "subsolution"
        except SolverError as err:
            logger.info("subsolution unavailable (%s); starting from the supersolution", err)
            init = make_supersolution(prob, opts, sink)
            start = "supersolution"
    res = _run(prob, init.values, _Source(prob.params), opts, sink, "penalized")
    res.start = start
    if float(res.field.values.min()) < 0.0:
        res.field.values[...] = np.maximum(res.field.values, 0.0)
    return res


def minimality_probe(prob: PenalizedProblem, opts: SolveOptions = SolveOptions(), tol: float | None = None) -> dict:
    """Solve from the subsolution and from the supersolution; report the gap.

    A negative gap beyond ``tol`` means the supersolution-started fixed point
    lies below the subsolution-started one somewhere.
    """
    tol = opts.tol * 100 if tol is None else tol
    sup = make_supersolution(prob, opts)
    low = solve_penalized(prob, opts).field.values
    high = solve_penalized(prob, opts, init=sup).field.values
    gap = high - low
    return {
        "min_gap": float(gap.min()),
        "max_gap": float(gap.max()),
        "ordered": bool(gap.min() >= -tol),
        "tol": tol,
    }


@dataclass
class ConvergenceTrace:
    epsilons: list
    differences: list
    iterations: list
    ratios: list = field(default_factory=list)
    geometric: bool = True
    include_limit: bool = False

    def as_dict(self) -> dict:
        return {
            "epsilons": self.epsilons,
            "differences": self.differences,
            "ratios": self.ratios,
            "iterations": self.iterations,
            "geometric": self.geometric,
            "include_limit": self.include_limit,
        }


def solve_limit(
    prob: PenalizedProblem,
    eps_sequence,
    opts: SolveOptions = SolveOptions(),
    sink: Sink | None = None,
    finalize: bool = True,
    warm_start: bool = False,
) -> tuple[Field, ConvergenceTrace, list]:
    """ε-continuation, optionally closed by the ε = 0 problem.

    Each stage starts from its own discrete subsolution.  ω_ε increases with
    ε, so the previous stage lies *above* the next one; with
    ``warm_start=True`` the solve starts there instead, which is cheaper but
    may settle on a larger discrete fixed point.  The ε = 0 stage has no
    bounded subsolution source and starts from the infinity-harmonic
    extension of its data, falling back to the last penalized field.

    Returns the last field, the trace of sup-norm differences between
    consecutive stages, and the per-stage :class:`SolveResult` list.
    """
    eps = [float(e) for e in eps_sequence]
    if not eps or any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ParameterError("eps_sequence", "must be a non-empty strictly decreasing list of positive reals")
    results = []
    prev = None
    diffs = []
    for e in eps:
        pk = prob.with_epsilon(e)
        init = None
        if warm_start and prev is not None:
            init = Field(pk.grid, pk.apply_boundary(prev.values))
        res = solve_penalized(pk, opts, init=init, sink=sink)
        if prev is not None:
            diffs.append(float(np.max(np.abs(res.field.values - prev.values))))
        results.append(res)
        prev = res.field
        logger.info("eps=%g iterations=%d residual=%.3e", e, res.iterations, res.residual_sup)
    if finalize:
        pl = prob.limit()
        if opts.method != "newton":
            opts = replace(opts, method="newton")
        src = _Source(pl.params)
        try:
            start = make_supersolution(pl, opts, sink).values
            res = _run(pl, start, src, opts, sink, "limit")
        except SolverError as err:
            logger.warning("limit stage from the supersolution failed (%s); retrying from eps=%g", err, eps[-1])
            res = _run(pl, pl.apply_boundary(prev.values), src, opts, sink, "limit")
        res.field.values[...] = np.maximum(res.field.values, 0.0)
        diffs.append(float(np.max(np.abs(res.field.values - prev.values))))
        results.append(res)
        prev = res.field
    ratios = [b / a if a > 0 else math.nan for a, b in zip(diffs, diffs[1:])]
    geometric = all(r < 1.0 for r in ratios if math.isfinite(r))
    trace = ConvergenceTrace(
        epsilons=eps + ([0.0] if finalize else []),
        differences=diffs,
        iterations=[r.iterations for r in results],
        ratios=ratios,
        geometric=geometric,
        include_limit=finalize,
    )
    return prev, trace, results
