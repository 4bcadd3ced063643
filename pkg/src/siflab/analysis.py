"""Empirical checks of the regularity and free-boundary estimates on solved fields.

Every check returns an :class:`AnalysisReport`: a pass flag, the worst case
found, and the empirical constants it measured.  The constants of the
continuous theory are not explicit, so most checks report a number plus a
grid-stability criterion (see :func:`drift`) instead of comparing against a
known value.  Radii are dyadic and never below the exclusion zone 4h.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from siflab.closed_forms import barrier_scaled
from siflab.discrete_operator import DirectionSet, Field, Grid, direction_set, make_grid, residual_field
from siflab.model import ParameterError, ProblemParams, rhs

EXCLUSION = 4.0  # radii below EXCLUSION·h are never scanned


class InsufficientDataError(ValueError):
    pass


@dataclass(eq=False)
class NodeSet:
    grid: Grid
    mask: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool).reshape(self.grid.shape)

    def __len__(self) -> int:
        return int(self.mask.sum())

    def indices(self) -> list[tuple]:
        return [tuple(int(i) for i in ix) for ix in np.argwhere(self.mask)]

    def points(self) -> np.ndarray:
        return self.grid.points()[self.mask.ravel()]

    def max_radius(self, center=None) -> float:
        """Largest distance from ``center`` (default: the origin) to a member."""
        if not len(self):
            return 0.0
        c = np.zeros(self.grid.dim) if center is None else np.atleast_1d(center)
        return float(np.sqrt(((self.points() - c) ** 2).sum(axis=1)).max())


@dataclass
class FitResult:
    alpha_est: float
    c_est: float
    r_squared: float
    radii_used: list

    def as_dict(self) -> dict:
        return {
            "alpha_est": self.alpha_est,
            "c_est": self.c_est,
            "r_squared": self.r_squared,
            "radii_used": list(self.radii_used),
        }


@dataclass
class AnalysisReport:
    name: str
    passed: bool
    worst_location: list | None = None
    constants: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "check": self.name,
            "pass": bool(self.passed),
            "worst_location": self.worst_location,
            "constants": self.constants,
            "params": self.params,
            "details": self.details,
        }


def drift(a: float, b: float) -> float:
    """Relative change |a - b| / max(|a|, |b|); 0 when both vanish."""
    top = max(abs(a), abs(b))
    return 0.0 if top == 0 else abs(a - b) / top


def stable(a: float, b: float, tol: float = 0.25) -> bool:
    return bool(math.isfinite(a) and math.isfinite(b) and drift(a, b) <= tol)


def dyadic(lo: float, hi: float, anchor: float | None = None) -> list[float]:
    """Radii anchor·2^k within [lo, hi] (anchor defaults to hi, going down)."""
    if hi < lo:
        return []
    out = []
    if anchor is None:
        r = hi
        while r >= lo * (1 - 1e-12):
            out.append(r)
            r /= 2.0
        return sorted(out)
    r = anchor
    while r > hi * (1 + 1e-12):
        r /= 2.0
    while r < lo * (1 - 1e-12):
        r *= 2.0
    while r <= hi * (1 + 1e-12):
        out.append(r)
        r *= 2.0
    return out


def _loc(grid: Grid, idx) -> list:
    return [float(grid.axis[i]) for i in idx]


# -- balls ---------------------------------------------------------------------


def _ball_index(grid: Grid, center, r: float) -> np.ndarray:
    c = np.array([grid.axis[i] for i in center])
    d2 = sum((x - c0) ** 2 for x, c0 in zip(grid.coords, c))
    return d2 <= (r * (1 + 1e-12)) ** 2


def ball_sup(f: Field, center, r: float) -> float:
    """max of f over nodes with |node - center| <= r (f(center) for r < h)."""
    center = tuple(np.atleast_1d(center))
    if r < f.grid.h:
        return float(f.values[center])
    return float(f.values[_ball_index(f.grid, center, r)].max())


def ball_sup_map(f: Field, r: float) -> np.ndarray:
    """ball_sup at every node at once; the ball is clipped to the grid.

    The disk is swept row by row: a 1D running max of the right half-width
    per row offset, then a shift.  Cost O(N·r/h) instead of O(N·(r/h)^2).
    """
    g = f.grid
    w0 = int(math.floor(r / g.h * (1 + 1e-12)))
    v = f.values
    if w0 == 0:
        return v.copy()
    if g.dim == 1:
        return ndimage.maximum_filter1d(v, 2 * w0 + 1, mode="constant", cval=-np.inf)
    out = np.full(v.shape, -np.inf)
    for dy in range(-w0, w0 + 1):
        half = int(math.floor(math.sqrt(max((r / g.h) ** 2 * (1 + 1e-12) ** 2 - dy * dy, 0.0))))
        row = ndimage.maximum_filter1d(v, 2 * half + 1, axis=1, mode="constant", cval=-np.inf)
        shifted = np.full(v.shape, -np.inf)
        if dy >= 0:
            shifted[: g.n - dy] = row[dy:]
        else:
            shifted[-dy:] = row[: g.n + dy]
        np.maximum(out, shifted, out=out)
    return out


def ball_mean_map(mask: np.ndarray, grid: Grid, r: float) -> np.ndarray:
    """Fraction of in-grid nodes within distance r that lie in ``mask``."""
    w = int(math.floor(r / grid.h * (1 + 1e-12)))
    ax = np.arange(-w, w + 1)
    if grid.dim == 1:
        foot = np.ones(2 * w + 1)
    else:
        foot = ((ax[:, None] ** 2 + ax[None, :] ** 2) <= (r / grid.h * (1 + 1e-12)) ** 2).astype(float)
    num = ndimage.convolve(mask.astype(float), foot, mode="constant", cval=0.0)
    den = ndimage.convolve(np.ones(grid.shape), foot, mode="constant", cval=0.0)
    return num / den


# -- sets ----------------------------------------------------------------------


def default_threshold(f: Field, p: ProblemParams) -> float:
    """δε^α for penalized fields; 10·machine-eps·‖f‖∞ for limit fields."""
    if p.is_limit:
        return 10.0 * np.finfo(float).eps * float(np.max(np.abs(f.values)))
    return p.delta * p.eps_alpha


def positivity_set(f: Field, threshold: float = 0.0) -> NodeSet:
    if threshold < 0:
        raise ParameterError("threshold", f"must be >= 0, got {threshold}")
    return NodeSet(f.grid, f.values > threshold)


def _neighbor_any(mask: np.ndarray, dirs: DirectionSet) -> np.ndarray:
    """Nodes with at least one in-grid stencil neighbor in ``mask``."""
    out = np.zeros_like(mask)
    n = mask.shape[0]
    for off in dirs.offsets:
        src = tuple(slice(max(0, -o), n - max(0, o)) for o in off)
        dst = tuple(slice(max(0, o), n - max(0, -o)) for o in off)
        out[src] |= mask[dst]
    return out


def free_boundary(
    f: Field, threshold: float = 0.0, dirs: DirectionSet | None = None, side: str = "inner"
) -> NodeSet:
    """Node band of ∂{f > threshold}.

    ``inner``: members of the positivity set with a stencil neighbor outside
    it.  ``outer``: non-members with a neighbor inside (the zero side).
    """
    dirs = dirs or direction_set(f.grid.dim)
    pos = positivity_set(f, threshold).mask
    if side == "inner":
        return NodeSet(f.grid, pos & _neighbor_any(~pos, dirs))
    if side == "outer":
        return NodeSet(f.grid, ~pos & _neighbor_any(pos, dirs))
    raise ParameterError("side", f"must be 'inner' or 'outer', got {side!r}")


# -- growth ----------------------------------------------------------------------


def default_radii(grid: Grid, center=None, r_max: float | None = None) -> list[float]:
    """Dyadic radii from r_max down to 4h; r_max defaults to half the distance
    from ``center`` to ∂Ω."""
    if r_max is None:
        d = grid.dist_to_boundary()
        c = grid.center_index() if center is None else tuple(center)
        r_max = 0.5 * float(d[c])
    return dyadic(EXCLUSION * grid.h, r_max)


def growth_exponent_fit(f: Field, center, radii=None) -> FitResult:
    """Least-squares slope of log ball_sup against log r."""
    center = tuple(np.atleast_1d(center))
    g = f.grid
    radii = default_radii(g, center) if radii is None else list(radii)
    use = [r for r in radii if r >= EXCLUSION * g.h * (1 - 1e-12)]
    sups = np.array([ball_sup(f, center, r) for r in use])
    keep = sups > 0
    use = [r for r, k in zip(use, keep) if k]
    if len(use) < 3:
        raise InsufficientDataError(f"need >= 3 radii with positive ball sup above 4h, got {len(use)}")
    x = np.log(use)
    y = np.log(sups[keep])
    slope, icpt = np.polyfit(x, y, 1)
    pred = slope * x + icpt
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - ss_res / ss_tot)
    return FitResult(alpha_est=float(slope), c_est=float(math.exp(icpt)), r_squared=r2, radii_used=use)


def exponent_check(
    f: Field, p: ProblemParams, centers=None, radii=None, rel_tol: float = 0.10, r2_min: float = 0.99
) -> AnalysisReport:
    """growth_exponent_fit at free-boundary nodes against α = 4/(3+γ).

    ``centers`` default to the zero-side band of the free boundary.
    """
    if centers is None:
        centers = free_boundary(f, default_threshold(f, p), side="outer").indices()
    if not centers:
        raise InsufficientDataError("no free-boundary nodes to fit at")
    fits = [(c, growth_exponent_fit(f, c, radii)) for c in centers]
    errs = [abs(ft.alpha_est - p.alpha) / p.alpha for _, ft in fits]
    k = int(np.argmax(errs))
    worst_c, worst = fits[k]
    ok = all(e <= rel_tol for e in errs) and all(ft.r_squared >= r2_min for _, ft in fits)
    return AnalysisReport(
        name="growth_exponent",
        passed=ok,
        worst_location=_loc(f.grid, worst_c),
        constants={"alpha": p.alpha, "alpha_est": worst.alpha_est, "c_est": worst.c_est},
        params=p.as_dict(),
        details={
            "n_centers": len(fits),
            "max_rel_error": errs[k],
            "min_r_squared": min(ft.r_squared for _, ft in fits),
            "rel_tol": rel_tol,
            "r2_min": r2_min,
            "fit": worst.as_dict(),
        },
    )


def oscillation_check(
    f: Field, p: ProblemParams, kappa_0: float | None = None, mask: np.ndarray | None = None
) -> AnalysisReport:
    """C_emp = max over (x, κ) of sup_{B_κ(x)} w / κ^α for the normalized field.

    w(y) = τ^(-α) f(τy) with τ = max{1, ‖f‖∞^(1/α)}.  Then
    sup_{B_κ(x/τ)} w / κ^α = sup_{B_τκ(x)} f / (τκ)^α, so the scan runs on
    the original grid over ρ = τκ with κ dyadic in [w(x)^(1/α), κ_0] and
    ρ >= 4h.  Pairs with κ below w(x)^(1/α) are skipped.
    """
    g = f.grid
    a = p.alpha
    if kappa_0 is None:
        kappa_0 = 0.5 * g.R
    if not 0 < kappa_0 <= 0.5 * g.R * (1 + 1e-12):
        raise ParameterError("kappa_0", f"must lie in (0, R/2 = {0.5 * g.R}], got {kappa_0}")
    v = f.values
    tau = max(1.0, float(np.max(np.abs(v))) ** (1.0 / a))
    nodes = g.interior_mask if mask is None else mask
    level = np.maximum(v, 0.0) ** (1.0 / a)  # f(x)^(1/α) = τ·w(x/τ)^(1/α)
    best = 0.0
    where = None
    pairs = 0
    profile = {}
    for kappa in dyadic(EXCLUSION * g.h / tau, kappa_0, anchor=kappa_0):
        rho = tau * kappa
        ok = nodes & (level <= rho * (1 + 1e-12))
        if not ok.any():
            continue
        ratio = ball_sup_map(f, rho)[ok] / rho**a
        pairs += int(ok.sum())
        k = int(np.argmax(ratio))
        profile[repr(kappa)] = float(ratio[k])
        if ratio[k] > best:
            best = float(ratio[k])
            where = _loc(g, np.argwhere(ok)[k]) + [rho]
    return AnalysisReport(
        name="oscillation",
        passed=bool(math.isfinite(best) and pairs > 0),
        worst_location=where,
        constants={"C_emp": best},
        params=p.as_dict(),
        details={"kappa_0": kappa_0, "tau": tau, "pairs": pairs, "max_ratio_per_kappa": profile},
    )


def nondegeneracy_check(f: Field, p: ProblemParams, slack_factor: float = 5.0) -> AnalysisReport:
    """min over qualifying (x, r) of sup_{B_r(x)} f / (δ r^α).

    x ranges over interior nodes with f(x) >= δε^α; r is dyadic (anchored at
    max(ε, 4h)) up to dist(x, ∂Ω)/2.  A pair passes when its ratio is at
    least 1 - slack_factor·h/r.
    """
    if p.is_limit:
        raise ParameterError("epsilon", "non-degeneracy check needs a penalized field (epsilon > 0)")
    g = f.grid
    v = f.values
    dist = g.dist_to_boundary()
    lo = max(p.epsilon, EXCLUSION * g.h)
    qual = g.interior_mask & (v >= p.delta * p.eps_alpha * (1 - 1e-12))
    worst_ratio = math.inf
    worst_margin = math.inf
    where = None
    pairs = 0
    for r in dyadic(lo, 0.5 * float(dist[qual].max()) if qual.any() else 0.0, anchor=lo):
        ok = qual & (dist >= 2.0 * r * (1 - 1e-12))
        if not ok.any():
            continue
        ratio = ball_sup_map(f, r)[ok] / (p.delta * r**p.alpha)
        margin = ratio - (1.0 - slack_factor * g.h / r)
        pairs += int(ok.sum())
        k = int(np.argmin(margin))
        if margin[k] < worst_margin:
            worst_margin = float(margin[k])
            where = _loc(g, np.argwhere(ok)[k]) + [r]
        worst_ratio = min(worst_ratio, float(ratio.min()))
    return AnalysisReport(
        name="nondegeneracy",
        passed=bool(pairs > 0 and worst_margin >= 0.0),
        worst_location=where,
        constants={"c_emp": p.delta * worst_ratio if pairs else math.nan, "min_ratio": worst_ratio},
        params=p.as_dict(),
        details={"pairs": pairs, "min_margin": worst_margin, "slack_factor": slack_factor},
    )


def flatness_growth_check(
    f: Field, p: ProblemParams, rho_max: float | None = None, fraction: float = 0.10
) -> AnalysisReport:
    """C_emp = max of sup_{B_ρ(x)} f / (ρ + f(x)^(1/α))^α over {f < δ_0}.

    δ_0 is calibrated as the value below which ``fraction`` of the interior
    nodes fall, and recorded.
    """
    g = f.grid
    v = f.values
    if rho_max is None:
        rho_max = 0.5 * g.R
    inner = g.interior_mask
    delta_0 = float(np.quantile(v[inner], fraction))
    qual = inner & (v <= delta_0)
    level = np.maximum(v, 0.0) ** (1.0 / p.alpha)
    best = 0.0
    where = None
    for rho in dyadic(EXCLUSION * g.h, rho_max):
        ratio = ball_sup_map(f, rho)[qual] / (rho + level[qual]) ** p.alpha
        k = int(np.argmax(ratio))
        if ratio[k] > best:
            best = float(ratio[k])
            where = _loc(g, np.argwhere(qual)[k]) + [rho]
    return AnalysisReport(
        name="flatness_growth",
        passed=bool(math.isfinite(best) and qual.any()),
        worst_location=where,
        constants={"C_emp": best},
        params=p.as_dict(),
        details={"delta_0": delta_0, "fraction": fraction, "nodes": int(qual.sum()), "rho_max": rho_max},
    )


def _decay_exponent(f: Field, idx, dirs: DirectionSet, steps=(1, 2, 4, 8)) -> float:
    """Slope of log max_e |f(x + t e) - f(x)|/t against log t."""
    g = f.grid
    x = np.array(idx)
    v0 = f.values[tuple(idx)]
    ts, qs = [], []
    for k in steps:
        best = None
        for off, ln in zip(dirs.offsets, dirs.lengths):
            y = x + k * off
            if np.any(y < 0) or np.any(y >= g.n):
                continue
            t = k * ln * g.h
            q = abs(f.values[tuple(y)] - v0) / t
            best = q if best is None else max(best, q)
        if best is not None:
            ts.append(k * g.h)
            qs.append(best)
    pos = [(t, q) for t, q in zip(ts, qs) if q > 0]
    if len(pos) < 2:
        return math.inf
    t, q = np.log(np.array(pos)).T
    return float(np.polyfit(t, q, 1)[0])


def gradient_at_fb_check(
    f: Field, p: ProblemParams, threshold: float | None = None, side: str = "outer", tol: float = 0.15
) -> AnalysisReport:
    """Difference quotients at free-boundary nodes must decay like t^(α-1).

    Passes iff the fitted decay exponent is >= (α - 1) - tol at every band
    node.  The default band is the zero side of the free boundary.
    """
    dirs = direction_set(f.grid.dim)
    thr = default_threshold(f, p) if threshold is None else threshold
    band = free_boundary(f, thr, dirs, side=side).indices()
    if not band:
        raise InsufficientDataError("empty free boundary")
    exps = [_decay_exponent(f, idx, dirs) for idx in band]
    k = int(np.argmin(exps))
    need = (p.alpha - 1.0) - tol
    return AnalysisReport(
        name="gradient_at_free_boundary",
        passed=bool(min(exps) >= need),
        worst_location=_loc(f.grid, band[k]),
        constants={"min_decay_exponent": exps[k], "required": need},
        params=p.as_dict(),
        details={"nodes": len(band), "side": side, "threshold": thr},
    )


# -- density and porosity ---------------------------------------------------------


def density_ratio(f: Field, center, kappa: float, threshold: float = 0.0) -> float:
    """Share of the ball's nodes where f > threshold."""
    if kappa < EXCLUSION * f.grid.h * (1 - 1e-12):
        raise ParameterError("kappa", f"must be >= 4h = {EXCLUSION * f.grid.h}, got {kappa}")
    ball = _ball_index(f.grid, tuple(np.atleast_1d(center)), kappa)
    return float((f.values[ball] > threshold).sum() / ball.sum())


def density_check(
    f: Field, p: ProblemParams, radii=None, threshold: float | None = None, minimum: float = 0.05, nodes=None
) -> AnalysisReport:
    """density_ratio at every free-boundary node and dyadic radius."""
    g = f.grid
    thr = default_threshold(f, p) if threshold is None else threshold
    band = free_boundary(f, thr).mask if nodes is None else nodes
    if not band.any():
        raise InsufficientDataError("empty free boundary")
    radii = dyadic(EXCLUSION * g.h, 0.25 * g.R) if radii is None else radii
    pos = f.values > thr
    worst = math.inf
    where = None
    for r in radii:
        dens = ball_mean_map(pos, g, r)[band]
        k = int(np.argmin(dens))
        if dens[k] < worst:
            worst = float(dens[k])
            where = _loc(g, np.argwhere(band)[k]) + [r]
    return AnalysisReport(
        name="density",
        passed=bool(worst >= minimum),
        worst_location=where,
        constants={"density_ratio_min": worst},
        params=p.as_dict(),
        details={"radii": list(radii), "threshold": thr, "minimum": minimum, "nodes": int(band.sum())},
    )


def porosity_estimate(
    f: Field,
    p: ProblemParams,
    radii=None,
    threshold: float | None = None,
    c_emp: float | None = None,
    C_emp: float | None = None,
) -> AnalysisReport:
    """τ_emp = min over free-boundary x and radii ρ of the largest τ' with some
    B_{τ'ρ}(y) ⊂ B_ρ(x) free of free-boundary nodes.

    The hole radius at y is min(dist(y, band), ρ - |y - x|).  When both
    empirical constants are given the report compares τ_emp with
    min{1/2, (c_emp/C_emp)^(1/α)}.
    """
    g = f.grid
    thr = default_threshold(f, p) if threshold is None else threshold
    band = free_boundary(f, thr).mask
    if not band.any():
        raise InsufficientDataError("empty free boundary")
    radii = dyadic(EXCLUSION * g.h, 0.25 * g.R) if radii is None else radii
    d_band = ndimage.distance_transform_edt(~band, sampling=g.h)
    pts = g.points()
    dflat = d_band.ravel()
    tau = math.inf
    where = None
    for idx in np.argwhere(band):
        c = pts[g.flat(idx)]
        r2 = ((pts - c) ** 2).sum(axis=1)
        for rho in radii:
            inside = r2 <= rho * rho * (1 + 1e-12)
            hole = np.minimum(dflat[inside], rho - np.sqrt(r2[inside])).max() / rho
            if hole < tau:
                tau = float(hole)
                where = _loc(g, idx) + [rho]
    consts = {"porosity_tau": tau}
    details = {"radii": list(radii), "threshold": thr, "nodes": int(band.sum())}
    if c_emp is not None and C_emp is not None and C_emp > 0:
        details["predicted_tau"] = min(0.5, (c_emp / C_emp) ** (1.0 / p.alpha))
    return AnalysisReport(
        name="porosity",
        passed=bool(math.isfinite(tau) and tau > 0),
        worst_location=where,
        constants=consts,
        params=p.as_dict(),
        details=details,
    )


# -- scaling, Lipschitz, barrier ---------------------------------------------------


def zoom(f: Field, iota: int, fixed: np.ndarray | None = None):
    """u_ι(x) = f(ιx)/ι^α on [-R/ι, R/ι] with the same spacing h, as values.

    Returns (zoomed grid, zoomed values before the α-rescale, zoomed mask).
    """
    g = f.grid
    c = g.n // 2
    half = (g.n - 1) // (2 * iota)
    if abs(g.axis[c]) > 1e-12 * g.R:
        raise ParameterError("grid", "zoom needs the origin to be a grid node")
    zg = make_grid(g.dim, half * g.h, g.h, g.geometry, reach=g.reach)
    sl = tuple(slice(c - iota * half, c + iota * half + 1, iota) for _ in range(g.dim))
    zmask = None if fixed is None else np.asarray(fixed).reshape(g.shape)[sl]
    return zg, f.values[sl], zmask


def scaling_residual_check(
    f: Field,
    p: ProblemParams,
    iota: int,
    dirs: DirectionSet | None = None,
    fixed: np.ndarray | None = None,
    slack_factor: float = 1.0,
) -> AnalysisReport:
    """Residual of u_ι(x) = f(ιx)/ι^α for the (ε/ι)-penalized equation.

    The discrete operator is covariant, so this residual equals ι^(αγ) times
    the residual of f on the sublattice of spacing ιh.  The check asserts
    that identity (1e-9 relative to 1 + sup f(f)) and the bound

        sup|res(u_ι)| <= ι^(αγ) (sup|res(f)| + slack_factor·ιh·(1 + sup f(f)))

    where the O(h) term absorbs the coarser lattice's consistency error.
    ``fixed`` marks pinned nodes, which carry no equation.
    """
    iota_i = int(iota)
    if iota_i != iota or iota_i < 1 or iota_i & (iota_i - 1):
        raise ParameterError("iota", f"must be a power of 2, got {iota}")
    g = f.grid
    dirs = dirs or direction_set(g.dim)
    zg, raw, zmask = zoom(f, iota_i, fixed)
    scale = iota_i ** (p.alpha * p.gamma)
    p_i = p if p.is_limit else p.with_epsilon(p.epsilon / iota_i)
    u_i = Field(zg, raw / iota_i**p.alpha)
    res_i = residual_field(u_i, p_i, dirs, fixed=zmask).values
    # same sublattice, original scale, spacing ιh
    cg = make_grid(g.dim, zg.R * iota_i, g.h * iota_i, g.geometry, reach=g.reach)
    res_c = residual_field(Field(cg, raw), p, dirs, fixed=zmask).values
    base = residual_field(f, p, dirs, fixed=fixed).values
    inner = zg.interior_mask if zmask is None else zg.interior_mask & ~zmask
    sup_i = float(np.max(np.abs(res_i[inner]))) if inner.any() else 0.0
    sup_f = float(np.max(np.abs(base)))
    rhs_scale = float(np.max(rhs(np.maximum(f.values, 0.0), p))) if not p.is_limit else 0.0
    # relative to the size of the terms, not of their (cancelling) difference
    cov_err = float(np.max(np.abs(res_i[inner] - scale * res_c[inner]))) / (scale * (1.0 + rhs_scale))
    bound = scale * (sup_f + slack_factor * iota_i * g.h * (1.0 + rhs_scale))
    ok = cov_err <= 1e-9 and sup_i <= bound
    k = np.unravel_index(int(np.argmax(np.where(inner, np.abs(res_i), -1.0))), zg.shape)
    return AnalysisReport(
        name="scaling_residual",
        passed=bool(ok),
        worst_location=_loc(zg, k),
        constants={"residual_sup_scaled": sup_i, "residual_sup_base": sup_f, "bound": bound},
        params=p.as_dict(),
        details={"iota": iota_i, "scale": scale, "covariance_error": cov_err, "slack_factor": slack_factor},
    )


def lipschitz_check(f: Field, dirs: DirectionSet | None = None, slack_factor: float = 10.0) -> AnalysisReport:
    """Every stencil difference quotient at x is <= 2‖f‖∞/dist(x,∂Ω) + slack_factor·h·‖f‖∞."""
    g = f.grid
    dirs = dirs or direction_set(g.dim)
    v = f.values
    top = float(np.max(np.abs(v)))
    dist = g.dist_to_boundary()
    inner = g.interior_mask & (dist > 0)
    n = g.n
    worst = -math.inf
    where = None
    for off, ln in zip(dirs.offsets, dirs.lengths):
        src = tuple(slice(max(0, -o), n - max(0, o)) for o in off)
        dst = tuple(slice(max(0, o), n - max(0, -o)) for o in off)
        q = np.abs(v[dst] - v[src]) / (ln * g.h)
        d = dist[src]
        ok = inner[src]
        with np.errstate(divide="ignore"):
            margin = q - (2.0 * top / np.where(d > 0, d, np.inf) + slack_factor * g.h * top)
        margin = np.where(ok, margin, -np.inf)
        k = np.unravel_index(int(np.argmax(margin)), margin.shape)
        if margin[k] > worst:
            worst = float(margin[k])
            where = [float(g.axis[s.start + i]) for s, i in zip(src, k)]
    return AnalysisReport(
        name="lipschitz",
        passed=bool(worst <= 0.0),
        worst_location=where,
        constants={"max_margin": worst},
        details={"slack_factor": slack_factor, "sup_norm": top},
    )


def barrier_comparison_check(
    f: Field, p: ProblemParams, r: float, center=None, dirs: DirectionSet | None = None, slack_factor: float = 1.0
) -> AnalysisReport:
    """Exercise the comparison step behind strong non-degeneracy.

    If f < Φ_ε(|x - x0|) on the sphere ∂B_r(x0), then w = min(f, Φ_ε) inside
    B_r (f outside) must remain a discrete supersolution where Φ_ε is the
    active branch: L_h w - f(w) <= slack_factor·h·(1 + sup f(f)).  When f
    exceeds the barrier somewhere on the sphere the premise fails, nothing
    is asserted, and the report says so (``applicable`` is False).
    """
    g = f.grid
    dirs = dirs or direction_set(g.dim)
    c = np.zeros(g.dim) if center is None else np.atleast_1d(center)
    dist = np.sqrt(sum((x - c0) ** 2 for x, c0 in zip(g.coords, c)))
    phi = np.asarray(barrier_scaled(dist, r, p))
    sphere = (dist <= r) & (dist > r - g.h)
    applicable = bool(sphere.any() and np.all(f.values[sphere] < phi[sphere]))
    details = {"r": r, "applicable": applicable, "sphere_nodes": int(sphere.sum())}
    if not applicable:
        return AnalysisReport(
            name="barrier_comparison",
            passed=True,
            constants={"max_residual": math.nan},
            params=p.as_dict(),
            details=details,
        )
    inside = dist <= r
    w = np.where(inside, np.minimum(f.values, phi), f.values)
    res = residual_field(Field(g, w), p, dirs).values
    active = inside & g.interior_mask & (phi < f.values)
    slack = slack_factor * g.h * (1.0 + float(np.max(rhs(np.maximum(f.values, 0.0), p))))
    worst = float(res[active].max()) if active.any() else -math.inf
    k = np.unravel_index(int(np.argmax(np.where(active, res, -np.inf))), g.shape)
    details["active_nodes"] = int(active.sum())
    return AnalysisReport(
        name="barrier_comparison",
        passed=bool(worst <= slack),
        worst_location=_loc(g, k) if active.any() else None,
        constants={"max_residual": worst, "slack": slack},
        params=p.as_dict(),
        details=details,
    )
