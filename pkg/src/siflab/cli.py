"""Command-line front end: ``siflab <subcommand> --config run.toml``.

Subcommands:

  solve            solve one penalized problem (or an ε-continuation)
  verify-barrier   sample the barrier supersolution inequality
  verify-radial    check the radial ODE identity for the exact family
  analyze          solve, then run the estimate checks (optionally at h/2 too)
  sweep            limit exponent table over a list of γ

Each run writes into ``<out>/<cmd>-<hash>`` where the hash is taken over the
resolved configuration.  File formats are described in docs/formats.md.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import math
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from siflab import analysis as an
from siflab.closed_forms import BarrierSpec, radial_exact, radial_ode_residual, verify_supersolution
from siflab.discrete_operator import Field
from siflab.model import ParameterError, ProblemParams, derive_params, max_admissible_delta
from siflab.solver import (
    BoundarySpec,
    SolveOptions,
    SolverError,
    jsonl_sink,
    make_problem,
    solve_limit,
    solve_penalized,
)

logger = logging.getLogger("siflab")

COMMANDS = ("solve", "verify-barrier", "verify-radial", "analyze", "sweep")
CHECKS = (
    "radial_oracle",
    "growth_exponent",
    "oscillation",
    "nondegeneracy",
    "flatness_growth",
    "gradient_at_fb",
    "free_boundary_band",
    "density",
    "porosity",
    "scaling",
    "lipschitz",
)

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


class ConfigError(ValueError):
    """Invalid configuration; the message names key, line and constraint."""

    def __init__(self, key: str, line: int | None, constraint: str):
        where = f"line {line}" if line else "line ?"
        super().__init__(f"config key '{key}' ({where}): {constraint}")
        self.key = key
        self.line = line


# -- configuration -------------------------------------------------------------

TOP = {
    "gamma": 0.0,
    "epsilon": None,
    "eps_sequence": None,
    "delta": None,
    "ramp": "linear",
    "dim": 1,
    "geometry": "box",
    "R": 1.0,
    "h": 0.002,
    "ring": 8,
    "boundary": "radial_compat",
    "finalize": True,
    "deterministic": True,
}
SOLVER = {
    "tol": 1e-10,
    "max_iters": 10**6,
    "damping_safety": 0.5,
    "log_every": 1,
    "method": "newton",
    "newton_max_iters": 200,
}
ANALYSIS = {
    "checks": None,
    "kappa_0": None,
    "radii": None,
    "rho_max": None,
    "iota": [2, 4],
    "eta": [1.0, 2.0, 10.0],
    "barrier_delta": None,
    "barrier_samples": 4096,
    "gammas": [0.0, 0.3, 0.6, 0.9],
    "refine": False,
    "oracle_tol": 5e-3,
    "density_min": 0.05,
    "stability_tol": 0.25,
}
OUTPUT = {"dir": "runs", "figures": False}
BOUNDARY = {"kind": "radial_compat", "value": 0.0, "path": None, "pin_zero": [], "pin_origin": None}
SECTIONS = {"solver": SOLVER, "analysis": ANALYSIS, "output": OUTPUT}


@dataclass
class RunConfig:
    data: dict
    text: str = ""
    source: str | None = None
    overrides: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.data[key]

    @property
    def solver(self) -> dict:
        return self.data["solver"]

    @property
    def analysis(self) -> dict:
        return self.data["analysis"]

    def resolved(self) -> dict:
        """Full configuration with defaults filled, as echoed in summaries."""
        return copy.deepcopy(self.data)

    def digest(self, cmd: str) -> str:
        """Run-directory hash; the [output] section does not change results."""
        body = {k: v for k, v in self.resolved().items() if k != "output"}
        blob = json.dumps({"cmd": cmd, "config": body}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def params(self, gamma: float | None = None) -> ProblemParams:
        g = self.data["gamma"] if gamma is None else gamma
        eps = self.data["epsilon"] if self.data["epsilon"] is not None else self.data["eps_sequence"][0]
        return derive_params(g, eps, self.data["delta"], self.data["ramp"])

    def solve_options(self) -> SolveOptions:
        return SolveOptions(**self.solver)

    def boundary_spec(self) -> BoundarySpec:
        b = self.data["boundary"]
        table = None
        if b["kind"] == "tabulated":
            table = load_table(Path(b["path"]), self.data["dim"], base=self.source)
        pins = tuple((tuple(p["center"]), float(p["radius"])) for p in b["pin_zero"])
        return BoundarySpec(kind=b["kind"], value=b["value"], table=table, pin_zero=pins, pin_origin=b["pin_origin"])

    def problem(self, gamma: float | None = None, h: float | None = None):
        d = self.data
        return make_problem(
            self.params(gamma),
            dim=d["dim"],
            R=d["R"],
            h=d["h"] if h is None else h,
            geometry=d["geometry"],
            boundary=self.boundary_spec(),
            ring=d["ring"],
        )


def _line_of(text: str, section: str | None, key: str) -> int | None:
    """1-based line where ``key`` is assigned inside ``section`` (None = top)."""
    current = None
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[([^\[\]]+)\]\s*(#.*)?$", s)
        if m:
            current = m.group(1).strip()
            if section is None and current == key:
                return i
            continue
        if current == section and pat.match(line):
            return i
    return None


def _num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _require(cond: bool, key: str, text: str, section: str | None, constraint: str):
    if not cond:
        name = key if section is None else f"{section}.{key}"
        raise ConfigError(name, _line_of(text, section, key.split(".")[0]), constraint)


def _parse_boundary(raw, text: str) -> dict:
    b = dict(BOUNDARY)
    if isinstance(raw, str):
        b["kind"] = raw
    elif _num(raw):
        b.update(kind="constant", value=float(raw))
    elif isinstance(raw, dict):
        unknown = set(raw) - set(BOUNDARY)
        _require(not unknown, "boundary", text, None, f"unknown keys {sorted(unknown)}")
        b.update(raw)
    else:
        _require(False, "boundary", text, None, "must be a string, a number or a table")
    _require(
        b["kind"] in ("radial_compat", "constant", "tabulated"),
        "boundary",
        text,
        None,
        "kind must be one of radial_compat, constant, tabulated",
    )
    _require(_num(b["value"]) and b["value"] >= 0, "boundary", text, None, "value must be a real >= 0")
    b["value"] = float(b["value"])
    if b["kind"] == "tabulated":
        _require(isinstance(b["path"], str), "boundary", text, None, "tabulated boundary needs a 'path' string")
    pins = []
    _require(isinstance(b["pin_zero"], list), "boundary", text, None, "pin_zero must be a list of tables")
    for p in b["pin_zero"]:
        ok = isinstance(p, dict) and set(p) == {"center", "radius"} and _num(p["radius"]) and p["radius"] >= 0
        _require(ok, "boundary", text, None, "each pin_zero entry needs center = [...] and radius >= 0")
        pins.append({"center": [float(c) for c in p["center"]], "radius": float(p["radius"])})
    b["pin_zero"] = pins
    _require(b["pin_origin"] is None or isinstance(b["pin_origin"], bool), "boundary", text, None, "pin_origin must be a boolean")
    return b


def parse_config(text: str, overrides: dict | None = None, source: str | None = None) -> RunConfig:
    """Parse and validate a TOML run configuration, filling every default."""
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as err:
        m = re.search(r"line (\d+)", str(err))
        raise ConfigError("<syntax>", int(m.group(1)) if m else None, str(err)) from None
    data = copy.deepcopy(TOP)
    for name, defaults in SECTIONS.items():
        data[name] = copy.deepcopy(defaults)
    for key, val in raw.items():
        if key in SECTIONS:
            _require(isinstance(val, dict), key, text, None, "must be a table")
            for k, v in val.items():
                _require(k in SECTIONS[key], k, text, key, f"unknown key (allowed: {sorted(SECTIONS[key])})")
                data[key][k] = v
        else:
            _require(key in TOP, key, text, None, f"unknown key (allowed: {sorted(set(TOP) | set(SECTIONS))})")
            data[key] = val
    for key, val in (overrides or {}).items():
        if val is not None:
            data[key] = val

    t = text
    _require(_num(data["gamma"]) and 0 <= data["gamma"] < 1, "gamma", t, None, "must satisfy 0 <= gamma < 1")
    _require(data["dim"] in (1, 2), "dim", t, None, "must be 1 or 2")
    _require(data["geometry"] in ("box", "disk"), "geometry", t, None, "must be 'box' or 'disk'")
    _require(_num(data["R"]) and data["R"] > 0, "R", t, None, "must be a real > 0")
    _require(_num(data["h"]) and data["h"] > 0, "h", t, None, "must be a real > 0")
    cells = 2 * data["R"] / data["h"]
    _require(abs(cells - round(cells)) <= 1e-9 * max(1, cells), "h", t, None, f"2R/h must be an integer, got {cells}")
    _require(data["ring"] in (8, 16), "ring", t, None, "must be 8 or 16")
    _require(data["ramp"] in ("linear", "smoothstep"), "ramp", t, None, "must be 'linear' or 'smoothstep'")
    _require(isinstance(data["finalize"], bool), "finalize", t, None, "must be a boolean")
    _require(isinstance(data["deterministic"], bool), "deterministic", t, None, "must be a boolean")

    eps, seq = data["epsilon"], data["eps_sequence"]
    _require(eps is not None or seq is not None, "epsilon", t, None, "one of epsilon or eps_sequence is required")
    _require(eps is None or seq is None, "eps_sequence", t, None, "give epsilon or eps_sequence, not both")
    if eps is not None:
        _require(_num(eps) and eps > 0, "epsilon", t, None, "must be a real > 0")
        data["epsilon"] = float(eps)
    else:
        ok = isinstance(seq, list) and seq and all(_num(e) and e > 0 for e in seq)
        ok = ok and all(b < a for a, b in zip(seq, seq[1:]))
        _require(bool(ok), "eps_sequence", t, None, "must be a non-empty strictly decreasing list of positive reals")
        data["eps_sequence"] = [float(e) for e in seq]
    if data["delta"] is not None:
        dmax = max_admissible_delta(data["gamma"])
        _require(
            _num(data["delta"]) and 0 < data["delta"] <= dmax,
            "delta",
            t,
            None,
            f"must lie in (0, max_admissible_delta(gamma) = {dmax!r}]",
        )
    data["boundary"] = _parse_boundary(data["boundary"], t)

    s = data["solver"]
    _require(_num(s["tol"]) and s["tol"] > 0, "tol", t, "solver", "must be > 0")
    _require(isinstance(s["max_iters"], int) and s["max_iters"] > 0, "max_iters", t, "solver", "must be a positive integer")
    _require(_num(s["damping_safety"]) and 0 < s["damping_safety"] <= 1, "damping_safety", t, "solver", "must lie in (0, 1]")
    _require(isinstance(s["log_every"], int) and s["log_every"] >= 0, "log_every", t, "solver", "must be an integer >= 0")
    _require(s["method"] in ("newton", "explicit"), "method", t, "solver", "must be 'newton' or 'explicit'")
    _require(
        isinstance(s["newton_max_iters"], int) and s["newton_max_iters"] > 0,
        "newton_max_iters",
        t,
        "solver",
        "must be a positive integer",
    )

    a = data["analysis"]
    if a["checks"] is not None:
        ok = isinstance(a["checks"], list) and all(c in CHECKS for c in a["checks"])
        _require(ok, "checks", t, "analysis", f"must be a list drawn from {list(CHECKS)}")
    for key in ("kappa_0", "rho_max", "barrier_delta"):
        _require(a[key] is None or (_num(a[key]) and a[key] > 0), key, t, "analysis", "must be > 0")
    if a["kappa_0"] is not None:
        _require(a["kappa_0"] <= data["R"] / 2, "kappa_0", t, "analysis", f"must be <= R/2 = {data['R'] / 2}")
    for key in ("radii", "eta", "gammas"):
        v = a[key]
        _require(v is None or (isinstance(v, list) and all(_num(x) for x in v)), key, t, "analysis", "must be a list of reals")
    _require(all(e >= 1 for e in a["eta"]), "eta", t, "analysis", "every eta must be >= 1")
    _require(all(0 <= g < 1 for g in a["gammas"]), "gammas", t, "analysis", "every gamma must satisfy 0 <= gamma < 1")
    _require(
        isinstance(a["iota"], list) and all(isinstance(i, int) and i >= 1 and not i & (i - 1) for i in a["iota"]),
        "iota",
        t,
        "analysis",
        "must be a list of powers of 2",
    )
    _require(isinstance(a["refine"], bool), "refine", t, "analysis", "must be a boolean")
    _require(isinstance(a["barrier_samples"], int) and a["barrier_samples"] >= 100, "barrier_samples", t, "analysis", "must be an integer >= 100")
    for key in ("oracle_tol", "density_min", "stability_tol"):
        _require(_num(a[key]) and a[key] > 0, key, t, "analysis", "must be > 0")
    o = data["output"]
    _require(isinstance(o["dir"], str), "dir", t, "output", "must be a string")
    _require(isinstance(o["figures"], bool), "figures", t, "output", "must be a boolean")

    cfg = RunConfig(data=data, text=text, source=source, overrides=dict(overrides or {}))
    try:
        cfg.params()
    except ParameterError as err:
        raise ConfigError(err.field, _line_of(text, None, err.field), str(err)) from None
    return cfg


def load_config(path: Path, overrides: dict | None = None) -> RunConfig:
    return parse_config(path.read_text(), overrides, source=str(path.parent))


def load_table(path: Path, dim: int, base: str | None = None) -> tuple:
    """Tabulated boundary data: a CSV with header x[,y],u."""
    if not path.is_absolute() and base:
        path = Path(base) / path
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if arr.shape[1] != dim + 1:
        raise ConfigError("boundary.path", None, f"table needs {dim + 1} columns, found {arr.shape[1]}")
    return arr[:, :dim], arr[:, dim]


# -- outputs ----------------------------------------------------------------------


def write_field(f: Field, path: Path) -> None:
    """One row per node in C order, header x[,y],u, 17 significant digits."""
    cols = ["x", "y"][: f.grid.dim] + ["u"]
    data = np.column_stack([f.grid.points(), f.values.ravel()])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(cols), comments="")


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def summary_doc(cfg: RunConfig, cmd: str, **values) -> dict:
    keys = ("alpha", "alpha_est", "C_emp", "c_emp", "density_ratio_min", "porosity_tau", "iterations", "residual_sup", "converged")
    doc = {k: values.get(k) for k in keys}
    doc["command"] = cmd
    doc["checks"] = values.get("checks", {})
    doc["config"] = cfg.resolved()
    for k, v in values.items():
        if k not in doc:
            doc[k] = v
    return doc


# -- runners ------------------------------------------------------------------------


@dataclass
class Outcome:
    reports: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)


def _solve(cfg: RunConfig, prob, sink):
    """Penalized solve, or ε-continuation when eps_sequence is set."""
    opts = cfg.solve_options()
    d = cfg.data
    if d["eps_sequence"] is None:
        res = solve_penalized(prob, opts, sink=sink)
        return res.field, prob.params, res, None
    f, trace, results = solve_limit(prob, d["eps_sequence"], opts, sink=sink, finalize=d["finalize"])
    p = prob.params.limit() if d["finalize"] else prob.params.with_epsilon(d["eps_sequence"][-1])
    last = results[-1]
    last.iterations = sum(r.iterations for r in results)
    last.converged = all(r.converged for r in results)
    return f, p, last, trace


def _fit_centers(f: Field, p: ProblemParams):
    band = an.free_boundary(f, an.default_threshold(f, p), side="outer").indices()
    if band:
        return band
    # no zero side (penalized fields): fit at the minimum
    return [f.grid.unflat(int(np.argmin(np.where(f.grid.interior_mask, f.values, np.inf))))]


def default_checks(cfg: RunConfig, p: ProblemParams) -> list:
    checks = ["growth_exponent", "oscillation", "flatness_growth", "lipschitz", "scaling"]
    if cfg["boundary"]["kind"] == "radial_compat" and not p.is_limit:
        checks.insert(0, "radial_oracle")
        checks.append("free_boundary_band")
    if p.is_limit:
        checks += ["gradient_at_fb", "density", "porosity"]
    else:
        checks.append("nondegeneracy")
    return checks


def run_checks(cfg: RunConfig, prob, f: Field, p: ProblemParams, checks) -> list:
    a = cfg.analysis
    reports = []
    ctx = {}
    for name in checks:
        try:
            rep = _one_check(name, cfg, prob, f, p, a, ctx)
        except (an.InsufficientDataError, ParameterError) as err:
            rep = an.AnalysisReport(name=name, passed=False, details={"error": str(err)})
        reports.extend(rep if isinstance(rep, list) else [rep])
    return reports


def _one_check(name, cfg, prob, f, p, a, ctx):
    g = f.grid
    if name == "radial_oracle":
        ex = np.asarray(radial_exact(g.radius, p))
        err = float(np.max(np.abs(f.values - ex)))
        rel = err / float(np.max(np.abs(ex)))
        return an.AnalysisReport(
            name="radial_oracle",
            passed=rel <= a["oracle_tol"],
            constants={"sup_error": err, "relative_error": rel},
            params=p.as_dict(),
            details={"tolerance": a["oracle_tol"]},
        )
    if name == "growth_exponent":
        rep = an.exponent_check(f, p, centers=_fit_centers(f, p), radii=a["radii"])
        ctx["C_fit"] = rep.constants["c_est"]
        return rep
    if name == "oscillation":
        rep = an.oscillation_check(f, p, a["kappa_0"])
        ctx["C_emp"] = rep.constants["C_emp"]
        return rep
    if name == "flatness_growth":
        return an.flatness_growth_check(f, p, a["rho_max"])
    if name == "nondegeneracy":
        rep = an.nondegeneracy_check(f, p)
        ctx["c_emp"] = rep.constants["c_emp"]
        return rep
    if name == "gradient_at_fb":
        return an.gradient_at_fb_check(f, p)
    if name == "free_boundary_band":
        thr = p.c_alpha * p.eps_alpha
        band = an.free_boundary(f, thr)
        rad = band.max_radius()
        return an.AnalysisReport(
            name="free_boundary_band",
            passed=bool(len(band) > 0 and rad <= 2 * g.h * (1 + 1e-9)),
            constants={"band_radius": rad},
            params=p.as_dict(),
            details={"threshold": thr, "nodes": len(band), "limit": 2 * g.h},
        )
    if name == "density":
        return an.density_check(f, p, radii=a["radii"], minimum=a["density_min"])
    if name == "porosity":
        return an.porosity_estimate(f, p, radii=a["radii"], c_emp=ctx.get("c_emp"), C_emp=ctx.get("C_emp"))
    if name == "scaling":
        reps = [an.scaling_residual_check(f, p, i, prob.dirs, fixed=prob.dirichlet_mask) for i in a["iota"]]
        for r in reps:
            r.name = f"scaling_residual_iota_{r.details['iota']}"
        return reps
    if name == "lipschitz":
        return an.lipschitz_check(f, prob.dirs)
    raise ParameterError("checks", f"unknown check {name!r}")


def _summary_values(reports, res=None, p=None) -> dict:
    vals = {}
    if p is not None:
        vals["alpha"] = p.alpha
    if res is not None:
        vals.update(iterations=res.iterations, residual_sup=res.residual_sup, converged=res.converged)
    for r in reports:
        c = r.constants
        if r.name == "growth_exponent":
            vals["alpha_est"] = c.get("alpha_est")
        elif r.name == "oscillation":
            vals["C_emp"] = c.get("C_emp")
        elif r.name == "nondegeneracy":
            vals["c_emp"] = c.get("c_emp")
        elif r.name == "density":
            vals["density_ratio_min"] = c.get("density_ratio_min")
        elif r.name == "porosity":
            vals["porosity_tau"] = c.get("porosity_tau")
    vals["checks"] = {r.name: r.passed for r in reports}
    return vals


def cmd_solve(cfg: RunConfig, out: Path, sink, analyze: bool = False) -> Outcome:
    prob = cfg.problem()
    f, p, res, trace = _solve(cfg, prob, sink)
    write_field(f, out / "field.csv")
    checks = cfg.analysis["checks"]
    if checks is None:
        checks = default_checks(cfg, p) if analyze else ["growth_exponent"]
    reports = run_checks(cfg, prob, f, p, checks)
    conv = an.AnalysisReport(
        name="converged",
        passed=bool(res.converged),
        constants={"iterations": res.iterations, "residual_sup": res.residual_sup},
        details={"start": res.start},
    )
    reports.insert(0, conv)
    if analyze and cfg.analysis["refine"]:
        reports += _refine(cfg, f, p, reports, sink)
    extra = {}
    if trace is not None:
        extra["continuation"] = trace.as_dict()
        write_json(trace.as_dict(), out / "continuation.json")
    for r in reports:
        write_json(r.as_dict(), out / f"report_{r.name}.json")
    doc = summary_doc(cfg, "analyze" if analyze else "solve", **_summary_values(reports, res, p), **extra)
    write_json(doc, out / "summary.json")
    if cfg.data["output"]["figures"]:
        from siflab import plotting

        plotting.field_figure(f, out / "field.png", title=f"gamma={p.gamma:g}, epsilon={p.epsilon:g}")
    return Outcome(reports, doc)


def _refine(cfg: RunConfig, f: Field, p: ProblemParams, reports, sink) -> list:
    """Re-solve at h/2 and compare the empirical constants (drift <= stability_tol)."""
    tol = cfg.analysis["stability_tol"]
    prob2 = cfg.problem(h=cfg["h"] / 2)
    f2, p2, _, _ = _solve(cfg, prob2, sink)
    names = {"oscillation": "C_emp", "flatness_growth": "C_emp", "density": "density_ratio_min"}
    out = []
    coarse = {r.name: r for r in reports}
    fine = {r.name: r for r in run_checks(cfg, prob2, f2, p2, [n for n in names if n in coarse])}
    for name, key in names.items():
        if name not in coarse or name not in fine:
            continue
        a, b = coarse[name].constants.get(key, math.nan), fine[name].constants.get(key, math.nan)
        out.append(
            an.AnalysisReport(
                name=f"{name}_stability",
                passed=an.stable(a, b, tol),
                constants={"h": a, "h/2": b, "drift": an.drift(a, b)},
                details={"tolerance": tol},
            )
        )
    return out


def cmd_verify_barrier(cfg: RunConfig, out: Path) -> Outcome:
    p = cfg.params()
    a = cfg.analysis
    reports = []
    for eta in a["eta"]:
        b = BarrierSpec(eta=float(eta), params=p, delta_override=a["barrier_delta"])
        v = verify_supersolution(b, n_samples=a["barrier_samples"])
        reports.append(
            an.AnalysisReport(
                name=f"barrier_eta_{eta:g}",
                passed=v.passed,
                worst_location=[v.location],
                constants={"max_violation": v.max_violation},
                params=p.as_dict(),
                details=v.as_dict(),
            )
        )
    table = [r.details for r in reports]
    write_json(table, out / "report_barrier.json")
    doc = summary_doc(cfg, "verify-barrier", alpha=p.alpha, checks={r.name: r.passed for r in reports})
    doc["max_admissible_delta"] = max_admissible_delta(p.gamma)
    write_json(doc, out / "summary.json")
    return Outcome(reports, doc)


def cmd_verify_radial(cfg: RunConfig, out: Path) -> Outcome:
    p = cfg.params()
    s = np.geomspace(1e-6, 10.0 * cfg["R"], 10_000)
    reports = []
    for eps in sorted({p.epsilon, 0.0}, reverse=True):
        res = np.asarray(radial_ode_residual(s, p, epsilon=eps))
        scale = (p.c_alpha * (s + eps) ** p.alpha) ** (-p.gamma)
        rel = float(np.max(np.abs(res) / scale))
        reports.append(
            an.AnalysisReport(
                name=f"radial_identity_eps_{eps:g}",
                passed=rel <= 1e-10,
                constants={"max_relative_residual": rel},
                params=p.as_dict(),
                details={"samples": int(s.size), "tolerance": 1e-10},
            )
        )
    for r in reports:
        write_json(r.as_dict(), out / f"report_{r.name}.json")
    doc = summary_doc(cfg, "verify-radial", alpha=p.alpha, checks={r.name: r.passed for r in reports})
    write_json(doc, out / "summary.json")
    return Outcome(reports, doc)


def cmd_sweep(cfg: RunConfig, out: Path, sink) -> Outcome:
    """Exponent table: continuation to the limit for each γ, fit at the free boundary."""
    gammas = cfg.analysis["gammas"] if "gamma" not in cfg.overrides else [cfg["gamma"]]
    rows = []
    reports = []
    d = cfg.data
    seq = d["eps_sequence"] or [d["epsilon"] * 2.0**-k for k in range(7)]
    for g in gammas:
        prob = cfg.problem(gamma=g)
        f, trace, results = solve_limit(prob, seq, cfg.solve_options(), sink=sink, finalize=True)
        p = prob.params.limit()
        rep = an.exponent_check(f, p, centers=_fit_centers(f, p), radii=cfg.analysis["radii"])
        rep.name = f"growth_exponent_gamma_{g:g}"
        reports.append(rep)
        rows.append((g, p.alpha, rep.constants["alpha_est"], rep.details["min_r_squared"], int(rep.passed)))
        write_field(f, out / f"field_gamma_{g:g}.csv")
    np.savetxt(
        out / "sweep.csv",
        np.array(rows, dtype=float),
        fmt="%.17g",
        delimiter=",",
        header="gamma,alpha,alpha_est,r_squared,pass",
        comments="",
    )
    doc = summary_doc(cfg, "sweep", checks={r.name: r.passed for r in reports})
    doc["table"] = [dict(zip(("gamma", "alpha", "alpha_est", "r_squared", "pass"), r)) for r in rows]
    write_json(doc, out / "summary.json")
    if d["output"]["figures"]:
        from siflab import plotting

        plotting.sweep_figure(rows, out / "sweep.png")
    return Outcome(reports, doc)


# -- entry point ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="siflab", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", type=Path, required=True, help="TOML run configuration")
    ap.add_argument("--out", type=Path, default=None, help="output root (overrides [output].dir)")
    ap.add_argument("--threads", type=int, default=1, help="worker threads (the solver is serial; recorded only)")
    ap.add_argument("--h", type=float, default=None, help="grid spacing override")
    ap.add_argument("--gamma", type=float, default=None, help="gamma override")
    ap.add_argument("--figures", action="store_true", help="also render PNG figures next to the dumps")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    overrides = {"h": args.h, "gamma": args.gamma}
    try:
        cfg = load_config(args.config, overrides)
        if args.figures:
            cfg.data["output"]["figures"] = True
        if args.out is not None:
            cfg.data["output"]["dir"] = str(args.out)
    except (ConfigError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    cfg.overrides = {k: v for k, v in overrides.items() if v is not None}

    out = Path(cfg.data["output"]["dir"]) / f"{args.command}-{cfg.digest(args.command)}"
    out.mkdir(parents=True, exist_ok=True)
    logger.info("run directory %s", out)
    t0 = time.perf_counter()
    try:
        with open(out / "progress.jsonl", "w") as stream:
            sink = jsonl_sink(stream)
            if args.command == "solve":
                outcome = cmd_solve(cfg, out, sink)
            elif args.command == "analyze":
                outcome = cmd_solve(cfg, out, sink, analyze=True)
            elif args.command == "verify-barrier":
                outcome = cmd_verify_barrier(cfg, out)
            elif args.command == "verify-radial":
                outcome = cmd_verify_radial(cfg, out)
            else:
                outcome = cmd_sweep(cfg, out, sink)
    except (SolverError, ParameterError, ConfigError) as err:
        trace = getattr(err, "trace", {})
        write_json({"error": str(err), "type": type(err).__name__, "trace": trace, "config": cfg.resolved()}, out / "diagnostics.json")
        print(f"error: {err} (diagnostics in {out / 'diagnostics.json'})", file=sys.stderr)
        return EXIT_SOLVER if isinstance(err, SolverError) else EXIT_CONFIG
    logger.info("%s finished in %.2fs", args.command, time.perf_counter() - t0)
    for r in outcome.reports:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}")
    print(f"output: {out}")
    return EXIT_OK if outcome.passed else EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
