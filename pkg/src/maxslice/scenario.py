"""Declarative scenarios: TOML files describing a model, a fiber and a task list.

A scenario file looks like::

    name = "grw_cubic"
    seed = 0

    [model]
    family = "grw"
    f = "2 + t^3"
    interval = [-1.0, 1.0]

    [fiber]
    dim = 1
    sizes = [64]
    lengths = ["2*pi"]

    [[tasks]]
    kind = "SolveMaximal"
    inits = 10
    [tasks.expect]
    status = "Converged"
    classification = "Slice"
    t0 = 0.0

Coefficients are strings in the expression grammar of :mod:`maxslice.expr`.
Every task produces a JSON-ready result dictionary; ``expect`` tables are
turned into assertion records with expected and actual values.
"""

from __future__ import annotations

import json
import math
import re
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, geometry, models, solver
from .errors import MaxsliceError, ScenarioError
from .expr import Expression
from .fiber import FiberGrid, grad_components, integrate
from .geometry import SpacelikeGraph, VariationField, tilted_geodesic_graph
from .models import classify_monotonicity

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

SCHEMA_VERSION = "1.0"
TABLE_COLUMNS = ("scenario", "seed", "status", "final_residual", "slice_deviation", "t0", "iterations")
TASK_KINDS = ("Classify", "SolveMaximal", "SolvePrescribed", "IdentityChecks", "RefinementStudy")
FAMILIES = ("grw", "de_sitter", "multiply_warped", "twisted", "standard_static", "lorentzian_product", "custom")

_TOP_KEYS = {"name", "description", "tags", "seed", "model", "fiber", "solver", "tasks"}
_TASK_KEYS = {
    "Classify": {"kind", "t_range", "samples", "expect"},
    "SolveMaximal": {"kind", "inits", "initial", "center", "tilt", "noise", "method", "expect"},
    "SolvePrescribed": {"kind", "inits", "initial", "center", "tilt", "noise", "method", "alpha", "expect"},
    "IdentityChecks": {"kind", "sizes", "graph", "tilt", "alpha", "alpha_seeds", "expect"},
    "RefinementStudy": {"kind", "sizes", "graph", "tilt", "expect"},
}
_SOLVE_EXPECT = {"status", "min_fraction", "classification", "t0", "t0_tol", "max_residual", "min_nonslice", "agree"}
_EXPECT_KEYS = {
    "Classify": {"kind", "t0", "t0_tol"},
    "SolveMaximal": _SOLVE_EXPECT,
    "SolvePrescribed": _SOLVE_EXPECT,
    "IdentityChecks": {"max_normal", "max_gradient", "max_divergence", "min_order"},
    "RefinementStudy": {"min_order", "max_residual"},
}


# -- loading -------------------------------------------------------------------

def _locate(text, needle):
    """1-based (line, column) of the first occurrence of ``needle`` in ``text``."""
    if text is None:
        return None, None
    idx = text.find(needle)
    if idx < 0:
        return None, None
    line = text.count("\n", 0, idx) + 1
    col = idx - (text.rfind("\n", 0, idx) + 1) + 1
    return line, col


@dataclass
class Scenario:
    """A parsed scenario file (raw tables plus source text for error locations)."""

    name: str
    data: dict
    source: str = ""
    path: str = ""
    description: str = ""
    tags: tuple = ()
    seed: int = 0

    def error(self, message, needle=None):
        line, col = _locate(self.source, needle) if needle else (None, None)
        return ScenarioError(message, line=line, column=col)

    @property
    def tasks(self):
        return list(self.data.get("tasks", []))


def parse_scenario(text, path=""):
    """Parse scenario text, raising :class:`ScenarioError` with a location on failure."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+), column (\d+)", str(exc))
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        raise ScenarioError(f"{path or 'scenario'}: {exc}", line=line, column=col) from None
    scen = Scenario(name=str(data.get("name", Path(path).stem or "scenario")), data=data, source=text, path=str(path))
    for key in data:
        if key not in _TOP_KEYS:
            raise scen.error(f"unknown top-level key {key!r}", key)
    scen.description = str(data.get("description", ""))
    scen.tags = tuple(data.get("tags", ()))
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise scen.error("seed must be a non-negative integer", "seed")
    scen.seed = seed
    for task in scen.tasks:
        kind = task.get("kind")
        if kind not in TASK_KINDS:
            raise scen.error(f"unknown task kind {kind!r}; expected one of {', '.join(TASK_KINDS)}", f"{kind}")
        for key in task:
            if key not in _TASK_KEYS[kind]:
                raise scen.error(f"unknown key {key!r} in {kind} task", key)
        expect = task.get("expect", {})
        if not isinstance(expect, dict):
            raise scen.error(f"expect of a {kind} task must be a table", "expect")
        for key in expect:
            if key not in _EXPECT_KEYS[kind]:
                raise scen.error(f"unknown expectation {key!r} in {kind} task", key)
    # build once so that malformed models or fibers fail at load time
    build_grid(scen)
    build_model(scen)
    return scen


def load_scenario(path):
    path = Path(path)
    return parse_scenario(path.read_text(encoding="utf-8"), path=str(path))


def _expr(scen, source, where):
    try:
        return Expression(source)
    except ScenarioError as exc:
        line, col = _locate(scen.source, str(source))
        if line is not None and exc.column is not None:
            col += exc.column - 1  # column inside the expression string
        raise ScenarioError(f"{where}: {exc.message}", line=line, column=col) from None


def _number(scen, value, where):
    if isinstance(value, (int, float)):
        return float(value)
    e = _expr(scen, value, where)
    if e.names:
        raise scen.error(f"{where} must be a constant expression", str(value))
    return float(e())


def _metric_callable(scen, table, dim, where):
    """Base fiber metric from a matrix of expressions in ``x, y``."""
    if table is None:
        return None
    if len(table) != dim or any(len(row) != dim for row in table):
        raise scen.error(f"{where} must be a {dim}x{dim} matrix", "metric")
    entries = [[_expr(scen, str(v), where) for v in row] for row in table]
    for row in entries:
        for e in row:
            if e.depends_on("t"):
                raise scen.error(f"{where} may not depend on t", e.source)

    def gF(coords):
        x = coords[0]
        y = coords[1] if len(coords) > 1 else 0.0
        shape = np.shape(x)
        return np.array([[np.broadcast_to(e(0.0, x, y), shape) for e in row] for row in entries])

    return gF


def build_grid(scen, sizes=None):
    fib = scen.data.get("fiber")
    if fib is None:
        raise scen.error("missing [fiber] table")
    dim = fib.get("dim", len(fib.get("sizes", [])) or 1)
    sizes = tuple(sizes or fib.get("sizes", [64] * dim))
    lengths = tuple(_number(scen, L, "fiber.lengths") for L in fib.get("lengths", ["2*pi"] * dim))
    if len(sizes) != dim or len(lengths) != dim:
        raise scen.error("fiber.sizes and fiber.lengths must have dim entries", "sizes")
    try:
        return FiberGrid(sizes, lengths)
    except ValueError as exc:
        raise scen.error(f"invalid fiber: {exc}", "[fiber]") from None


def _tx(fn):
    """Adapt an expression in ``(t, x, y)`` to the ``(t, coords)`` model convention."""

    def call(t, coords):
        x = coords[0]
        y = coords[1] if len(coords) > 1 else 0.0
        return fn(t, x, y)

    return call


def _t_only(fn):
    return lambda t: fn(t, 0.0, 0.0) if np.ndim(t) == 0 else fn(np.asarray(t), np.zeros(np.shape(t)), 0.0)


def build_model(scen):
    spec = scen.data.get("model")
    if spec is None:
        raise scen.error("missing [model] table")
    family = spec.get("family")
    if family not in FAMILIES:
        raise scen.error(f"unknown model family {family!r}; expected one of {', '.join(FAMILIES)}", "family")
    dim = build_grid(scen).dim
    interval = tuple(_number(scen, v, "model.interval") for v in spec.get("interval", [-math.inf, math.inf]))
    if len(interval) != 2 or not interval[0] < interval[1]:
        raise scen.error("model.interval must be [a, b] with a < b", "interval")
    gF = _metric_callable(scen, spec.get("fiber_metric", scen.data["fiber"].get("metric")), dim, "fiber metric")
    name = scen.name

    def need(key):
        if key not in spec:
            raise scen.error(f"family {family!r} needs model.{key}", "family")
        return _expr(scen, str(spec[key]), f"model.{key}")

    if family == "grw":
        f = need("f")
        df = f.diff("t")
        model = models.grw(_t_only(f), _t_only(df), dim=dim, fiber_metric=gF, interval=interval, name=name)
    elif family == "de_sitter":
        model = models.de_sitter(dim=dim, fiber_metric=gF, name=name)
        if "interval" in spec:
            model = models.SpacetimeModel(**{**model.__dict__, "interval": interval})
    elif family == "multiply_warped":
        raw = spec.get("warps")
        if not isinstance(raw, list) or len(raw) != dim:
            raise scen.error(f"model.warps must list {dim} expressions, one per fiber axis", "warps")
        ws = [_expr(scen, str(w), "model.warps") for w in raw]
        model = models.multiply_warped([_t_only(w) for w in ws], [_t_only(w.diff("t")) for w in ws],
                                       fiber_metric=gF, interval=interval, name=name)
    elif family == "twisted":
        lam = need("lambda")
        model = models.twisted(_tx(lam), _tx(lam.diff("t")), dim=dim, fiber_metric=gF, interval=interval, name=name)
    elif family == "standard_static":
        h = need("h")
        if h.depends_on("t"):
            raise scen.error("model.h of a static model may not depend on t", h.source)
        model = models.standard_static(lambda c: _tx(h)(0.0, c), dim=dim, fiber_metric=gF, interval=interval, name=name)
    elif family == "lorentzian_product":
        model = models.lorentzian_product(dim=dim, fiber_metric=gF, interval=interval, name=name)
    else:
        beta = need("beta")
        rows = spec.get("metric")
        if not isinstance(rows, list) or len(rows) != dim or any(len(r) != dim for r in rows):
            raise scen.error(f"model.metric must be a {dim}x{dim} matrix of expressions", "metric")
        ents = [[_expr(scen, str(v), "model.metric") for v in r] for r in rows]

        def metric(t, coords, ents=ents):
            shape = np.broadcast(np.asarray(t), *coords).shape
            return np.array([[np.broadcast_to(_tx(e)(t, coords), shape) for e in r] for r in ents])

        def dmetric(t, coords, ents=ents):
            shape = np.broadcast(np.asarray(t), *coords).shape
            return np.array([[np.broadcast_to(_tx(e.diff("t"))(t, coords), shape) for e in r] for r in ents])

        model = models.custom(_tx(beta), metric, dim, _tx(beta.diff("t")), dmetric, interval=interval, name=name)
    return model


def build_params(scen, overrides=None):
    fields = dict(scen.data.get("solver", {}))
    fields.update(overrides or {})
    try:
        return solver.SolverParams(**fields)
    except TypeError as exc:
        raise scen.error(f"invalid solver parameter: {exc}", "[solver]") from None
    except ValueError as exc:
        raise scen.error(f"invalid solver parameter: {exc}", "[solver]") from None


# -- reports -------------------------------------------------------------------

@dataclass
class Check:
    task: int
    name: str
    expected: object
    actual: object
    passed: bool


@dataclass
class RunReport:
    """Outcome of one scenario; ``to_dict``/``from_dict`` round-trip through JSON."""

    scenario: str
    tags: list = field(default_factory=list)
    tasks: list = field(default_factory=list)
    table: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    wall_time: float = 0.0
    schema_version: str = SCHEMA_VERSION

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def failures(self):
        return [c for c in self.checks if not c.passed]

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d.pop("passed", None)
        d["checks"] = [Check(**c) for c in d.get("checks", [])]
        return cls(**d)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _jsonable(x):
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def observed_orders(errors):
    """``log2(e_k / e_{k+1})`` for successive grid doublings."""
    e = np.asarray(errors, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return [float(v) for v in np.log2(e[:-1] / e[1:])]


# -- task runners --------------------------------------------------------------

def _band_limited(grid, rng, modes=3):
    psi = np.zeros(grid.shape)
    for k in np.ndindex(*[modes + 1] * grid.dim):
        if sum(k) == 0:
            continue
        phase = sum(2 * np.pi * kk * c / L for kk, c, L in zip(k, grid.coords, grid.lengths))
        a, b = rng.standard_normal(2) / (1.0 + sum(kk * kk for kk in k))
        psi += a * np.cos(phase) + b * np.sin(phase)
    return psi / np.max(np.abs(psi))


def _graph_values(scen, task, model, grid, rng=None, key="initial"):
    source = task.get(key, "random" if key == "initial" else None)
    if "tilt" in task:
        u = tilted_geodesic_graph(float(task["tilt"]), grid)
    elif source == "random":
        lo, hi = task.get("center", [0.0, 0.0])
        center = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
        return solver.random_initial_graph(model, grid, rng, center)
    elif source is None:
        raise scen.error(f"{task['kind']} task needs '{key}' or 'tilt'", task["kind"])
    else:
        e = _expr(scen, str(source), f"task.{key}")
        x = grid.coords[0]
        y = grid.coords[1] if grid.dim > 1 else 0.0
        u = np.broadcast_to(e(0.0, x, y), grid.shape).astype(float)
    noise = float(task.get("noise", 0.0))
    if noise and rng is not None:
        u = u + noise * _band_limited(grid, rng)
    return u


def _alpha_values(scen, source, grid, rng=None):
    if source == "random":
        return 0.3 * _band_limited(grid, rng)
    e = _expr(scen, str(source), "task.alpha")
    if e.depends_on("t"):
        raise scen.error("alpha is a fiber function and may not depend on t", e.source)
    x = grid.coords[0]
    y = grid.coords[1] if grid.dim > 1 else 0.0
    return np.broadcast_to(e(0.0, x, y), grid.shape).astype(float)


def _alpha_callable(values, grid):
    """Exact trigonometric interpolant of node values, usable off the grid."""
    coef = np.fft.fftn(values) / values.size
    freqs = [np.fft.fftfreq(n, d=L / n) * 2 * np.pi for n, L in zip(grid.sizes, grid.lengths)]

    def alpha(*coords):
        out = np.zeros(np.shape(coords[0]), dtype=complex)
        for idx in np.ndindex(*coef.shape):
            c = coef[idx]
            if abs(c) < 1e-15:
                continue
            out += c * np.exp(1j * sum(freqs[k][i] * coords[k] for k, i in enumerate(idx)))
        return out.real

    return alpha


def run_classify(scen, task, model, grid, params):
    t_range = tuple(_number(scen, v, "t_range") for v in task.get("t_range", model.interval))
    verdict = classify_monotonicity(model, t_range, grid, samples=int(task.get("samples", 65)))
    return verdict.to_dict(), []


def _solve_one(kind, task, model, grid, params, u0, alpha_vals):
    method = task.get("method", "newton")
    if kind == "SolvePrescribed":
        if method != "newton":
            residual = solver.PrescribedResidual(model, grid, alpha_vals)
            return solver.flow_relax(model, u0, grid, params, residual=residual)
        return solver.solve_prescribed(model, alpha_vals, u0, grid, params)
    if method == "flow":
        return solver.flow_relax(model, u0, grid, params)
    return solver.solve_maximal(model, u0, grid, params)


def run_solve(scen, task, model, grid, params, seed):
    kind = task["kind"]
    method = task.get("method", "newton")
    if method not in ("newton", "flow", "both"):
        raise scen.error(f"unknown method {method!r}", str(method))
    inits = int(task.get("inits", 1))
    runs, rows = [], []
    alpha_vals = None
    if kind == "SolvePrescribed":
        alpha_vals = _alpha_values(scen, task.get("alpha", "0"), grid)
    for i in range(inits):
        s = seed + i
        rng = np.random.default_rng(s)
        u0 = _graph_values(scen, task, model, grid, rng)
        entry = {"seed": s}
        methods = ("newton", "flow") if method == "both" else (method,)
        for m in methods:
            sub = dict(task, method=m)
            _, rep = _solve_one(kind, sub, model, grid, params, u0, alpha_vals)
            d = rep.to_dict()
            d["drift_monotone"] = _monotone(rep.drift[-params.drift_window:])
            entry[m] = d
        runs.append(entry)
        primary = entry[methods[0]]
        rows.append({
            "scenario": scen.name,
            "seed": s,
            "status": primary["status"],
            "final_residual": primary["final_residual"],
            "slice_deviation": primary["slice_deviation"],
            "t0": primary["t0"],
            "iterations": primary["iterations"],
        })
    return {"method": method, "runs": runs}, rows


def _monotone(values):
    d = np.diff(np.asarray(values, dtype=float))
    return bool(d.size > 0 and (np.all(d > 0) or np.all(d < 0)))


def _graph_for_study(scen, task, model, grid):
    return _graph_values(scen, task, model, grid, rng=np.random.default_rng(scen.seed), key="graph")


def _check_sizes(scen, sizes):
    for n in sizes:
        if n < 8 or n & (n - 1):
            raise scen.error(f"refinement sizes must be powers of two, got {n}", "sizes")


def _grid_family(scen, sizes):
    base = build_grid(scen)
    return [base.with_sizes((n,) * base.dim) for n in sizes]


def run_identities(scen, task, model, grid, params):
    sizes = [int(n) for n in task.get("sizes", [64, 128, 256])]
    _check_sizes(scen, sizes)
    grids = _grid_family(scen, sizes)
    errs = {"gradient": [], "laplacian": [], "normal": [], "divergence": []}
    for g in grids:
        u = _graph_for_study(scen, task, model, g)
        gr = SpacelikeGraph(u, model, g)
        gr.require_spacelike()
        beta = gr._ambient[0]
        errs["gradient"].append(float(np.max(np.abs(gr.time_gradient() + gr.tangential_dt() / beta))))
        errs["laplacian"].append(float(np.max(np.abs(gr.laplacian_t_direct() - gr.laplacian_t_general()))))
        errs["normal"].append(float(max(gr.normal_constraints())))
        X = np.stack([np.sin(c + k) for k, c in enumerate(g.coords)]) * (1.0 + u)
        div = geometry.fiber.divergence(X, gr.induced_metric, g)
        errs["divergence"].append(abs(integrate(div, gr.induced_metric, g)))
    conf = []
    if "alpha" in task:
        nseeds = int(task.get("alpha_seeds", 1))
        for k in range(nseeds):
            es = []
            for g in grids:
                rng = np.random.default_rng(scen.seed + k)
                coarse = grids[0]
                a0 = _alpha_values(scen, task["alpha"], coarse, rng)
                alpha = _alpha_callable(a0, coarse)
                u = _graph_for_study(scen, task, model, g)
                gr = SpacelikeGraph(u, model, g)
                es.append(float(np.max(np.abs(gr.conformal_mean_curvature(alpha) - gr.conformal_mean_curvature_direct(alpha)))))
            conf.append(es)
    result = {
        "sizes": sizes,
        "errors": errs,
        "orders": {k: observed_orders(v) for k, v in errs.items() if k in ("gradient", "laplacian")},
    }
    if conf:
        result["errors"]["conformal"] = conf
        result["orders"]["conformal"] = [observed_orders(e) for e in conf]
    return result, []


def run_refinement(scen, task, model, grid, params):
    sizes = [int(n) for n in task.get("sizes", [64, 128, 256])]
    _check_sizes(scen, sizes)
    residuals = []
    for g in _grid_family(scen, sizes):
        u = _graph_for_study(scen, task, model, g)
        residuals.append(float(np.max(np.abs(SpacelikeGraph(u, model, g).mean_curvature()))))
    return {"sizes": sizes, "residuals": residuals, "orders": observed_orders(residuals)}, []


_RUNNERS = {
    "Classify": run_classify,
    "IdentityChecks": run_identities,
    "RefinementStudy": run_refinement,
}


# -- assertions ------------------------------------------------------------------

def _min_order(orders):
    flat = []
    for o in orders:
        flat.extend(o if isinstance(o, list) else [o])
    return min(flat) if flat else math.nan


def evaluate_expectations(index, task, result, params):
    """Turn a task's ``expect`` table into :class:`Check` records."""
    exp = task.get("expect", {})
    checks = []

    def add(name, expected, actual, ok):
        checks.append(Check(index, name, _jsonable(expected), _jsonable(actual), bool(ok)))

    kind = task["kind"]
    if kind == "Classify":
        if "kind" in exp:  # verdict kind, not the task kind
            add("kind", exp["kind"], result["kind"], result["kind"] == exp["kind"])
        if "t0" in exp:
            tol = float(exp.get("t0_tol", 1e-6))
            t0 = result.get("t0")
            add("t0", exp["t0"], t0, t0 is not None and abs(t0 - exp["t0"]) <= tol)
    elif kind in ("SolveMaximal", "SolvePrescribed"):
        for method in (("newton", "flow") if result["method"] == "both" else (result["method"],)):
            runs = [r[method] for r in result["runs"]]
            conv = [r for r in runs if r["status"] == "Converged"]
            if "status" in exp:
                frac = float(exp.get("min_fraction", 1.0))
                hits = sum(r["status"] == exp["status"] for r in runs)
                add(f"{method}.status", f"{exp['status']} in at least {frac:.0%} of runs",
                    f"{hits}/{len(runs)}", hits >= frac * len(runs) - 1e-12)
            if "classification" in exp:
                bad = [r["classification"] for r in conv if r["classification"] != exp["classification"]]
                add(f"{method}.classification", exp["classification"], bad or "all converged runs match", not bad)
            if "t0" in exp:
                tol = float(exp.get("t0_tol", params.slice_tol))
                t0s = [r["t0"] for r in conv if r["classification"] == "Slice"]
                worst = max((abs(t - exp["t0"]) for t in t0s), default=math.inf)
                add(f"{method}.t0", f"{exp['t0']} +- {tol:g}", worst, worst <= tol)
            if "max_residual" in exp:
                worst = max((r["final_residual"] for r in conv), default=math.inf)
                add(f"{method}.max_residual", exp["max_residual"], worst, worst < float(exp["max_residual"]))
            if "min_nonslice" in exp:
                cap = float(exp.get("max_residual", params.tol_residual))
                hits = sum(r["classification"] == "NonSlice" and r["final_residual"] < cap for r in conv)
                add(f"{method}.min_nonslice", exp["min_nonslice"], hits, hits >= int(exp["min_nonslice"]))
        if exp.get("agree") and result["method"] == "both":
            pairs = [(r["newton"]["classification"], r["flow"]["classification"]) for r in result["runs"]]
            bad = [p for p in pairs if p[0] != p[1]]
            add("newton_flow_agreement", "identical classifications", bad or "all agree", not bad)
    elif kind == "IdentityChecks":
        errs = result["errors"]
        if "max_normal" in exp:
            add("normal", exp["max_normal"], max(errs["normal"]), max(errs["normal"]) < exp["max_normal"])
        if "max_gradient" in exp:
            add("gradient", exp["max_gradient"], max(errs["gradient"]),
                max(errs["gradient"]) < exp["max_gradient"])
        if "max_divergence" in exp:
            add("divergence", exp["max_divergence"], max(errs["divergence"]),
                max(errs["divergence"]) < exp["max_divergence"])
        for name, lo in exp.get("min_order", {}).items():
            got = _min_order(result["orders"].get(name, []))
            add(f"order.{name}", lo, got, got >= lo)
    elif kind == "RefinementStudy":
        if "min_order" in exp:
            got = _min_order(result["orders"])
            add("order", exp["min_order"], got, got >= exp["min_order"])
        if "max_residual" in exp:
            got = result["residuals"][-1]
            add("finest_residual", exp["max_residual"], got, got < exp["max_residual"])
    return checks


# -- driver ----------------------------------------------------------------------

def run_scenario(scen, seed=None, grid_override=None, param_overrides=None):
    """Execute all tasks of a scenario and return a :class:`RunReport`."""
    start = time.perf_counter()
    seed = scen.seed if seed is None else int(seed)
    grid = build_grid(scen, grid_override)
    model = build_model(scen)
    params = build_params(scen, param_overrides)
    report = RunReport(scenario=scen.name, tags=list(scen.tags))
    report.provenance = {
        "package_version": __version__,
        "grid_sizes": list(grid.sizes),
        "grid_lengths": list(grid.lengths),
        "model_family": model.family.value,
        "interval": [float(v) for v in model.interval],
        "tolerances": asdict(params),
        "sigma": geometry.SIGMA,
        "seed": seed,
        "scenario_file": scen.path,
        "tags": list(scen.tags),
    }
    for i, task in enumerate(scen.tasks):
        kind = task["kind"]
        try:
            if kind in ("SolveMaximal", "SolvePrescribed"):
                result, rows = run_solve(scen, task, model, grid, params, seed)
            else:
                result, rows = _RUNNERS[kind](scen, task, model, grid, params)
        except ScenarioError:
            raise
        except MaxsliceError as exc:
            result, rows = {"error": f"{type(exc).__name__}: {exc}"}, []
            report.checks.append(Check(i, "task_error", "no error", result["error"], False))
        result = _jsonable(dict(result, task=kind))
        report.tasks.append(result)
        report.table.extend(_jsonable(rows))
        if "error" not in result:
            report.checks.extend(evaluate_expectations(i, task, result, params))
    report.wall_time = time.perf_counter() - start
    return report


def format_value(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def table_csv(rows):
    lines = [",".join(TABLE_COLUMNS)]
    for row in rows:
        lines.append(",".join(format_value(row.get(c)) for c in TABLE_COLUMNS))
    return "\n".join(lines) + "\n"
