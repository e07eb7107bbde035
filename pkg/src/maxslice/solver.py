"""Damped Newton and pseudo-time relaxation for ``H(u) = 0`` on compact fibers.

Both solvers treat the spacelike condition as a hard constraint: trial
iterates that leave the interval, lose spacelikeness or fall below the
margin floor are rejected by backtracking.  Non-existence is reported when
the mean height drifts monotonically across a window of accepted steps while
the residual stagnates.
"""

from __future__ import annotations

import enum
import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Optional

import networkx as nx
import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import MaxsliceError, NotSpacelike, SingularSystem, Stalled
from .fiber import grad_components
from .geometry import SpacelikeGraph, _alpha_values
from .models import Family

logger = logging.getLogger(__name__)


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    NO_SOLUTION = "NoSolutionDetected"
    MAX_ITERS = "MaxIters"
    LOST_SPACELIKE = "LostSpacelike"


@dataclass(frozen=True)
class SolverParams:
    """Tolerances and step controls shared by Newton and the relaxation flow."""

    tol_residual: float = 1e-9
    tol_step: float = 1e-10
    max_iters: int = 200
    max_flow_iters: int = 20000
    damping: float = 1.0
    backtrack: float = 0.5
    max_backtracks: int = 30
    armijo: float = 1e-4
    margin_floor: float = 0.1
    jacobian_eps: float = 1e-6
    dense_limit: int = 2048
    flow_cfl: float = 0.5
    flow_dt_max: float = 0.1
    flow_mean_step_max: float = 0.1
    flow_max_change: float = 0.01
    min_flow_dt: float = 1e-14
    drift_window: int = 50
    drift_rel_decrease: float = 0.01
    newton_stall_window: int = 10
    newton_stall_ratio: float = 0.9
    slice_tol: float = 1e-6

    def __post_init__(self):
        for name in ("tol_residual", "tol_step", "jacobian_eps", "slice_tol", "flow_cfl"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")

    def with_overrides(self, **kw):
        return replace(self, **kw)


@dataclass
class SolverReport:
    status: Status
    iterations: int
    residual_history: list = field(default_factory=list)
    margin_history: list = field(default_factory=list)
    drift: list = field(default_factory=list)
    step_kinds: list = field(default_factory=list)
    classification: Optional[str] = None
    t0: Optional[float] = None
    slice_deviation: Optional[float] = None
    method: str = "newton"

    @property
    def final_residual(self):
        return self.residual_history[-1] if self.residual_history else math.nan

    @property
    def converged(self):
        return self.status == Status.CONVERGED

    @property
    def is_slice(self):
        return self.classification == "Slice"

    def to_dict(self):
        return {
            "status": self.status.value,
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "classification": self.classification,
            "t0": self.t0,
            "slice_deviation": self.slice_deviation,
            "method": self.method,
            "residual_history": list(self.residual_history),
            "margin_history": list(self.margin_history),
            "drift": list(self.drift),
        }


# -- residuals ------------------------------------------------------------------

class MaximalResidual:
    """``u -> H(u)`` for a fixed model and grid."""

    def __init__(self, model, grid):
        self.model, self.grid = model, grid

    def graph(self, u):
        return SpacelikeGraph(u, self.model, self.grid)

    def __call__(self, u):
        return self.graph(u).mean_curvature()


class PrescribedResidual(MaximalResidual):
    """``u -> H~(u) - e^{-a} g_F(Da, Du) / (f(u) sqrt(f(u)^2 - |Du|^2))`` on a GRW base.

    ``H~`` is the mean curvature in ``exp(2a) (-dt^2 + f^2 g_F)`` obtained
    from the base mean curvature through the conformal relation.
    """

    def __init__(self, model, grid, alpha):
        if model.family != Family.GRW:
            raise ValueError("the prescribed-curvature equation is posed over a GRW base")
        super().__init__(model, grid)
        self.alpha = _alpha_values(alpha, grid)
        self.dalpha = grad_components(self.alpha, grid)
        self.f = model.params["f"]
        self.gF = np.broadcast_to(model.params["fiber_metric"](grid.coords), (grid.dim, grid.dim) + grid.shape)

    def prescribed(self, u):
        du = grad_components(u, self.grid)
        fu = np.asarray(self.f(u), dtype=float)
        Du2 = np.einsum("ij...,i...,j...->...", _inv(self.gF), du, du)
        cross = np.einsum("ij...,i...,j...->...", _inv(self.gF), self.dalpha, du)
        return np.exp(-self.alpha) * cross / (fu * np.sqrt(fu * fu - Du2))

    def __call__(self, u):
        graph = self.graph(u)
        return graph.conformal_mean_curvature(self.alpha) - self.prescribed(u)


def _inv(g):
    from .fiber import det_inv

    return det_inv(g)[1]


# -- Jacobian by coloured finite differences --------------------------------------

@lru_cache(maxsize=32)
def _coloring(sizes):
    """Distance-2 colouring of the periodic 3^d stencil graph."""
    idx = np.arange(int(np.prod(sizes))).reshape(sizes)
    offsets = [o for o in np.ndindex(*(3,) * len(sizes))]
    rows, cols = [], []
    for o in offsets:
        shift = tuple(k - 1 for k in o)
        nb = np.roll(idx, shift, axis=tuple(range(len(sizes))))
        rows.append(idx.ravel())
        cols.append(nb.ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    n = idx.size
    pattern = sp.csr_matrix((np.ones_like(rows, dtype=float), (rows, cols)), shape=(n, n))
    pattern.data[:] = 1.0
    overlap = (pattern.T @ pattern).tocoo()
    graph = nx.Graph()
    graph.add_nodes_from(range(n))
    graph.add_edges_from((i, j) for i, j in zip(overlap.row, overlap.col) if i < j)
    colors = nx.coloring.greedy_color(graph, strategy="largest_first")
    color = np.array([colors[i] for i in range(n)])
    pattern = pattern.tocoo()
    return color, pattern.row.copy(), pattern.col.copy()


def fd_jacobian(residual, u, eps=1e-6):
    """Sparse Jacobian of ``residual`` at ``u`` by coloured central differences."""
    shape = u.shape
    color, rows, cols = _coloring(tuple(shape))
    flat = u.ravel()
    step = eps * np.maximum(1.0, np.abs(flat))
    vals = np.empty(rows.shape)
    for c in range(int(color.max()) + 1):
        mask = color == c
        up = flat.copy()
        um = flat.copy()
        up[mask] += step[mask]
        um[mask] -= step[mask]
        diff = (residual(up.reshape(shape)).ravel() - residual(um.reshape(shape)).ravel())
        sel = mask[cols]
        vals[sel] = diff[rows[sel]] / (2.0 * step[cols[sel]])
    n = flat.size
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _solve_linear(J, rhs, dense_limit):
    n = J.shape[0]
    if n <= dense_limit:
        x, *_ = scipy.linalg.lstsq(J.toarray(), rhs, cond=1e-13, lapack_driver="gelsd")
        return x
    try:
        x = spla.splu(J.tocsc()).solve(rhs)
        if np.all(np.isfinite(x)) and np.linalg.norm(J @ x - rhs) <= 1e-8 * np.linalg.norm(rhs):
            return x
    except RuntimeError:
        pass
    x = spla.lsmr(J, rhs, atol=1e-14, btol=1e-14, maxiter=20 * n)[0]
    if not np.all(np.isfinite(x)):
        raise SingularSystem("Newton system could not be solved")
    return x


# -- shared helpers ----------------------------------------------------------------

def _admissible(residual, u, floor):
    """Return ``(graph, H)`` if ``u`` is a valid iterate, otherwise ``None``."""
    model = residual.model
    if not np.all(np.isfinite(u)) or not model.contains(u):
        return None
    try:
        with np.errstate(all="ignore"):
            graph = residual.graph(u)
            if not graph.is_spacelike or graph.margin < floor:
                return None
            H = residual(u)
    except MaxsliceError:
        return None
    if not np.all(np.isfinite(H)):
        return None
    return graph, H


def flow_weight(graph):
    """Node weight ``lambda_min(g_u) / (beta N^0)``.

    It scales the principal part of the flow to unit diffusivity and goes
    to zero at the light cone.
    """
    beta = graph._ambient[0]
    N0 = graph.normal.time
    return graph.margin_field / (beta * N0)


def flow_dt(grid, params):
    h = min(grid.spacings)
    return min(params.flow_dt_max, params.flow_cfl * grid.dim * h * h / (2.0 * grid.dim))


def _classify(u, report, params):
    dev = float(np.max(np.abs(u - np.mean(u))))
    report.slice_deviation = dev
    if dev < params.slice_tol:
        report.classification = "Slice"
        report.t0 = float(np.mean(u))
    else:
        report.classification = "NonSlice"
        report.t0 = None


def _stagnant(report, window, rel_decrease):
    if len(report.residual_history) < window + 1:
        return False
    res = report.residual_history[-(window + 1):]
    return (res[0] - res[-1]) < rel_decrease * res[0]


def _drifting(report, window, rel_decrease):
    """Sustained monotone mean drift with a stagnating residual over the last ``window`` steps."""
    if len(report.drift) < window + 1:
        return False
    means = np.asarray(report.drift[-(window + 1):])
    steps = np.diff(means)
    monotone = np.all(steps > 0) or np.all(steps < 0)
    # a mean settling onto a root slows down geometrically; a genuine drift does not
    half = steps.size // 2
    sustained = abs(np.sum(steps[half:])) >= 0.5 * abs(np.sum(steps[:half]))
    monotone = monotone and sustained
    return bool(monotone and _stagnant(report, window, rel_decrease))


def _finish(residual, u, report, params):
    graph = residual.graph(u)
    if report.status == Status.CONVERGED:
        # re-verify from scratch rather than trusting the iteration
        H = residual(graph.u)
        if not (graph.is_spacelike and np.max(np.abs(H)) < params.tol_residual):
            report.status = Status.MAX_ITERS
        else:
            _classify(graph.u, report, params)
    return graph, report


def _initial(residual, u0):
    u = np.array(u0, dtype=float)
    residual.model.require(u)
    graph = residual.graph(u)
    if not graph.is_spacelike:
        raise NotSpacelike(f"initial graph is not spacelike (margin {graph.margin:.3e})")
    return u, graph


# -- relaxation flow -------------------------------------------------------------

def _flow_step(residual, u, H, graph, params, floor, dt, mean_newton=True):
    """One explicit relaxation step.  Returns ``(u_new, graph, H_new)`` or ``None``."""
    v = flow_weight(graph) * H
    # resolve fast drifts: no node moves by more than flow_max_change per step
    dt = min(dt, params.flow_max_change / max(float(np.max(np.abs(v))), 1e-300))
    fluct = v - np.mean(v)
    mean_step = dt * float(np.mean(v))
    if mean_newton:
        mH = float(np.mean(H))
        delta = 1e-6 * max(1.0, abs(float(np.mean(u))))
        probe = _admissible(residual, u + delta, -np.inf)
        if probe is not None:
            slope = (float(np.mean(probe[1])) - mH) / delta
            # the plain flow repels the mean wherever slice curvature grows with t;
            # a near-zero slope (no nearby root) leaves the plain flow in charge
            if slope != 0.0:
                newton = -mH / slope
                cap = params.flow_mean_step_max
                if math.isfinite(newton) and abs(newton) <= 100.0 * cap:
                    mean_step = min(max(newton, -cap), cap)
    while dt >= params.min_flow_dt:
        trial = u + dt * fluct + mean_step
        ok = _admissible(residual, trial, floor)
        if ok is not None:
            return trial, ok[0], ok[1], dt
        dt *= 0.5
        mean_step *= 0.5
    return None


def flow_relax(model, u0, grid, params=None, residual=None):
    """Pseudo-time relaxation ``u <- u + dt W(u) H(u)`` with a stabilised mean.

    The mean-free part of ``W H`` is advanced explicitly under a parabolic
    CFL limit.  The mean height is moved by a scalar secant-Newton step on
    the mean residual when that step is small, and by the plain flow
    otherwise; the explicit flow alone is unstable for the mean mode
    whenever slice curvature increases with ``t``.

    Raises
    ------
    NotSpacelike
        If ``u0`` is not spacelike.
    Stalled
        If the step size collapses below ``params.min_flow_dt``.
    """
    params = params or SolverParams()
    residual = residual or MaximalResidual(model, grid)
    u, graph = _initial(residual, u0)
    floor = params.margin_floor * graph.margin
    H = residual(u)
    base_dt = flow_dt(grid, params)
    report = SolverReport(Status.MAX_ITERS, 0, method="flow")
    last_step = math.inf
    for it in range(params.max_flow_iters + 1):
        r = float(np.max(np.abs(H)))
        report.residual_history.append(r)
        report.margin_history.append(graph.margin)
        report.drift.append(float(np.mean(u)))
        report.iterations = it
        if r < params.tol_residual and (it == 0 or last_step < params.tol_step):
            report.status = Status.CONVERGED
            break
        if _drifting(report, params.drift_window, params.drift_rel_decrease):
            report.status = Status.NO_SOLUTION
            break
        if it == params.max_flow_iters:
            break
        out = _flow_step(residual, u, H, graph, params, floor, base_dt)
        if out is None:
            raise Stalled("relaxation step collapsed below the minimum size")
        u_new, graph, H, _ = out
        last_step = float(np.max(np.abs(u_new - u)))
        u = u_new
        report.step_kinds.append("flow")
    return _finish(residual, u, report, params)


# -- damped Newton --------------------------------------------------------------

def _newton(residual, u0, params, method):
    u, graph = _initial(residual, u0)
    floor = params.margin_floor * graph.margin
    H = residual(u)
    base_dt = flow_dt(residual.grid, params)
    report = SolverReport(Status.MAX_ITERS, 0, method=method)
    last_step = math.inf
    stepped = False
    relaxing = False
    newton_steps = flow_steps = 0
    for it in itertools.count():
        r = float(np.max(np.abs(H)))
        report.residual_history.append(r)
        report.margin_history.append(graph.margin)
        report.drift.append(float(np.mean(u)))
        report.iterations = it
        if r < params.tol_residual and (not stepped or last_step < params.tol_step):
            report.status = Status.CONVERGED
            break
        if _drifting(report, params.drift_window, params.drift_rel_decrease):
            report.status = Status.NO_SOLUTION
            break
        if newton_steps >= params.max_iters or flow_steps >= params.max_flow_iters:
            break

        # Newton crawling far from a root: hand over to the relaxation flow, whose
        # mean drift is what signals non-existence; resume once it has halved |H|
        if relaxing is False:
            w = params.newton_stall_window
            hist = report.residual_history
            if r >= params.tol_residual and len(hist) > w and r > params.newton_stall_ratio * hist[-1 - w]:
                relaxing = r
        elif r < 0.5 * relaxing:
            relaxing = False
        accepted = None
        if relaxing is False:
            J = fd_jacobian(residual, u, params.jacobian_eps)
            delta = _solve_linear(J, -H.ravel(), params.dense_limit).reshape(u.shape)
            phi = 0.5 * float(np.sum(H * H))
            lam = params.damping
        if relaxing is False and np.all(np.isfinite(delta)):
            for _ in range(params.max_backtracks):
                ok = _admissible(residual, u + lam * delta, floor)
                if ok is not None:
                    phi_new = 0.5 * float(np.sum(ok[1] * ok[1]))
                    if phi_new <= (1.0 - 2.0 * params.armijo * lam) * phi:
                        accepted = (u + lam * delta, ok[0], ok[1])
                        break
                lam *= params.backtrack
        if accepted is not None:
            kind = "newton"
        else:
            if r < params.tol_residual:
                # no further decrease is available: the iterate is polished
                report.status = Status.CONVERGED
                break
            out = _flow_step(residual, u, H, graph, params, floor, base_dt, mean_newton=False)
            if out is None:
                report.status = Status.LOST_SPACELIKE
                break
            accepted = out[:3]
            kind = "flow"
        u_new, graph, H = accepted
        last_step = float(np.max(np.abs(u_new - u)))
        u = u_new
        stepped = True
        report.step_kinds.append(kind)
        if kind == "newton":
            newton_steps += 1
        else:
            flow_steps += 1
        logger.debug("%s it=%d |H|=%.3e step=%.3e", method, it, r, last_step)
    return _finish(residual, u, report, params)


def solve_maximal(model, u0, grid, params=None):
    """Solve ``H(u) = 0`` by damped Newton with a coloured finite-difference Jacobian.

    Returns
    -------
    (SpacelikeGraph, SolverReport)

    Raises
    ------
    NotSpacelike
        If ``u0`` is not spacelike.
    SingularSystem
        If a Newton system cannot be solved at all.
    """
    params = params or SolverParams()
    return _newton(MaximalResidual(model, grid), u0, params, "newton")


def solve_prescribed(model, alpha, u0, grid, params=None):
    """Solve the prescribed mean curvature equation over a GRW base.

    ``alpha`` is a fiber function (node values or a callable of the
    coordinates).  The unknown graph has mean curvature
    ``e^{-a} g_F(Da, Du) / (f(u) sqrt(f(u)^2 - |Du|^2))`` in the conformal
    spacetime ``exp(2a)(-dt^2 + f(t)^2 g_F)``.
    """
    params = params or SolverParams()
    return _newton(PrescribedResidual(model, grid, alpha), u0, params, "prescribed")


# -- random initial graphs ----------------------------------------------------------

def random_initial_graph(model, grid, rng, center, modes=3, budget_fraction=0.25, amplitude_cap=None):
    """Band-limited trigonometric perturbation of the slice ``t = center``.

    The amplitude is at most ``budget_fraction`` of the local spacelike budget
    (slope) and of the distance from ``center`` to the interval ends.
    """
    coords = grid.coords
    psi = np.zeros(grid.shape)
    ranges = [range(0, modes + 1)] * grid.dim
    for k in np.ndindex(*[modes + 1] * grid.dim):
        if sum(k) == 0:
            continue
        phase = sum(2 * np.pi * kk * c / L for kk, c, L in zip(k, coords, grid.lengths))
        a, b = rng.standard_normal(2) / (1.0 + sum(kk * kk for kk in k))
        psi += a * np.cos(phase) + b * np.sin(phase)
    psi /= np.max(np.abs(psi))
    beta, g = model.values(np.full(grid.shape, center), coords)
    dpsi = grad_components(psi, grid)
    slope = np.sqrt(beta * np.einsum("ij...,i...,j...->...", _inv(g), dpsi, dpsi))
    scale = budget_fraction / float(np.max(slope))
    a, b = model.interval
    room = min(center - a, b - center)
    if math.isfinite(room):
        scale = min(scale, budget_fraction * room)
    if amplitude_cap is not None:
        scale = min(scale, amplitude_cap)
    u = center + scale * psi
    while not SpacelikeGraph(u, model, grid).is_spacelike:
        scale *= 0.5
        u = center + scale * psi
    return u
