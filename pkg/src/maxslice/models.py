"""Orthogonal-splitted spacetimes ``-beta dt^2 + g_t`` over a periodic fiber.

A :class:`SpacetimeModel` is a pair of smooth callables ``beta(t, coords)``
and ``metric(t, coords)`` plus optional analytic time derivatives.  The
``coords`` argument is a tuple of coordinate arrays (one per fiber axis) and
``t`` broadcasts against them, so the same model can be sampled on a slice
(scalar ``t``) or along a graph (``t`` an array of node heights).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import fiber
from .errors import OutOfInterval

# h_t = cbrt(eps) * max(1, |t|) for derivative-free time differencing
_TIME_STEP = np.finfo(float).eps ** (1.0 / 3.0)


class Family(str, enum.Enum):
    GRW = "GRW"
    MULTIPLY_WARPED = "MultiplyWarped"
    TWISTED = "Twisted"
    STANDARD_STATIC = "StandardStatic"
    LORENTZIAN_PRODUCT = "LorentzianProduct"
    CUSTOM = "Custom"


@dataclass(frozen=True)
class SpacetimeModel:
    """An orthogonal-splitted spacetime ``(I x F, -beta dt^2 + g_t)``.

    Attributes
    ----------
    interval : tuple of float
        Open time interval ``(a, b)``; either end may be infinite.
    dim : int
        Fiber dimension (1 or 2).
    beta, metric : callable
        ``beta(t, coords)`` returns an array broadcast to the common shape of
        ``t`` and ``coords``; ``metric(t, coords)`` returns the fiber metric
        with two leading component axes.
    dbeta_dt, dmetric_dt : callable, optional
        Analytic time derivatives.  Central differences are used when absent.
    family : Family
        Structural tag; ``params`` carries family data such as the warping
        function of a GRW model.
    """

    interval: tuple
    dim: int
    beta: Callable
    metric: Callable
    dbeta_dt: Optional[Callable] = None
    dmetric_dt: Optional[Callable] = None
    family: Family = Family.CUSTOM
    params: dict = field(default_factory=dict)
    name: str = ""

    def contains(self, t):
        a, b = self.interval
        t = np.asarray(t, dtype=float)
        return bool(np.all(np.isfinite(t)) and np.all(t > a) and np.all(t < b))

    def require(self, t):
        if not self.contains(t):
            a, b = self.interval
            t = np.asarray(t, dtype=float)
            raise OutOfInterval(f"time values in [{np.min(t):.6g}, {np.max(t):.6g}] leave I = ({a}, {b})")

    def values(self, t, coords):
        """``(beta, g)`` at times ``t`` over ``coords`` without time derivatives."""
        shape = np.broadcast(np.asarray(t), *coords).shape
        t = np.broadcast_to(np.asarray(t, dtype=float), shape)
        beta = np.broadcast_to(self.beta(t, coords), shape).astype(float)
        g = np.broadcast_to(self.metric(t, coords), (self.dim, self.dim) + shape).astype(float)
        return beta, g

    def sample(self, t, coords):
        """Evaluate ``(beta, g, d_t beta, d_t g)`` at times ``t`` over ``coords``."""
        shape = np.broadcast(np.asarray(t), *coords).shape
        t = np.broadcast_to(np.asarray(t, dtype=float), shape)
        beta = np.broadcast_to(self.beta(t, coords), shape).astype(float)
        g = np.broadcast_to(self.metric(t, coords), (self.dim, self.dim) + shape).astype(float)
        if self.dbeta_dt is not None and self.dmetric_dt is not None:
            dbeta = np.broadcast_to(self.dbeta_dt(t, coords), shape).astype(float)
            dg = np.broadcast_to(self.dmetric_dt(t, coords), g.shape).astype(float)
        else:
            h = _TIME_STEP * np.maximum(1.0, np.abs(t))
            tp, tm = t + h, t - h
            dbeta = (np.broadcast_to(self.beta(tp, coords), shape) - np.broadcast_to(self.beta(tm, coords), shape)) / (2 * h)
            if self.dbeta_dt is not None:
                dbeta = np.broadcast_to(self.dbeta_dt(t, coords), shape).astype(float)
            gp = np.broadcast_to(self.metric(tp, coords), g.shape)
            gm = np.broadcast_to(self.metric(tm, coords), g.shape)
            dg = (gp - gm) / (2 * h)
            if self.dmetric_dt is not None:
                dg = np.broadcast_to(self.dmetric_dt(t, coords), g.shape).astype(float)
        return beta, g, dbeta, dg

    def eval(self, t, grid):
        """Fields ``(beta, g_t, d_t beta, d_t g_t)`` on the slice ``{t} x F``.

        Raises
        ------
        OutOfInterval
            If ``t`` is not in the open interval I.
        """
        self.require(t)
        t = np.full(grid.shape, float(t))
        return self.sample(t, grid.coords)

    def conformally_rescaled(self, alpha):
        """The spacetime ``exp(2 alpha o pi_F) * g_bar`` for a fiber function ``alpha``."""

        def w(coords):
            return np.exp(2.0 * np.asarray(alpha(*coords), dtype=float))

        def beta(t, coords):
            return w(coords) * self.beta(t, coords)

        def metric(t, coords):
            return w(coords) * self.metric(t, coords)

        dbeta = dmetric = None
        if self.dbeta_dt is not None and self.dmetric_dt is not None:
            def dbeta(t, coords):
                return w(coords) * self.dbeta_dt(t, coords)

            def dmetric(t, coords):
                return w(coords) * self.dmetric_dt(t, coords)

        return SpacetimeModel(
            interval=self.interval,
            dim=self.dim,
            beta=beta,
            metric=metric,
            dbeta_dt=dbeta,
            dmetric_dt=dmetric,
            family=Family.CUSTOM,
            params={"base": self, "alpha": alpha},
            name=f"exp(2a)*{self.name or 'model'}",
        )


# -- model families ---------------------------------------------------------

def _flat(dim):
    def gF(coords):
        shape = np.shape(coords[0])
        g = np.zeros((dim, dim) + shape)
        for k in range(dim):
            g[k, k] = 1.0
        return g

    return gF


def _ones(t, coords):
    return np.ones(np.broadcast(np.asarray(t), *coords).shape)


def _zeros(t, coords):
    return np.zeros(np.broadcast(np.asarray(t), *coords).shape)


def grw(f, df=None, dim=1, fiber_metric=None, interval=(-math.inf, math.inf), name="GRW"):
    """Generalized Robertson-Walker spacetime ``-dt^2 + f(t)^2 g_F``."""
    gF = fiber_metric or _flat(dim)

    def metric(t, coords):
        return f(t) ** 2 * gF(coords)

    dmetric = None
    if df is not None:
        def dmetric(t, coords):
            return 2.0 * f(t) * df(t) * gF(coords)

    return SpacetimeModel(
        interval=tuple(interval),
        dim=dim,
        beta=_ones,
        metric=metric,
        dbeta_dt=_zeros,
        dmetric_dt=dmetric,
        family=Family.GRW,
        params={"f": f, "df": df, "fiber_metric": gF},
        name=name,
    )


def de_sitter(dim=1, fiber_metric=None, name="deSitter"):
    """``-dt^2 + cosh(t)^2 g_F``; with a circle of length 2 pi this is 2-D de Sitter space."""
    return grw(np.cosh, np.sinh, dim=dim, fiber_metric=fiber_metric, name=name)


def multiply_warped(warps, dwarps=None, fiber_metric=None, interval=(-math.inf, math.inf), name="MultiplyWarped"):
    """``-dt^2 + sum_i f_i(t)^2 g_i`` with one warping function per fiber axis.

    Axes belonging to the same block share the same function; ``fiber_metric``
    must be block diagonal accordingly (the default flat metric is).
    """
    warps = list(warps)
    dim = len(warps)
    gF = fiber_metric or _flat(dim)

    def scale(t):
        return [np.asarray(f(t), dtype=float) for f in warps]

    def metric(t, coords):
        fs = scale(t)
        g = np.array(gF(coords), dtype=float)
        g = np.broadcast_to(g, (dim, dim) + np.broadcast(np.asarray(t), *coords).shape).copy()
        for k in range(dim):
            for l in range(dim):
                g[k, l] = g[k, l] * fs[k] * fs[l]
        return g

    dmetric = None
    if dwarps is not None:
        dwarps = list(dwarps)

        def dmetric(t, coords):
            fs = scale(t)
            dfs = [np.asarray(df(t), dtype=float) for df in dwarps]
            g = np.array(gF(coords), dtype=float)
            g = np.broadcast_to(g, (dim, dim) + np.broadcast(np.asarray(t), *coords).shape).copy()
            for k in range(dim):
                for l in range(dim):
                    g[k, l] = g[k, l] * (dfs[k] * fs[l] + fs[k] * dfs[l])
            return g

    return SpacetimeModel(
        interval=tuple(interval),
        dim=dim,
        beta=_ones,
        metric=metric,
        dbeta_dt=_zeros,
        dmetric_dt=dmetric,
        family=Family.MULTIPLY_WARPED,
        params={"warps": warps, "dwarps": dwarps, "fiber_metric": gF},
        name=name,
    )


def gaussian_multiwarp(a=(1.0, 1.3), b=(1.0, 0.7), name="GaussianMultiwarp"):
    """Multiply warped model with ``f_i^2 = a_i^2 exp(-b_i^2 t^2)``, one axis per block."""
    warps, dwarps = [], []
    for ai, bi in zip(a, b):
        warps.append(lambda t, ai=ai, bi=bi: ai * np.exp(-0.5 * bi * bi * np.asarray(t) ** 2))
        dwarps.append(lambda t, ai=ai, bi=bi: -bi * bi * np.asarray(t) * ai * np.exp(-0.5 * bi * bi * np.asarray(t) ** 2))
    model = multiply_warped(warps, dwarps, name=name)
    model.params.update(a=tuple(a), b=tuple(b))
    return model


def twisted(lam, dlam=None, dim=1, fiber_metric=None, interval=(-math.inf, math.inf), name="Twisted"):
    """Lorentzian twisted product ``-dt^2 + lambda(t, p) g_F``."""
    gF = fiber_metric or _flat(dim)

    def metric(t, coords):
        return lam(t, coords) * gF(coords)

    dmetric = None
    if dlam is not None:
        def dmetric(t, coords):
            return dlam(t, coords) * gF(coords)

    return SpacetimeModel(
        interval=tuple(interval),
        dim=dim,
        beta=_ones,
        metric=metric,
        dbeta_dt=_zeros,
        dmetric_dt=dmetric,
        family=Family.TWISTED,
        params={"lambda": lam, "dlambda": dlam, "fiber_metric": gF},
        name=name,
    )


def standard_static(h, dim=1, fiber_metric=None, interval=(-math.inf, math.inf), name="StandardStatic"):
    """Standard static spacetime ``-h(p)^2 dt^2 + g_F``."""
    gF = fiber_metric or _flat(dim)

    def beta(t, coords):
        shape = np.broadcast(np.asarray(t), *coords).shape
        return np.broadcast_to(np.asarray(h(coords), dtype=float) ** 2, shape)

    def metric(t, coords):
        shape = np.broadcast(np.asarray(t), *coords).shape
        return np.broadcast_to(gF(coords), (dim, dim) + shape)

    def dmetric(t, coords):
        shape = np.broadcast(np.asarray(t), *coords).shape
        return np.zeros((dim, dim) + shape)

    return SpacetimeModel(
        interval=tuple(interval),
        dim=dim,
        beta=beta,
        metric=metric,
        dbeta_dt=_zeros,
        dmetric_dt=dmetric,
        family=Family.STANDARD_STATIC,
        params={"h": h, "fiber_metric": gF},
        name=name,
    )


def lorentzian_product(dim=1, fiber_metric=None, interval=(-math.inf, math.inf), name="LorentzianProduct"):
    """``-dt^2 + g_F`` with a time-independent fiber metric."""
    model = standard_static(lambda coords: np.ones(np.shape(coords[0])), dim=dim,
                            fiber_metric=fiber_metric, interval=interval, name=name)
    return SpacetimeModel(**{**model.__dict__, "family": Family.LORENTZIAN_PRODUCT})


def custom(beta, metric, dim, dbeta_dt=None, dmetric_dt=None, interval=(-math.inf, math.inf), name="Custom"):
    return SpacetimeModel(
        interval=tuple(interval), dim=dim, beta=beta, metric=metric,
        dbeta_dt=dbeta_dt, dmetric_dt=dmetric_dt, family=Family.CUSTOM, name=name,
    )


# -- slice quantities --------------------------------------------------------

def log_volume_rate(g, dg):
    """``d_t log vol_slice = 1/2 tr(g^{-1} d_t g)`` node by node."""
    _, ginv = fiber.det_inv(g)
    return 0.5 * np.einsum("ij...,ji...->...", ginv, dg)


def vol_slice_divergence(model, t, grid):
    """Spacetime divergence of ``d_t`` on the slice ``{t} x F``.

    ``div(d_t) = d_t log vol_slice + (1/2) d_t beta / beta``.
    """
    beta, g, dbeta, dg = model.eval(t, grid)
    return log_volume_rate(g, dg) + 0.5 * dbeta / beta


def slice_mean_curvature(model, t0, grid):
    """Mean curvature of the level hypersurface ``{t0} x F``.

    ``n H = div(d_t) / sqrt(beta) - d_t beta / (2 beta^(3/2))`` with ``n`` the
    fiber dimension.
    """
    beta, g, dbeta, dg = model.eval(t0, grid)
    div_t = log_volume_rate(g, dg) + 0.5 * dbeta / beta
    nH = div_t / np.sqrt(beta) - 0.5 * dbeta / beta ** 1.5
    return nH / grid.dim


def necessary_slice_conditions(model, t0, grid):
    """Sup norms of ``d_t beta`` and ``d_t log vol_slice`` on ``{t0} x F``.

    Both vanish on a maximal level hypersurface of a model whose slice
    curvature is driven by them with a common sign.
    """
    beta, g, dbeta, dg = model.eval(t0, grid)
    return float(np.max(np.abs(dbeta))), float(np.max(np.abs(log_volume_rate(g, dg))))


# -- monotonicity classification ----------------------------------------------

class Monotonicity(str, enum.Enum):
    NON_CONTRACTING = "NonContracting"
    NON_EXPANDING = "NonExpanding"
    STATIC = "Static"
    TRANSITION = "Transition"
    INDEFINITE = "Indefinite"


@dataclass(frozen=True)
class MonotonicityVerdict:
    """Result of :func:`classify_monotonicity`.

    ``t0`` is set for transitions; ``interval`` is the (possibly degenerate)
    band of static levels separating the two regimes.
    """

    kind: Monotonicity
    t0: Optional[float] = None
    interval: Optional[tuple] = None
    certificate: dict = field(default_factory=dict)

    def to_dict(self):
        return {"kind": self.kind.value, "t0": self.t0,
                "interval": list(self.interval) if self.interval else None,
                "certificate": dict(self.certificate)}


_NC, _NE, _BOTH = 1, -1, 0


def _state(model, t, grid, tol):
    beta, g, dbeta, dg = model.sample(np.full(grid.shape, float(t)), grid.coords)
    gnorm = np.sqrt(np.sum(g * g, axis=(0, 1)))
    lam = fiber.eigenvalues(dg)
    eps_g = tol * gnorm
    eps_b = tol * np.abs(beta)
    nc = np.all(dbeta <= eps_b) and np.all(lam[0] >= -eps_g)
    ne = np.all(dbeta >= -eps_b) and np.all(lam[-1] <= eps_g)
    stats = (float(dbeta.min()), float(dbeta.max()), float(lam[0].min()), float(lam[-1].max()))
    if nc and ne:
        return _BOTH, stats
    if nc:
        return _NC, stats
    if ne:
        return _NE, stats
    return None, stats


def _bisect_boundary(model, grid, tol, lo, hi, inside, locate):
    """Shrink ``[lo, hi]`` around the last level where ``inside(state)`` holds."""
    while hi - lo > locate:
        mid = 0.5 * (lo + hi)
        if inside(_state(model, mid, grid, tol)[0]):
            lo = mid
        else:
            hi = mid
    return lo, hi


def classify_monotonicity(model, t_range, grid, tol=1e-10, samples=65, locate=1e-10):
    """Classify the expanding/contracting behaviour of ``model`` over ``t_range``.

    The sign of ``d_t beta`` and the extreme eigenvalues of ``d_t g_t`` are
    sampled on ``samples`` equispaced levels times every grid node.  A
    transition level is located by bisection to ``locate``.

    Returns
    -------
    MonotonicityVerdict
    """
    t_lo, t_hi = map(float, t_range)
    model.require([t_lo, t_hi])
    levels = np.linspace(t_lo, t_hi, samples)
    states, stats = [], []
    for t in levels:
        s, st = _state(model, t, grid, tol)
        states.append(s)
        stats.append(st)
    stats = np.array(stats)
    cert = {
        "dbeta_min": float(stats[:, 0].min()), "dbeta_max": float(stats[:, 1].max()),
        "dg_eig_min": float(stats[:, 2].min()), "dg_eig_max": float(stats[:, 3].max()),
        "levels": int(samples), "t_range": [t_lo, t_hi],
    }
    if any(s is None for s in states):
        return MonotonicityVerdict(Monotonicity.INDEFINITE, certificate=cert)
    if all(s == _BOTH for s in states):
        return MonotonicityVerdict(Monotonicity.STATIC, certificate=cert)
    if all(s in (_NC, _BOTH) for s in states):
        return MonotonicityVerdict(Monotonicity.NON_CONTRACTING, certificate=cert)
    if all(s in (_NE, _BOTH) for s in states):
        return MonotonicityVerdict(Monotonicity.NON_EXPANDING, certificate=cert)

    last_nc = max(i for i, s in enumerate(states) if s == _NC)
    first_ne = min(i for i, s in enumerate(states) if s == _NE)
    coherent = (
        last_nc < first_ne
        and all(s in (_NC, _BOTH) for s in states[:last_nc + 1])
        and all(s == _BOTH for s in states[last_nc + 1:first_ne])
        and all(s in (_NE, _BOTH) for s in states[first_ne:])
    )
    if not coherent:
        return MonotonicityVerdict(Monotonicity.INDEFINITE, certificate=cert)

    left, _ = _bisect_boundary(model, grid, tol, levels[last_nc], levels[last_nc + 1],
                               lambda s: s == _NC, locate)
    _, right = _bisect_boundary(model, grid, tol, levels[first_ne - 1], levels[first_ne],
                                lambda s: s != _NE, locate)
    t0 = 0.5 * (left + right)
    return MonotonicityVerdict(Monotonicity.TRANSITION, t0=float(t0), interval=(float(left), float(right)),
                               certificate=cert)
