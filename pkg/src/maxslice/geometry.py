"""Spacelike graphs ``{(u(p), p)}`` in an orthogonal-splitted spacetime.

Conventions
-----------
The unit normal is future pointing in the sense ``g_bar(N, d_t) < 0``, so
``g_bar(N, d_t) = -sqrt(beta) cosh(theta)`` and, writing ``Du`` for the
``g_t``-gradient of ``u`` at ``t = u(p)``::

    N = a (d_t + beta Du),    a = 1 / sqrt(beta (1 - beta |Du|^2)).

The shape operator is ``A X = -nabla_X N`` and ``H = -(1/n) tr A``.  With this
orientation the Weingarten trace of a level hypersurface equals ``SIGMA``
times the level-set formula ``n H = div(d_t)/sqrt(beta) - d_t beta/(2
beta^(3/2))``, where ``SIGMA = +1``.  For a small graph ``u`` over a flat
Lorentzian product, ``H ~ +(1/n) Laplacian(u)``.

The mean curvature is assembled from the second fundamental form
``h_ij = g_bar(N, nabla_{E_i} E_j)`` with the ambient Christoffel symbols
built from ``beta``, ``g_t`` and their first derivatives only.  Spatial
derivatives of the spacetime data are central differences at frozen
``t = u(p)``; time derivatives are analytic when the model supplies them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from . import fiber
from .errors import IllConditioned, NotMaximal, NotMaximalWarning, NotSpacelike

#: Global sign relating the Weingarten trace of level hypersurfaces to the
#: level-set mean curvature formula.
SIGMA = 1

#: ``|N_perp|^2 < PERP_CUTOFF * beta`` drops the coordinate term of the
#: maximal-graph Laplacian identity.
PERP_CUTOFF = 1e-12


class NormalField(NamedTuple):
    time: np.ndarray
    fiber: np.ndarray
    cosh_theta: np.ndarray


@dataclass(frozen=True)
class VariationField:
    """Spacetime vector field along a graph: ``time * d_t + fiber^k d_k``."""

    time: np.ndarray
    fiber: np.ndarray

    def __post_init__(self):
        if not (np.all(np.isfinite(self.time)) and np.all(np.isfinite(self.fiber))):
            raise ValueError("variation field must be finite")


class SpacelikeGraph:
    """The graph of ``u`` over the fiber grid, with write-once geometric caches.

    Parameters
    ----------
    u : ndarray
        Heights at the grid nodes; all values must lie in the model interval.
    model : SpacetimeModel
    grid : FiberGrid

    Raises
    ------
    OutOfInterval
        If some ``u`` leaves the time interval.
    """

    def __init__(self, u, model, grid):
        u = np.array(u, dtype=float)
        if u.shape != grid.shape:
            raise ValueError(f"u has shape {u.shape}, grid expects {grid.shape}")
        if model.dim != grid.dim:
            raise ValueError("model and grid dimensions differ")
        model.require(u)
        u.setflags(write=False)
        self.u = u
        self.model = model
        self.grid = grid

    @property
    def n(self):
        return self.grid.dim

    # -- raw spacetime data along the graph --------------------------------

    @cached_property
    def _ambient(self):
        beta, g, dbeta, dg = self.model.sample(self.u, self.grid.coords)
        return beta, g, dbeta, dg

    @cached_property
    def _spatial(self):
        """Central differences of ``beta`` and ``g`` along the fiber at frozen ``t = u``."""
        grid = self.grid
        dbeta = np.empty((grid.dim,) + grid.shape)
        dg = np.empty((grid.dim, grid.dim, grid.dim) + grid.shape)  # [k, i, j] = d_k g_ij
        for k in range(grid.dim):
            bp, gp = self.model.values(self.u, grid.shifted_coords(k, +1))
            bm, gm = self.model.values(self.u, grid.shifted_coords(k, -1))
            h2 = 2.0 * grid.spacings[k]
            dbeta[k] = (bp - bm) / h2
            dg[k] = (gp - gm) / h2
        return dbeta, dg

    @cached_property
    def du(self):
        return fiber.grad_components(self.u, self.grid)

    @cached_property
    def _kinematics(self):
        beta, g, _, _ = self._ambient
        _, ginv = fiber.det_inv(g)
        Du = np.einsum("ij...,j...->i...", ginv, self.du)
        q = beta * np.einsum("i...,i...->...", self.du, Du)
        return ginv, Du, q

    # -- induced metric and normal ------------------------------------------

    @cached_property
    def induced_metric(self):
        """``g_u = -beta du (x) du + g_{u(p)}``."""
        beta, g, _, _ = self._ambient
        return g - beta * np.einsum("i...,j...->ij...", self.du, self.du)

    @cached_property
    def margin_field(self):
        """Smallest eigenvalue of the induced metric at every node."""
        return fiber.min_eigenvalue(self.induced_metric)

    @property
    def margin(self):
        return float(np.min(self.margin_field))

    @property
    def is_spacelike(self):
        _, _, q = self._kinematics
        return bool(np.all(self.margin_field > 0.0) and np.all(q < 1.0))

    def require_spacelike(self):
        if not self.is_spacelike:
            raise NotSpacelike(f"graph is not spacelike (margin {self.margin:.3e})")

    @cached_property
    def normal(self):
        """Unit normal ``N = a (d_t + beta Du)`` and ``cosh(theta)``."""
        self.require_spacelike()
        beta, _, _, _ = self._ambient
        _, Du, q = self._kinematics
        a = 1.0 / np.sqrt(beta * (1.0 - q))
        return NormalField(a, a * beta * Du, np.sqrt(beta) * a)

    @cached_property
    def shape_form(self):
        """Second fundamental form ``h_ij = g_bar(N, nabla_{E_i} E_j)``."""
        beta, g, bt, gt = self._ambient
        db, dg = self._spatial
        N0, Nf, _ = self.normal
        du = self.du
        d = self.n
        uu = np.einsum("i...,j...->ij...", du, du)
        # Christoffel symbols of the first kind of g_t: G[m, i, j]
        G = 0.5 * (np.einsum("imj...->mij...", dg) + np.einsum("jmi...->mij...", dg) - dg)
        time_part = (-0.5 * bt * uu
                     - 0.5 * (np.einsum("j...,i...->ij...", db, du) + np.einsum("i...,j...->ij...", db, du))
                     - 0.5 * gt)
        gt_u = np.einsum("mj...,i...->mij...", gt, du)  # gt_mj u_i
        space_part = (0.5 * np.einsum("m...,ij...->mij...", db, uu)
                      + 0.5 * (gt_u + np.einsum("mij...->mji...", gt_u))
                      + G)
        T = N0 * time_part + np.einsum("m...,mij...->ij...", Nf, space_part)
        hess = fiber.hessian(self.u, self.grid)
        return T - beta * N0 * hess

    def mean_curvature(self, margin_floor=0.0):
        """``H = -(1/n) tr A = -(1/n) g_u^{ij} h_ij``.

        Raises
        ------
        NotSpacelike
            If the induced metric is not positive definite.
        IllConditioned
            If the spacelike margin is below ``margin_floor``.
        """
        self.require_spacelike()
        if self.margin < margin_floor:
            raise IllConditioned(f"spacelike margin {self.margin:.3e} below floor {margin_floor:.3e}")
        return self._mean_curvature

    @cached_property
    def _mean_curvature(self):
        _, ginv_u = fiber.det_inv(self.induced_metric)
        return -np.einsum("ij...,ij...->...", ginv_u, self.shape_form) / self.n

    # -- time function identities ------------------------------------------

    def tangential_dt(self):
        """Fiber components of ``d_t^T = d_t + g_bar(N, d_t) N``."""
        beta, _, _, _ = self._ambient
        N0, Nf, _ = self.normal
        return -beta * N0 * Nf

    def tangential_dt_time(self):
        beta, _, _, _ = self._ambient
        N0, _, _ = self.normal
        return 1.0 - beta * N0 * N0

    def time_gradient(self):
        """Gradient of the height function for the induced metric."""
        self.require_spacelike()
        return fiber.gradient(self.u, self.induced_metric, self.grid)

    def laplacian_t_direct(self):
        """Laplace-Beltrami of the height function for the induced metric."""
        self.require_spacelike()
        return fiber.laplace_beltrami(self.u, self.induced_metric, self.grid)

    def _bracket(self):
        """``d_t log vol - (sinh^2 / 2 beta) d_t beta + (1/2) (d_t g)(N_perp, N_perp)``."""
        beta, g, bt, gt = self._ambient
        _, Nf, cosh = self.normal
        sinh2 = cosh * cosh - 1.0
        from .models import log_volume_rate

        perp2 = np.einsum("ij...,i...,j...->...", g, Nf, Nf)
        coord = 0.5 * np.einsum("ij...,i...,j...->...", gt, Nf, Nf)
        coord = np.where(perp2 < PERP_CUTOFF * beta, 0.0, coord)
        return log_volume_rate(g, gt) - 0.5 * sinh2 / beta * bt + coord

    def _dt_tangent_of_beta(self):
        beta, _, bt, _ = self._ambient
        db, _ = self._spatial
        return self.tangential_dt_time() * bt + np.einsum("k...,k...->...", self.tangential_dt(), db)

    def laplacian_t_formula(self, max_tol=1e-6, strict=False):
        """Closed-form Laplacian of the height function on a maximal graph.

        ``Delta t = d_t^T(beta) / beta^2 - [bracket] / beta``.  The identity
        assumes ``H = 0``; for other graphs the value is still returned but
        a :class:`NotMaximalWarning` is emitted (or :class:`NotMaximal`
        raised with ``strict=True``).
        """
        beta, _, _, _ = self._ambient
        value = self._dt_tangent_of_beta() / beta ** 2 - self._bracket() / beta
        hmax = float(np.max(np.abs(self._mean_curvature)))
        if hmax > max_tol:
            message = f"graph is not maximal (|H|max = {hmax:.3e} > {max_tol:.1e})"
            if strict:
                raise NotMaximal(message, result=value)
            warnings.warn(message, NotMaximalWarning, stacklevel=2)
        return value

    def laplacian_t_general(self):
        """Closed-form Laplacian without assuming maximality: adds ``n a H``."""
        N0, _, _ = self.normal
        beta, _, _, _ = self._ambient
        value = self._dt_tangent_of_beta() / beta ** 2 - self._bracket() / beta
        return value + self.n * N0 * self._mean_curvature

    def conformal_exponent(self):
        """Exponent ``2/(n-2)`` of the conformal factor ``beta^(2/(n-2))``, ``n`` the graph dimension."""
        if self.n == 2:
            return None
        return 2.0 / (self.n - 2)

    def laplacian_t_conformal_formula(self):
        """``Delta~ t = -beta^(-n/(n-2)) [bracket]`` for ``g~ = beta^(2/(n-2)) g_u``.

        In graph dimension 2 the conformal change is undefined; the identity
        then reduces to the unconformal one only when ``beta`` is constant
        along the graph, which is the only case accepted.
        """
        beta, _, _, _ = self._ambient
        p = self.conformal_exponent()
        if p is None:
            if np.ptp(beta) > 1e-14 * np.max(beta):
                raise ValueError("conformal variant undefined for 2-dimensional graphs with varying beta")
            return -self._bracket() / beta
        return -beta ** (-self.n / (self.n - 2)) * self._bracket()

    def laplacian_t_conformal_direct(self):
        beta, _, _, _ = self._ambient
        p = self.conformal_exponent()
        if p is None:
            if np.ptp(beta) > 1e-14 * np.max(beta):
                raise ValueError("conformal variant undefined for 2-dimensional graphs with varying beta")
            p = 0.0
        return fiber.laplace_beltrami(self.u, beta ** p * self.induced_metric, self.grid)

    # -- conformal rescaling -------------------------------------------------

    def conformal_mean_curvature(self, alpha):
        """Mean curvature in ``exp(2 alpha o pi_F) g_bar`` from ``e^a H~ = H + g_bar(grad a, N)``.

        ``alpha`` may be node values or a callable of the fiber coordinates.
        """
        a = _alpha_values(alpha, self.grid)
        _, Nf, _ = self.normal
        da = fiber.grad_components(a, self.grid)
        return np.exp(-a) * (self._mean_curvature + np.einsum("k...,k...->...", Nf, da))

    def conformal_mean_curvature_direct(self, alpha):
        """Weingarten-trace mean curvature computed in the rescaled spacetime."""
        if not callable(alpha):
            raise TypeError("the direct route needs alpha as a callable of the fiber coordinates")
        rescaled = self.model.conformally_rescaled(alpha)
        return SpacelikeGraph(self.u, rescaled, self.grid).mean_curvature()

    # -- volume ---------------------------------------------------------------

    def volume(self):
        self.require_spacelike()
        return fiber.integrate(np.ones(self.grid.shape), self.induced_metric, self.grid)

    def decompose(self, xi):
        """Split ``xi`` into tangential fiber components ``w`` and ``g_bar(xi, N)``."""
        beta, g, _, _ = self._ambient
        N0, Nf, _ = self.normal
        xi_N = -beta * xi.time * N0 + np.einsum("ij...,i...,j...->...", g, xi.fiber, Nf)
        w = xi.fiber + xi_N * Nf
        return w, xi_N

    def first_variation(self, xi):
        """``dV/ds(0) = int (div w + g_bar(xi, H_vec)) w_S`` with ``H_vec = -n H N``.

        ``w`` is the tangential part of ``xi`` in graph coordinates.
        """
        self.require_spacelike()
        w, xi_N = self.decompose(xi)
        gu = self.induced_metric
        integrand = fiber.divergence(w, gu, self.grid) - self.n * self._mean_curvature * xi_N
        return fiber.integrate(integrand, gu, self.grid)

    def deformed_volume(self, xi, s):
        """Volume of the immersion ``p -> (u + s xi^t, p + s xi^F)``."""
        grid = self.grid
        T0 = self.u + s * xi.time
        X = tuple(c + s * xi.fiber[k] for k, c in enumerate(grid.coords))
        beta, g = self.model.values(T0, X)
        dT0 = fiber.grad_components(T0, grid)
        d = grid.dim
        J = np.zeros((d, d) + grid.shape)  # J[k, i] = d_i X^k
        for k in range(d):
            J[k] = s * fiber.grad_components(xi.fiber[k], grid)
            J[k, k] += 1.0
        metric = np.einsum("kl...,ki...,lj...->ij...", g, J, J) - beta * np.einsum("i...,j...->ij...", dT0, dT0)
        det, _ = fiber.det_inv(metric)
        return float(np.sum(np.sqrt(det)) * grid.cell_volume)

    # -- diagnostics -------------------------------------------------------

    def normal_constraints(self):
        """Max deviations ``|g(N,N) + 1|`` and ``|g(N, E_i)|`` over all nodes."""
        beta, g, _, _ = self._ambient
        N0, Nf, _ = self.normal
        unit = -beta * N0 ** 2 + np.einsum("ij...,i...,j...->...", g, Nf, Nf)
        gN = np.einsum("ij...,j...->i...", g, Nf)
        ortho = -beta * N0 * self.du + gN
        return float(np.max(np.abs(unit + 1.0))), float(np.max(np.abs(ortho)))


def _alpha_values(alpha, grid):
    if callable(alpha):
        return np.broadcast_to(np.asarray(alpha(*grid.coords), dtype=float), grid.shape)
    a = np.asarray(alpha, dtype=float)
    return np.broadcast_to(a, grid.shape)


# -- functional surface ------------------------------------------------------

def induced_metric(graph):
    return graph.induced_metric


def normal_field(graph):
    return graph.normal


def mean_curvature(graph, margin_floor=0.0):
    return graph.mean_curvature(margin_floor)


def laplacian_t_direct(graph):
    return graph.laplacian_t_direct()


def laplacian_t_formula(graph, max_tol=1e-6, strict=False):
    return graph.laplacian_t_formula(max_tol=max_tol, strict=strict)


def conformal_mean_curvature(graph, alpha, route="formula"):
    if route == "formula":
        return graph.conformal_mean_curvature(alpha)
    if route == "direct":
        return graph.conformal_mean_curvature_direct(alpha)
    raise ValueError(f"unknown route {route!r}")


def volume(graph):
    return graph.volume()


def first_variation(graph, xi):
    return graph.first_variation(xi)


def tilted_geodesic_graph(c, grid, phase=0.0):
    """Totally geodesic de Sitter graph ``tanh u = c cos(x - phase)`` over a circle of length 2 pi."""
    if abs(c) >= 1:
        raise ValueError("tilt must satisfy |c| < 1")
    x = grid.coords[0]
    return np.arctanh(c * np.cos(x - phase))
