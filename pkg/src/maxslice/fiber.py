"""Discrete Riemannian calculus on periodic fiber grids.

Fields are plain numpy arrays whose trailing axes are the grid axes:

* scalar field: shape ``grid.sizes``
* vector field: shape ``(dim, *grid.sizes)``
* symmetric 2-tensor / metric: shape ``(dim, dim, *grid.sizes)``

Derivatives are second-order central differences with periodic wrap-around.
``divergence`` is built as the negative adjoint of ``gradient`` under the
quadrature inner product weighted by ``sqrt(det g)``, so the discrete
divergence theorem holds to round-off.  ``laplace_beltrami`` uses a compact
flux form (``sqrt(det g) g^jj`` averaged to half nodes) so that it has no
odd-even null modes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DegenerateMetric

MIN_NODES = 8


@dataclass(frozen=True)
class FiberGrid:
    """Periodic structured grid over a 1-D or 2-D torus.

    Parameters
    ----------
    sizes : tuple of int
        Node count per axis (each at least 8).
    lengths : tuple of float
        Period per axis.
    """

    sizes: tuple
    lengths: tuple

    def __post_init__(self):
        sizes = tuple(int(n) for n in np.atleast_1d(self.sizes))
        lengths = tuple(float(L) for L in np.atleast_1d(self.lengths))
        if len(sizes) not in (1, 2):
            raise ValueError("fiber dimension must be 1 or 2")
        if len(lengths) != len(sizes):
            raise ValueError("sizes and lengths must have the same length")
        if min(sizes) < MIN_NODES:
            raise ValueError(f"every axis needs at least {MIN_NODES} nodes")
        if min(lengths) <= 0:
            raise ValueError("periods must be positive")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "lengths", lengths)

    @property
    def dim(self):
        return len(self.sizes)

    @property
    def shape(self):
        return self.sizes

    @property
    def spacings(self):
        return tuple(L / n for L, n in zip(self.lengths, self.sizes))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacings))

    @property
    def num_nodes(self):
        return int(np.prod(self.sizes))

    @cached_property
    def coords(self):
        """Node coordinates as a tuple of arrays of shape ``sizes``."""
        axes = [np.arange(n) * h for n, h in zip(self.sizes, self.spacings)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def shifted_coords(self, axis, step):
        """Coordinates of the nodes displaced by ``step`` cells along ``axis``.

        The displaced points are not wrapped back into the fundamental
        domain; callers evaluate periodic data there.
        """
        h = self.spacings[axis]
        return tuple(c + step * h if k == axis else c for k, c in enumerate(self.coords))

    def refined(self, factor=2):
        return FiberGrid(tuple(n * factor for n in self.sizes), self.lengths)

    def with_sizes(self, sizes):
        return FiberGrid(tuple(sizes), self.lengths)


def flat_metric(grid, scale=1.0):
    """Return ``scale`` times the Euclidean metric as a tensor field."""
    g = np.zeros((grid.dim, grid.dim) + grid.shape)
    for k in range(grid.dim):
        g[k, k] = scale
    return g


def _axis(grid, k):
    # grid axis k counted from the end so that leading component axes pass through
    return k - grid.dim


def diff(f, k, grid):
    """Central first difference of ``f`` along grid axis ``k``."""
    ax = _axis(grid, k)
    return (np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) / (2.0 * grid.spacings[k])


def diff2(f, k, grid):
    """Compact second difference of ``f`` along grid axis ``k``."""
    ax = _axis(grid, k)
    h = grid.spacings[k]
    return (np.roll(f, -1, axis=ax) - 2.0 * f + np.roll(f, 1, axis=ax)) / (h * h)


def hessian(f, grid):
    """Coordinate Hessian of a scalar field, shape ``(dim, dim, *sizes)``."""
    d = grid.dim
    out = np.empty((d, d) + np.shape(f))
    for k in range(d):
        out[k, k] = diff2(f, k, grid)
    if d == 2:
        out[0, 1] = out[1, 0] = diff(diff(f, 0, grid), 1, grid)
    return out


def grad_components(f, grid):
    """Coordinate differential ``(d_1 f, ..., d_dim f)``."""
    return np.stack([diff(f, k, grid) for k in range(grid.dim)])


def det_inv(g):
    """Determinant and inverse of a field of 1x1 or 2x2 symmetric matrices."""
    d = g.shape[0]
    if d == 1:
        det = g[0, 0].copy()
        inv = 1.0 / g
        return det, inv
    if d == 2:
        det = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
        inv = np.empty_like(g)
        inv[0, 0] = g[1, 1] / det
        inv[1, 1] = g[0, 0] / det
        inv[0, 1] = inv[1, 0] = -g[0, 1] / det
        return det, inv
    raise ValueError("only 1x1 and 2x2 tensor fields are supported")


def min_eigenvalue(g):
    """Smallest eigenvalue of a symmetric tensor field, node by node."""
    d = g.shape[0]
    if d == 1:
        return g[0, 0].copy()
    a, b, c = g[0, 0], g[0, 1], g[1, 1]
    return 0.5 * (a + c) - np.sqrt(0.25 * (a - c) ** 2 + b * b)


def eigenvalues(g):
    """Ascending eigenvalues of a symmetric tensor field, shape ``(dim, *sizes)``."""
    d = g.shape[0]
    if d == 1:
        return g[0].copy()
    a, b, c = g[0, 0], g[0, 1], g[1, 1]
    mid = 0.5 * (a + c)
    rad = np.sqrt(0.25 * (a - c) ** 2 + b * b)
    return np.stack([mid - rad, mid + rad])


def check_metric(g):
    """Raise :class:`DegenerateMetric` unless ``g`` is positive definite everywhere."""
    lam = min_eigenvalue(np.asarray(g, dtype=float))
    if not np.all(np.isfinite(lam)) or np.any(lam <= 0.0):
        raise DegenerateMetric(f"metric not positive definite (min eigenvalue {np.nanmin(lam):.3e})")
    return g


def volume_density(g):
    det, _ = det_inv(check_metric(g))
    return np.sqrt(det)


def gradient(f, g, grid):
    """Metric gradient ``g^{ij} d_j f``."""
    _, ginv = det_inv(check_metric(g))
    df = grad_components(f, grid)
    return np.einsum("ij...,j...->i...", ginv, df)


def divergence(X, g, grid):
    """Divergence ``(1/sqrt g) d_j (sqrt g X^j)``, the negative adjoint of :func:`gradient`."""
    sq = volume_density(g)
    total = np.zeros(grid.shape)
    for j in range(grid.dim):
        total += diff(sq * X[j], j, grid)
    return total / sq


def laplace_beltrami(f, g, grid):
    """Laplace-Beltrami operator in compact flux form.

    Diagonal fluxes live on half nodes with ``sqrt(g) g^jj`` averaged from
    the two neighbouring nodes; the off-diagonal part uses central
    differences.  Both pieces are of the form ``-A^T W A`` so the operator is
    symmetric for the ``sqrt(det g)``-weighted inner product.
    """
    det, ginv = det_inv(check_metric(g))
    sq = np.sqrt(det)
    out = np.zeros(grid.shape)
    for j in range(grid.dim):
        ax = _axis(grid, j)
        h = grid.spacings[j]
        w = sq * ginv[j, j]
        w_half = 0.5 * (w + np.roll(w, -1, axis=ax))
        flux = w_half * (np.roll(f, -1, axis=ax) - f) / h
        out += (flux - np.roll(flux, 1, axis=ax)) / h
    if grid.dim == 2:
        w = sq * ginv[0, 1]
        out += diff(w * diff(f, 1, grid), 0, grid)
        out += diff(w * diff(f, 0, grid), 1, grid)
    return out / sq


def integrate(f, g, grid):
    """Quadrature of ``f`` against the Riemannian volume form of ``g``."""
    sq = volume_density(g)
    return float(np.sum(f * sq) * grid.cell_volume)


def inner(f, h, g, grid):
    """Weighted inner product of two scalar fields."""
    return integrate(f * h, g, grid)
