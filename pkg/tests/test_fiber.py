import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxslice import fiber
from maxslice.errors import DegenerateMetric
from maxslice.fiber import FiberGrid

TWO_PI = 2 * np.pi


def grid1(n=64):
    return FiberGrid((n,), (TWO_PI,))


def grid2(n=32, m=None):
    return FiberGrid((n, m or n), (TWO_PI, TWO_PI))


def wavy_metric(grid, amp=0.3):
    """Positive definite, non-diagonal metric field built from trig data."""
    c = grid.coords
    g = np.zeros((grid.dim, grid.dim) + grid.shape)
    g[0, 0] = 1.0 + amp * np.cos(c[0])
    if grid.dim == 2:
        g[1, 1] = 1.2 + amp * np.sin(c[1])
        g[0, 1] = g[1, 0] = 0.5 * amp * np.sin(c[0] + c[1])
    return g


# -- grid ----------------------------------------------------------------------

def test_grid_rejects_small_or_mismatched():
    with pytest.raises(ValueError):
        FiberGrid((4,), (1.0,))
    with pytest.raises(ValueError):
        FiberGrid((8, 8), (1.0,))
    with pytest.raises(ValueError):
        FiberGrid((8, 8, 8), (1.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        FiberGrid((8,), (-1.0,))


def test_grid_geometry():
    g = grid2(16, 8)
    assert g.shape == (16, 8)
    assert g.num_nodes == 128
    assert g.spacings == pytest.approx((TWO_PI / 16, TWO_PI / 8))
    assert g.cell_volume == pytest.approx(TWO_PI ** 2 / 128)
    assert g.refined().sizes == (32, 16)
    x, y = g.coords
    assert x.shape == (16, 8) and x[1, 0] == pytest.approx(TWO_PI / 16) and y[0, 1] == pytest.approx(TWO_PI / 8)


# -- derivatives -------------------------------------------------------------------

@pytest.mark.parametrize("k", [1, 2, 3])
def test_central_difference_oracle(k):
    # D_h sin(kx) = sin(k h)/h cos(kx) exactly for central differences
    g = grid1(32)
    x = g.coords[0]
    h = g.spacings[0]
    d = fiber.diff(np.sin(k * x), 0, g)
    np.testing.assert_allclose(d, np.sin(k * h) / h * np.cos(k * x), atol=1e-13)
    d2 = fiber.diff2(np.sin(k * x), 0, g)
    np.testing.assert_allclose(d2, -(2 * np.sin(k * h / 2) / h) ** 2 * np.sin(k * x), atol=1e-12)


def test_derivative_second_order():
    errs = []
    for n in (32, 64, 128):
        g = grid2(n)
        x, y = g.coords
        f = np.sin(x) * np.cos(2 * y)
        errs.append(np.max(np.abs(fiber.diff(f, 1, g) + 2 * np.sin(x) * np.sin(2 * y))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.95)


def test_laplace_beltrami_flat_matches_analytic():
    g = grid2(64)
    x, y = g.coords
    f = np.sin(x) * np.cos(y)
    lap = fiber.laplace_beltrami(f, fiber.flat_metric(g), g)
    np.testing.assert_allclose(lap, -2 * f, atol=2e-3)


def test_laplace_beltrami_convergence_curved_1d():
    # metric a(x) dx^2: Delta f = a^{-1/2} (a^{-1/2} f')'
    errs = []
    for n in (64, 128, 256):
        g = grid1(n)
        x = g.coords[0]
        a = (1.0 + 0.3 * np.cos(x)) ** 2
        f = np.sin(2 * x)
        exact = (2 * np.cos(2 * x) * 0.3 * np.sin(x) / (1 + 0.3 * np.cos(x)) ** 2
                 - 4 * np.sin(2 * x) / (1 + 0.3 * np.cos(x))) / (1 + 0.3 * np.cos(x))
        metric = a[None, None]
        errs.append(np.max(np.abs(fiber.laplace_beltrami(f, metric, g) - exact)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.9), (errs, orders)


def test_laplace_beltrami_has_no_checkerboard_null_mode():
    g = grid1(32)
    f = (-1.0) ** np.arange(32)
    lap = fiber.laplace_beltrami(f, fiber.flat_metric(g), g)
    assert np.max(np.abs(lap)) > 1.0


def test_degenerate_metric_rejected():
    g = grid1(16)
    metric = fiber.flat_metric(g)
    metric[0, 0, 3] = -0.1
    with pytest.raises(DegenerateMetric):
        fiber.gradient(np.zeros(g.shape), metric, g)


def test_det_inv_2x2():
    g = grid2(8)
    metric = wavy_metric(g)
    det, inv = fiber.det_inv(metric)
    prod = np.einsum("ij...,jk...->ik...", metric, inv)
    np.testing.assert_allclose(prod[0, 0], 1, atol=1e-14)
    np.testing.assert_allclose(prod[0, 1], 0, atol=1e-14)
    np.testing.assert_allclose(det, metric[0, 0] * metric[1, 1] - metric[0, 1] ** 2, atol=1e-14)


def test_integrate_volume():
    g = grid2(16)
    assert fiber.integrate(np.ones(g.shape), fiber.flat_metric(g, 4.0), g) == pytest.approx(4.0 * TWO_PI ** 2)


# -- properties -----------------------------------------------------------------------

coef = st.floats(-1.0, 1.0, allow_nan=False)


@settings(max_examples=30, deadline=None)
@given(a=coef, b=coef, c=coef, amp=st.floats(0.0, 0.45), n=st.sampled_from([8, 16, 32]))
def test_discrete_divergence_theorem(a, b, c, amp, n):
    g = grid2(n, n + 8)
    x, y = g.coords
    X = np.stack([a * np.sin(x + y) + b, c * np.cos(2 * x) * np.sin(y)])
    metric = wavy_metric(g, amp)
    div = fiber.divergence(X, metric, g)
    scale = 1.0 + np.max(np.abs(X))
    assert abs(fiber.integrate(div, metric, g)) < 1e-12 * scale * TWO_PI ** 2


@settings(max_examples=30, deadline=None)
@given(a=coef, b=coef, amp=st.floats(0.0, 0.45))
def test_divergence_is_negative_adjoint_of_gradient(a, b, amp):
    g = grid2(16)
    x, y = g.coords
    f = a * np.sin(x) * np.cos(y) + b * np.cos(2 * y)
    X = np.stack([np.cos(x - y), b * np.sin(x)])
    metric = wavy_metric(g, amp)
    grad = fiber.gradient(f, metric, g)
    lhs = fiber.integrate(np.einsum("ij...,i...,j...->...", metric, grad, X), metric, g)
    rhs = -fiber.inner(f, fiber.divergence(X, metric, g), metric, g)
    assert lhs == pytest.approx(rhs, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(a=coef, b=coef, amp=st.floats(0.0, 0.45))
def test_laplace_beltrami_symmetric_and_kills_constants(a, b, amp):
    g = grid2(16)
    x, y = g.coords
    f = a * np.sin(x + 2 * y)
    h = b * np.cos(x) + np.sin(y)
    metric = wavy_metric(g, amp)
    lap = lambda v: fiber.laplace_beltrami(v, metric, g)  # noqa: E731
    assert fiber.inner(lap(f), h, metric, g) == pytest.approx(fiber.inner(f, lap(h), metric, g), abs=1e-12)
    assert np.max(np.abs(lap(np.full(g.shape, 3.0 + a)))) < 1e-12
    # negative semidefinite
    assert fiber.inner(lap(h), h, metric, g) <= 1e-12
