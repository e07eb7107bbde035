import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxslice import models, solver
from maxslice.errors import NotSpacelike, OutOfInterval, Stalled
from maxslice.fiber import FiberGrid
from maxslice.geometry import SpacelikeGraph
from maxslice.solver import SolverParams, Status, flow_relax, solve_maximal, solve_prescribed

TWO_PI = 2 * np.pi


def grid(n, dim=1):
    return FiberGrid((n,) * dim, (TWO_PI,) * dim)


def cubic():
    return models.grw(lambda t: 2 + t ** 3, lambda t: 3 * t ** 2, interval=(-1.0, 1.0))


def exp_model():
    return models.grw(np.exp, np.exp)


def static():
    return models.standard_static(lambda c: 1 + 0.3 * np.cos(c[0]))


# -- parameters ------------------------------------------------------------------------

@pytest.mark.parametrize("kw", [
    {"tol_residual": 0.0}, {"damping": 0.0}, {"damping": 1.5}, {"backtrack": 1.0}, {"jacobian_eps": -1.0},
])
def test_params_validated(kw):
    with pytest.raises(ValueError):
        SolverParams(**kw)


def test_params_overrides_are_copies():
    p = SolverParams()
    q = p.with_overrides(max_iters=5)
    assert q.max_iters == 5 and p.max_iters == 200


# -- Jacobian ----------------------------------------------------------------------------

@pytest.mark.parametrize("dim, n", [(1, 16), (2, 8)])
def test_colouring_is_distance_two(dim, n):
    color, rows, cols = solver._coloring((n,) * dim)
    # columns sharing a colour never touch the same residual row
    for r in np.unique(rows):
        c = color[cols[rows == r]]
        assert len(c) == len(set(c))
    assert color.max() + 1 <= 5 ** dim


@pytest.mark.parametrize("dim, n", [(1, 16), (2, 8)])
def test_coloured_jacobian_matches_dense_differences(dim, n):
    g = grid(n, dim)
    m = models.de_sitter(dim)
    res = solver.MaximalResidual(m, g)
    rng = np.random.default_rng(3)
    u = 0.05 * rng.standard_normal(g.shape)
    J = solver.fd_jacobian(res, u).toarray()
    dense = np.empty_like(J)
    flat = u.ravel()
    for k in range(flat.size):
        e = np.zeros_like(flat)
        e[k] = 1e-6
        dense[:, k] = (res((flat + e).reshape(g.shape)) - res((flat - e).reshape(g.shape))).ravel() / 2e-6
    np.testing.assert_allclose(J, dense, atol=1e-7)


def test_linearisation_on_product_is_scaled_laplacian():
    g = grid(32)
    res = solver.MaximalResidual(models.lorentzian_product(), g)
    J = solver.fd_jacobian(res, np.zeros(g.shape)).toarray()
    h = g.spacings[0]
    row = np.zeros(32)
    row[[1, -1]] = 1 / h ** 2
    row[0] = -2 / h ** 2
    np.testing.assert_allclose(J[0], row, rtol=1e-6, atol=1e-6)


# -- Newton --------------------------------------------------------------------------------

def test_newton_cubic_converges_to_critical_slice():
    g = grid(32)
    u0 = 0.3 * np.sin(g.coords[0])
    graph, rep = solve_maximal(cubic(), u0, g)
    assert rep.status == Status.CONVERGED
    assert rep.classification == "Slice" and abs(rep.t0) < 1e-6
    assert rep.final_residual < 1e-9
    assert np.max(np.abs(graph.mean_curvature())) < 1e-9
    assert rep.step_kinds and rep.step_kinds[0] == "newton"


def test_already_maximal_slice_needs_no_iterations():
    g = grid(32)
    graph, rep = solve_maximal(cubic(), np.zeros(g.shape), g)
    assert rep.status == Status.CONVERGED and rep.iterations == 0
    _, rep = flow_relax(cubic(), np.zeros(g.shape), g)
    assert rep.status == Status.CONVERGED and rep.iterations == 0


def test_non_spacelike_initial_graph_rejected():
    g = grid(32)
    u0 = 1.5 * np.sin(g.coords[0])
    with pytest.raises(NotSpacelike):
        solve_maximal(models.lorentzian_product(), u0, g)
    with pytest.raises(NotSpacelike):
        flow_relax(models.lorentzian_product(), u0, g)


def test_initial_graph_outside_interval_rejected():
    g = grid(16)
    with pytest.raises(OutOfInterval):
        solve_maximal(cubic(), np.full(g.shape, 2.0), g)


def test_exponential_warping_has_no_maximal_graph():
    g = grid(32)
    u0 = 0.2 * np.sin(g.coords[0])
    graph, rep = solve_maximal(exp_model(), u0, g)
    assert rep.status == Status.NO_SOLUTION
    tail = np.diff(rep.drift[-51:])
    assert np.all(tail < 0) or np.all(tail > 0)
    assert rep.classification is None


def test_max_iters_reported():
    g = grid(32)
    p = SolverParams(max_iters=1, max_flow_iters=1)
    _, rep = solve_maximal(exp_model(), 0.2 * np.sin(g.coords[0]), g, p)
    assert rep.status == Status.MAX_ITERS


def test_two_dimensional_transition_model():
    g = grid(16, 2)
    m = models.gaussian_multiwarp()
    rng = np.random.default_rng(1)
    u0 = solver.random_initial_graph(m, g, rng, 0.2)
    _, rep = solve_maximal(m, u0, g)
    assert rep.status == Status.CONVERGED and rep.is_slice and abs(rep.t0) < 1e-6


def test_report_serialises():
    g = grid(16)
    _, rep = solve_maximal(cubic(), 0.1 * np.sin(g.coords[0]), g)
    d = rep.to_dict()
    assert d["status"] == "Converged" and d["final_residual"] == rep.final_residual
    assert len(d["residual_history"]) == rep.iterations + 1


# -- relaxation flow -------------------------------------------------------------------------

def test_flow_agrees_with_newton_on_cubic():
    g = grid(32)
    u0 = 0.3 * np.sin(g.coords[0])
    _, newton = solve_maximal(cubic(), u0, g)
    _, flow = flow_relax(cubic(), u0, g)
    assert flow.status == newton.status == Status.CONVERGED
    assert flow.classification == newton.classification == "Slice"
    assert abs(flow.t0 - newton.t0) < 1e-6


def test_flow_detects_non_existence():
    g = grid(32)
    _, rep = flow_relax(exp_model(), 0.2 * np.sin(g.coords[0]), g)
    assert rep.status == Status.NO_SOLUTION


def test_static_flow_settles_on_a_level():
    g = grid(32)
    u0 = 0.5 + 0.05 * np.sin(g.coords[0])
    graph, rep = flow_relax(static(), u0, g)
    assert rep.status == Status.CONVERGED and rep.is_slice
    # every level is maximal; the flow keeps the mean near where it started
    assert abs(rep.t0 - 0.5) < 0.05


def test_flow_step_collapse_raises_stalled():
    g = grid(16)
    with pytest.raises(Stalled):
        flow_relax(static(), 0.05 * np.sin(g.coords[0]), g, SolverParams(min_flow_dt=1.0))


# -- prescribed mean curvature --------------------------------------------------------------

def test_prescribed_with_constant_alpha_matches_maximal():
    g = grid(32)
    u0 = 0.3 * np.sin(g.coords[0])
    gp, rp = solve_prescribed(cubic(), 0.4, u0, g)
    gm, rm = solve_maximal(cubic(), u0, g)
    assert rp.status == rm.status and rp.classification == rm.classification
    np.testing.assert_allclose(gp.u, gm.u, atol=1e-8)


def test_prescribed_residual_uses_conformal_relation():
    g = grid(32)
    x = g.coords[0]
    alpha = 0.2 * np.sin(x)
    res = solver.PrescribedResidual(cubic(), g, alpha)
    u = 0.1 * np.cos(x)
    graph = SpacelikeGraph(u, cubic(), g)
    f = 2 + u ** 3
    du = graph.du[0]
    da = (np.roll(alpha, -1) - np.roll(alpha, 1)) / (2 * g.spacings[0])
    rhs = np.exp(-alpha) * da * du / (f * np.sqrt(f ** 2 - du ** 2))
    np.testing.assert_allclose(res(u), graph.conformal_mean_curvature(alpha) - rhs, atol=1e-14)


def test_prescribed_needs_grw_base():
    g = grid(16)
    with pytest.raises(ValueError):
        solver.PrescribedResidual(static(), g, np.zeros(g.shape))


def test_prescribed_sine_alpha_constant_solution():
    g = grid(32)
    graph, rep = solve_prescribed(cubic(), 0.2 * np.sin(g.coords[0]), 0.3 * np.sin(g.coords[0]), g)
    assert rep.status == Status.CONVERGED and rep.is_slice
    assert abs(rep.t0) < 1e-6


def test_prescribed_exponential_no_solution():
    g = grid(32)
    _, rep = solve_prescribed(exp_model(), 0.2 * np.sin(g.coords[0]), 0.2 * np.sin(g.coords[0]), g)
    assert rep.status == Status.NO_SOLUTION


# -- random initial graphs ------------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), center=st.floats(-0.9, 0.9), dim=st.sampled_from([1, 2]))
def test_random_initial_graphs_respect_budget(seed, center, dim):
    g = grid(32 if dim == 1 else 16, dim)
    m = models.grw(lambda t: 2 + t ** 3, lambda t: 3 * t ** 2, dim=dim, interval=(-1.0, 1.0))
    u = solver.random_initial_graph(m, g, np.random.default_rng(seed), center)
    graph = SpacelikeGraph(u, m, g)
    assert graph.is_spacelike
    slope = np.sqrt(np.sum(graph.du ** 2, axis=0)) / (2 + u ** 3)
    assert np.max(slope) <= 0.25 * 1.05
    assert np.max(np.abs(u - center)) <= 0.25 * (1 - abs(center)) + 1e-12


def test_random_initial_graph_deterministic():
    g = grid(32)
    a = solver.random_initial_graph(cubic(), g, np.random.default_rng(7), 0.1)
    b = solver.random_initial_graph(cubic(), g, np.random.default_rng(7), 0.1)
    np.testing.assert_array_equal(a, b)
