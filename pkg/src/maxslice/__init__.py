"""Compact maximal spacelike hypersurfaces in orthogonal-splitted spacetimes.

The package is organised in layers:

* :mod:`maxslice.fiber` - periodic grids and discrete Riemannian calculus
* :mod:`maxslice.models` - spacetimes ``-beta dt^2 + g_t`` and slice quantities
* :mod:`maxslice.geometry` - spacelike graphs, normals, mean curvature, identities
* :mod:`maxslice.solver` - Newton and relaxation solvers for ``H = 0``
* :mod:`maxslice.scenario` / :mod:`maxslice.cli` - declarative experiment runner
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DegenerateMetric,
    IllConditioned,
    MaxsliceError,
    NotMaximal,
    NotMaximalWarning,
    NotSpacelike,
    OutOfInterval,
    ScenarioError,
    SingularSystem,
    Stalled,
)
from .fiber import (  # noqa: E402
    FiberGrid,
    divergence,
    flat_metric,
    gradient,
    integrate,
    laplace_beltrami,
)
from .geometry import (  # noqa: E402
    SIGMA,
    SpacelikeGraph,
    VariationField,
    conformal_mean_curvature,
    first_variation,
    induced_metric,
    laplacian_t_direct,
    laplacian_t_formula,
    mean_curvature,
    normal_field,
    tilted_geodesic_graph,
    volume,
)
from .models import (  # noqa: E402
    Family,
    Monotonicity,
    MonotonicityVerdict,
    SpacetimeModel,
    classify_monotonicity,
    slice_mean_curvature,
    vol_slice_divergence,
)
from .solver import (  # noqa: E402
    SolverParams,
    SolverReport,
    Status,
    flow_relax,
    random_initial_graph,
    solve_maximal,
    solve_prescribed,
)

__all__ = [name for name in dir() if not name.startswith("_")]
