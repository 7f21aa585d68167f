"""Embedded and quotient Riemannian geometries on fixed-rank matrix manifolds.

The package computes Riemannian gradients and Hessian quadratic forms for the
rank-r PSD and general matrix manifolds under the embedded geometry and five
factorization-based quotient geometries, maps horizontal vectors to embedded
tangents and back, and verifies the landscape connections between the two
sides (gradient conversion identities, per-index Hessian-spectrum sandwich
bounds at first-order stationary points, stationary-point classification
equivalence, and gradient-flow identities).
"""

from .linalg import (
    sym,
    skew,
    solve_sylvester,
    orth_complement,
    gen_sym_eig,
    spd_functions,
    finite_diff_directional,
)
from .objectives import (
    Objective,
    make_matrix_approx,
    make_masked_completion,
    make_matrix_sensing,
    load_matrix_csv,
)
from .embedded import (
    EmbeddedPoint,
    EmbeddedTangent,
    embed_point,
    tangent_project,
    riem_grad_embedded,
    riem_hess_quad_embedded,
    retract,
    tangent_basis,
)
from .quotient import (
    QuotientPoint,
    HorizontalVector,
    metric_family,
    metric_choices,
    lift_point,
    same_fiber,
    vertical_project,
    horizontal_project,
    is_horizontal,
    metric_inner,
    riem_grad_quotient,
    riem_hess_quad_quotient,
    horizontal_basis,
    random_horizontal,
)
from .transport import (
    SandwichCoefficients,
    forward_map,
    inverse_map,
    spectrum_bounds,
)
from .landscape import (
    SpectrumReport,
    StationaryClassification,
    grad_embedded_from_quotient,
    grad_quotient_from_embedded,
    hessian_spectrum,
    verify_sandwich,
    classify_point,
    find_fosp,
    analytic_fosps,
)
from .flows import (
    FlowTrace,
    FLOW_SOURCES,
    flow_field,
    integrate_flow,
    compare_flows,
)

__version__ = "0.1.0"

GEOMETRIES = (
    "psd_embedded",
    "gen_embedded",
    "psd_q1",
    "psd_q2",
    "gen_q1",
    "gen_q2",
    "gen_q3",
)

QUOTIENT_GEOMETRIES = GEOMETRIES[2:]
