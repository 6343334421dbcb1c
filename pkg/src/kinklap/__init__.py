"""Gaussian-kernel graph Laplacians on flat domains with kinks.

The package evaluates three quantities at a point ``x`` of a Euclidean
domain whose boundary may carry corners, cones or cusps:

* the discrete graph Laplacian ``L_{n,t} f(x)`` built from a seeded sample,
* its expectation ``L_t f(x)`` (the Gauss operator), by quadrature,
* the small-bandwidth predictor built from the moments of the inward sector.

It also checks bandwidth schedules against the concentration conditions that
govern discrete-to-continuum convergence.
"""

from kinklap.geometry import (
    Ball, Box, OrthantModel, Cone, CuspEpigraph, Epigraph,
    Interior, C1Boundary, CornerDepthK, LcddKink, Cusp,
    FullSector, HalfSpaceSector, OrthantSector, PredicateSector,
    GeometryError, UnresolvedClassification, FluctuatingDirection,
    contains, classify, sector_at, bouligand_contains, blow_up_indicator,
    intrinsic_distance,
)
from kinklap.specfun import (
    half_gamma_constant, upper_incomplete_gamma, localization_tail_bound,
    gaussian_radial_moment, sphere_area,
)
from kinklap.sectors import (
    SectorMoments, closed_form_moments, monte_carlo_moments, mixed_moment,
    moment_tensor, NoClosedForm,
)
from kinklap.config import ExperimentConfig, ConfigError
from kinklap.sampling import (
    SampleSet, Linear, Quadratic, CoordinateSum, CustomField,
    UniformDensity, CustomDensity, sample_uniform, rejection_sample,
)
from kinklap.operators import (
    KernelParams, OperatorReport, Estimate, graph_laplacian, gauss_operator,
    localized_operator, asymptotic_predictor, higher_order_predictor,
    euclidean_cone_operator, evaluate_point, reports_to_csv, REPORT_HEADER,
)
from kinklap.quadrature import QuadratureError, integrate_region
from kinklap.concentration import (
    TailProfile, PowerLaw, Explicit, ConditionResult,
    check_probability_condition, check_as_condition, estimate_tail_alpha,
    deviation_experiment,
)

__version__ = "0.1.0"
