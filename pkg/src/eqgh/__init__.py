"""Equivariant Gromov-Hausdorff toolkit for finite metric spaces and actions."""
from .errors import BoundViolation, DomainError, PreconditionError, RefusalError
from .metric_core import (
    Correspondence, FiniteMetricSpace, GhaCertificate, PointMap, ProductSpace, approx_inverse,
    cellwise_gha, distortion, eps_net, gh_exact, gha_search, hausdorff_distance,
    is_eps_isometry, net_approx_bound,
)
from .group_actions import (
    FiniteAction, GeneratedGroup, Homomorphism, d_S, d_sup, dGH1_upper, dGH2_upper,
    dGH_S_upper, enumerate_homomorphisms, equivariant_defect, is_isometric_action,
    quasimetric_report,
)
from .wasserstein import (
    Coupling, DiscreteMeasure, contraction_check, folner_average, invariance_defect,
    invariant_diameter, invariant_net_lift, lift_gha, pushforward, transport_cost,
)

__version__ = "0.1.0"
