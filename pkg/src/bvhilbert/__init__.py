"""Bounded-variation calculus on Galerkin-truncated Hilbert spaces with
Fomin-differentiable measures: logarithmic derivatives, variation
functionals, semigroup characterisations and perimeters."""
from .calculus import (CylField, CylFunction, SmoothedIndicator, SpectralSpace, affine, constant,
                       div_m_star, div_nabla_star, full_gradient, partial_star, project,
                       quadratic, radial_bump, stretched_gradient, stretched_hessian, tanh_affine)
from .exceptions import (ArgumentError, BVError, CapabilityError, ConfigError, IntegrityError,
                         NumericError)
from .measures import GaussianMeasure, ProductMeasure, WeightedGaussianMeasure
from .perimeter import (Halfspace, SublevelSet, halfspace_perimeter, lp_ball_functional,
                        sublevel_perimeter)
from .potentials import (Potential, ScalarNonlinearity, moreau_yosida, quadratic_potential,
                         reaction_diffusion_potential, yosida_scalar)
from .quadrature import McEngine, McEstimate, RngStream, gh_integrate, mc_integrate
from .semigroups import (SemigroupSpec, commutation_defect, dirichlet_em_apply, drifted_ou_apply,
                         mehler_apply)
from .variation import (AscentConfig, BvCandidate, direct_variation, semigroup_variation,
                        sup_variation, variation_inequalities_report)

from .estimators import (DirectVariation, HalfspacePerimeter, SemigroupVariation, SublevelPerimeter,
                         SupVariation)

__version__ = "0.1.0"

__all__ = [
    "CylField", "CylFunction", "SmoothedIndicator", "SpectralSpace", "affine", "constant",
    "div_m_star", "div_nabla_star", "full_gradient", "partial_star", "project", "quadratic",
    "radial_bump", "stretched_gradient", "stretched_hessian", "tanh_affine",
    "ArgumentError", "BVError", "CapabilityError", "ConfigError", "IntegrityError", "NumericError",
    "GaussianMeasure", "ProductMeasure", "WeightedGaussianMeasure",
    "Halfspace", "SublevelSet", "halfspace_perimeter", "lp_ball_functional", "sublevel_perimeter",
    "Potential", "ScalarNonlinearity", "moreau_yosida", "quadratic_potential",
    "reaction_diffusion_potential", "yosida_scalar",
    "McEngine", "McEstimate", "RngStream", "gh_integrate", "mc_integrate",
    "SemigroupSpec", "commutation_defect", "dirichlet_em_apply", "drifted_ou_apply", "mehler_apply",
    "AscentConfig", "BvCandidate", "direct_variation", "semigroup_variation", "sup_variation",
    "variation_inequalities_report",
    "DirectVariation", "HalfspacePerimeter", "SemigroupVariation", "SublevelPerimeter", "SupVariation",
]
