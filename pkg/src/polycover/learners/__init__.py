"""End-to-end learning pipelines built on moment tensors and parameter covers."""

from .gmm import (
    ClusterAssignment,
    GMMConfig,
    gmm_candidate_cover,
    gmm_density_estimate,
    gmm_parameter_estimate,
    gmm_rough_cluster,
    good_center_lp,
)
from .hyperplanes import HyperplaneConfig, hyperplane_learn, robust_null_vector, sign_invariant_distance
from .mixture import GaussianCandidates, MixtureHypothesis, RegressionCandidates, fit_mixture_weights
from .mlr import (
    MLRConfig,
    SRCover,
    mlr_cluster,
    mlr_density_estimate,
    mlr_iterate_cover,
    mlr_parameter_estimate,
    mlr_refine_cover,
)
from .relu import GLMConfig, GLMFit, glm_learn, l2_distance_sq, relu_kernel, relu_pac_learn

__all__ = [
    "ClusterAssignment", "GMMConfig", "gmm_candidate_cover", "gmm_density_estimate", "gmm_parameter_estimate",
    "gmm_rough_cluster", "good_center_lp", "HyperplaneConfig", "hyperplane_learn", "robust_null_vector",
    "sign_invariant_distance", "GaussianCandidates", "MixtureHypothesis", "RegressionCandidates",
    "fit_mixture_weights", "MLRConfig", "SRCover", "mlr_cluster", "mlr_density_estimate", "mlr_iterate_cover",
    "mlr_parameter_estimate", "mlr_refine_cover", "GLMConfig", "GLMFit", "glm_learn", "l2_distance_sq",
    "relu_kernel", "relu_pac_learn",
]
