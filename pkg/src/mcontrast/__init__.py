"""Contrast-based estimation with certified optimization gaps.

The package fits parametric and nonparametric mixture models by maximizing
empirical contrast functionals built from concave generators, certifies
how far each fit can be from the constrained supremum, and audits the
population-level separation conditions that make such estimators
consistent.
"""

from .contrasts import (CONTRAST_FACTORIES, ConcavityReport, PhiContrast,
                        check_concavity_condition, get_contrast, m_value, psi,
                        theta, theta_gap)
from .errors import (AdmissibilityError, ContrastDomainError, QuadratureError,
                     VerificationError)
from .estimation import (EmpiricalContrast, FitResult, GapCertificate,
                         certify_gap, fit_grid, fit_mixture_em,
                         fit_mixture_fw, vertex_directional_derivative)
from .harness import (ExperimentConfig, ExperimentReport, FitRecord,
                      emit_plot, identity_suite, run_consistency,
                      run_separation_audit, run_single_fit)
from .models import (MODEL_REGISTRY, MixingMeasure, MixtureFamily,
                     MixtureKernel, ParametricFamily, Rng, build_model,
                     combine, contraction, mixture_density,
                     population_contrast, sample_mixture, wasserstein1)
from .quadrature import QuadratureRule, gauss_legendre, integrate_adaptive
from .separation import (AStarSpec, GapEstimate, JensenBoundReport,
                         SeparationReport, check_A2_over_grid,
                         check_jensen_bound, check_log_lower_bound,
                         estimate_gap)

__version__ = "0.1.0"

__all__ = [
    "AStarSpec", "AdmissibilityError", "CONTRAST_FACTORIES",
    "ConcavityReport", "ContrastDomainError", "EmpiricalContrast",
    "ExperimentConfig", "ExperimentReport", "FitRecord", "FitResult",
    "GapCertificate", "GapEstimate", "JensenBoundReport", "MODEL_REGISTRY",
    "MixingMeasure", "MixtureFamily", "MixtureKernel", "ParametricFamily",
    "PhiContrast", "QuadratureError", "QuadratureRule", "Rng",
    "SeparationReport", "VerificationError", "build_model", "certify_gap",
    "check_A2_over_grid", "check_concavity_condition", "check_jensen_bound",
    "check_log_lower_bound", "combine", "contraction", "emit_plot",
    "estimate_gap", "fit_grid", "fit_mixture_em", "fit_mixture_fw",
    "gauss_legendre", "get_contrast", "identity_suite", "integrate_adaptive",
    "m_value", "mixture_density", "population_contrast",
    "run_consistency", "run_separation_audit", "run_single_fit",
    "sample_mixture", "theta", "theta_gap", "psi",
    "vertex_directional_derivative", "wasserstein1",
]
