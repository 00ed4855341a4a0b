"""Confidence intervals for IV causal effects robust to invalid instruments.

Inverts instrument-validity-aware test statistics (Anderson-Rubin, TSLS
Wald, conditional likelihood ratio) over every candidate invalid-instrument
set of a bounded size and takes unions, optionally with a Sargan pretest,
yielding confidence sets with guaranteed coverage when up to a known number
of instruments violate the exclusion or exogeneity assumptions. Includes an
exact power calculator for the Anderson-Rubin test under invalid
instruments and a reproducible Monte Carlo harness.
"""

from .distributions import (
    DistParams,
    chi_square_cdf,
    chi_square_quantile,
    f_cdf,
    f_quantile,
    noncentral_f_cdf,
    normal_quantile,
)
from .estimator import RobustIVCI
from .exceptions import ConfigError, DataError, EstimationError, RobustIVError
from .intervals import RealIntervalSet
from .inversion import GridSpec, grid_invert, invert_ar, invert_clr, invert_wald
from .model import (
    IVDataset,
    ProjectionCache,
    ProjectionFactory,
    SubsetSpec,
    build_projection_cache,
    enumerate_subsets,
    residualize_covariates,
    validate_dataset,
)
from .power import PowerSpec, ar_power_exact, noncentrality, power_curve
from .simulation import (
    SimConfig,
    TruthRecord,
    calibrate_gamma,
    coverage_experiment,
    generate_dataset,
    length_experiment,
    monte_carlo_ar_power,
    power_experiment,
)
from .teststats import (
    TestResult,
    TSLSFit,
    ar_statistic,
    clr_statistic,
    sargan_statistic,
    tsls_fit,
    wald_statistic,
)
from .union import (
    AnalysisConfig,
    RobustCIReport,
    SensitivityResult,
    SubsetRecord,
    robust_ci,
    robust_ci_pretest,
    sensitivity_sweep,
)

__version__ = "0.1.0"

__all__ = [
    "AnalysisConfig",
    "ConfigError",
    "DataError",
    "DistParams",
    "EstimationError",
    "GridSpec",
    "IVDataset",
    "PowerSpec",
    "ProjectionCache",
    "ProjectionFactory",
    "RealIntervalSet",
    "RobustCIReport",
    "RobustIVCI",
    "RobustIVError",
    "SensitivityResult",
    "SimConfig",
    "SubsetRecord",
    "SubsetSpec",
    "TSLSFit",
    "TestResult",
    "TruthRecord",
    "ar_power_exact",
    "ar_statistic",
    "build_projection_cache",
    "calibrate_gamma",
    "chi_square_cdf",
    "chi_square_quantile",
    "clr_statistic",
    "coverage_experiment",
    "enumerate_subsets",
    "f_cdf",
    "f_quantile",
    "generate_dataset",
    "grid_invert",
    "invert_ar",
    "invert_clr",
    "invert_wald",
    "length_experiment",
    "monte_carlo_ar_power",
    "noncentral_f_cdf",
    "noncentrality",
    "normal_quantile",
    "power_curve",
    "power_experiment",
    "residualize_covariates",
    "robust_ci",
    "robust_ci_pretest",
    "sargan_statistic",
    "sensitivity_sweep",
    "tsls_fit",
    "validate_dataset",
    "wald_statistic",
]
