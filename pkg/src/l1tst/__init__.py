"""l1-geometry kernel two-sample tests (L1-ME, L1-SCF) with optimized test
locations, plus l2 and MMD baselines and a benchmark harness."""

from .kernels import TestLocations, gaussian_kernel, me_feature, scf_feature
from .matops import NearSingularError, NonFiniteError, regularized_inv_sqrt
from .nulldist import chi2_quantile, naka_sum_quantile, permutation_threshold
from .optimizer import OptimizerConfig, Theta, optimize_theta, power_proxy
from .problems import ProblemSpec, sample_problem
from .statistics import (
    SampleSet,
    TestOutcome,
    l1_me_statistic,
    l1_scf_statistic,
    me_statistic_l2,
    mmd2_unbiased,
    scf_statistic_l2,
)

__version__ = "0.1.0"

__all__ = [
    "TestLocations", "gaussian_kernel", "me_feature", "scf_feature",
    "NearSingularError", "NonFiniteError", "regularized_inv_sqrt",
    "chi2_quantile", "naka_sum_quantile", "permutation_threshold",
    "OptimizerConfig", "Theta", "optimize_theta", "power_proxy",
    "ProblemSpec", "sample_problem",
    "SampleSet", "TestOutcome", "l1_me_statistic", "l1_scf_statistic", "me_statistic_l2",
    "mmd2_unbiased", "scf_statistic_l2",
]
