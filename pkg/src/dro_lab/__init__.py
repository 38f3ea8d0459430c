"""Distributionally robust optimization workbench.

Ambiguity balls in MMD, 1-Wasserstein, and phi-divergence geometry around
empirical distributions, with exact worst-case oracles, outer solvers,
concentration-based radius calibration, Monte-Carlo verification, and an
experiment harness.
"""

from .backend import BACKEND
from .core import (
    CapabilityError,
    CustomLoss,
    DiscreteSupport,
    LossCertificates,
    QuadLinearLoss,
    RkhsExpansion,
    RngStream,
    SampleSet,
    ShiftedPair,
    UniformBox,
    ValidationError,
    excess_risk,
    monte_carlo_risk,
    sample,
    true_optimum,
    true_risk,
)
from .kernels import GaussianKernel, KmeExpansion, gram, median_heuristic, mmd, rkhs_norm
from .distances import CHI2_NEYMAN, KL, DiscreteDist, PhiFamily, phi_divergence, w1
from .calibration import (
    CalibrationInput,
    chi2_ball_size,
    chi2_min_sample,
    mmd_ball_size,
    sobolev_bound,
    rkhs_excess_bound,
    w1_ball_size,
)
from .robustify import (
    AmbiguitySet,
    MMDFamily,
    PhiBall,
    SolverConfig,
    W1Family,
    WorstCaseReport,
    mmd_worst_case,
    phi_worst_case,
    w1_worst_case,
)
from .solve import SolveReport, dro_solve, erm_solve, restricted_worst_case
from .verifier import (
    CoverageReport,
    coverage_chi2,
    coverage_mmd,
    decomposition_check,
    decomposition_trials,
    wilson_halfwidth,
)
from .lab import ExperimentConfig, render_lines, run_experiment, summarize, write_outputs

__version__ = "0.1.0"
