"""Robust non-linear least squares: IRLS, GNC and M-HQ baselines, a
filter-method kernel-scaling solver (ASKER) and relaxed generalized MM
(ReGeMM), with bundle adjustment and 1-D robust-mean backends."""

from .additive import addfilter_solve, eval_fh_additive
from .asker import AskerConfig, asker_solve, eval_fh
from .bal import (BalDataset, SynthConfig, inlier_rate, load_bal, make_reprojection_problem, parse_bal,
                  project, synth_ba, write_bal)
from .baselines import GncSchedule, gnc_solve, irls_solve, mhq_solve
from .errors import (EvaluationFailure, InvalidArgument, InvalidHandle, InvalidScale, NotLiftable, ParseError,
                     RobustFitError, SingularSystem, StepFailed, ValidationError)
from .filter import Filter, dominates
from .kernels import KernelKind, RobustKernel, smooth_truncated
from .lm import LMConfig, SolverTrace
from .mean1d import RobustMean1D, brute_force_1d
from .problem import ParameterBlock, Problem, ResidualBlock
from .regemm import RegemmConfig, regemm_solve, weight_update

__version__ = "0.1.0"

__all__ = [
    "AskerConfig",
    "BalDataset",
    "EvaluationFailure",
    "Filter",
    "GncSchedule",
    "InvalidArgument",
    "InvalidHandle",
    "InvalidScale",
    "KernelKind",
    "LMConfig",
    "NotLiftable",
    "ParameterBlock",
    "ParseError",
    "Problem",
    "RegemmConfig",
    "ResidualBlock",
    "RobustFitError",
    "RobustKernel",
    "RobustMean1D",
    "SingularSystem",
    "SolverTrace",
    "StepFailed",
    "SynthConfig",
    "ValidationError",
    "addfilter_solve",
    "asker_solve",
    "brute_force_1d",
    "dominates",
    "eval_fh",
    "eval_fh_additive",
    "gnc_solve",
    "inlier_rate",
    "irls_solve",
    "load_bal",
    "make_reprojection_problem",
    "mhq_solve",
    "parse_bal",
    "project",
    "regemm_solve",
    "smooth_truncated",
    "synth_ba",
    "weight_update",
    "write_bal",
]
