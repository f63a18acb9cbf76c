"""Simulation and Monte Carlo diagnostics for ergodic properties of Markov
chains on metric spaces: IFS jump processes, a sequence-space chain without
an invariant measure, and seeded, thread-count-independent estimators."""

from . import _backend
from .counterexample import (CExampleChain, InvalidCellError, Mode, Z, escape_statistics,
                             product_lower_bound, seq_distance, u0_visit_frequency,
                             z_return_probe)
from .diagnostics import (drift_check, equicontinuity_probe, estimate_condition_E,
                          estimate_liminf_return, mixing_bound_k, stability_probe,
                          support_estimate, tightness_probe)
from .ifs import (AffineIfs, IfsJumpProcess, LyapunovCertificate, ParameterError,
                  ProbabilityVectorError, builtin_processes, decay2d, drift_coefficients,
                  dyadic, estimate_b_tilde, jump_step, lipschitz_bound_L, point_process,
                  validate_params)
from .kernel import (Ensemble, FunctionKernel, Kernel, Trajectory, cesaro_measure,
                     endpoint_measure, ensemble, invariance_residual, pn_f, pn_set,
                     propagate, run_from, simulate)
from .metric import (EmpiricalMeasure, FiniteSetIndex, TestFunction, TestFunctionDictionary,
                     bl_distance, build_dictionary, dist_to_finite_set, distance,
                     lipschitz_estimate, mc_error_bound)
from .points import INFINITY, MetricError, RealVector, SeqState, Space
from .report import DiagnosticReport, EquicontinuityReport, SeriesPoint, Verdict
from .rng import RandomStream, derive_seed

__all__ = [
    "CExampleChain", "InvalidCellError", "Mode", "Z", "escape_statistics",
    "product_lower_bound", "seq_distance", "u0_visit_frequency", "z_return_probe",
    "drift_check", "equicontinuity_probe", "estimate_condition_E", "estimate_liminf_return",
    "mixing_bound_k", "stability_probe", "support_estimate", "tightness_probe", "AffineIfs",
    "IfsJumpProcess", "LyapunovCertificate", "ParameterError", "ProbabilityVectorError",
    "builtin_processes", "decay2d", "drift_coefficients", "dyadic", "estimate_b_tilde",
    "jump_step", "lipschitz_bound_L", "point_process", "validate_params", "Ensemble",
    "FunctionKernel", "Kernel", "Trajectory", "cesaro_measure", "endpoint_measure",
    "ensemble", "invariance_residual", "pn_f", "pn_set", "propagate", "run_from",
    "simulate", "EmpiricalMeasure", "FiniteSetIndex", "TestFunction",
    "TestFunctionDictionary", "bl_distance", "build_dictionary", "dist_to_finite_set",
    "distance", "lipschitz_estimate", "mc_error_bound", "INFINITY", "MetricError",
    "RealVector", "SeqState", "Space", "DiagnosticReport", "EquicontinuityReport",
    "SeriesPoint", "Verdict", "RandomStream", "derive_seed", "backend",
]

__version__ = "0.1.0"


def backend() -> str:
    """Name of the simulation loop in use: ``"compiled"`` or ``"python"``."""
    return _backend.default_backend()
