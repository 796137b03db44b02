"""Statistical watermarking for networked linear control loops.

The package covers the full workflow: synthesising feedback gains that
push every subcontroller's private excitation into every measurement,
finding stabilising observer gains with a joint-covariance certificate,
simulating the networked closed loop under sensor and channel attacks,
and detecting those attacks from windowed second moments of watermark
and residual signals.
"""

from .errors import (
    ConditionViolationError,
    DegenerateWindowError,
    DimensionError,
    DivergenceError,
    InputError,
    ModelError,
    NetwatermarkError,
    NotCalibratedError,
    ScenarioError,
    StabilityError,
    SynthesisError,
    TraceRangeError,
)
from .linalg import (
    DEFAULT_TOL,
    Tolerance,
    controllability_matrix,
    is_controllable,
    is_schur_stable,
    solve_discrete_lyapunov,
    spectral_radius,
    spectrum_distance,
)
from .model import GainSet, PlantModel
from .design import (
    GainTripleReport,
    closed_loop_matrix,
    compute_watermark_lags,
    design_feedback_shared_range,
    design_feedback_square,
    heymann_feedback,
    observer_stability_certificate,
    search_observer_gain,
    shared_input_direction,
    verify_gain_triple,
    verify_observer_lmis,
)
from .sim import (
    AttackScenario,
    SimulationTrace,
    available_kernels,
    derived_delta,
    empirical_covariance,
    simulate,
    write_trace_csv,
)
from .stats import (
    DetectorModel,
    DeltaCovariance,
    build_detector,
    calibrate_threshold,
    decide,
    delta_excitation_cross_covariance,
    null_rejection_rates,
    psi_vector,
    stacked_error_transition,
    stacked_noise_covariance,
    stationary_delta_covariance,
    window_nll_series,
    window_scatter,
    wishart_nll,
)
from .scenario import (
    DetectorConfig,
    RunConfig,
    Scenario,
    dumps_scenario,
    load_scenario,
    loads_scenario,
    platoon_preset,
    save_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "NetwatermarkError",
    "DimensionError",
    "InputError",
    "StabilityError",
    "SynthesisError",
    "ConditionViolationError",
    "DivergenceError",
    "DegenerateWindowError",
    "ModelError",
    "NotCalibratedError",
    "TraceRangeError",
    "ScenarioError",
    "Tolerance",
    "DEFAULT_TOL",
    "spectral_radius",
    "is_schur_stable",
    "solve_discrete_lyapunov",
    "controllability_matrix",
    "is_controllable",
    "spectrum_distance",
    "PlantModel",
    "GainSet",
    "design_feedback_square",
    "heymann_feedback",
    "shared_input_direction",
    "design_feedback_shared_range",
    "compute_watermark_lags",
    "closed_loop_matrix",
    "GainTripleReport",
    "verify_gain_triple",
    "search_observer_gain",
    "verify_observer_lmis",
    "observer_stability_certificate",
    "AttackScenario",
    "SimulationTrace",
    "available_kernels",
    "simulate",
    "derived_delta",
    "empirical_covariance",
    "write_trace_csv",
    "stacked_error_transition",
    "stacked_noise_covariance",
    "stationary_delta_covariance",
    "DeltaCovariance",
    "delta_excitation_cross_covariance",
    "DetectorModel",
    "build_detector",
    "psi_vector",
    "window_scatter",
    "wishart_nll",
    "window_nll_series",
    "calibrate_threshold",
    "null_rejection_rates",
    "decide",
    "DetectorConfig",
    "RunConfig",
    "Scenario",
    "load_scenario",
    "loads_scenario",
    "save_scenario",
    "dumps_scenario",
    "platoon_preset",
]
