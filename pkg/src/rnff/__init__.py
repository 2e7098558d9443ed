"""Random iterations of averaged operators and random nonlinear fusion frames."""

__version__ = "0.1.0"

from .analysis import (
    FrameEnergyReport,
    MeanOperatorEstimate,
    RateConstants,
    coercivity_probe,
    derive_coercivity,
    enumerate_expectation,
    estimate_mean_projection,
    estimate_sigma,
    frame_energy_report,
    predicted_averaged_C,
    rate_constants,
    verify_mean_square_bound,
)
from .exceptions import BudgetExceededError, CapabilityError, InadmissibleConstantsError, ValidationError
from .iteration import (
    IterationTrace,
    TruncationCertificate,
    certify_truncation,
    estimate_as_rate,
    run_ensemble,
    run_iteration,
    synthesize,
)
from .kaczmarz import LinearSystem, load_system, predicted_rates, solve_rkaczmarz
from .linalg import RngStream, gram_schmidt, substream, sym_eig_extremes
from .operators import (
    Averaged,
    AveragedFamily,
    CustomDirection,
    FiniteFamily,
    GaussianHyperplane,
    HyperplaneProjection,
    Identity,
    OrthoProjection,
    SoftThreshold,
    UniformCoordinateProjection,
    apply,
    averaged_wrap,
    check_lemma31,
    sample,
)

__all__ = [
    "apply",
    "Averaged",
    "averaged_wrap",
    "AveragedFamily",
    "BudgetExceededError",
    "CapabilityError",
    "certify_truncation",
    "check_lemma31",
    "coercivity_probe",
    "CustomDirection",
    "derive_coercivity",
    "enumerate_expectation",
    "estimate_as_rate",
    "estimate_mean_projection",
    "estimate_sigma",
    "FiniteFamily",
    "frame_energy_report",
    "FrameEnergyReport",
    "GaussianHyperplane",
    "gram_schmidt",
    "HyperplaneProjection",
    "Identity",
    "InadmissibleConstantsError",
    "IterationTrace",
    "LinearSystem",
    "load_system",
    "MeanOperatorEstimate",
    "OrthoProjection",
    "predicted_averaged_C",
    "predicted_rates",
    "rate_constants",
    "RateConstants",
    "RngStream",
    "run_ensemble",
    "run_iteration",
    "sample",
    "SoftThreshold",
    "solve_rkaczmarz",
    "substream",
    "sym_eig_extremes",
    "synthesize",
    "TruncationCertificate",
    "UniformCoordinateProjection",
    "ValidationError",
    "verify_mean_square_bound",
]
