"""Sliding-window extreme-eigenvalue change-point detection.

The package covers threshold calibration from random matrix theory
(:mod:`.calibration`, :mod:`.tracy_widom`), the streaming detectors
(:mod:`.detector`, :mod:`.linalg`) and a seeded Monte Carlo harness
(:mod:`.montecarlo`). ``eigenscan`` on the command line wraps all three.
"""

from importlib.metadata import PackageNotFoundError, version

from .calibration import (
    CalibrationResult,
    EdgeConstants,
    arl_corrected,
    corr_slope_beta,
    cross_moment_upper_bound,
    edd_lower_bound,
    edge_constants_max,
    edge_constants_min,
    kl_delay_bound,
    kl_divergence_spiked,
    min_window,
    nu_overshoot,
    threshold_corrected,
    threshold_tw_max,
    threshold_tw_min,
)
from .detector import Detector, DetectorConfig, run_to_alarm, trajectory
from .errors import (
    CalibrationInfeasibleError,
    DataError,
    DetectorAlarmedError,
    EigenscanError,
    InvalidArgumentError,
    NumericError,
    TailResolutionError,
)
from .linalg import SlidingCovariance, eigenvalues, lambda_max, lambda_min
from .montecarlo import (
    GeneratorSpec,
    ObservationStream,
    SimulationReport,
    estimate_arl,
    estimate_correlation,
    estimate_edd,
    generate,
)
from .tracy_widom import TracyWidomTable, tw1_cdf, tw1_moments, tw1_upper_quantile

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"
