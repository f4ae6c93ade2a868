"""Known-signal detection in white Gaussian noise on wavelet detail coefficients."""

__version__ = "0.1.0"

from .detectors import (
    CoefficientVector,
    LinearDetectorModel,
    MaxDetectorModel,
    analytic_pd,
    analytic_threshold,
    build_linear_detector,
    decide,
    linear_statistic,
    matched_coefficients,
    max_statistic,
    optimize_coefficients,
)
from .errors import DomainError
from .experiment import ExperimentConfig, calibrate_max_threshold, estimate_pd, sweep
from .signals import ChirpSpec, compose_observation, gen_awgn, gen_chirp
from .streams import RandomStream
from .wavelet import ScaleSet, WaveletFilter, analyze_level, concat_details, get_wavelet, make_daubechies
