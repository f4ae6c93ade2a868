"""Test pulse, white Gaussian noise and observations under H0 / H1."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DomainError
from .streams import RandomStream
from .wavelet import is_power_of_two


class Hypothesis(str, Enum):
    H0 = "H0"
    H1 = "H1"


def check_signal(x) -> np.ndarray:
    """Validate a sampled signal: finite, real, power-of-two length."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 1 or not is_power_of_two(x.shape[-1]):
        raise DomainError(f"signal length must be a power of two, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DomainError("signal contains non-finite samples")
    return x


@dataclass(frozen=True)
class ChirpSpec:
    """Linear frequency sweep; frequencies in cycles per sample."""

    n_samples: int = 1024
    f0: float = 0.006
    f1: float = 0.130
    phase0: float = 0.0

    def __post_init__(self):
        if not is_power_of_two(self.n_samples) or self.n_samples < 2:
            raise DomainError(f"n_samples must be a power of two >= 2, got {self.n_samples}")
        for name in ("f0", "f1"):
            f = getattr(self, name)
            if not 0.0 < f < 0.5:
                raise DomainError(f"{name} must lie in (0, 0.5) cycles/sample, got {f}")
        if not math.isfinite(self.phase0):
            raise DomainError("phase0 must be finite")


@dataclass(frozen=True)
class ScenarioSpec:
    chirp: ChirpSpec = field(default_factory=ChirpSpec)
    sigma_n: float = 1.0
    snr_db: float = 0.0
    hypothesis: Hypothesis = Hypothesis.H1

    def __post_init__(self):
        if not self.sigma_n > 0:
            raise DomainError(f"sigma_n must be positive, got {self.sigma_n}")
        object.__setattr__(self, "hypothesis", Hypothesis(self.hypothesis))


def gen_chirp(spec: ChirpSpec = ChirpSpec()) -> np.ndarray:
    """Unit-power linear chirp with frequency ``f0 + (f1 - f0) * t / (n - 1)``."""
    n = spec.n_samples
    t = np.arange(n, dtype=np.float64)
    sweep = (spec.f1 - spec.f0) / (n - 1)
    phase = 2.0 * np.pi * (spec.f0 * t + 0.5 * sweep * t * t) + spec.phase0
    s = np.cos(phase)
    return s / math.sqrt(np.mean(s * s))


def gen_awgn(n: int, sigma_n: float, stream: RandomStream) -> np.ndarray:
    if not is_power_of_two(n):
        raise DomainError(f"noise length must be a power of two, got {n}")
    if not sigma_n > 0:
        raise DomainError(f"sigma_n must be positive, got {sigma_n}")
    return sigma_n * stream.generator().standard_normal(n)


def amplitude(snr_db: float, sigma_n: float = 1.0) -> float:
    """Pulse amplitude ``10**(snr_db/20) * sigma_n`` for a unit-power pulse."""
    return 10.0 ** (snr_db / 20.0) * sigma_n


def compose_observation(s_hat, noise, snr_db: float, sigma_n: float, hyp) -> np.ndarray:
    """``noise`` under H0, ``amplitude * s_hat + noise`` under H1."""
    noise = np.asarray(noise, dtype=np.float64)
    s_hat = np.asarray(s_hat, dtype=np.float64)
    if s_hat.shape[-1] != noise.shape[-1]:
        raise DomainError(f"length mismatch: pulse {s_hat.shape[-1]} vs noise {noise.shape[-1]}")
    if Hypothesis(hyp) is Hypothesis.H0:
        return noise
    return amplitude(snr_db, sigma_n) * s_hat + noise


def simulate(scenario: ScenarioSpec, stream: RandomStream) -> np.ndarray:
    noise = gen_awgn(scenario.chirp.n_samples, scenario.sigma_n, stream)
    return compose_observation(gen_chirp(scenario.chirp), noise, scenario.snr_db, scenario.sigma_n,
                               scenario.hypothesis)
