"""Gaussian utilities, order-statistic quantiles and binomial intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.stats import binom

from .errors import DomainError

# Acklam's rational approximation to the normal quantile (relative error ~1e-9).
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549671348156407e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _scalar_or_array(out, like):
    return float(out) if np.ndim(like) == 0 else out


def normal_pdf(x):
    x = np.asarray(x, dtype=np.float64)
    return _scalar_or_array(np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi), x)


def normal_cdf(x):
    """Standard normal CDF."""
    x = np.asarray(x, dtype=np.float64)
    return _scalar_or_array(special.ndtr(x), x)


def normal_sf(x):
    """Upper tail ``1 - Phi(x)``, accurate for large ``x``."""
    x = np.asarray(x, dtype=np.float64)
    return _scalar_or_array(special.ndtr(-x), x)


def _lower_tail_guess(q: np.ndarray) -> np.ndarray:
    # q in (0, 0.5]; returns x <= 0 with Phi(x) ~= q
    x = np.empty_like(q)
    tail = q < _P_LOW
    r = np.sqrt(-2.0 * np.log(q[tail]))
    c, d = _C, _D
    x[tail] = (((((c[0] * r + c[1]) * r + c[2]) * r + c[3]) * r + c[4]) * r + c[5]) / (
        (((d[0] * r + d[1]) * r + d[2]) * r + d[3]) * r + 1.0
    )
    mid = ~tail
    u = q[mid] - 0.5
    r = u * u
    a, b = _A, _B
    x[mid] = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * u / (
        ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
    )
    return x


def normal_quantile(p):
    """Inverse standard normal CDF.

    Rational approximation refined by a Newton step on the lower tail, so the
    upper half is solved as ``-Phi^-1(1 - p)`` without cancellation.
    """
    p_arr = np.asarray(p, dtype=np.float64)
    if not np.all((p_arr > 0.0) & (p_arr < 1.0)):
        raise DomainError(f"quantile probability must lie in (0, 1), got {p}")
    upper = p_arr > 0.5
    q = np.where(upper, 1.0 - p_arr, p_arr)
    x = _lower_tail_guess(np.atleast_1d(q)).reshape(q.shape)
    for _ in range(2):
        x = x - (special.ndtr(x) - q) / (np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi))
    x = np.where(upper, -x, x)
    return _scalar_or_array(x, p_arr)


def empirical_quantile(samples, q: float) -> float:
    """The ``ceil(q * n)``-th order statistic (1-based) of ``samples``.

    At most a fraction ``1 - q`` of the samples lies strictly above the result.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    n = x.size
    if n == 0:
        raise DomainError("empirical_quantile of an empty sample")
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"quantile level must lie in [0, 1], got {q}")
    # shave one part in 1e12 so that e.g. 0.9 * 10 counts as exactly 9
    k = min(max(math.ceil(q * n * (1.0 - 1e-12)), 1), n)
    return float(np.partition(x, k - 1)[k - 1])


@dataclass(frozen=True)
class ConfidenceInterval:
    lo: float
    hi: float
    level: float

    def __post_init__(self):
        if not 0.0 <= self.lo <= self.hi <= 1.0:
            raise DomainError(f"invalid interval [{self.lo}, {self.hi}]")
        if not 0.0 < self.level < 1.0:
            raise DomainError(f"confidence level must lie in (0, 1), got {self.level}")

    @property
    def half_width(self) -> float:
        return 0.5 * (self.hi - self.lo)

    def __contains__(self, p: float) -> bool:
        return self.lo <= p <= self.hi


def binomial_ci(successes: int, trials: int, level: float = 0.95) -> ConfidenceInterval:
    """Wilson score interval for a binomial proportion."""
    if trials < 1 or not 0 <= successes <= trials:
        raise DomainError(f"need 0 <= successes <= trials and trials >= 1, got {successes}/{trials}")
    if not 0.0 < level < 1.0:
        raise DomainError(f"confidence level must lie in (0, 1), got {level}")
    z = normal_quantile(0.5 + level / 2.0)
    n = float(trials)
    p = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2.0 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return ConfidenceInterval(lo=lo, hi=min(max(lo, hi), 1.0), level=level)


def binomial_band(p: float, trials: int, level: float = 0.99) -> tuple[float, float]:
    """Central binomial acceptance band for the observed *rate* when the true rate is ``p``."""
    tail = (1.0 - level) / 2.0
    lo = binom.ppf(tail, trials, p) / trials
    hi = binom.ppf(1.0 - tail, trials, p) / trials
    return float(lo), float(hi)
