"""Max-Detector and Linear-Detector statistics, thresholds and detection probabilities.

The Linear-Detector statistic is ``v = sum_k a[k] * d[k]`` over the steady-state
indices of every concatenated segment.  Under white Gaussian noise ``v`` is
Gaussian with zero mean under H0, mean ``A * <a, d_s>`` under H1 and standard
deviation ``sigma_n * ||a||`` (cross terms between coefficients are dropped),
so threshold and Pd follow in closed form.  The Max-Detector thresholds
``max |d|`` over a whole single-level detail vector and needs a Monte Carlo
threshold (see :mod:`wavedet.experiment`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Union

import numpy as np

from .errors import DomainError
from .signals import amplitude
from .stats import normal_cdf, normal_quantile
from .wavelet import (
    BOUNDARY_MODES,
    ConcatenatedDetails,
    DetailCoefficients,
    ScaleSet,
    SegmentLayout,
    WaveletFilter,
    analyze_level,
    concat_details,
)

__all__ = [
    "ScaleSet",
    "CoefficientVector",
    "LinearDetectorModel",
    "MaxDetectorModel",
    "Calibration",
    "OptimizationResult",
    "max_statistic",
    "linear_statistic",
    "matched_coefficients",
    "optimize_coefficients",
    "analytic_sigma",
    "analytic_eta1",
    "analytic_threshold",
    "analytic_pd",
    "decide",
    "build_linear_detector",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]


@dataclass(frozen=True, eq=False)
class CoefficientVector:
    """Weights aligned with a concatenated detail layout; zero off the active range."""

    values: np.ndarray
    layout: SegmentLayout

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.shape != (self.layout.total,):
            raise DomainError(f"coefficient vector has shape {v.shape}, layout expects ({self.layout.total},)")
        mask = self.layout.active_mask()
        if np.any(v[~mask] != 0.0):
            raise DomainError("coefficients outside the steady-state range must be zero")
        if not np.any(v[mask] != 0.0):
            raise DomainError("coefficient vector needs at least one nonzero active component")
        if not np.all(np.isfinite(v)):
            raise DomainError("coefficients must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_active(cls, layout: SegmentLayout, active) -> "CoefficientVector":
        v = np.zeros(layout.total)
        v[layout.active_mask()] = np.asarray(active, dtype=np.float64)
        return cls(v, layout)

    @property
    def active(self) -> np.ndarray:
        return self.values[self.layout.active_mask()]

    def norm(self) -> float:
        return float(np.linalg.norm(self.active))

    def scaled(self, alpha: float) -> "CoefficientVector":
        return CoefficientVector(self.values * alpha, self.layout)


class Calibration(NamedTuple):
    trials: int
    seed: int


@dataclass(frozen=True, eq=False)
class LinearDetectorModel:
    filter: WaveletFilter
    scales: ScaleSet
    a: CoefficientVector
    sigma_n: float
    pfa: float
    v_t: float
    boundary_mode: str = "zero-pad"

    def __post_init__(self):
        object.__setattr__(self, "scales", ScaleSet.of(self.scales))
        if self.a.layout.levels != self.scales.levels:
            raise DomainError("coefficient layout does not match the scale set")
        if not self.sigma_n > 0:
            raise DomainError(f"sigma_n must be positive, got {self.sigma_n}")
        if self.boundary_mode not in BOUNDARY_MODES:
            raise DomainError(f"unknown boundary mode {self.boundary_mode!r}")
        expected = analytic_threshold(self.a, self.sigma_n, self.pfa)
        if abs(self.v_t - expected) > 1e-10 * max(1.0, abs(expected)):
            raise DomainError(f"v_t={self.v_t!r} inconsistent with sigma_v * Phi^-1(1 - pfa) = {expected!r}")

    def details(self, x) -> ConcatenatedDetails:
        return concat_details(x, self.filter, self.scales, self.boundary_mode)

    def statistic(self, x):
        return linear_statistic(self.details(x), self.a)

    def detect(self, x):
        return decide(self.statistic(x), self.v_t)


@dataclass(frozen=True, eq=False)
class MaxDetectorModel:
    filter: WaveletFilter
    scale: int
    v_t: float
    pfa: float
    calibration: Calibration = field(default=Calibration(0, 0))
    boundary_mode: str = "zero-pad"

    def __post_init__(self):
        if not self.v_t >= 0:
            raise DomainError(f"max-detector threshold must be >= 0, got {self.v_t}")
        if not 0.0 < self.pfa < 1.0:
            raise DomainError(f"pfa must lie in (0, 1), got {self.pfa}")
        if self.boundary_mode not in BOUNDARY_MODES:
            raise DomainError(f"unknown boundary mode {self.boundary_mode!r}")
        object.__setattr__(self, "calibration", Calibration(*self.calibration))

    def statistic(self, x):
        return max_statistic(analyze_level(x, self.filter, self.scale, self.boundary_mode))

    def detect(self, x):
        return decide(self.statistic(x), self.v_t)


Detector = Union[LinearDetectorModel, MaxDetectorModel]


def _values(d) -> np.ndarray:
    if isinstance(d, (DetailCoefficients, ConcatenatedDetails)):
        return d.values
    return np.asarray(d, dtype=np.float64)


def max_statistic(d):
    """``max |d|`` over every component, including pre-steady indices."""
    v = _values(d)
    if v.shape[-1] == 0:
        raise DomainError("max statistic of an empty vector")
    out = np.max(np.abs(v), axis=-1)
    return float(out) if out.ndim == 0 else out


def _check_layout(d: ConcatenatedDetails, a: CoefficientVector) -> None:
    if d.layout != a.layout:
        raise DomainError(f"layout mismatch: details {d.layout} vs coefficients {a.layout}")


def linear_statistic(d_B: ConcatenatedDetails, a: CoefficientVector):
    """Weighted sum of the active (steady-state) components of ``d_B``."""
    _check_layout(d_B, a)
    mask = a.layout.active_mask()
    out = d_B.values[..., mask] @ a.values[mask]
    return float(out) if np.ndim(out) == 0 else out


def matched_coefficients(d_s: ConcatenatedDetails) -> CoefficientVector:
    """Unit-norm weights proportional to the clean pulse's active coefficients."""
    if d_s.values.ndim != 1:
        raise DomainError("matched coefficients need a single (unbatched) pulse response")
    active = d_s.active()
    norm = float(np.linalg.norm(active))
    if norm == 0.0:
        raise DomainError("pulse has no energy on the active coefficients")
    return CoefficientVector.from_active(d_s.layout, active / norm)


def analytic_sigma(a: CoefficientVector, sigma_n: float) -> float:
    """Standard deviation of the linear statistic: ``sigma_n * ||a_active||``."""
    return sigma_n * a.norm()


def analytic_eta1(a: CoefficientVector, d_s: ConcatenatedDetails, snr_db: float, sigma_n: float) -> float:
    """Mean of the linear statistic under H1."""
    _check_layout(d_s, a)
    return amplitude(snr_db, sigma_n) * float(np.dot(a.active, d_s.active()))


def analytic_threshold(a: CoefficientVector, sigma_n: float, pfa: float) -> float:
    if not 0.0 < pfa < 1.0:
        raise DomainError(f"pfa must lie in (0, 1), got {pfa}")
    return analytic_sigma(a, sigma_n) * normal_quantile(1.0 - pfa)


def _pd(a: CoefficientVector, d_s: ConcatenatedDetails, snr_db: float, sigma_n: float, v_t: float) -> float:
    sigma = analytic_sigma(a, sigma_n)
    eta = analytic_eta1(a, d_s, snr_db, sigma_n)
    return normal_cdf((eta - v_t) / sigma)


def analytic_pd(model: LinearDetectorModel, d_s: ConcatenatedDetails, snr_db: float) -> float:
    """``Pd = 1 - Phi((V_T - eta1) / sigma_v)`` (evaluated as an upper tail)."""
    return _pd(model.a, d_s, snr_db, model.sigma_n, model.v_t)


def decide(statistic, v_t: float):
    """Detected iff ``statistic > v_t`` (ties are not detections)."""
    out = np.asarray(statistic) > v_t
    return bool(out) if out.ndim == 0 else out


def build_linear_detector(
    f: WaveletFilter,
    scales,
    d_s: ConcatenatedDetails,
    sigma_n: float = 1.0,
    pfa: float = 1e-3,
    a: CoefficientVector | None = None,
    boundary_mode: str = "zero-pad",
) -> LinearDetectorModel:
    """Linear detector with analytic threshold; matched weights unless ``a`` is given."""
    scales = ScaleSet.of(scales)
    if a is None:
        a = matched_coefficients(d_s)
    return LinearDetectorModel(
        filter=f,
        scales=scales,
        a=a,
        sigma_n=float(sigma_n),
        pfa=float(pfa),
        v_t=analytic_threshold(a, sigma_n, pfa),
        boundary_mode=boundary_mode,
    )


@dataclass(frozen=True)
class OptimizationResult:
    coefficients: CoefficientVector
    pd: float
    iterations: int
    converged: bool


def optimize_coefficients(
    d_s: ConcatenatedDetails,
    pfa: float,
    snr_db: float,
    init: CoefficientVector,
    budget: int = 1000,
    sigma_n: float = 1.0,
    tol: float = 1e-12,
) -> OptimizationResult:
    """Maximize the analytic Pd over unit-norm weight vectors by projected ascent.

    Ascent runs on the probit of Pd, ``(eta1 - V_T) / sigma_v``, which has the
    same maximizer but does not saturate when Pd rounds to 0 or 1.  Each step
    moves along the tangent-space gradient and retracts onto the sphere; steps
    without sufficient increase are halved and rejected.
    """
    _check_layout(d_s, init)
    if not 0.0 < pfa < 1.0:
        raise DomainError(f"pfa must lie in (0, 1), got {pfa}")
    if abs(init.norm() - 1.0) > 1e-9:
        raise DomainError(f"init must be unit norm, got norm {init.norm()}")
    layout = init.layout
    d = d_s.active()
    scale = amplitude(snr_db, sigma_n) / sigma_n
    z = normal_quantile(1.0 - pfa)

    def probit(a):
        return scale * float(a @ d) / float(np.linalg.norm(a)) - z

    a = init.active.copy()
    f_a = probit(a)
    grad_scale = scale * float(np.linalg.norm(d))
    if grad_scale == 0.0:
        raise DomainError("pulse has no energy on the active coefficients")
    step = 1.0 / grad_scale
    converged = False
    it = 0
    for it in range(1, budget + 1):
        grad = scale * (d - float(a @ d) * a)
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol * grad_scale:
            converged = float(a @ d) > 0.0
            break
        while True:
            cand = a + step * grad
            cand /= np.linalg.norm(cand)
            f_c = probit(cand)
            # Armijo with c = 1/2: on a locally quadratic objective this admits no step
            # past the line maximizer, so iterates cannot zig-zag across the optimum
            if f_c >= f_a + 0.5 * step * gnorm * gnorm and f_c > f_a:
                a, f_a = cand, f_c
                step *= 2.0
                break
            step *= 0.5
            if step * gnorm < 1e-18:
                break
        if step * gnorm < 1e-18:
            # no representable improvement left along the gradient
            converged = float(a @ d) > 0.0
            break
    coeffs = CoefficientVector.from_active(layout, a)
    return OptimizationResult(
        coefficients=coeffs,
        pd=normal_cdf(f_a),
        iterations=it,
        converged=converged,
    )


def _filter_to_dict(f: WaveletFilter) -> dict:
    return {"name": f.name, "h": f.h.tolist(), "g": f.g.tolist()}


def _filter_from_dict(d: dict) -> WaveletFilter:
    return WaveletFilter(name=d["name"], h=np.array(d["h"]), g=np.array(d["g"]))


def model_to_dict(model: Detector) -> dict:
    if isinstance(model, LinearDetectorModel):
        lay = model.a.layout
        return {
            "kind": "linear",
            "filter": _filter_to_dict(model.filter),
            "scales": list(model.scales.levels),
            "a": {
                "values": model.a.values.tolist(),
                "layout": {
                    "levels": list(lay.levels),
                    "lengths": list(lay.lengths),
                    "steady_starts": list(lay.steady_starts),
                },
            },
            "sigma_n": model.sigma_n,
            "pfa": model.pfa,
            "v_t": model.v_t,
            "boundary_mode": model.boundary_mode,
        }
    if isinstance(model, MaxDetectorModel):
        return {
            "kind": "max",
            "filter": _filter_to_dict(model.filter),
            "scale": model.scale,
            "v_t": model.v_t,
            "pfa": model.pfa,
            "calibration": {"trials": model.calibration.trials, "seed": model.calibration.seed},
            "boundary_mode": model.boundary_mode,
        }
    raise TypeError(f"not a detector model: {type(model).__name__}")


def model_from_dict(d: dict) -> Detector:
    try:
        kind = d["kind"]
        f = _filter_from_dict(d["filter"])
        if kind == "linear":
            lay = d["a"]["layout"]
            layout = SegmentLayout(
                levels=tuple(lay["levels"]),
                lengths=tuple(lay["lengths"]),
                steady_starts=tuple(lay["steady_starts"]),
            )
            return LinearDetectorModel(
                filter=f,
                scales=ScaleSet(tuple(d["scales"])),
                a=CoefficientVector(np.array(d["a"]["values"], dtype=np.float64), layout),
                sigma_n=float(d["sigma_n"]),
                pfa=float(d["pfa"]),
                v_t=float(d["v_t"]),
                boundary_mode=d.get("boundary_mode", "zero-pad"),
            )
        if kind == "max":
            cal = d["calibration"]
            return MaxDetectorModel(
                filter=f,
                scale=int(d["scale"]),
                v_t=float(d["v_t"]),
                pfa=float(d["pfa"]),
                calibration=Calibration(int(cal["trials"]), int(cal["seed"])),
                boundary_mode=d.get("boundary_mode", "zero-pad"),
            )
    except (KeyError, TypeError) as exc:
        raise DomainError(f"malformed detector document: {exc}") from None
    raise DomainError(f"unknown detector kind {kind!r}")


def save_model(model: Detector, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n")


def load_model(path) -> Detector:
    return model_from_dict(json.loads(Path(path).read_text()))


def detector_label(model: Detector) -> tuple[str, str]:
    """``(kind, scales)`` labels as written to sweep CSVs."""
    if isinstance(model, LinearDetectorModel):
        return "linear", model.scales.label()
    return "max", str(model.scale)
