"""Seeded Monte Carlo harness: calibration, Pd estimation, sweeps and benchmarks.

Trials are processed in fixed-size chunks.  A chunk's noise depends only on
``(master_seed, purpose, trial index)`` and chunk boundaries never depend on
the worker count, so every result is identical for any degree of
parallelism.  All reductions are integer sums.

Both detectors are linear up to their final nonlinearity, so a trial's noise
is pushed through the filter bank once, as a single product with the cached
analysis matrix, and the pulse response ``A * d_s`` is added per SNR point.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .detectors import (
    Calibration,
    Detector,
    LinearDetectorModel,
    MaxDetectorModel,
    build_linear_detector,
    detector_label,
)
from .errors import DomainError
from .signals import ChirpSpec, Hypothesis, amplitude, compose_observation, gen_chirp
from .stats import ConfidenceInterval, binomial_ci, empirical_quantile, normal_cdf, normal_quantile
from .streams import check_seed, normal_block
from .wavelet import (
    BOUNDARY_MODES,
    ConcatenatedDetails,
    ScaleSet,
    WaveletFilter,
    analysis_matrix,
    analyze_level,
    concat_details,
    get_wavelet,
)

logger = logging.getLogger(__name__)

CALIBRATION = "calibration"
EVALUATION = "evaluation"
FALSE_ALARM = "false-alarm"
PROFILE = "profile"

CHUNK_TRIALS = 2048

NoiseSource = Callable[[str, int, int], np.ndarray]


def default_snr_grid() -> tuple[float, ...]:
    return tuple(float(s) for s in range(-20, 1))


@dataclass(frozen=True)
class ExperimentConfig:
    chirp: ChirpSpec = field(default_factory=ChirpSpec)
    wavelet: str = "db9"
    scales: ScaleSet = ScaleSet((4,))
    pfa: float = 1e-3
    snr_grid: tuple[float, ...] = field(default_factory=default_snr_grid)
    trials_per_point: int = 10_000
    calibration_trials: int = 1_000_000
    master_seed: int = 0
    boundary_mode: str = "zero-pad"
    sigma_n: float = 1.0
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "scales", ScaleSet.of(self.scales))
        object.__setattr__(self, "snr_grid", tuple(float(s) for s in self.snr_grid))
        get_wavelet(self.wavelet)
        if not 0.0 < self.pfa < 1.0:
            raise DomainError(f"pfa must lie in (0, 1), got {self.pfa}")
        if any(b <= a for a, b in zip(self.snr_grid, self.snr_grid[1:])):
            raise DomainError("snr_grid must be strictly increasing")
        if self.trials_per_point < 1:
            raise DomainError("trials_per_point must be >= 1")
        if self.calibration_trials * self.pfa < 10.0 * (1.0 - 1e-12):
            raise DomainError(
                f"calibration_trials must be >= 10 / pfa = {math.ceil(10 / self.pfa)}, got {self.calibration_trials}"
            )
        if self.boundary_mode not in BOUNDARY_MODES:
            raise DomainError(f"unknown boundary mode {self.boundary_mode!r}")
        if not self.sigma_n > 0:
            raise DomainError(f"sigma_n must be positive, got {self.sigma_n}")
        if self.workers < 1:
            raise DomainError("workers must be >= 1")
        check_seed(self.master_seed)

    @property
    def filter(self) -> WaveletFilter:
        return get_wavelet(self.wavelet)

    @property
    def n_samples(self) -> int:
        return self.chirp.n_samples

    def pulse(self) -> np.ndarray:
        return gen_chirp(self.chirp)

    def pulse_details(self, scales=None) -> ConcatenatedDetails:
        return concat_details(self.pulse(), self.filter, self.scales if scales is None else scales,
                              self.boundary_mode)

    def noise(self) -> "GaussianNoise":
        return GaussianNoise(self.master_seed, self.n_samples, self.sigma_n)


@dataclass(frozen=True)
class GaussianNoise:
    """Default noise source: seeded i.i.d. N(0, sigma_n^2) samples per trial."""

    master_seed: int
    n: int
    sigma_n: float = 1.0

    def __call__(self, purpose: str, start: int, stop: int) -> np.ndarray:
        return normal_block(self.master_seed, purpose, start, stop, self.n, self.sigma_n)


def linear_detector(config: ExperimentConfig, scales=None) -> LinearDetectorModel:
    """Matched Linear-Detector for ``scales`` (default: the config's scale set)."""
    scales = config.scales if scales is None else ScaleSet.of(scales)
    d_s = config.pulse_details(scales)
    return build_linear_detector(config.filter, scales, d_s, config.sigma_n, config.pfa,
                                 boundary_mode=config.boundary_mode)


# -- compiled detectors -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _Probe:
    kind: str
    matrix: np.ndarray
    response: np.ndarray
    v_t: float

    def statistic(self, projected: np.ndarray, amp: float) -> np.ndarray:
        z = projected + amp * self.response
        if self.kind == "linear":
            return z[:, 0]
        return np.max(np.abs(z), axis=1)


def _compile(detector: Detector, pulse: np.ndarray, n: int) -> _Probe:
    if isinstance(detector, LinearDetectorModel):
        W = analysis_matrix(detector.filter, n, detector.scales, detector.boundary_mode)
        mask = detector.a.layout.active_mask()
        kernel = W[:, mask] @ detector.a.values[mask]
        matrix = kernel[:, None]
        kind = "linear"
    elif isinstance(detector, MaxDetectorModel):
        matrix = np.array(analysis_matrix(detector.filter, n, (detector.scale,), detector.boundary_mode))
        kind = "max"
    else:
        raise TypeError(f"not a detector: {type(detector).__name__}")
    return _Probe(kind=kind, matrix=matrix, response=pulse @ matrix, v_t=float(detector.v_t))


@dataclass(frozen=True, eq=False)
class _Job:
    noise: NoiseSource
    purpose: str
    probes: tuple[_Probe, ...]
    amplitudes: tuple[float, ...]

    def stacked(self) -> tuple[np.ndarray, list[slice]]:
        mats = [p.matrix for p in self.probes]
        slices, pos = [], 0
        for m in mats:
            slices.append(slice(pos, pos + m.shape[1]))
            pos += m.shape[1]
        return np.concatenate(mats, axis=1), slices


def _count_chunk(job: _Job, start: int, stop: int) -> tuple[np.ndarray, np.ndarray]:
    X = job.noise(job.purpose, start, stop)
    mat, slices = job.stacked()
    P = X @ mat
    V, S, B = len(job.probes), len(job.amplitudes), stop - start
    det = np.empty((V, S, B), dtype=bool)
    for v, (probe, sl) in enumerate(zip(job.probes, slices)):
        Pv = P[:, sl]
        for s, amp in enumerate(job.amplitudes):
            det[v, s] = probe.statistic(Pv, amp) > probe.v_t
    counts = det.sum(axis=-1, dtype=np.int64)
    discord = np.zeros((V, V, S), dtype=np.int64)
    for i in range(V):
        for j in range(V):
            if i != j:
                discord[i, j] = (det[i] & ~det[j]).sum(axis=-1)
    return counts, discord


def _stat_chunk(job: _Job, start: int, stop: int) -> list[np.ndarray]:
    X = job.noise(job.purpose, start, stop)
    mat, slices = job.stacked()
    P = X @ mat
    return [probe.statistic(P[:, sl], 0.0) for probe, sl in zip(job.probes, slices)]


_WORKER_JOB: _Job | None = None


def _init_worker(job: _Job) -> None:
    global _WORKER_JOB
    _WORKER_JOB = job


def _worker_call(fn, start: int, stop: int):
    return fn(_WORKER_JOB, start, stop)


def _map_chunks(fn, job: _Job, total: int, workers: int) -> list:
    ranges = [(s, min(s + CHUNK_TRIALS, total)) for s in range(0, total, CHUNK_TRIALS)]
    if workers <= 1 or len(ranges) <= 1:
        return [fn(job, a, b) for a, b in ranges]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(job,)) as pool:
        futures = [pool.submit(_worker_call, fn, a, b) for a, b in ranges]
        return [f.result() for f in futures]


# -- evaluation ---------------------------------------------------------------


@dataclass(frozen=True)
class Evaluation:
    """Detection counts per (detector, SNR) plus paired discordance counts.

    ``discord[i, j, s]`` counts trials where detector ``i`` fired and ``j`` did not.
    """

    counts: np.ndarray
    discord: np.ndarray
    trials: int

    def pd(self, v: int, s: int) -> float:
        return float(self.counts[v, s]) / self.trials

    def ci(self, v: int, s: int, level: float = 0.95) -> ConfidenceInterval:
        return binomial_ci(int(self.counts[v, s]), self.trials, level)

    def paired_difference(self, i: int, j: int, s: int, level: float = 0.95) -> tuple[float, float]:
        """``Pd_i - Pd_j`` on shared trials, with its normal-approximation half-width."""
        T = self.trials
        n_ij = int(self.discord[i, j, s])
        n_ji = int(self.discord[j, i, s])
        diff = (n_ij - n_ji) / T
        var = max((n_ij + n_ji) / T - diff * diff, 0.0)
        z = normal_quantile(0.5 + level / 2.0)
        return diff, z * math.sqrt(var / T)


def evaluate(
    detectors: Sequence[Detector],
    config: ExperimentConfig,
    snr_grid: Iterable[float] | None = None,
    hypothesis=Hypothesis.H1,
    trials: int | None = None,
    purpose: str = EVALUATION,
    noise: NoiseSource | None = None,
    threshold: float | None = None,
) -> Evaluation:
    """Run shared-noise trials for every detector at every SNR point.

    Trial ``t`` uses the same noise realization for all detectors and all SNR
    values, so detector comparisons are paired.  ``threshold`` replaces every
    detector's ``v_t`` (a test hook; models themselves validate ``v_t``).
    """
    snr_grid = config.snr_grid if snr_grid is None else tuple(snr_grid)
    trials = config.trials_per_point if trials is None else int(trials)
    if trials < 1:
        raise DomainError("need at least one trial")
    pulse = config.pulse()
    n = pulse.size
    probes = tuple(_compile(d, pulse, n) for d in detectors)
    if threshold is not None:
        probes = tuple(replace(p, v_t=float(threshold)) for p in probes)
    if Hypothesis(hypothesis) is Hypothesis.H0:
        amps = tuple(0.0 for _ in snr_grid)
    else:
        amps = tuple(amplitude(s, config.sigma_n) for s in snr_grid)
    V, S = len(probes), len(amps)
    counts = np.zeros((V, S), dtype=np.int64)
    discord = np.zeros((V, V, S), dtype=np.int64)
    if V == 0 or S == 0:
        return Evaluation(counts, discord, trials)
    job = _Job(noise=noise or config.noise(), purpose=purpose, probes=probes, amplitudes=amps)
    for c, d in _map_chunks(_count_chunk, job, trials, config.workers):
        counts += c
        discord += d
    return Evaluation(counts, discord, trials)


def calibrate_max_thresholds(
    config: ExperimentConfig, levels: Iterable[int], noise: NoiseSource | None = None
) -> dict[int, MaxDetectorModel]:
    """Monte Carlo thresholds for several Max-Detector levels from one noise pass."""
    levels = tuple(dict.fromkeys(int(i) for i in levels))
    f = config.filter
    n = config.n_samples
    seeds_models = {}
    placeholders = [MaxDetectorModel(f, i, 0.0, config.pfa, boundary_mode=config.boundary_mode) for i in levels]
    probes = tuple(_compile(m, config.pulse(), n) for m in placeholders)
    job = _Job(noise=noise or config.noise(), purpose=CALIBRATION, probes=probes, amplitudes=(0.0,))
    chunks = _map_chunks(_stat_chunk, job, config.calibration_trials, config.workers)
    for k, level in enumerate(levels):
        u_n = np.concatenate([c[k] for c in chunks])
        v_t = empirical_quantile(u_n, 1.0 - config.pfa)
        seeds_models[level] = MaxDetectorModel(
            filter=f,
            scale=level,
            v_t=v_t,
            pfa=config.pfa,
            calibration=Calibration(config.calibration_trials, config.master_seed),
            boundary_mode=config.boundary_mode,
        )
        logger.info("max d%d threshold %.6f from %d trials", level, v_t, config.calibration_trials)
    return seeds_models


def calibrate_max_threshold(
    config: ExperimentConfig, level: int | None = None, noise: NoiseSource | None = None
) -> MaxDetectorModel:
    """Threshold = ``(1 - pfa)`` empirical quantile of ``max |d|`` under noise alone."""
    if level is None:
        if len(config.scales) != 1:
            raise DomainError("the Max-Detector uses a single level; pass level=")
        level = config.scales.levels[0]
    return calibrate_max_thresholds(config, (level,), noise)[int(level)]


def estimate_pd(
    detector: Detector,
    config: ExperimentConfig,
    snr_db: float,
    hypothesis=Hypothesis.H1,
    trials: int | None = None,
    purpose: str = EVALUATION,
    noise: NoiseSource | None = None,
    level: float = 0.95,
    threshold: float | None = None,
) -> tuple[float, ConfidenceInterval]:
    """Fraction of detections over ``trials`` observations, with its Wilson interval."""
    ev = evaluate([detector], config, (snr_db,), hypothesis, trials, purpose, noise, threshold)
    return ev.pd(0, 0), ev.ci(0, 0, level)


# -- sweeps -------------------------------------------------------------------


@dataclass(frozen=True)
class Variant:
    kind: str
    scales: ScaleSet

    def __post_init__(self):
        if self.kind not in ("max", "linear"):
            raise DomainError(f"unknown detector kind {self.kind!r}")
        object.__setattr__(self, "scales", ScaleSet.of(self.scales))
        if self.kind == "max" and len(self.scales) != 1:
            raise DomainError("a Max-Detector variant takes exactly one level")

    @classmethod
    def parse(cls, text: str) -> "Variant":
        """``"max:4"`` or ``"linear:3+4+5+6"``."""
        kind, _, scales = text.partition(":")
        if not scales:
            raise DomainError(f"bad variant {text!r}; expected kind:levels")
        return cls(kind.strip(), ScaleSet.parse(scales))


def default_variants(scales: ScaleSet) -> list[Variant]:
    """Max per scale, linear per scale, and linear over all scales when there are several."""
    out = [Variant("max", (i,)) for i in scales]
    out += [Variant("linear", (i,)) for i in scales]
    if len(scales) > 1:
        out.append(Variant("linear", scales))
    return out


@dataclass(frozen=True)
class PdPoint:
    snr_db: float
    pd: float
    ci_lo: float
    ci_hi: float


@dataclass(frozen=True)
class PdCurve:
    detector: str
    scales: str
    points: tuple[PdPoint, ...]
    pfa: float
    trials: int
    seed: int

    def __post_init__(self):
        snrs = [p.snr_db for p in self.points]
        if any(b <= a for a, b in zip(snrs, snrs[1:])):
            raise DomainError("PdCurve SNR values must be strictly increasing")
        for p in self.points:
            if not p.ci_lo <= p.pd <= p.ci_hi:
                raise DomainError(f"pd {p.pd} outside its interval at {p.snr_db} dB")

    @property
    def pd(self) -> np.ndarray:
        return np.array([p.pd for p in self.points])


@dataclass(frozen=True)
class SweepResult:
    curves: list[PdCurve]
    detectors: list[Detector]
    evaluation: Evaluation


def sweep(
    config: ExperimentConfig,
    variants: Sequence[Variant] | None = None,
    max_models: dict[int, MaxDetectorModel] | None = None,
    noise: NoiseSource | None = None,
) -> SweepResult:
    """Pd curves for every variant over ``config.snr_grid`` on shared noise."""
    variants = default_variants(config.scales) if variants is None else list(variants)
    max_levels = [v.scales.levels[0] for v in variants if v.kind == "max"]
    max_models = dict(max_models or {})
    missing = [i for i in max_levels if i not in max_models]
    if missing and config.snr_grid:
        max_models.update(calibrate_max_thresholds(config, missing, noise))
    detectors: list[Detector] = []
    for v in variants:
        if v.kind == "max":
            detectors.append(max_models.get(v.scales.levels[0]))
        else:
            detectors.append(linear_detector(config, v.scales))
    if not config.snr_grid:
        return SweepResult([], detectors, Evaluation(np.zeros((len(variants), 0), np.int64),
                                                     np.zeros((len(variants),) * 2 + (0,), np.int64),
                                                     config.trials_per_point))
    ev = evaluate(detectors, config, noise=noise)
    curves = []
    for k, det in enumerate(detectors):
        kind, scales = detector_label(det)
        points = []
        for s, snr in enumerate(config.snr_grid):
            ci = ev.ci(k, s)
            points.append(PdPoint(snr, ev.pd(k, s), ci.lo, ci.hi))
        curves.append(PdCurve(kind, scales, tuple(points), config.pfa, ev.trials, config.master_seed))
    return SweepResult(curves, detectors, ev)


SWEEP_HEADER = ("detector", "scales", "snr_db", "pd", "ci_lo", "ci_hi", "pfa_target", "trials", "seed")
PROFILE_HEADER = ("index", "mean_noise", "mean_signal")
BENCH_HEADER = ("input_len", "filter_len", "nanos")


def _csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def sweep_csv(curves: Sequence[PdCurve]) -> str:
    rows = (
        (c.detector, c.scales, p.snr_db, p.pd, p.ci_lo, p.ci_hi, c.pfa, c.trials, c.seed)
        for c in curves
        for p in c.points
    )
    return _csv(SWEEP_HEADER, rows)


# -- the two-component analytic comparison ------------------------------------


def two_component_comparison(mu1: float, mu2: float, pfa_x: float) -> tuple[float, float]:
    """Analytic Pd of Max vs Linear on two unit-variance components.

    Both detectors use the same threshold ``V = Phi^-1(1 - pfa_x)``: the Max
    detector fires when either component exceeds it (false-alarm rate about
    ``2 * pfa_x``), the Linear detector when ``a1*x1 + a2*x2`` does (false-alarm
    rate ``pfa_x``), with unit-norm ``a`` proportional to ``(mu1, mu2)``.
    Positive peaks only; no absolute value is taken.
    """
    if mu1 < 0 or mu2 < 0:
        raise DomainError("component means must be nonnegative")
    if not 0.0 < pfa_x < 1.0:
        raise DomainError(f"pfa_x must lie in (0, 1), got {pfa_x}")
    v = normal_quantile(1.0 - pfa_x)
    a1, a2 = two_component_weights(mu1, mu2)
    pd_max = 1.0 - normal_cdf(v - mu1) * normal_cdf(v - mu2)
    pd_linear = normal_cdf(a1 * mu1 + a2 * mu2 - v)
    return pd_max, pd_linear


def two_component_weights(mu1: float, mu2: float) -> tuple[float, float]:
    norm = math.hypot(mu1, mu2)
    if norm == 0.0:
        # no information: any unit vector gives the same Pd; take the equal split
        return 2**-0.5, 2**-0.5
    return mu1 / norm, mu2 / norm


# -- coefficient profile ------------------------------------------------------


@dataclass(frozen=True)
class Profile:
    index: np.ndarray
    mean_noise: np.ndarray
    mean_signal: np.ndarray

    def csv(self) -> str:
        return _csv(PROFILE_HEADER, zip(self.index.tolist(), self.mean_noise, self.mean_signal))


def mean_coefficient_profile(
    config: ExperimentConfig,
    level: int = 4,
    n_experiments: int = 500,
    snr_db: float = -5.0,
    noise: NoiseSource | None = None,
) -> Profile:
    """Per-coefficient means of the level-``level`` details under H0 and H1 (paired)."""
    if n_experiments < 1:
        raise DomainError("n_experiments must be >= 1")
    noise = noise or config.noise()
    pulse = config.pulse()
    f = config.filter
    sum0 = sum1 = 0.0
    for start in range(0, n_experiments, CHUNK_TRIALS):
        stop = min(start + CHUNK_TRIALS, n_experiments)
        X = noise(PROFILE, start, stop)
        Y = compose_observation(pulse, X, snr_db, config.sigma_n, Hypothesis.H1)
        sum0 = sum0 + analyze_level(X, f, level, config.boundary_mode).values.sum(axis=0)
        sum1 = sum1 + analyze_level(Y, f, level, config.boundary_mode).values.sum(axis=0)
    m0 = np.asarray(sum0) / n_experiments
    m1 = np.asarray(sum1) / n_experiments
    return Profile(np.arange(m0.size), m0, m1)


# -- complexity benchmark -----------------------------------------------------


@dataclass(frozen=True)
class BenchRow:
    input_len: int
    filter_len: int
    nanos: int


def _time_call(fn, min_total_ns: int = 20_000_000, batches: int = 5) -> int:
    fn()
    reps, elapsed = 1, 0
    while True:
        t0 = time.perf_counter_ns()
        for _ in range(reps):
            fn()
        elapsed = time.perf_counter_ns() - t0
        if elapsed * batches >= min_total_ns or reps >= 1 << 16:
            break
        reps *= 2
    best = elapsed / reps
    for _ in range(batches - 1):
        t0 = time.perf_counter_ns()
        for _ in range(reps):
            fn()
        best = min(best, (time.perf_counter_ns() - t0) / reps)
    return int(best)


def scaling_benchmark(
    sizes: Iterable[int], orders: Iterable[int] = (9,), level: int = 4, seed: int = 0
) -> list[BenchRow]:
    """Best-of-batches wall time of :func:`analyze_level` per ``(input length, filter)``."""
    from .wavelet import make_daubechies

    rows = []
    rng = np.random.default_rng(seed)
    sizes = list(sizes)
    for order in orders:
        f = make_daubechies(order)
        for n in sizes:
            x = rng.standard_normal(int(n))
            lev = min(level, int(n).bit_length() - 1)
            rows.append(BenchRow(int(n), f.length, _time_call(lambda: analyze_level(x, f, lev, "zero-pad"))))
    return rows


def fit_exponent(rows: Sequence[BenchRow], filter_len: int | None = None) -> float:
    """Least-squares slope of log(time) against log(input length)."""
    sel = [r for r in rows if filter_len is None or r.filter_len == filter_len]
    if len(sel) < 2:
        raise DomainError("need at least two sizes to fit an exponent")
    x = np.log([r.input_len for r in sel])
    y = np.log([max(r.nanos, 1) for r in sel])
    return float(np.polyfit(x, y, 1)[0])


def bench_csv(rows: Sequence[BenchRow]) -> str:
    return _csv(BENCH_HEADER, ((r.input_len, r.filter_len, r.nanos) for r in rows))
