"""Daubechies filter banks and Mallat subband-coding analysis.

Conventions used throughout the package:

* ``h`` is the low-pass scaling filter, ``g[n] = (-1)**n * h[L-1-n]`` the
  high-pass filter.
* One analysis stage computes ``y[k] = sum_n f[n] * x_ext[2k + n]`` for
  ``k = 0 .. len(x)//2 - 1``.
* ``"zero-pad"`` prepends ``L - 2`` zeros to ``x`` so the filter transient
  sits at the *start* of every output vector; the first ``ceil(L/2) - 1``
  outputs (0-based) see padded samples.  ``"periodic"`` wraps ``x``
  circularly and is exactly orthonormal.

All functions accept batches: the transform runs along the last axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Literal, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._taps import DAUBECHIES_TAPS
from .errors import DomainError

BoundaryMode = Literal["zero-pad", "periodic"]
BOUNDARY_MODES: tuple[str, ...] = ("zero-pad", "periodic")


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def log2_length(n: int) -> int:
    if not is_power_of_two(n):
        raise DomainError(f"signal length must be a power of two, got {n}")
    return n.bit_length() - 1


def _check_mode(mode: str) -> None:
    if mode not in BOUNDARY_MODES:
        raise DomainError(f"unknown boundary mode {mode!r}; expected one of {BOUNDARY_MODES}")


@dataclass(frozen=True, eq=False)
class WaveletFilter:
    """Orthonormal two-channel analysis filter pair of even length ``L``."""

    name: str
    h: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        h = np.array(self.h, dtype=np.float64)
        g = np.array(self.g, dtype=np.float64)
        if h.ndim != 1 or h.shape != g.shape:
            raise DomainError("h and g must be 1-D arrays of equal length")
        h.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "g", g)

    @property
    def length(self) -> int:
        return self.h.size

    @property
    def steady_start(self) -> int:
        """First steady-state detail index, 1-based: ``ceil(L/2)``."""
        return math.ceil(self.length / 2)

    def __eq__(self, other):
        if not isinstance(other, WaveletFilter):
            return NotImplemented
        return (
            self.name == other.name
            and np.array_equal(self.h, other.h)
            and np.array_equal(self.g, other.g)
        )

    def __hash__(self):
        return hash((self.name, self.h.tobytes(), self.g.tobytes()))


def quadrature_mirror(h: Sequence[float]) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    signs = np.where(np.arange(h.size) % 2 == 0, 1.0, -1.0)
    return signs * h[::-1]


def make_daubechies(order: int) -> WaveletFilter:
    """Return the Daubechies filter ``db<order>`` (length ``2 * order``)."""
    if isinstance(order, bool) or not isinstance(order, (int, np.integer)):
        raise DomainError(f"Daubechies order must be an integer, got {order!r}")
    if order not in DAUBECHIES_TAPS:
        raise DomainError(f"Daubechies order must be in [1, 10], got {order}")
    h = np.array(DAUBECHIES_TAPS[int(order)])
    return WaveletFilter(name=f"db{int(order)}", h=h, g=quadrature_mirror(h))


def get_wavelet(name: str) -> WaveletFilter:
    """Parse a wavelet name such as ``"db9"``."""
    if not isinstance(name, str) or not name.lower().startswith("db"):
        raise DomainError(f"unsupported wavelet {name!r}; only Daubechies 'db<k>' is available")
    try:
        order = int(name[2:])
    except ValueError:
        raise DomainError(f"bad wavelet name {name!r}") from None
    return make_daubechies(order)


def filter_invariants(f: WaveletFilter) -> dict[str, tuple[float, float]]:
    """Measured deviation and tolerance for every filter invariant.

    Returns a mapping ``name -> (deviation, tolerance)``; an invariant holds
    when ``deviation <= tolerance``.
    """
    h, g = f.h, f.g
    L = f.length
    checks: dict[str, tuple[float, float]] = {}
    checks["even_length"] = (float(L % 2), 0.0)
    checks["energy_h"] = (abs(float(np.sum(h**2)) - 1.0), 1e-12)
    checks["energy_g"] = (abs(float(np.sum(g**2)) - 1.0), 1e-12)
    checks["qmf"] = (float(np.max(np.abs(g - quadrature_mirror(h)))), 0.0)
    worst = 0.0
    for k in range(1, L // 2):
        worst = max(worst, abs(float(np.dot(h[: L - 2 * k], h[2 * k :]))))
    checks["double_shift_orthogonality"] = (worst, 1e-10)
    checks["sum_h"] = (abs(float(np.sum(h)) - math.sqrt(2.0)), 1e-10)
    checks["sum_g"] = (abs(float(np.sum(g))), 1e-10)
    return checks


def _extend(x: np.ndarray, pad: int, mode: str) -> np.ndarray:
    if pad == 0:
        return x
    if mode == "zero-pad":
        zeros = np.zeros(x.shape[:-1] + (pad,), dtype=x.dtype)
        return np.concatenate([zeros, x], axis=-1)
    n = x.shape[-1]
    reps = -(-pad // n)
    wrap = np.concatenate([x] * reps, axis=-1)[..., :pad] if reps > 1 else x[..., :pad]
    return np.concatenate([x, wrap], axis=-1)


def filter_decimate(x: np.ndarray, taps: np.ndarray, mode: str = "zero-pad") -> np.ndarray:
    """One filter-and-downsample stage along the last axis."""
    n = x.shape[-1]
    L = taps.size
    half = n // 2
    if x.ndim == 1 and mode == "zero-pad":
        # full correlation zero-extends by L - 1; the L - 2 leading zeros shift it by one
        return np.correlate(x, taps, mode="full")[1 : 2 * half : 2]
    xe = _extend(x, L - 2, mode)
    if x.ndim == 1:
        return np.correlate(xe, taps, mode="valid")[: 2 * half : 2]
    windows = sliding_window_view(xe, L, axis=-1)[..., : 2 * half : 2, :]
    return windows @ taps


def analysis_step(x, f: WaveletFilter, mode: str = "zero-pad") -> tuple[np.ndarray, np.ndarray]:
    """Single analysis stage: ``(approximation, detail)``, each half length."""
    _check_mode(mode)
    x = _as_signal(x)
    if x.shape[-1] < 2:
        raise DomainError("need at least two samples for an analysis stage")
    return filter_decimate(x, f.h, mode), filter_decimate(x, f.g, mode)


def _as_signal(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        raise DomainError("signal must be at least 1-D")
    log2_length(x.shape[-1])
    return x


@dataclass(frozen=True, eq=False)
class DetailCoefficients:
    """Level-``i`` detail vector; ``steady_start`` is 1-based (``ceil(L/2)``)."""

    level: int
    values: np.ndarray
    steady_start: int
    boundary_mode: str

    @property
    def length(self) -> int:
        return self.values.shape[-1]

    @property
    def steady(self) -> np.ndarray:
        """Coefficients at steady-state indices (0-based ``steady_start - 1`` onward)."""
        return self.values[..., self.steady_start - 1 :]


def _check_level(level: int, n_log2: int, f: WaveletFilter) -> None:
    if isinstance(level, bool) or not isinstance(level, (int, np.integer)):
        raise DomainError(f"level must be an integer, got {level!r}")
    if not 1 <= level <= n_log2:
        raise DomainError(f"level must be in [1, {n_log2}], got {level}")
    if 2 ** (n_log2 - level) < f.steady_start:
        raise DomainError(
            f"level {level} leaves {2 ** (n_log2 - level)} coefficients, fewer than the "
            f"steady-state start {f.steady_start} of {f.name}"
        )


def analyze_level(x, f: WaveletFilter, level: int, mode: str = "zero-pad") -> DetailCoefficients:
    """Detail coefficients at dyadic ``level`` via the pyramid algorithm.

    ``level - 1`` low-pass stages followed by one high-pass stage, each with
    decimation by two.  ``x`` may be a batch; the last axis is transformed.
    """
    _check_mode(mode)
    x = _as_signal(x)
    _check_level(level, log2_length(x.shape[-1]), f)
    approx = x
    for _ in range(level - 1):
        approx = filter_decimate(approx, f.h, mode)
    detail = filter_decimate(approx, f.g, mode)
    return DetailCoefficients(level=int(level), values=detail, steady_start=f.steady_start, boundary_mode=mode)


@dataclass(frozen=True)
class ScaleSet:
    """Ordered, duplicate-free collection of decomposition levels."""

    levels: tuple[int, ...]

    def __post_init__(self):
        levels = tuple(int(i) for i in self.levels)
        if not levels:
            raise DomainError("scale set must be nonempty")
        if len(set(levels)) != len(levels):
            raise DomainError(f"scale set has duplicates: {levels}")
        if min(levels) < 1:
            raise DomainError(f"levels must be >= 1: {levels}")
        object.__setattr__(self, "levels", levels)

    @classmethod
    def of(cls, levels: "ScaleSet | int | Iterable[int]") -> "ScaleSet":
        if isinstance(levels, ScaleSet):
            return levels
        if isinstance(levels, (int, np.integer)):
            return cls((int(levels),))
        return cls(tuple(levels))

    @classmethod
    def parse(cls, text: str) -> "ScaleSet":
        """Parse ``"3,4,5,6"`` (``+`` and ``;`` also accepted as separators)."""
        parts = [p for p in text.replace("+", ",").replace(";", ",").split(",") if p.strip()]
        try:
            return cls(tuple(int(p) for p in parts))
        except ValueError:
            raise DomainError(f"bad scale list {text!r}") from None

    def label(self) -> str:
        return ";".join(str(i) for i in self.levels)

    def __iter__(self):
        return iter(self.levels)

    def __len__(self):
        return len(self.levels)


@dataclass(frozen=True)
class SegmentLayout:
    """Per-scale segment geometry of a concatenated detail vector.

    ``steady_starts`` are 1-based, one per segment.
    """

    levels: tuple[int, ...]
    lengths: tuple[int, ...]
    steady_starts: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.lengths)

    @property
    def offsets(self) -> tuple[int, ...]:
        out, pos = [], 0
        for m in self.lengths:
            out.append(pos)
            pos += m
        return tuple(out)

    def segment(self, k: int) -> slice:
        start = self.offsets[k]
        return slice(start, start + self.lengths[k])

    def active_mask(self) -> np.ndarray:
        mask = np.zeros(self.total, dtype=bool)
        for off, m, s in zip(self.offsets, self.lengths, self.steady_starts):
            mask[off + s - 1 : off + m] = True
        return mask


@dataclass(frozen=True, eq=False)
class ConcatenatedDetails:
    """Detail vectors of several levels laid end to end, with their layout."""

    values: np.ndarray
    layout: SegmentLayout

    def segment(self, k: int) -> np.ndarray:
        return self.values[..., self.layout.segment(k)]

    def active(self) -> np.ndarray:
        return self.values[..., self.layout.active_mask()]


def layout_for(n: int, f: WaveletFilter, scales: "ScaleSet | Iterable[int]") -> SegmentLayout:
    scales = ScaleSet.of(scales)
    n_log2 = log2_length(n)
    for i in scales:
        _check_level(i, n_log2, f)
    return SegmentLayout(
        levels=scales.levels,
        lengths=tuple(2 ** (n_log2 - i) for i in scales),
        steady_starts=tuple(f.steady_start for _ in scales),
    )


def concat_details(x, f: WaveletFilter, scales, mode: str = "zero-pad") -> ConcatenatedDetails:
    """Concatenate the detail vectors of every level in ``scales``, in order."""
    _check_mode(mode)
    x = _as_signal(x)
    layout = layout_for(x.shape[-1], f, scales)
    wanted = set(layout.levels)
    details: dict[int, np.ndarray] = {}
    approx = x
    for level in range(1, max(wanted) + 1):
        if level in wanted:
            details[level] = filter_decimate(approx, f.g, mode)
        if level < max(wanted):
            approx = filter_decimate(approx, f.h, mode)
    values = np.concatenate([details[i] for i in layout.levels], axis=-1)
    return ConcatenatedDetails(values=values, layout=layout)


@lru_cache(maxsize=64)
def _analysis_matrix(f: WaveletFilter, n: int, levels: tuple[int, ...], mode: str) -> np.ndarray:
    mat = concat_details(np.eye(n), f, levels, mode).values
    mat.setflags(write=False)
    return mat


def analysis_matrix(f: WaveletFilter, n: int, scales, mode: str = "zero-pad") -> np.ndarray:
    """Matrix ``W`` with ``x @ W == concat_details(x, f, scales, mode).values``.

    Built by pushing the identity through the filter bank; read-only and cached.
    """
    _check_mode(mode)
    return _analysis_matrix(f, int(n), ScaleSet.of(scales).levels, mode)
