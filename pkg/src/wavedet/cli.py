"""Command-line front end.

Exit codes: 0 success, 2 validation error, 3 runtime failure.  Every command
computes all of its outputs before writing any file, and each file is written
to a temporary name and renamed into place.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .detectors import model_to_dict
from .errors import DomainError
from .experiment import (
    ExperimentConfig,
    Variant,
    bench_csv,
    calibrate_max_threshold,
    default_variants,
    fit_exponent,
    linear_detector,
    mean_coefficient_profile,
    scaling_benchmark,
    sweep,
    sweep_csv,
    _csv,
)
from .signals import ChirpSpec, gen_chirp
from .streams import check_seed
from .svg import line_chart
from .wavelet import ScaleSet, concat_details, filter_invariants, get_wavelet, make_daubechies

logger = logging.getLogger("wavedet")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3
SEED_ENV = "WAVEDET_SEED"
FORMATS = ("csv", "svg")


@dataclass(frozen=True)
class RunConfig:
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    out_dir: Path = Path("out")
    formats: tuple[str, ...] = ("csv",)
    verbosity: int = 0

    def __post_init__(self):
        if not self.formats or any(f not in FORMATS for f in self.formats):
            raise DomainError(f"formats must be a nonempty subset of {FORMATS}, got {self.formats}")
        if "csv" not in self.formats:
            raise DomainError("csv output is always produced; formats must include 'csv'")

    @property
    def svg(self) -> bool:
        return "svg" in self.formats


_EXPERIMENT_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def _config_document(path: str | None) -> dict:
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise DomainError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DomainError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise DomainError("config document must be a JSON object")
    return doc


def _parse_float_list(text: str) -> tuple[float, ...]:
    """``"-20:0:1"`` (inclusive range) or ``"-15,-10,-5"``."""
    try:
        if ":" in text:
            start, stop, step = (float(p) for p in text.split(":"))
            if step <= 0:
                raise DomainError("grid step must be positive")
            n = int(round((stop - start) / step))
            return tuple(float(start + k * step) for k in range(n + 1))
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise DomainError(f"bad number list {text!r}") from None


def build_run_config(args: argparse.Namespace) -> RunConfig:
    doc = _config_document(args.config)
    unknown = set(doc) - _EXPERIMENT_FIELDS - {"out_dir", "formats", "verbosity"}
    if unknown:
        raise DomainError(f"unknown config fields: {sorted(unknown)}")
    exp = {k: v for k, v in doc.items() if k in _EXPERIMENT_FIELDS}
    chirp = dict(exp.get("chirp", {}))
    if getattr(args, "samples", None) is not None:
        chirp["n_samples"] = args.samples
    for name in ("f0", "f1", "phase0"):
        if getattr(args, name, None) is not None:
            chirp[name] = getattr(args, name)
    try:
        exp["chirp"] = ChirpSpec(**chirp)
    except TypeError as exc:
        raise DomainError(f"bad chirp config: {exc}") from None
    if "scales" in exp:
        exp["scales"] = ScaleSet.of(exp["scales"])
    if args.scales is not None:
        exp["scales"] = ScaleSet.parse(args.scales)
    for flag, key in (("pfa", "pfa"), ("wavelet", "wavelet"), ("workers", "workers"),
                      ("boundary_mode", "boundary_mode"), ("trials", "trials_per_point"),
                      ("calibration_trials", "calibration_trials"), ("sigma_n", "sigma_n")):
        value = getattr(args, flag, None)
        if value is not None:
            exp[key] = value
    if getattr(args, "snr_grid", None) is not None:
        exp["snr_grid"] = _parse_float_list(args.snr_grid)
    if args.seed is not None:
        exp["master_seed"] = args.seed
    elif "master_seed" not in exp and os.environ.get(SEED_ENV):
        try:
            exp["master_seed"] = int(os.environ[SEED_ENV])
        except ValueError:
            raise DomainError(f"{SEED_ENV} must be an integer") from None
    try:
        check_seed(exp.get("master_seed", 0))
    except ValueError as exc:
        raise DomainError(str(exc)) from None
    try:
        experiment = ExperimentConfig(**exp)
    except TypeError as exc:
        raise DomainError(f"bad experiment config: {exc}") from None
    formats = tuple(doc.get("formats", ("csv",)))
    if args.svg and "svg" not in formats:
        formats = formats + ("svg",)
    out_dir = Path(args.out if args.out is not None else doc.get("out_dir", "out"))
    verbosity = args.verbose if args.verbose else int(doc.get("verbosity", 0))
    return RunConfig(experiment=experiment, out_dir=out_dir, formats=formats, verbosity=verbosity)


def _prepare_out_dir(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DomainError(f"cannot create output directory {path}: {exc}") from None
    if not os.access(path, os.W_OK):
        raise DomainError(f"output directory {path} is not writable")


def write_outputs(out_dir: Path, files: dict[str, str]) -> None:
    """Write every file via temp-and-rename, only after all content exists."""
    _prepare_out_dir(out_dir)
    for name, text in files.items():
        fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            os.replace(tmp, out_dir / name)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        logger.info("wrote %s", out_dir / name)


# -- commands -----------------------------------------------------------------


def cmd_filters(args, run: RunConfig | None = None) -> int:
    f = make_daubechies(args.order)
    print(f"# {f.name}  L={f.length}")
    print("n,h,g")
    for n, (h, g) in enumerate(zip(f.h, f.g)):
        print(f"{n},{h:.17g},{g:.17g}")
    ok = True
    for name, (dev, tol) in filter_invariants(f).items():
        passed = dev <= tol
        ok &= passed
        print(f"# {name}: {'PASS' if passed else 'FAIL'} (deviation {dev:.3e}, tolerance {tol:.0e})")
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_chirp(args, run: RunConfig) -> int:
    s = gen_chirp(run.experiment.chirp)
    files = {"chirp.csv": _csv(("index", "value"), zip(range(s.size), s.tolist()))}
    if run.svg:
        files["chirp.svg"] = line_chart([("chirp", list(range(s.size)), s.tolist())],
                                        title=f"Chirp pulse, {s.size} samples", xlabel="sample", ylabel="amplitude")
    write_outputs(run.out_dir, files)
    return EXIT_OK


def _read_signal_csv(path: str) -> np.ndarray:
    try:
        data = np.genfromtxt(path, delimiter=",", names=True)
    except OSError as exc:
        raise DomainError(f"cannot read {path}: {exc}") from None
    if data.dtype.names is None or "value" not in data.dtype.names:
        raise DomainError(f"{path} needs an 'index,value' header")
    return np.atleast_1d(np.asarray(data["value"], dtype=np.float64))


def cmd_dwt(args, run: RunConfig) -> int:
    exp = run.experiment
    x = _read_signal_csv(args.input) if args.input else exp.pulse()
    d = concat_details(x, exp.filter, exp.scales, exp.boundary_mode)
    rows = []
    for k, level in enumerate(d.layout.levels):
        rows += [(level, i, v) for i, v in enumerate(d.segment(k).tolist())]
    write_outputs(run.out_dir, {"dwt.csv": _csv(("level", "index", "value"), rows)})
    return EXIT_OK


def cmd_profile(args, run: RunConfig) -> int:
    exp = run.experiment
    prof = mean_coefficient_profile(exp, level=args.level, n_experiments=args.experiments, snr_db=args.snr)
    files = {"profile.csv": prof.csv()}
    if run.svg:
        idx = prof.index.tolist()
        files["profile.svg"] = line_chart(
            [("noise", idx, prof.mean_noise.tolist()), ("signal", idx, prof.mean_signal.tolist())],
            title=f"Mean d{args.level} coefficients, SNR {args.snr:g} dB, {args.experiments} experiments",
            xlabel="coefficient index", ylabel="mean", dashed=[True, False],
        )
    write_outputs(run.out_dir, files)
    return EXIT_OK


def cmd_calibrate(args, run: RunConfig) -> int:
    exp = run.experiment
    lin = linear_detector(exp)
    level = args.max_level if args.max_level is not None else exp.scales.levels[0]
    mx = calibrate_max_threshold(exp, level)
    files = {
        "linear_detector.json": json.dumps(model_to_dict(lin), indent=2) + "\n",
        "max_detector.json": json.dumps(model_to_dict(mx), indent=2) + "\n",
    }
    write_outputs(run.out_dir, files)
    print(f"linear {exp.scales.label()}: v_t={lin.v_t!r}")
    print(f"max d{level}: v_t={mx.v_t!r} ({exp.calibration_trials} trials)")
    return EXIT_OK


def cmd_sweep(args, run: RunConfig) -> int:
    exp = run.experiment
    variants = [Variant.parse(v) for v in args.variants.split(",")] if args.variants else default_variants(exp.scales)
    result = sweep(exp, variants)
    files = {"sweep.csv": sweep_csv(result.curves)}
    if run.svg:
        series, dashed = [], []
        for c in result.curves:
            series.append((f"{c.detector} {c.scales}", [p.snr_db for p in c.points], c.pd.tolist()))
            dashed.append(c.detector == "linear")
        files["sweep.svg"] = line_chart(series, title=f"Pd at Pfa = {exp.pfa:g}", xlabel="SNR (dB)",
                                        ylabel="probability of detection", ylim=(0.0, 1.0), dashed=dashed)
    write_outputs(run.out_dir, files)
    return EXIT_OK


def cmd_bench(args, run: RunConfig) -> int:
    sizes = [int(s) for s in _parse_float_list(args.sizes)] if args.sizes else [2**e for e in range(10, 21)]
    orders = [int(o) for o in _parse_float_list(args.orders)]
    rows = scaling_benchmark(sizes, orders, level=args.level)
    write_outputs(run.out_dir, {"bench.csv": bench_csv(rows)})
    for order in orders:
        L = 2 * order
        if len(sizes) >= 2:
            print(f"db{order}: fitted exponent {fit_exponent(rows, L):.3f}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _wavelet_arg(text: str) -> str:
    try:
        get_wavelet(text)
    except DomainError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help=f"master seed (fallback: ${SEED_ENV})")
    common.add_argument("--pfa", type=float, help="target false-alarm probability")
    common.add_argument("--scales", help="comma-separated decomposition levels, e.g. 3,4,5,6")
    common.add_argument("--wavelet", type=_wavelet_arg, help="db<k>, k in 1..10")
    common.add_argument("--out", help="output directory")
    common.add_argument("--svg", action="store_true", help="also emit SVG plots")
    common.add_argument("--workers", type=int, help="worker processes for Monte Carlo trials")
    common.add_argument("--boundary-mode", choices=("zero-pad", "periodic"))
    common.add_argument("--samples", type=int, help="pulse length (power of two)")
    common.add_argument("--sigma-n", type=float, help="noise standard deviation")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="wavedet", description="Wavelet-domain known-signal detectors.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filters", parents=[common], help="print Daubechies taps and invariant checks")
    p.add_argument("--order", type=int, required=True)
    p.set_defaults(func=cmd_filters, needs_run=False)

    p = sub.add_parser("chirp", parents=[common], help="write the test chirp")
    p.add_argument("--f0", type=float)
    p.add_argument("--f1", type=float)
    p.add_argument("--phase0", type=float)
    p.set_defaults(func=cmd_chirp)

    p = sub.add_parser("dwt", parents=[common], help="detail coefficients of a signal")
    p.add_argument("--input", help="CSV with index,value columns (default: the chirp)")
    p.set_defaults(func=cmd_dwt)

    p = sub.add_parser("profile", parents=[common], help="mean coefficient profile under H0 and H1")
    p.add_argument("--level", type=int, default=4)
    p.add_argument("--snr", type=float, default=-5.0)
    p.add_argument("--experiments", type=int, default=500)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("calibrate", parents=[common], help="calibrate and store both detectors")
    p.add_argument("--max-level", type=int)
    p.add_argument("--calibration-trials", type=int)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("sweep", parents=[common], help="Pd versus SNR for several detectors")
    p.add_argument("--snr-grid", help="start:stop:step or a comma list (dB)")
    p.add_argument("--trials", type=int, help="trials per SNR point")
    p.add_argument("--calibration-trials", type=int)
    p.add_argument("--variants", help="e.g. max:4,linear:4,linear:3+4+5+6")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", parents=[common], help="filter-bank timing versus input length")
    p.add_argument("--sizes", help="comma list of input lengths (default 2^10..2^20)")
    p.add_argument("--orders", default="9", help="comma list of Daubechies orders")
    p.add_argument("--level", type=int, default=4)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        run = build_run_config(args) if getattr(args, "needs_run", True) else None
        if run is not None and run.verbosity:
            logging.getLogger().setLevel(logging.WARNING - 10 * min(run.verbosity, 2))
        return args.func(args, run)
    except DomainError as exc:
        print(f"wavedet: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        logger.debug("runtime failure", exc_info=True)
        print(f"wavedet: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
