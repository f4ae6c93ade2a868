import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import norm

from wavedet.detectors import MaxDetectorModel, analytic_pd, decide
from wavedet.errors import DomainError
from wavedet.experiment import (
    CALIBRATION,
    EVALUATION,
    SWEEP_HEADER,
    ExperimentConfig,
    PdCurve,
    PdPoint,
    Variant,
    bench_csv,
    calibrate_max_threshold,
    calibrate_max_thresholds,
    default_variants,
    estimate_pd,
    evaluate,
    fit_exponent,
    linear_detector,
    mean_coefficient_profile,
    scaling_benchmark,
    sweep,
    sweep_csv,
    two_component_comparison,
    two_component_weights,
)
from wavedet.signals import compose_observation
from wavedet.stats import empirical_quantile
from wavedet.streams import normal_block
from wavedet.wavelet import analyze_level, concat_details

SMALL = ExperimentConfig(calibration_trials=20_000, trials_per_point=4_000)


def _zeros(purpose, start, stop):
    return np.zeros((stop - start, 1024))


def test_config_validation():
    with pytest.raises(DomainError):
        ExperimentConfig(calibration_trials=9_999)
    ExperimentConfig(calibration_trials=10_000)
    with pytest.raises(DomainError):
        ExperimentConfig(snr_grid=(0.0, -1.0))
    with pytest.raises(DomainError):
        ExperimentConfig(trials_per_point=0)
    with pytest.raises(DomainError):
        ExperimentConfig(wavelet="db12")
    with pytest.raises(DomainError):
        ExperimentConfig(master_seed=-3)
    assert ExperimentConfig().snr_grid == tuple(float(s) for s in range(-20, 1))


def test_zero_noise_hook_gives_zero_threshold():
    m = calibrate_max_threshold(SMALL, 4, noise=_zeros)
    assert m.v_t == 0.0
    assert m.calibration.trials == SMALL.calibration_trials


def test_calibration_matches_direct_order_statistic():
    # independent route: per-trial filter bank, no analysis matrix, no chunking
    cfg = replace(SMALL, pfa=0.5, calibration_trials=3_000)
    m = calibrate_max_threshold(cfg, 4)
    X = normal_block(cfg.master_seed, CALIBRATION, 0, 3_000, 1024)
    u = np.array([np.max(np.abs(analyze_level(x, cfg.filter, 4).values)) for x in X])
    k = math.ceil(0.5 * u.size)
    assert abs(m.v_t - np.sort(u)[k - 1]) <= 1e-12
    assert abs(m.v_t - np.median(u)) <= 0.02


def test_multi_level_calibration_matches_single():
    both = calibrate_max_thresholds(SMALL, (3, 4))
    assert both[4].v_t == calibrate_max_threshold(SMALL, 4).v_t
    assert both[3].v_t != both[4].v_t


def test_calibration_seed_stability(max_d4, base_config):
    other = calibrate_max_threshold(replace(base_config, master_seed=1), 4)
    assert abs(other.v_t - max_d4.v_t) <= 0.02 * max_d4.v_t


def test_max_false_alarm_rate_after_calibration():
    m = calibrate_max_threshold(SMALL, 4)
    pfa, ci = estimate_pd(m, SMALL, 0.0, "H0", trials=20_000, purpose=EVALUATION, level=0.99)
    assert SMALL.pfa in ci


def test_threshold_hook():
    lin = linear_detector(SMALL)
    pd, ci = estimate_pd(lin, SMALL, -30.0, trials=500, threshold=float("-inf"))
    assert pd == 1.0 and ci.hi == 1.0
    pd, _ = estimate_pd(lin, SMALL, 20.0, trials=500, threshold=float("inf"))
    assert pd == 0.0


def test_h0_self_consistency():
    cfg = replace(SMALL, pfa=0.01)
    lin = linear_detector(cfg, (3, 4, 5, 6))
    pd, ci = estimate_pd(lin, cfg, 0.0, "H0", trials=40_000, level=0.99)
    assert cfg.pfa in ci


def test_monte_carlo_matches_analytic():
    lin = linear_detector(SMALL, (4,))
    d_s = SMALL.pulse_details((4,))
    for snr in (-16.0, -12.0):
        pd, ci = estimate_pd(lin, SMALL, snr, trials=20_000, level=0.99)
        assert analytic_pd(lin, d_s, snr) in ci


def test_fast_path_matches_direct_evaluation(max_d4):
    # the analysis-matrix route against concat/analyze_level per observation
    cfg = replace(SMALL, trials_per_point=3_000)
    lin = linear_detector(cfg, (3, 4, 5, 6))
    s = cfg.pulse()
    X = normal_block(cfg.master_seed, EVALUATION, 0, cfg.trials_per_point, 1024)
    for snr in (-12.0, -6.0):
        Y = compose_observation(s, X, snr, 1.0, "H1")
        ev = evaluate([lin, max_d4], cfg, (snr,))
        direct_lin = int(lin.detect(Y).sum())
        direct_max = int(np.sum([max_d4.detect(y) for y in Y]))
        assert abs(int(ev.counts[0, 0]) - direct_lin) <= 1
        assert abs(int(ev.counts[1, 0]) - direct_max) <= 1


def test_worker_count_does_not_change_counts():
    cfg = replace(SMALL, trials_per_point=5_000)
    dets = [linear_detector(cfg), MaxDetectorModel(cfg.filter, 4, 4.2, cfg.pfa)]
    a = evaluate(dets, cfg, (-10.0, -5.0))
    b = evaluate(dets, replace(cfg, workers=2), (-10.0, -5.0))
    np.testing.assert_array_equal(a.counts, b.counts)
    np.testing.assert_array_equal(a.discord, b.discord)


def test_paired_difference_consistent_with_counts():
    cfg = replace(SMALL, trials_per_point=4_000)
    dets = [linear_detector(cfg), MaxDetectorModel(cfg.filter, 4, 4.2, cfg.pfa)]
    ev = evaluate(dets, cfg, (-8.0,))
    diff, half = ev.paired_difference(0, 1, 0)
    assert abs(diff - (ev.pd(0, 0) - ev.pd(1, 0))) <= 1e-12
    assert half >= 0.0


def test_sweep_empty_grid():
    res = sweep(replace(SMALL, snr_grid=()))
    assert res.curves == []
    assert sweep_csv(res.curves) == ",".join(SWEEP_HEADER) + "\n"


def test_sweep_matches_estimate_pd():
    cfg = replace(SMALL, snr_grid=(-12.0, -8.0), trials_per_point=3_000)
    res = sweep(cfg, [Variant("linear", (4,))])
    for p in res.curves[0].points:
        pd, ci = estimate_pd(res.detectors[0], cfg, p.snr_db)
        assert (p.pd, p.ci_lo, p.ci_hi) == (pd, ci.lo, ci.hi)


def test_sweep_multiscale_dominates():
    cfg = replace(SMALL, snr_grid=tuple(range(-20, 1, 2)), trials_per_point=4_000)
    res = sweep(cfg, [Variant("linear", (4,)), Variant("linear", (3, 4, 5, 6))])
    for s in range(len(cfg.snr_grid)):
        diff, half = res.evaluation.paired_difference(1, 0, s)
        assert diff >= -half


def test_sweep_csv_rows_and_schema():
    cfg = replace(SMALL, scales=(3, 4), snr_grid=(-10.0, -5.0, 0.0), trials_per_point=500)
    res = sweep(cfg)
    assert [v.kind for v in default_variants(cfg.scales)] == ["max", "max", "linear", "linear", "linear"]
    text = sweep_csv(res.curves)
    lines = text.splitlines()
    assert lines[0] == "detector,scales,snr_db,pd,ci_lo,ci_hi,pfa_target,trials,seed"
    assert len(lines) == 1 + 5 * 3
    assert lines[-1].startswith("linear,3;4,0.0,")


def test_variant_parse():
    assert Variant.parse("max:4") == Variant("max", (4,))
    assert Variant.parse("linear:3+4+5+6").scales.levels == (3, 4, 5, 6)
    for bad in ("max:3+4", "foo:4", "linear"):
        with pytest.raises(DomainError):
            Variant.parse(bad)


def test_pd_curve_invariants():
    with pytest.raises(DomainError):
        PdCurve("linear", "4", (PdPoint(0.0, 0.5, 0.4, 0.6), PdPoint(0.0, 0.5, 0.4, 0.6)), 1e-3, 10, 0)
    with pytest.raises(DomainError):
        PdCurve("linear", "4", (PdPoint(0.0, 0.7, 0.4, 0.6),), 1e-3, 10, 0)


def _oracle_two_component(mu1, mu2, pfa_x):
    v = norm.isf(pfa_x)
    a1, a2 = (mu1, mu2) / np.hypot(mu1, mu2) if mu1 or mu2 else (2**-0.5, 2**-0.5)
    return 1 - norm.cdf(v - mu1) * norm.cdf(v - mu2), norm.sf(v - a1 * mu1 - a2 * mu2)


@pytest.mark.parametrize("mu", [(0.0, 0.0), (3.0, 0.0), (3.0, 3.0), (1.0, 2.5), (5.0, 0.5)])
def test_two_component_against_scipy(mu):
    got = two_component_comparison(mu[0], mu[1], 1e-3)
    np.testing.assert_allclose(got, _oracle_two_component(mu[0], mu[1], 1e-3), atol=1e-12)


def test_two_component_cases():
    pfa = 1e-3
    pd_max, pd_lin = two_component_comparison(0.0, 0.0, pfa)
    assert abs(pd_max - (1 - (1 - pfa) ** 2)) <= 1e-12
    assert abs(pd_lin - pfa) <= 1e-12
    assert two_component_weights(3.0, 0.0) == (1.0, 0.0)
    pd_max, pd_lin = two_component_comparison(3.0, 0.0, pfa)
    assert pd_max > pd_lin
    pd_max, pd_lin = two_component_comparison(3.0, 3.0, pfa)
    assert pd_lin > pd_max
    with pytest.raises(DomainError):
        two_component_comparison(-1.0, 0.0, pfa)


def test_two_component_crossover():
    mus = np.round(np.arange(0.0, 6.0 + 1e-9, 0.1), 10)
    diff = np.array([np.subtract(*two_component_comparison(m, m, 1e-3)[::-1]) for m in mus])
    positive = diff > 0
    assert positive[-1]
    first = int(np.argmax(positive))
    assert first > 0 and positive[first:].all()


def test_profile_bounds_and_peaks():
    n = 500
    prof = mean_coefficient_profile(SMALL, level=4, n_experiments=n, snr_db=-5.0)
    assert prof.index.tolist() == list(range(64))
    assert np.all(np.abs(prof.mean_noise) <= 4 / math.sqrt(n))
    assert np.any(np.abs(prof.mean_signal) > 4 / math.sqrt(n))
    # paired noise: the signal profile is the noise profile plus the scaled pulse response
    d_s = analyze_level(SMALL.pulse(), SMALL.filter, 4).values
    np.testing.assert_allclose(prof.mean_signal - prof.mean_noise, 10 ** (-5 / 20) * d_s, atol=1e-12)
    lines = prof.csv().splitlines()
    assert lines[0] == "index,mean_noise,mean_signal" and len(lines) == 65


def test_profile_vanishing_signal():
    prof = mean_coefficient_profile(SMALL, level=4, n_experiments=20, snr_db=float("-inf"))
    np.testing.assert_array_equal(prof.mean_signal, prof.mean_noise)
    with pytest.raises(DomainError):
        mean_coefficient_profile(SMALL, n_experiments=0)


def test_benchmark_empty_and_csv():
    assert scaling_benchmark([]) == []
    rows = scaling_benchmark([256, 512], orders=(2,))
    assert [(r.input_len, r.filter_len) for r in rows] == [(256, 4), (512, 4)]
    assert bench_csv(rows).splitlines()[0] == "input_len,filter_len,nanos"
    with pytest.raises(DomainError):
        fit_exponent(rows[:1])


def test_benchmark_doubling_ratio():
    rows = scaling_benchmark([2**17, 2**18, 2**19])
    ratios = [b.nanos / a.nanos for a, b in zip(rows, rows[1:])]
    assert all(1.6 <= r <= 2.6 for r in ratios), ratios


def test_linear_statistic_cheaper_than_transform():
    import time

    lin = linear_detector(SMALL, (3, 4, 5, 6))
    x = np.random.default_rng(0).standard_normal(1024)
    d = concat_details(x, lin.filter, lin.scales)

    def best(fn, reps=200):
        out = float("inf")
        for _ in range(5):
            t0 = time.perf_counter_ns()
            for _ in range(reps):
                fn()
            out = min(out, (time.perf_counter_ns() - t0) / reps)
        return out

    from wavedet.detectors import linear_statistic

    t_stat = best(lambda: linear_statistic(d, lin.a))
    t_dwt = best(lambda: concat_details(x, lin.filter, lin.scales))
    assert t_stat < 0.5 * t_dwt
    assert decide(linear_statistic(d, lin.a), lin.v_t) == lin.detect(x)


def test_empirical_threshold_matches_stats_module():
    cfg = replace(SMALL, calibration_trials=10_000, pfa=1e-3)
    m = calibrate_max_threshold(cfg, 4)
    X = normal_block(cfg.master_seed, CALIBRATION, 0, 10_000, 1024)
    u = np.max(np.abs(analyze_level(X, cfg.filter, 4).values), axis=1)
    assert m.v_t == pytest.approx(empirical_quantile(u, 0.999), abs=1e-12)
