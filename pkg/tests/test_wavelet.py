import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavedet.errors import DomainError
from wavedet.wavelet import (
    ScaleSet,
    analysis_matrix,
    analysis_step,
    analyze_level,
    concat_details,
    filter_decimate,
    filter_invariants,
    get_wavelet,
    make_daubechies,
)

ORDERS = range(1, 11)


@pytest.mark.parametrize("order", ORDERS)
def test_filter_invariants_hold(order):
    f = make_daubechies(order)
    assert f.length == 2 * order
    for name, (dev, tol) in filter_invariants(f).items():
        assert dev <= tol, name


@pytest.mark.parametrize("order", ORDERS)
def test_double_shift_orthogonality_all_shifts(order):
    h = make_daubechies(order).h
    L = h.size
    padded = np.concatenate([np.zeros(L), h, np.zeros(L)])
    for k in range(-(L // 2) + 1, L // 2):
        shifted = np.roll(padded, 2 * k)
        assert abs(padded @ shifted - (1.0 if k == 0 else 0.0)) <= 1e-10


def test_haar_taps():
    f = make_daubechies(1)
    r = 2**-0.5
    np.testing.assert_allclose(f.h, [r, r], rtol=0, atol=1e-16)
    np.testing.assert_allclose(f.g, [r, -r], rtol=0, atol=1e-16)


def test_db2_matches_closed_form():
    s3 = math.sqrt(3.0)
    expected = np.array([1 + s3, 3 + s3, 3 - s3, 1 - s3]) / (4 * math.sqrt(2.0))
    np.testing.assert_allclose(make_daubechies(2).h, expected, atol=1e-15)


def test_db9_length():
    assert make_daubechies(9).length == 18
    assert get_wavelet("db9").length == 18
    assert make_daubechies(9).steady_start == 9


@pytest.mark.parametrize("bad", [0, 11, -1, 2.5, "9", True])
def test_make_daubechies_rejects(bad):
    with pytest.raises(DomainError):
        make_daubechies(bad)


@pytest.mark.parametrize("name", ["haar", "sym4", "db", "dbx", "db11"])
def test_get_wavelet_rejects(name):
    with pytest.raises(DomainError):
        get_wavelet(name)


def test_output_length():
    x = np.random.default_rng(0).standard_normal(1024)
    d = analyze_level(x, make_daubechies(9), 3)
    assert d.values.shape == (128,)
    assert d.steady_start == 9
    assert d.steady.shape == (120,)


def test_zeros_in_zeros_out():
    for mode in ("zero-pad", "periodic"):
        d = analyze_level(np.zeros(256), make_daubechies(4), 2, mode)
        assert np.all(d.values == 0.0)


def test_haar_periodic_hand_value():
    d = analyze_level([1.0, -1.0, 0.0, 0.0], make_daubechies(1), 1, "periodic")
    np.testing.assert_allclose(d.values, [math.sqrt(2.0), 0.0], atol=1e-15)


def test_correlation_orientation_zero_pad():
    # d[k] = sum_n g[n] x_ext[2k + n] with L - 2 leading zeros
    f = make_daubechies(2)
    x = np.arange(1.0, 9.0)
    d = analyze_level(x, f, 1, "zero-pad").values
    xe = np.concatenate([np.zeros(2), x])
    expected = [sum(f.g[n] * xe[2 * k + n] for n in range(4)) for k in range(4)]
    np.testing.assert_allclose(d, expected, atol=1e-14)


def test_even_shift_away_from_edges_shifts_details():
    f = make_daubechies(9)
    x = np.zeros(256)
    x[100] = 1.0
    y = np.roll(x, 32)
    dx = analyze_level(x, f, 1).values
    dy = analyze_level(y, f, 1).values
    np.testing.assert_allclose(np.roll(dx, 16), dy, atol=1e-15)


@pytest.mark.parametrize("n", [3, 100, 1000])
def test_rejects_non_power_of_two(n):
    with pytest.raises(DomainError):
        analyze_level(np.zeros(n), make_daubechies(2), 1)


@pytest.mark.parametrize("level", [0, 11, -2])
def test_rejects_bad_level(level):
    with pytest.raises(DomainError):
        analyze_level(np.zeros(1024), make_daubechies(1), level)


def test_rejects_level_shorter_than_transient():
    with pytest.raises(DomainError):
        analyze_level(np.zeros(1024), make_daubechies(9), 7)


def test_rejects_bad_mode():
    with pytest.raises(DomainError):
        analyze_level(np.zeros(8), make_daubechies(1), 1, "symmetric")


@pytest.mark.parametrize("order", ORDERS)
def test_periodic_energy_conservation(order):
    f = make_daubechies(order)
    rng = np.random.default_rng(order)
    for _ in range(100):
        x = rng.standard_normal(256)
        a, d = analysis_step(x, f, "periodic")
        e = x @ x
        assert abs(a @ a + d @ d - e) <= 1e-9 * e


def test_periodic_short_signal_wraps():
    f = make_daubechies(9)
    x = np.random.default_rng(3).standard_normal(4)
    a, d = analysis_step(x, f, "periodic")
    assert abs(a @ a + d @ d - x @ x) <= 1e-9 * (x @ x)


@settings(max_examples=50, deadline=None)
@given(
    alpha=st.floats(-10, 10),
    beta=st.floats(-10, 10),
    seed=st.integers(0, 2**32 - 1),
    mode=st.sampled_from(["zero-pad", "periodic"]),
)
def test_linearity(alpha, beta, seed, mode):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, 512))
    f = make_daubechies(5)
    lhs = analyze_level(alpha * x + beta * y, f, 3, mode).values
    rhs = alpha * analyze_level(x, f, 3, mode).values + beta * analyze_level(y, f, 3, mode).values
    scale = max(1.0, np.max(np.abs(lhs)))
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale


def test_determinism_bitwise():
    x = np.random.default_rng(5).standard_normal(1024)
    f = make_daubechies(9)
    a = analyze_level(x, f, 4).values
    b = analyze_level(x.copy(), f, 4).values
    assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize("mode", ["zero-pad", "periodic"])
def test_batch_path_matches_single_path(mode):
    f = make_daubechies(9)
    X = np.random.default_rng(6).standard_normal((7, 1024))
    batch = analyze_level(X, f, 4, mode).values
    single = np.stack([analyze_level(x, f, 4, mode).values for x in X])
    np.testing.assert_allclose(batch, single, rtol=0, atol=1e-12)


def test_filter_decimate_length():
    f = make_daubechies(3)
    assert filter_decimate(np.ones(64), f.h).shape == (32,)


def test_concat_lengths():
    f = make_daubechies(9)
    x = np.random.default_rng(0).standard_normal(1024)
    one = concat_details(x, f, ScaleSet((4,)))
    assert one.values.shape == (64,)
    many = concat_details(x, f, ScaleSet((3, 4, 5, 6)))
    assert many.values.shape == (240,)
    assert many.layout.lengths == (128, 64, 32, 16)
    assert many.layout.offsets == (0, 128, 192, 224)


def test_concat_keeps_order_and_matches_levels():
    f = make_daubechies(9)
    x = np.random.default_rng(1).standard_normal(1024)
    cd = concat_details(x, f, (5, 3))
    np.testing.assert_array_equal(cd.segment(0), analyze_level(x, f, 5).values)
    np.testing.assert_array_equal(cd.segment(1), analyze_level(x, f, 3).values)


def test_concat_zeros():
    cd = concat_details(np.zeros(1024), make_daubechies(9), (3, 4, 5, 6))
    assert not np.any(cd.values)


def test_active_mask_skips_each_segment_transient():
    cd = concat_details(np.zeros(1024), make_daubechies(9), (3, 4))
    mask = cd.layout.active_mask()
    assert mask.sum() == (128 - 8) + (64 - 8)
    assert not mask[:8].any() and mask[8:128].all()
    assert not mask[128:136].any() and mask[136:].all()


def test_scale_set_validation():
    with pytest.raises(DomainError):
        ScaleSet(())
    with pytest.raises(DomainError):
        ScaleSet((3, 3))
    with pytest.raises(DomainError):
        concat_details(np.zeros(1024), make_daubechies(9), ())
    assert ScaleSet.parse("3,4,5,6").levels == (3, 4, 5, 6)
    assert ScaleSet.parse("3+4").levels == (3, 4)


def test_analysis_matrix_matches_filter_bank():
    f = make_daubechies(9)
    W = analysis_matrix(f, 1024, (3, 4, 5, 6))
    X = np.random.default_rng(2).standard_normal((5, 1024))
    np.testing.assert_allclose(X @ W, concat_details(X, f, (3, 4, 5, 6)).values, atol=1e-12)
    assert not W.flags.writeable


def test_white_noise_steady_statistics():
    # Pooled moments of steady-state details of unit white noise.
    f = make_daubechies(9)
    trials = 2000
    X = np.random.default_rng(11).standard_normal((trials, 1024))
    d = analyze_level(X, f, 4).steady
    pooled = d.ravel()
    assert pooled.size >= 100_000
    assert abs(pooled.mean()) <= 4.0 / math.sqrt(pooled.size)
    assert 0.95 <= pooled.var() <= 1.05
    rho = np.corrcoef(d, rowvar=False)
    off = rho[~np.eye(rho.shape[0], dtype=bool)]
    assert np.max(np.abs(off)) <= 5.0 / math.sqrt(trials)
