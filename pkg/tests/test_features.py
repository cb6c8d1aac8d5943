"""Connectivity and entropy features: fnc, dfnc, coarse graining,
discretisation, dispersion entropy, msde, CSV round trips."""

import numpy as np
import pytest

from qfuse.features import (
    FeatureError,
    ScaleTooLargeError,
    SeriesTooShortError,
    TimeCourses,
    WindowTooLargeError,
    ZeroVarianceError,
    coarse_grain,
    dfnc,
    dispersion_entropy,
    fnc,
    load_tc_csv,
    minmax_map,
    msde,
    ncdf_map,
    save_matrix_csv,
    upper_triangle,
    zscore,
)


def noise(n, b, seed=0):
    return np.random.default_rng(seed).standard_normal((n, b))


# ---------------------------------------------------------------------------
# container and zscore


def test_time_courses_validation():
    TimeCourses(np.zeros((2, 2)) + np.eye(2))  # minimal valid shape
    with pytest.raises(FeatureError):
        TimeCourses(np.zeros(8))
    with pytest.raises(FeatureError):
        TimeCourses(np.zeros((1, 5)))
    with pytest.raises(FeatureError):
        TimeCourses(np.zeros((5, 1)))
    bad = np.ones((4, 3))
    bad[2, 1] = np.nan
    with pytest.raises(FeatureError):
        TimeCourses(bad)


def test_zscore_standardises_each_component():
    x = noise(200, 4, seed=1) * np.array([1.0, 5.0, 0.2, 3.0]) + 7.0
    z = zscore(x)
    assert np.allclose(z.mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(z.std(axis=0), 1.0, atol=1e-12)
    with pytest.raises(ZeroVarianceError):
        zscore(np.column_stack([np.ones(10), np.arange(10.0)]))


# ---------------------------------------------------------------------------
# static connectivity


def test_fnc_symmetric_zero_diagonal():
    z = fnc(noise(100, 5))
    assert z.shape == (5, 5)
    assert np.array_equal(z, z.T)
    assert np.all(np.diag(z) == 0.0)


def test_fnc_uncorrelated_components_near_zero():
    z = fnc(noise(20000, 3, seed=2))
    off = upper_triangle(z)
    assert np.all(np.abs(off) < 0.05)


def test_fnc_perfect_correlation_is_clipped():
    t = np.arange(50.0)
    x = np.column_stack([t, 2.0 * t + 3.0, np.sin(t)])
    z = fnc(x)
    assert z[0, 1] == pytest.approx(np.arctanh(1.0 - 1e-7))
    y = np.column_stack([t, -t + 5.0])
    assert fnc(y)[0, 1] == pytest.approx(-np.arctanh(1.0 - 1e-7))


def test_fnc_invariant_to_positive_affine_rescaling():
    x = noise(80, 4, seed=3)
    scaled = x * np.array([2.0, 0.1, 7.0, 1.0]) + np.array([5.0, -1.0, 0.0, 100.0])
    assert np.allclose(fnc(scaled), fnc(x), atol=1e-9)


def test_fnc_rejects_zero_variance():
    x = noise(50, 3)
    x[:, 1] = 4.2
    with pytest.raises(ZeroVarianceError):
        fnc(x)


def test_upper_triangle_row_major_order():
    m = np.array([[0.0, 1.0, 2.0],
                  [9.0, 0.0, 3.0],
                  [9.0, 9.0, 0.0]])
    assert upper_triangle(m).tolist() == [1.0, 2.0, 3.0]


# ---------------------------------------------------------------------------
# dynamic connectivity


def test_dfnc_window_count_and_width():
    d = dfnc(noise(64, 8, seed=4), window=16, step=4)
    assert d.shape == (13, 28)  # starts 0,4,...,48; 8*7/2 pairs


def test_dfnc_single_full_window_matches_fnc():
    x = noise(64, 6, seed=5)
    d = dfnc(x, window=64, step=4)
    assert d.shape == (1, 15)
    assert np.array_equal(d[0], upper_triangle(fnc(x)))


def test_dfnc_zero_variance_window_warns_and_zeroes_pairs():
    x = noise(20, 3, seed=6)
    x[:8, 0] = 1.5  # component 0 flat inside the first window only
    with pytest.warns(UserWarning, match="zero-variance"):
        d = dfnc(x, window=8, step=4)
    # pairs are row-major: (0,1), (0,2), (1,2)
    assert d[0, 0] == 0.0 and d[0, 1] == 0.0
    assert d[0, 2] != 0.0
    assert np.all(d[2:] != 0.0)  # later windows see real variance


def test_dfnc_parameter_validation():
    x = noise(64, 4)
    with pytest.raises(WindowTooLargeError):
        dfnc(x, window=65, step=4)
    with pytest.raises(FeatureError):
        dfnc(x, window=1, step=4)
    with pytest.raises(FeatureError):
        dfnc(x, window=16, step=0)


# ---------------------------------------------------------------------------
# coarse graining and discretisation


def test_coarse_grain_examples():
    assert coarse_grain(np.array([1.0, 3.0, 5.0, 7.0]), 2).tolist() == [2.0, 6.0]
    assert coarse_grain(np.arange(1.0, 8.0), 3).tolist() == [2.0, 5.0]  # tail dropped
    x = noise(17, 2)[:, 0]
    assert np.array_equal(coarse_grain(x, 1), x)


def test_coarse_grain_preserves_mean_when_divisible():
    x = noise(60, 2, seed=7)[:, 0]
    for scale in (2, 3, 5, 6):
        assert coarse_grain(x, scale).mean() == pytest.approx(x.mean(), abs=1e-12)


def test_coarse_grain_too_short():
    with pytest.raises(SeriesTooShortError):
        coarse_grain(np.ones(4), 5)


def test_ncdf_map_constant_signal_hits_midpoint_class():
    labels = ncdf_map(np.full(10, 3.3), 6)
    assert np.all(labels == 4)
    assert np.all(ncdf_map(np.zeros(5), 2) == 2)


def test_ncdf_map_extremes_and_monotonicity():
    x = np.sort(np.random.default_rng(8).standard_normal(1001))
    labels = ncdf_map(x, 6)
    assert labels[0] == 1 and labels[-1] == 6
    assert np.all(np.diff(labels) >= 0)
    assert set(np.unique(labels)) == {1, 2, 3, 4, 5, 6}


def test_ncdf_map_gaussian_input_fills_classes_evenly():
    x = np.random.default_rng(9).standard_normal(100_000)
    labels = ncdf_map(x, 6)
    for c in range(1, 7):
        assert np.mean(labels == c) == pytest.approx(1 / 6, abs=0.01)


def test_minmax_map_examples():
    assert minmax_map(np.array([0.0, 1.0]), 2).tolist() == [1, 2]
    assert np.all(minmax_map(np.full(6, 9.9), 6) == 4)
    labels = minmax_map(np.linspace(0, 1, 7), 6)
    assert labels.min() == 1 and labels.max() == 6


def test_discretisers_reject_single_class():
    with pytest.raises(FeatureError):
        ncdf_map(np.arange(5.0), 1)
    with pytest.raises(FeatureError):
        minmax_map(np.arange(5.0), 1)


# ---------------------------------------------------------------------------
# dispersion entropy


def test_dispersion_entropy_constant_is_zero():
    assert dispersion_entropy(np.full(50, 3), 6) == 0.0


def test_dispersion_entropy_alternating_two_patterns():
    labels = np.array([1, 2, 1, 2, 1])
    assert dispersion_entropy(labels, 6, embedding=2, delay=1) == pytest.approx(
        np.log(2.0), abs=1e-12)


def test_dispersion_entropy_respects_delay():
    labels = np.array([1, 2, 3, 4, 5, 6])
    # patterns at delay 2: (1,3) (2,4) (3,5) (4,6) -> four distinct
    assert dispersion_entropy(labels, 6, embedding=2, delay=2) == pytest.approx(
        np.log(4.0), abs=1e-12)


def test_dispersion_entropy_uniform_labels_near_maximum():
    labels = np.random.default_rng(10).integers(1, 7, size=100_000)
    de = dispersion_entropy(labels, 6, embedding=2, delay=1)
    assert de == pytest.approx(np.log(36.0), rel=0.02)
    assert de <= 2 * np.log(6.0) + 1e-12


def test_dispersion_entropy_bounds_random_cases():
    rng = np.random.default_rng(11)
    for _ in range(25):
        labels = rng.integers(1, 7, size=int(rng.integers(10, 200)))
        de = dispersion_entropy(labels, 6, embedding=2, delay=1)
        assert 0.0 <= de <= 2 * np.log(6.0) + 1e-12


def test_dispersion_entropy_validation():
    with pytest.raises(FeatureError):
        dispersion_entropy(np.array([0, 1, 2]), 6)  # label below range
    with pytest.raises(FeatureError):
        dispersion_entropy(np.array([1, 7, 2]), 6)  # label above range
    with pytest.raises(FeatureError):
        dispersion_entropy(np.array([1, 2, 3]), 6, embedding=0)
    with pytest.raises(SeriesTooShortError):
        dispersion_entropy(np.array([1]), 6, embedding=2, delay=1)
    with pytest.raises(SeriesTooShortError):
        dispersion_entropy(np.array([1, 2, 3]), 6, embedding=2, delay=2)


# ---------------------------------------------------------------------------
# multiscale dispersion entropy


def test_msde_shape_and_bounds():
    out = msde(noise(64, 8, seed=12), scales=(1, 2, 4))
    assert out.shape == (3, 8)
    assert np.all(out >= 0.0)
    assert np.all(out <= 2 * np.log(6.0) + 1e-12)


def test_msde_constant_components_score_zero():
    out = msde(np.ones((64, 2)) * np.array([3.0, -1.0]), scales=(1, 2))
    assert np.array_equal(out, np.zeros((2, 2)))


def test_msde_noise_more_irregular_than_sine():
    t = np.linspace(0, 6 * np.pi, 64)
    sine = np.sin(t)
    sine_de = msde(np.column_stack([sine, sine]), scales=(1,))[0, 0]
    for seed in range(20):
        draw = np.random.default_rng(100 + seed).standard_normal(64)
        noise_de = msde(np.column_stack([draw, draw]), scales=(1,))[0, 0]
        assert noise_de > sine_de


def test_msde_scale_too_large():
    with pytest.raises(ScaleTooLargeError):
        msde(noise(64, 2), scales=(1, 33))


def test_msde_unknown_discretiser():
    with pytest.raises(FeatureError):
        msde(noise(64, 2), discretize="quantile")


def test_msde_minmax_mode_runs():
    out = msde(noise(64, 3, seed=13), scales=(1, 2), discretize="minmax")
    assert out.shape == (2, 3)
    assert np.all((out >= 0) & (out <= 2 * np.log(6.0) + 1e-12))


# ---------------------------------------------------------------------------
# CSV I/O


def test_load_tc_csv_with_and_without_header(tmp_path):
    data = noise(6, 3, seed=14)
    rows = [",".join(repr(float(v)) for v in row) for row in data]
    with_header = tmp_path / "sub-a.csv"
    with_header.write_text("comp1,comp2,comp3\n" + "\n".join(rows) + "\n")
    plain = tmp_path / "sub-b.csv"
    plain.write_text("\n".join(rows) + "\n")
    a, b = load_tc_csv(with_header), load_tc_csv(plain)
    assert np.array_equal(a.data, data)
    assert np.array_equal(b.data, data)
    assert a.subject_id == "sub-a"
    assert a.n_timepoints == 6 and a.n_components == 3


def test_save_matrix_csv_round_trip(tmp_path):
    m = fnc(noise(40, 4, seed=15))
    path = tmp_path / "mat.csv"
    save_matrix_csv(path, m)
    back = np.loadtxt(path, delimiter=",", ndmin=2)
    assert back.shape == m.shape
    assert np.allclose(back, m, rtol=1e-9, atol=1e-12)
