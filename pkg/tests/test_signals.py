import numpy as np
import pytest
from scipy import stats

from indagg.errors import InvalidLengthError, WrongFamilyError
from indagg.signals import (AnomalyKind, DatasetSpec, gen_dataset, gen_signal_a, gen_signal_b, read_dataset,
                            sample_change_point, signal_rng, write_dataset)


def test_change_point_bounds_examples(rng):
    draws = [sample_change_point(100, rng) for _ in range(2000)]
    assert min(draws) == 20 and max(draws) == 80
    draws = [sample_change_point(10, rng) for _ in range(500)]
    assert set(draws) == set(range(2, 9))
    with pytest.raises(InvalidLengthError):
        sample_change_point(9, rng)


def test_change_point_uniform_chi_square():
    rng = np.random.default_rng(11)
    draws = np.array([sample_change_point(150, rng) for _ in range(100_000)])
    assert draws.min() >= 30 and draws.max() <= 120
    observed = np.bincount(draws - 30, minlength=91)
    assert stats.chisquare(observed).pvalue > 0.01


def test_set_a_null_moments(rng):
    values = np.concatenate([gen_signal_a("none", rng).values for _ in range(1000)])
    assert abs(values.mean()) < 4 / np.sqrt(values.size)
    assert values.var() == pytest.approx(1.0, abs=0.02)
    # Gaussian tail mass beyond three sigma
    assert np.mean(np.abs(values) > 3) == pytest.approx(0.0027, abs=0.0006)


def test_set_a_lengths_and_change_points(rng):
    for kind in ("none", "variance", "mean", "slope"):
        for _ in range(200):
            s = gen_signal_a(kind, rng)
            assert 100 <= s.n <= 200
            if kind == "none":
                assert s.change_point is None
            else:
                assert -(-2 * s.n // 10) <= s.change_point <= 8 * s.n // 10


def test_set_a_magnitude_ranges(rng):
    for kind, (lo, hi) in (("variance", (1.01, 5)), ("mean", (1.01, 5)), ("slope", (0.02, 3))):
        mags = [gen_signal_a(kind, rng).magnitude for _ in range(300)]
        assert lo <= min(mags) and max(mags) <= hi


def test_mean_shift_size(rng):
    for _ in range(50):
        s = gen_signal_a("mean", rng)
        pre, post = s.values[:s.change_point], s.values[s.change_point:]
        tol = 3 * np.sqrt(1 / pre.size + 1 / post.size)
        assert abs(post.mean() - pre.mean() - s.magnitude) < tol


def test_slope_shift_ols(rng):
    for slope in (0.02, 0.5, 3.0):
        s = gen_signal_a("slope", rng, magnitude=slope)
        post = s.values[s.change_point:]
        t = np.arange(post.size)
        fit = stats.linregress(t, post)
        assert abs(fit.slope - slope) < 4 * fit.stderr
        assert abs(fit.intercept) < 4 * fit.intercept_stderr


def test_pre_change_values_are_standard_normal():
    rng = np.random.default_rng(3)
    rejections = 0
    for _ in range(400):
        s = gen_signal_a("variance", rng)
        rejections += stats.kstest(s.values[:s.change_point], "norm").pvalue < 0.05
    assert rejections / 400 <= 0.05 + 3 * np.sqrt(0.05 * 0.95 / 400)


def test_set_a_rejects_corrupted():
    with pytest.raises(WrongFamilyError):
        gen_signal_a("corrupted", np.random.default_rng(0))
    with pytest.raises(WrongFamilyError):
        DatasetSpec("A", 0, {"corrupted": 3})
    with pytest.raises(WrongFamilyError):
        DatasetSpec("C")


def test_set_b_null_moments(rng):
    values = np.concatenate([gen_signal_b("none", rng).values for _ in range(1000)])
    assert values.mean() == pytest.approx(4.0, abs=0.05)
    assert values.var() == pytest.approx(8.0, abs=0.25)


def test_set_b_variance_shift_switches_df(rng):
    post = np.concatenate([
        (lambda s: s.values[s.change_point:])(gen_signal_b("variance", rng, magnitude=16)) for _ in range(300)])
    assert post.mean() == pytest.approx(16.0, abs=0.15)
    dfs = {gen_signal_b("variance", rng).magnitude for _ in range(400)}
    assert dfs == set(float(d) for d in range(8, 17))


def test_set_b_lengths(rng):
    lengths = [gen_signal_b(k, rng).n for k in AnomalyKind for _ in range(100)]
    assert min(lengths) >= 100 and max(lengths) <= 150


def test_corrupted_sinusoid_periodogram():
    # floating-mean periodogram: variance explained by a least-squares fit of
    # sin + cos + offset at each trial frequency; unlike the plain DFT it peaks
    # at the true frequency even for the 1.5 cycles a signal holds
    rng = np.random.default_rng(8)
    for n in (120, 150):
        t = np.arange(n)
        freqs = np.linspace(0.5 / n, 4.0 / n, 351)
        power = np.zeros_like(freqs)
        signals = [gen_signal_b("corrupted", rng, n=n).values for _ in range(200)]
        for i, f in enumerate(freqs):
            design = np.column_stack([np.sin(2 * np.pi * f * t), np.cos(2 * np.pi * f * t), np.ones(n)])
            for v in signals:
                _, resid, *_ = np.linalg.lstsq(design, v, rcond=None)
                power[i] += np.sum((v - v.mean()) ** 2) - resid[0]
        assert freqs[np.argmax(power)] == pytest.approx(3 / (2 * n), abs=0.1 / n)


def test_corrupted_signal_is_noise_plus_sinusoid():
    n = 120
    base = gen_signal_b("none", signal_rng(1, "B", 0), n=n).values
    corrupt = gen_signal_b("corrupted", signal_rng(1, "B", 0), n=n).values
    expected = np.sin(2 * np.pi * np.arange(n) / (2 * n / 3))
    assert np.allclose(corrupt - base, expected, atol=1e-12)


def test_default_datasets():
    a = DatasetSpec("A", 1)
    b = DatasetSpec("B", 1)
    assert a.total == 6000 and b.total == 6000
    assert a.counts == {"none": 3000, "corrupted": 0, "variance": 1000, "mean": 1000, "slope": 1000}
    assert b.counts["corrupted"] == 1200 and b.counts["none"] + b.counts["corrupted"] == 3000


def test_gen_dataset_counts_and_determinism():
    spec = DatasetSpec("B", 42, {"none": 5, "corrupted": 4, "variance": 3, "mean": 2, "slope": 1})
    one, two = gen_dataset(spec), gen_dataset(spec)
    assert [s.label.value for s in one] == ["none"] * 5 + ["corrupted"] * 4 + ["variance"] * 3 + ["mean"] * 2 + ["slope"]
    assert all(np.array_equal(x.values, y.values) for x, y in zip(one, two))
    assert gen_dataset(DatasetSpec("A", 42, {k: 0 for k in a_kinds()})) == []


def a_kinds():
    return ["none", "variance", "mean", "slope"]


def test_signal_stream_independent_of_order():
    spec = DatasetSpec("A", 9, {"none": 3, "variance": 0, "mean": 3, "slope": 0})
    full = gen_dataset(spec)
    # regenerating signal 4 alone reproduces it exactly
    alone = gen_signal_a(full[4].label, signal_rng(9, "A", 4), id=full[4].id)
    assert np.array_equal(alone.values, full[4].values)
    assert alone.change_point == full[4].change_point


def test_dataset_round_trip(tmp_path):
    spec = DatasetSpec("B", 5, {"none": 2, "corrupted": 2, "variance": 2, "mean": 2, "slope": 2})
    signals = gen_dataset(spec)
    path = tmp_path / "d.jsonl"
    write_dataset(path, signals, spec)
    header, back = read_dataset(path)
    assert header["generator"].startswith("numpy.PCG64") and header["seed"] == 5
    assert header["counts"] == spec.counts
    for s, r in zip(signals, back):
        assert s.id == r.id and s.label == r.label and s.change_point == r.change_point
        assert np.array_equal(s.values, r.values)


def test_read_dataset_rejects_foreign_files(tmp_path):
    p = tmp_path / "x.jsonl"
    p.write_text('{"format": "other"}\n')
    with pytest.raises(ValueError):
        read_dataset(p)
