import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esnproj.errors import LengthMismatch, NoZeroCrossing, SegmentTooShort
from esnproj.signals import (
    MSO_FREQUENCIES,
    autocorr_first_zero,
    gen_lorenz,
    gen_mackey_glass,
    gen_moore_spiegel,
    gen_mso,
    gen_narma,
    narma_response,
    read_series_csv,
    split_dataset,
    split_pairs,
    write_series_csv,
)


def reference_mackey_glass(steps, dt=0.1, tau=17.0, a=0.2, b=0.1, x0=1.2):
    # delay-Euler with an explicit history list instead of a ring buffer
    lag = int(round(tau / dt))
    hist = [x0] * (lag + 1)  # hist[-1] is x(t), hist[-1 - lag] is x(t - tau)
    out = [x0]
    for _ in range(steps - 1):
        x, xd = hist[-1], hist[-1 - lag]
        hist.append(x + dt * (a * xd / (1 + xd**10) - b * x))
        out.append(hist[-1])
    return np.array(out)


def test_mackey_glass_matches_reference():
    rec = gen_mackey_glass(3000)
    np.testing.assert_allclose(rec.values[:5], reference_mackey_glass(5), rtol=0, atol=1e-15)
    np.testing.assert_allclose(rec.values, reference_mackey_glass(3000), rtol=0, atol=1e-12)


def test_mackey_glass_pure_decay():
    rec = gen_mackey_glass(501, alpha=0.0)
    t = rec.times
    np.testing.assert_allclose(rec.values, 1.2 * np.exp(-0.1 * t), atol=0.1 * 0.1 * 1.2)


def test_mackey_glass_bounded_and_subsampled():
    full = gen_mackey_glass(20001)
    assert np.all((full.values[2000:] > 0) & (full.values[2000:] < 2))
    sub = gen_mackey_glass(2001, subsample=10)
    assert sub.dt == pytest.approx(1.0)
    np.testing.assert_array_equal(sub.values, full.values[::10])


def naive_narma(x, r, saturate):
    y = [0.0]
    for t in range(len(x)):
        v = 0.3 * y[t] + 0.05 * y[t] * math.fsum(y[max(0, t - r) : t + 1]) + 1.5 * (x[t - r] if t >= r else 0.0) * x[t] + 0.1
        y.append(math.tanh(v) if saturate else v)
    return np.array(y[1:])


def test_narma_zero_input_recursion():
    y = narma_response(np.zeros(5), 20, saturate=False)
    assert y[0] == pytest.approx(0.1, abs=1e-15)
    assert y[1] == pytest.approx(0.1305, abs=1e-15)


@pytest.mark.parametrize("saturate", [True, False])
def test_narma_matches_recursion_oracle(saturate):
    # the bare recursion only stays finite for small inputs
    x = np.random.default_rng(3).uniform(0, 1 if saturate else 0.1, 1000)
    np.testing.assert_array_equal(narma_response(x, 20, saturate), naive_narma(x, 20, saturate))


def test_narma_deterministic_and_bounded():
    x1, y1 = gen_narma(2000, seed=4)
    x2, y2 = gen_narma(2000, seed=4)
    np.testing.assert_array_equal(x1, x2)
    np.testing.assert_array_equal(y1, y2)
    assert np.all((x1 >= 0) & (x1 <= 1))
    assert np.all(np.abs(y1) < 1)
    assert not np.array_equal(gen_narma(2000, seed=5)[0], x1)


def test_mso_values():
    rec = gen_mso(1000)
    assert rec.values[0] == 0.0
    assert rec.values[1] == pytest.approx(sum(math.sin(f) for f in MSO_FREQUENCIES), abs=1e-14)
    assert np.all(np.abs(rec.values) <= 6)


@pytest.mark.parametrize("gen", [gen_lorenz, gen_moore_spiegel])
def test_origin_is_fixed(gen):
    rec = gen(100, init=(0.0, 0.0, 0.0))
    assert np.all(rec.values == 0.0)


def test_lorenz_bounding_box():
    v = gen_lorenz(20000).values
    assert np.all(np.abs(v[:, 0]) < 25) and np.all(np.abs(v[:, 1]) < 30)
    assert np.all((v[:, 2] > 0) & (v[:, 2] < 55))


def test_moore_spiegel_bounded():
    x = gen_moore_spiegel(20000).observable
    # with t=10, r=100 the excursions reach about 2.8
    assert np.all(np.abs(x) < 3)
    assert np.std(x) > 0.1


def _endpoint(gen, dt, horizon):
    n = int(round(horizon / dt)) + 1
    return gen(n, dt=dt, init=(0.5, 0.5, 0.5), transient=0).values[-1]


@pytest.mark.parametrize("gen", [gen_lorenz, gen_moore_spiegel])
def test_rk4_self_convergence(gen):
    a, b, c = (_endpoint(gen, dt, 0.5) for dt in (0.01, 0.005, 0.0025))
    ratio = np.linalg.norm(a - b) / np.linalg.norm(b - c)
    assert 13 < ratio < 20
    # same observable over five time units when the step is halved
    assert abs(_endpoint(gen, 0.01, 5.0)[0] - _endpoint(gen, 0.005, 5.0)[0]) < 1e-3


def test_acf_first_zero_sine():
    x = np.sin(2 * np.pi * np.arange(2000) / 100)
    assert abs(autocorr_first_zero(x) - 25) <= 1


def test_acf_white_noise():
    x = np.random.default_rng(0).normal(size=5000)
    assert autocorr_first_zero(x) <= 3


def test_acf_constant_raises():
    with pytest.raises(NoZeroCrossing):
        autocorr_first_zero(np.ones(100))


def test_split_dataset_example():
    sp = split_dataset(np.arange(1.0, 11.0), 1, (0.6, 0.2, 0.2))
    np.testing.assert_array_equal(sp.train[0], [1, 2, 3, 4, 5])
    np.testing.assert_array_equal(sp.train[1], [2, 3, 4, 5, 6])
    np.testing.assert_array_equal(sp.validation[0], [7])
    np.testing.assert_array_equal(sp.validation[1], [8])
    np.testing.assert_array_equal(sp.test[0], [9])
    np.testing.assert_array_equal(sp.test[1], [10])


def test_split_dataset_degenerate():
    with pytest.raises(SegmentTooShort):
        split_dataset(np.arange(10.0), 1, (1.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        split_dataset(np.arange(10.0), 1, (0.5, 0.2, 0.2))


@settings(max_examples=50, deadline=None)
@given(
    n=st.integers(200, 600),
    tau_f=st.integers(1, 12),
    a=st.floats(0.2, 0.6),
    b=st.floats(0.2, 0.5),
)
def test_split_pairs_are_shifted_series(n, tau_f, a, b):
    x = np.random.default_rng(n).normal(size=n)
    sp = split_dataset(x, tau_f, (a, b * (1 - a), (1 - b) * (1 - a)))
    pos = 0
    for inputs, targets in (sp.train, sp.validation, sp.test):
        # locate each segment in the series: contiguous, ordered, non-overlapping
        k = pos + int(np.flatnonzero(x[pos:] == inputs[0])[0])
        np.testing.assert_array_equal(inputs, x[k : k + inputs.size])
        np.testing.assert_array_equal(targets, x[k + tau_f : k + tau_f + inputs.size])
        pos = k + inputs.size + tau_f


def test_split_pairs_length_check():
    with pytest.raises(LengthMismatch):
        split_pairs(np.zeros(10), np.zeros(9))


@pytest.mark.parametrize("make", [lambda: gen_mso(50), lambda: gen_lorenz(50)])
def test_series_csv_round_trip(tmp_path, make):
    rec = make()
    write_series_csv(rec, tmp_path / "s.csv")
    back = read_series_csv(tmp_path / "s.csv")
    np.testing.assert_array_equal(back.values, rec.values)
    assert back.dt == rec.dt and back.name == rec.name and back.params == rec.params
