import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import pdist, squareform

from esnproj.errors import InsufficientPairs, NoConvergenceWarning, NoScalingRegion, SeriesTooShort
from esnproj.signals import autocorr_first_zero, autocorrelation, gen_lorenz
from esnproj.tsa import (
    CorrelationSumCurve,
    StudySettings,
    Trajectory,
    admissible_pairs,
    build_trajectory,
    correlation_sum,
    delay_embed,
    embedding_delay,
    epsilon_grid,
    estimate_d2,
    false_nearest_neighbors,
    fnn_fractions,
    lle_divergence,
    read_trajectory_csv,
    reconstruct_and_measure,
    saturation_dimension,
    write_trajectory_csv,
)


def test_delay_embed_examples():
    e = delay_embed([1, 2, 3, 4, 5], 2, 1)
    np.testing.assert_array_equal(e.points, [[1, 2], [2, 3], [3, 4], [4, 5]])
    np.testing.assert_array_equal(delay_embed([3.0, 1.0, 4.0], 1, 5).points[:, 0], [3, 1, 4])
    x = np.arange(1.0, 11.0)
    e = delay_embed(x, 3, 2)
    assert len(e) == 6
    np.testing.assert_array_equal(e.points[0], [1, 3, 5])
    with pytest.raises(SeriesTooShort):
        delay_embed(x, 4, 4)


@settings(max_examples=100, deadline=None)
@given(n=st.integers(1, 200), m=st.integers(1, 6), tau=st.integers(1, 20))
def test_delay_embed_indexing(n, m, tau):
    x = np.random.default_rng(n).normal(size=n)
    if n <= (m - 1) * tau:
        with pytest.raises(SeriesTooShort):
            delay_embed(x, m, tau)
        return
    e = delay_embed(x, m, tau)
    assert len(e) == n - (m - 1) * tau
    np.testing.assert_array_equal(e.points[:, 0], x[: len(e)])
    i, j = len(e) // 2, m - 1
    assert e.points[i, j] == x[i + j * tau]


def doubling_map_series(n, seed=0):
    # x_k = 0.b_k b_{k+1} ... in binary: the map shifts one random bit per step,
    # which a float iteration cannot do for more than about 50 steps
    bits = np.random.default_rng(seed).integers(0, 2, n + 53)
    weights = 0.5 ** np.arange(1, 54)
    return np.lib.stride_tricks.sliding_window_view(bits, 53)[:n] @ weights


def test_doubling_map_exponent():
    x = doubling_map_series(5000)
    np.testing.assert_allclose((2 * x[:-1]) % 1.0, x[1:], atol=1e-15)
    lle, p = lle_divergence(x, 1.0, 10)
    assert lle == pytest.approx(math.log(2), abs=0.1)
    assert np.all(np.diff(p) > 0)


def test_sine_has_zero_exponent():
    x = np.sin(0.1 * np.arange(2000))
    tau = autocorr_first_zero(x)
    lle, _ = lle_divergence(delay_embed(x, 2, tau), 0.1, 50, tau)
    assert abs(lle) < 0.05


def test_fnn_sine_needs_two_dimensions():
    x = np.sin(0.1 * np.arange(2000))
    assert false_nearest_neighbors(x, autocorr_first_zero(x), 4) == 2


def test_fnn_noise_does_not_converge():
    x = np.random.default_rng(0).normal(size=1000)
    with pytest.warns(NoConvergenceWarning):
        assert false_nearest_neighbors(x, 1, 4) == 4


def test_fnn_lorenz_observable():
    x = gen_lorenz(5000).observable[::2]
    m = saturation_dimension(fnn_fractions(x, embedding_delay(x), 6))
    assert abs(m - 3) <= 1


def test_saturation_dimension_rules():
    assert saturation_dimension([0.9, 0.3, 0.005, 0.0]) == 3
    # levels off under 0.2: the fourth value is more than half the third
    assert saturation_dimension([0.99, 0.3, 0.08, 0.06, 0.05]) == 3
    assert saturation_dimension([0.99, 0.9, 0.85]) == 3
    # a level above 0.2 never counts as saturated
    assert saturation_dimension([0.9, 0.5, 0.45, 0.1, 0.08]) == 4


def test_embedding_delay_prefers_first_minimum():
    t = np.arange(4000)
    # a fast damped ripple on a slow oscillation: ACF dips before its first zero
    x = np.sin(2 * np.pi * t / 400) + 0.8 * np.sin(2 * np.pi * t / 20)
    zero = autocorr_first_zero(x)
    tau = embedding_delay(x)
    assert tau < zero and abs(tau - 10) <= 2
    y = np.sin(2 * np.pi * t / 100)
    assert embedding_delay(y) == autocorr_first_zero(y)


def test_embedding_delay_takes_a_shoulder():
    t = np.arange(4000)
    # the ripple is too weak to make the ACF rise, only to flatten its decay
    x = np.sin(2 * np.pi * t / 400) + 0.1 * np.sin(2 * np.pi * t / 20)
    r = autocorrelation(x, 30)
    assert np.all(np.diff(r) < 0)
    # the ripple lifts the slope most three quarters into its period
    assert abs(embedding_delay(x) - 15) <= 2


def test_correlation_sum_identical_points():
    c = correlation_sum(np.ones((30, 2)), [1e-6, 1.0, 5.0])
    np.testing.assert_array_equal(c.c2, 1.0)


def test_correlation_sum_below_min_distance():
    x = np.arange(20.0)
    assert np.all(correlation_sum(x, [0.5, 0.99]).c2 == 0.0)
    with pytest.raises(InsufficientPairs):
        correlation_sum(np.arange(3.0), [1.0], tau_c=2)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(5, 60), dim=st.integers(1, 3), tau_c=st.integers(0, 5), seed=st.integers(0, 999))
def test_correlation_sum_matches_pair_count(n, dim, tau_c, seed):
    if admissible_pairs(n, tau_c) < 1:
        return
    P = np.random.default_rng(seed).normal(size=(n, dim))
    eps = np.geomspace(0.05, 3.0, 12)
    curve = correlation_sum(P, eps, tau_c)
    D = squareform(pdist(P))
    i, j = np.tril_indices(n, -tau_c - 1)
    assert i.size == curve.n_pairs
    expected = [(D[i, j] < e).sum() for e in eps]
    np.testing.assert_array_equal(np.round(curve.c2 * curve.n_pairs).astype(int), expected)
    assert np.all(np.diff(curve.c2) >= 0) and curve.c2[-1] <= 1


@pytest.mark.parametrize("dim, expected, tol", [(1, 1.0, 0.1), (2, 2.0, 0.15)])
def test_uniform_sample_dimension(dim, expected, tol):
    pts = np.random.default_rng(dim).uniform(size=(2000, dim))
    d2, (lo, hi) = estimate_d2(correlation_sum(pts, epsilon_grid(pts)))
    assert d2 == pytest.approx(expected, abs=tol)
    assert lo < hi


def test_no_scaling_region():
    curve = CorrelationSumCurve(np.geomspace(0.1, 1, 4), np.array([0.1, 0.2, 0.3, 0.4]), 1, 0)
    with pytest.raises(NoScalingRegion):
        estimate_d2(curve)


def test_trajectory_csv_round_trip(tmp_path):
    traj = Trajectory(np.random.default_rng(0).normal(size=(40, 3)), 0.01, 17, "true_ode", "lorenz")
    write_trajectory_csv(traj, tmp_path / "t.csv")
    back = read_trajectory_csv(tmp_path / "t.csv")
    np.testing.assert_array_equal(back.points, traj.points)
    assert (back.dt, back.tau_c, back.source, back.system) == (0.01, 17, "true_ode", "lorenz")


SMALL = StudySettings(n_ode=4000, n_esn=2000, transient=500, n_reservoir=50)


def test_single_repeat_has_zero_spread():
    est = reconstruct_and_measure("true_ode", "lorenz", repeats=1, settings=SMALL)
    assert est.single_run and est.n_repeats == 1
    assert est.d2_std == 0.0 and est.lle_std == 0.0
    assert 1.5 < est.d2_mean < 2.5 and est.lle_mean > 0


@pytest.mark.parametrize("source, dim", [("delay_embedding", None), ("esn_pca", 3), ("esn_small", 3)])
def test_built_trajectories(source, dim):
    traj = build_trajectory(source, "lorenz", 1, SMALL)
    assert np.all(np.isfinite(traj.points)) and traj.tau_c >= 1
    if dim is not None:
        assert traj.points.shape[1] == dim


def test_unknown_source_lists_valid_ones():
    with pytest.raises(ValueError, match="esn_kpca"):
        build_trajectory("bogus", "lorenz")
