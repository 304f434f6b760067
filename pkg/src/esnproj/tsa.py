"""Nonlinear time-series analysis: delay embedding, false nearest neighbors,
correlation dimension and largest Lyapunov exponent, plus the attractor
reconstruction study comparing ODE, delay and reservoir trajectories."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numba
import numpy as np
from scipy.spatial.distance import pdist

from .errors import (
    InsufficientPairs,
    NoConvergenceWarning,
    NoNeighbors,
    NoScalingRegion,
    SeriesTooShort,
)
from .pipeline import PipelineKind, ReadoutParams, fit_pipeline
from .reservoir import EsnConfig
from .signals import autocorr_first_zero, autocorrelation, gen_lorenz, gen_moore_spiegel, split_dataset

SOURCES = ("true_ode", "delay_embedding", "esn_pca", "esn_kpca", "esn_small")
SYSTEMS = ("lorenz", "moore_spiegel")


@dataclass(frozen=True)
class Embedding:
    """Delay vectors ``points[i, j] = x[i + j * tau_e]``."""

    points: np.ndarray
    m: int
    tau_e: int

    def __len__(self) -> int:
        return self.points.shape[0]


def delay_embed(x, m: int, tau_e: int) -> Embedding:
    x = np.asarray(x, dtype=float).reshape(-1)
    if m < 1 or tau_e < 1:
        raise ValueError(f"need m >= 1 and tau_e >= 1, got m={m}, tau_e={tau_e}")
    n = x.size - (m - 1) * tau_e
    if n < 1:
        raise SeriesTooShort(f"{x.size} samples cannot hold one {m}-dimensional vector at delay {tau_e}")
    pts = np.empty((n, m))
    for j in range(m):
        pts[:, j] = x[j * tau_e : j * tau_e + n]
    return Embedding(pts, m, tau_e)


def _as_points(points) -> np.ndarray:
    if isinstance(points, Embedding):
        points = points.points
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if P.ndim != 2:
        raise ValueError(f"points must be 1-D or 2-D, got shape {P.shape}")
    return np.ascontiguousarray(P)


@numba.njit(cache=True)
def _nearest(P, n, exclude):
    """Nearest neighbor of each of the first ``n`` rows among those rows,
    skipping ``|i - j| <= exclude`` and exact duplicates. -1 when none."""
    m = P.shape[1]
    idx = np.full(n, -1, np.int64)
    dist = np.full(n, np.inf)
    for i in range(n):
        best = np.inf
        bj = -1
        for j in range(n):
            if abs(i - j) <= exclude:
                continue
            d2 = 0.0
            for k in range(m):
                diff = P[i, k] - P[j, k]
                d2 += diff * diff
            if 0.0 < d2 < best:
                best = d2
                bj = j
        idx[i] = bj
        dist[i] = math.sqrt(best)
    return idx, dist


def fnn_fractions(
    x, tau_e: int, m_max: int, r_tol: float = 10.0, a_tol: float = 2.0, theiler: int = 0
) -> np.ndarray:
    """Fraction of false nearest neighbors for m = 1 .. m_max.

    A neighbor in dimension m is false when adding coordinate m+1 stretches
    the distance by more than ``r_tol`` or makes it exceed ``a_tol`` times
    the standard deviation of the series. Neighbors closer in time than
    ``theiler`` samples are skipped.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if m_max < 2:
        raise ValueError("m_max must be at least 2")
    r_a = float(np.std(x))
    out = np.empty(m_max)
    for m in range(1, m_max + 1):
        n = x.size - m * tau_e
        if n < 2:
            raise SeriesTooShort(f"series too short for m={m + 1} at delay {tau_e}")
        pts = delay_embed(x, m, tau_e).points
        nn, d = _nearest(pts, n, theiler)
        ok = nn >= 0
        i = np.flatnonzero(ok)
        extra = np.abs(x[i + m * tau_e] - x[nn[ok] + m * tau_e])
        dm = d[ok]
        false = (extra > r_tol * dm) | (np.sqrt(dm**2 + extra**2) > a_tol * r_a)
        out[m - 1] = false.mean() if i.size else 1.0
    return out


def false_nearest_neighbors(
    x,
    tau_e: int,
    m_max: int = 10,
    r_tol: float = 10.0,
    a_tol: float = 2.0,
    threshold: float = 0.01,
    theiler: int = 0,
) -> int:
    """Smallest embedding dimension whose false-neighbor fraction is below ``threshold``.

    Warns with :class:`NoConvergenceWarning` and returns ``m_max`` when no
    dimension qualifies.
    """
    frac = fnn_fractions(x, tau_e, m_max, r_tol, a_tol, theiler)
    below = np.flatnonzero(frac < threshold)
    if below.size == 0:
        warnings.warn(
            f"false-neighbor fraction stays above {threshold} up to m={m_max} (last {frac[-1]:.3f})",
            NoConvergenceWarning,
            stacklevel=2,
        )
        return m_max
    return int(below[0]) + 1


def saturation_dimension(
    fractions, threshold: float = 0.01, min_drop: float = 0.5, level: float = 0.2
) -> int:
    """Embedding dimension from a false-neighbor curve.

    The first m below ``threshold``; failing that, the first m whose fraction
    is under ``level`` and after which the fraction no longer falls by at
    least the factor ``min_drop`` (the curve has levelled off, as happens when
    a long delay stretches neighbors). ``len(fractions)`` if neither holds.
    """
    f = np.asarray(fractions, dtype=float)
    below = np.flatnonzero(f < threshold)
    if below.size:
        return int(below[0]) + 1
    for i in range(1, f.size):
        if f[i - 1] < level and f[i] > min_drop * f[i - 1]:
            return i
    return int(f.size)


@dataclass(frozen=True)
class CorrelationSumCurve:
    epsilons: np.ndarray
    c2: np.ndarray
    m: int
    tau_c: int
    n_pairs: int = 0


def admissible_pairs(n: int, tau_c: int) -> int:
    """Number of index pairs ``j < i`` with ``i - j > tau_c``."""
    k = n - tau_c - 1
    return k * (k + 1) // 2 if k > 0 else 0


@numba.njit(cache=True)
def _pair_histogram(P, eps2, tau_c):
    n, m = P.shape
    counts = np.zeros(eps2.size + 1, np.int64)
    for i in range(n):
        for j in range(i - tau_c):
            d2 = 0.0
            for k in range(m):
                diff = P[i, k] - P[j, k]
                d2 += diff * diff
            counts[np.searchsorted(eps2, d2, side="right")] += 1
    return counts


def epsilon_grid(points, n: int = 40, lo_pct: float = 0.1, hi_pct: float = 50.0, max_sample: int = 2000, seed: int = 0):
    """Log-spaced radii between two percentiles of the pairwise distances,
    estimated on a random subsample of at most ``max_sample`` points."""
    P = _as_points(points)
    if P.shape[0] > max_sample:
        rng = np.random.default_rng(seed)
        P = P[np.sort(rng.choice(P.shape[0], max_sample, replace=False))]
    d = pdist(P)
    d = d[d > 0]
    if d.size == 0:
        raise InsufficientPairs("all sampled points coincide")
    lo, hi = np.percentile(d, [lo_pct, hi_pct])
    if not hi > lo:
        hi = lo * 10.0
    return np.geomspace(lo, hi, n)


def correlation_sum(points, epsilons: Sequence[float], tau_c: int = 0) -> CorrelationSumCurve:
    """Fraction of admissible pairs closer than each radius.

    Pairs with ``|i - j| <= tau_c`` are excluded (Theiler window) and the
    count is divided by the number of pairs that remain, so ``C2 <= 1``.
    """
    P = _as_points(points)
    eps = np.asarray(epsilons, dtype=float).reshape(-1)
    if tau_c < 0:
        raise ValueError("tau_c must be nonnegative")
    if eps.size == 0 or np.any(eps <= 0) or np.any(np.diff(eps) <= 0):
        raise ValueError("epsilons must be positive and strictly increasing")
    n_pairs = admissible_pairs(P.shape[0], tau_c)
    if n_pairs < 1:
        raise InsufficientPairs(f"{P.shape[0]} points leave no pair outside a Theiler window of {tau_c}")
    counts = _pair_histogram(P, eps * eps, int(tau_c))
    c2 = np.cumsum(counts[:-1]) / n_pairs
    return CorrelationSumCurve(eps, c2, P.shape[1], int(tau_c), n_pairs)


def estimate_d2(curve: CorrelationSumCurve, min_points: int = 5, max_variation: float = 0.15):
    """Slope of log C2 against log eps over the scaling region.

    The region is the longest run of consecutive grid points (at least
    ``min_points``) whose local slopes spread by less than ``max_variation``
    relative to their mean; ties go to the flatter run.

    Returns:
        ``(d2, (eps_low, eps_high))``.
    """
    ok = (curve.c2 > 0) & (curve.c2 < 1)
    le = np.log(curve.epsilons[ok])
    lc = np.log(curve.c2[ok])
    n = le.size
    if n < min_points:
        raise NoScalingRegion(f"only {n} radii with 0 < C2 < 1")
    s = np.diff(lc) / np.diff(le)
    best = None
    for a in range(n - 1):
        for b in range(a + min_points - 1, n):
            w = s[a:b]
            mean = w.mean()
            if mean <= 0:
                break
            var = (w.max() - w.min()) / mean
            if var >= max_variation:
                break
            key = (b - a, -var)
            if best is None or key > best[0]:
                best = (key, a, b)
    if best is None:
        raise NoScalingRegion(f"no run of {min_points} radii with slope spread below {max_variation:.0%}")
    _, a, b = best
    slope = float(np.polyfit(le[a : b + 1], lc[a : b + 1], 1)[0])
    eps = curve.epsilons[ok]
    return slope, (float(eps[a]), float(eps[b]))


@numba.njit(cache=True)
def _log_divergence(P, nn, t_max):
    n = nn.size
    m = P.shape[1]
    total = np.zeros(t_max + 1)
    count = np.zeros(t_max + 1, np.int64)
    for i in range(n):
        j = nn[i]
        for t in range(t_max + 1):
            d2 = 0.0
            for k in range(m):
                diff = P[i + t, k] - P[j + t, k]
                d2 += diff * diff
            if d2 > 0.0:
                total[t] += 0.5 * math.log(d2)
                count[t] += 1
    return total, count


def divergence_curve(points, t_max: int, tau_c: int = 0) -> np.ndarray:
    """Mean log distance between nearest-neighbor pairs after ``t`` steps, t = 0 .. t_max."""
    P = _as_points(points)
    if t_max < 1:
        raise ValueError("t_max must be at least 1")
    n = P.shape[0] - t_max
    if n < 2:
        raise NoNeighbors(f"{P.shape[0]} points are too few for a horizon of {t_max} steps")
    nn, _ = _nearest(P, n, int(tau_c))
    if np.any(nn < 0):
        raise NoNeighbors(
            f"{int(np.sum(nn < 0))} reference points have no neighbor outside a Theiler window of {tau_c}"
        )
    total, count = _log_divergence(P, nn, int(t_max))
    if np.any(count == 0):
        raise NoNeighbors("every tracked pair collapsed to zero distance")
    return total / count


def linear_region_end(p: np.ndarray, rise_fraction: float = 0.7, min_rise: float = 1.0) -> int:
    """Last step of the initial growth phase of a divergence curve.

    Growth ends where ``p`` first covers ``rise_fraction`` of its total rise.
    Curves that rise by less than ``min_rise`` (no exponential separation)
    are fitted over their whole length.
    """
    rise = float(p.max() - p[0])
    if rise < min_rise:
        return p.size - 1
    hit = np.flatnonzero(p - p[0] >= rise_fraction * rise)
    return max(2, int(hit[0]))


def lle_divergence(points, dt: float, t_max: int, tau_c: int = 0, fit_end: Optional[int] = None):
    """Largest Lyapunov exponent from nearest-neighbor divergence (natural log).

    Each point is paired with its nearest neighbor outside the Theiler
    window; ``p(t)`` is the mean log separation after ``t`` steps, and the
    exponent is the least-squares slope of ``p`` against ``t * dt`` from 0
    to ``fit_end`` (by default the end of the initial growth phase).

    Returns:
        ``(lle, p)``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    p = divergence_curve(points, t_max, tau_c)
    end = linear_region_end(p) if fit_end is None else int(min(max(fit_end, 1), t_max))
    t = np.arange(end + 1) * dt
    return float(np.polyfit(t, p[: end + 1], 1)[0]), p


# ---------------------------------------------------------------------------
# attractor reconstruction study


@dataclass(frozen=True)
class Trajectory:
    """A reconstructed or simulated phase-space trajectory."""

    points: np.ndarray
    dt: float
    tau_c: int
    source: str = ""
    system: str = ""

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class InvariantEstimates:
    source: str
    system: str
    d2_mean: float
    d2_std: float
    lle_mean: float
    lle_std: float
    n_repeats: int
    d2_values: tuple = ()
    lle_values: tuple = ()
    single_run: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["d2_values"] = list(self.d2_values)
        d["lle_values"] = list(self.lle_values)
        return d


@dataclass(frozen=True)
class StudySettings:
    """Sizes and fixed reservoir settings for the attractor study.

    ODE and delay trajectories keep every integration step; reservoirs are
    driven by the observable downsampled by ``esn_stride``, standardized with
    training statistics.
    """

    n_ode: int = 20000
    n_esn: int = 8000
    esn_stride: int = 10
    transient: int = 2000
    fractions: tuple = (0.4, 0.1, 0.5)
    lle_horizon: float = 10.0
    fnn_m_max: int = 6
    n_components: int = 3
    n_reservoir: int = 300
    n_small: int = 3
    spectral_radius: float = 0.5
    input_scaling: float = 0.5
    kpca_gamma: float = 0.001
    ridge_lambda: float = 1e-6
    washout: int = 100
    moore_spiegel_t: float = 10.0
    moore_spiegel_r: float = 100.0


def embedding_delay(x) -> int:
    """Delay for reconstruction: the first local minimum or shoulder of the
    autocorrelation when it comes before the first zero crossing, otherwise
    the crossing.

    A shoulder is a lag where the decay flattens without turning upward, i.e.
    a local maximum of the still negative increment.
    """
    zero = autocorr_first_zero(x)
    r = autocorrelation(x, zero + 1)
    d = np.diff(r)
    mins = np.flatnonzero((r[1:-1] < r[:-2]) & (r[1:-1] <= r[2:])) + 1
    shoulders = np.flatnonzero((d[1:-1] > d[:-2]) & (d[1:-1] >= d[2:]) & (d[1:-1] < 0)) + 1
    cands = np.concatenate([mins, shoulders])
    cands = cands[cands < zero]
    return int(cands.min()) if cands.size else zero


def _simulate(system: str, n: int, seed: int, settings: StudySettings):
    rng = np.random.default_rng([int(seed), 3])
    if system == "lorenz":
        init = np.array([1.0, 1.0, 1.0]) + rng.normal(0.0, 1.0, 3)
        return gen_lorenz(n, init=init, transient=settings.transient)
    if system == "moore_spiegel":
        init = np.array([0.1, 0.0, 0.0]) + rng.normal(0.0, 0.01, 3)
        return gen_moore_spiegel(
            n,
            t_param=settings.moore_spiegel_t,
            r_param=settings.moore_spiegel_r,
            init=init,
            transient=settings.transient,
        )
    raise ValueError(f"unknown system {system!r}; valid: {SYSTEMS}")


def _esn_trajectory(source, x, seed, settings: StudySettings):
    """Train a reservoir to forecast ``x`` and return the projected test states."""
    tau_f = autocorr_first_zero(x)
    n_train = int(round(settings.fractions[0] * x.size))
    mu, sd = x[:n_train].mean(), x[:n_train].std()
    task = split_dataset((x - mu) / sd, tau_f, settings.fractions)
    small = source == "esn_small"
    cfg = EsnConfig(
        n_reservoir=settings.n_small if small else settings.n_reservoir,
        spectral_radius=settings.spectral_radius,
        input_scaling=settings.input_scaling,
        feedback_scaling=0.0,
        washout=settings.washout,
        rng_seed=int(seed),
    )
    kind = PipelineKind("ridge", {"esn_pca": "pca", "esn_kpca": "kpca", "esn_small": "none"}[source])
    params = ReadoutParams(
        n_components=None if small else settings.n_components,
        kpca_gamma=settings.kpca_gamma,
        ridge_lambda=settings.ridge_lambda,
    )
    pipe = fit_pipeline(kind, cfg, *task.train, params)
    pipe.advance(*task.validation)
    _, P = pipe.predict(task.test[0], return_states=True)
    return P, tau_f


def build_trajectory(source: str, system: str, seed: int = 0, settings: StudySettings = StudySettings()) -> Trajectory:
    """Phase-space trajectory of ``system`` as seen by ``source``."""
    if source not in SOURCES:
        raise ValueError(f"unknown source {source!r}; valid: {SOURCES}")
    if system not in SYSTEMS:
        raise ValueError(f"unknown system {system!r}; valid: {SYSTEMS}")
    if source in ("true_ode", "delay_embedding"):
        rec = _simulate(system, settings.n_ode, seed, settings)
        x = rec.observable
        tau_c = autocorr_first_zero(x)
        if source == "true_ode":
            pts = rec.values
        else:
            tau_e = embedding_delay(x)
            m = saturation_dimension(fnn_fractions(x, tau_e, settings.fnn_m_max))
            pts = delay_embed(x, m, tau_e).points
        return Trajectory(pts, rec.dt, tau_c, source, system)
    rec = _simulate(system, settings.n_esn * settings.esn_stride, seed, settings)
    x = rec.observable[:: settings.esn_stride]
    P, tau_c = _esn_trajectory(source, x, seed, settings)
    return Trajectory(P, rec.dt * settings.esn_stride, tau_c, source, system)


def measure_invariants(traj: Trajectory, settings: StudySettings = StudySettings(), seed: int = 0):
    """``(D2, LLE)`` of one trajectory."""
    eps = epsilon_grid(traj.points, seed=seed)
    d2, _ = estimate_d2(correlation_sum(traj.points, eps, traj.tau_c))
    t_max = max(2, int(round(settings.lle_horizon / traj.dt)))
    lle, _ = lle_divergence(traj.points, traj.dt, t_max, traj.tau_c)
    return d2, lle


def reconstruct_and_measure(
    source: str,
    system: str,
    repeats: int = 10,
    settings: StudySettings = StudySettings(),
    root_seed: int = 0,
    trajectories: Optional[list] = None,
) -> InvariantEstimates:
    """Correlation dimension and LLE over ``repeats`` independently seeded runs.

    Each run draws a new initial condition and, for reservoir sources, a new
    reservoir. Built trajectories are appended to ``trajectories`` if given.
    """
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    seeds = np.random.SeedSequence(int(root_seed)).generate_state(repeats)
    d2s, lles = [], []
    for s in seeds:
        traj = build_trajectory(source, system, int(s), settings)
        if trajectories is not None:
            trajectories.append(traj)
        d2, lle = measure_invariants(traj, settings, int(s))
        d2s.append(d2)
        lles.append(lle)
    return InvariantEstimates(
        source=source,
        system=system,
        d2_mean=float(np.mean(d2s)),
        d2_std=float(np.std(d2s)),
        lle_mean=float(np.mean(lles)),
        lle_std=float(np.std(lles)),
        n_repeats=repeats,
        d2_values=tuple(map(float, d2s)),
        lle_values=tuple(map(float, lles)),
        single_run=repeats == 1,
    )


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """``t,c1,c2,...`` rows preceded by a ``#`` line holding the metadata."""
    meta = {"dt": traj.dt, "tau_c": traj.tau_c, "source": traj.source, "system": traj.system}
    k = traj.points.shape[1]
    with Path(path).open("w", newline="") as fh:
        fh.write("# " + json.dumps(meta) + "\n")
        w = csv.writer(fh)
        w.writerow(["t"] + [f"c{i + 1}" for i in range(k)])
        for i, row in enumerate(traj.points):
            w.writerow([repr(i * traj.dt)] + [repr(float(v)) for v in row])


def read_trajectory_csv(path) -> Trajectory:
    with Path(path).open(newline="") as fh:
        first = fh.readline()
        meta = json.loads(first[1:]) if first.startswith("#") else {}
        if not first.startswith("#"):
            fh.seek(0)
        rows = list(csv.reader(fh))
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(len(rows) - 1, -1)
    t, pts = data[:, 0], data[:, 1:]
    dt = float(meta.get("dt", t[1] - t[0] if t.size > 1 else 1.0))
    tau_c = meta.get("tau_c")
    if tau_c is None:
        tau_c = autocorr_first_zero(pts[:, 0])
    return Trajectory(pts, dt, int(tau_c), meta.get("source", ""), meta.get("system", ""))
