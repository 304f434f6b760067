"""Benchmark and chaotic signal generators, forecast-step selection and
chronological train/validation/test splitting."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import LengthMismatch, NoZeroCrossing, NonFinite, SegmentTooShort

MSO_FREQUENCIES = (0.2, 0.311, 0.42, 0.51, 0.63, 0.74)


@dataclass(frozen=True)
class TimeSeriesRecord:
    """A sampled signal.

    ``values`` is 1-D for scalar series and ``(n, 3)`` for ODE trajectories,
    in which case ``observable`` holds the measured component.
    """

    values: np.ndarray
    dt: float
    name: str
    params: dict = field(default_factory=dict)
    observable: np.ndarray | None = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise NonFinite(f"{self.name} series contains non-finite values")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def series(self) -> np.ndarray:
        """The scalar signal: ``values`` itself or the observable component."""
        return self.values if self.observable is None else self.observable

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) * self.dt


@dataclass(frozen=True)
class SupervisedSplit:
    """Contiguous train/validation/test ``(inputs, targets)`` pairs."""

    train: tuple[np.ndarray, np.ndarray]
    validation: tuple[np.ndarray, np.ndarray]
    test: tuple[np.ndarray, np.ndarray]
    tau_f: int


def gen_mackey_glass(
    n: int = 150_000,
    tau_mg: float = 17.0,
    alpha: float = 0.2,
    beta: float = 0.1,
    dt: float = 0.1,
    x0: float = 1.2,
    subsample: int = 1,
) -> TimeSeriesRecord:
    """Euler integration of the Mackey-Glass delay equation.

    History is constant ``x0`` for ``t <= 0`` and the delayed value is read
    ``round(tau_mg / dt)`` steps back. ``subsample`` keeps every k-th step, so
    the returned series has ``n`` samples spaced ``subsample * dt`` apart.
    """
    if n < 1 or subsample < 1:
        raise ValueError("n and subsample must be positive")
    if not dt > 0 or not tau_mg > 0:
        raise ValueError("dt and tau_mg must be positive")
    lag = int(round(tau_mg / dt))
    steps = (n - 1) * subsample + 1
    buf = [x0] * lag  # ring buffer of the last `lag` values
    out = np.empty(steps)
    x = x0
    out[0] = x
    pos = 0
    for k in range(1, steps):
        xd = buf[pos]
        buf[pos] = x
        pos = (pos + 1) % lag
        x = x + dt * (alpha * xd / (1.0 + xd**10) - beta * x)
        out[k] = x
    params = dict(tau_mg=tau_mg, alpha=alpha, beta=beta, dt=dt, x0=x0, subsample=subsample)
    return TimeSeriesRecord(out[::subsample].copy(), dt * subsample, "mackey_glass", params)


def narma_response(x, r: int = 20, saturate: bool = True) -> np.ndarray:
    """Output of the order-``r`` NARMA system driven by ``x``.

    ``y[t]`` is the output at time ``t + 1``. Inputs and outputs before time 0
    are zero and the output at time 0 is zero. With ``saturate`` each update
    passes through tanh; the bare polynomial recursion has no stable
    operating point at order 20 and overflows within a few hundred steps.
    """
    if r < 1:
        raise ValueError(f"r must be at least 1, got {r}")
    x = np.asarray(x, dtype=float).reshape(-1)
    n = x.size
    y = np.zeros(n + 1)  # y[t] is the output at time t
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(n):
            lo = max(0, t - r)
            x_lag = x[t - r] if t >= r else 0.0
            v = 0.3 * y[t] + 0.05 * y[t] * math.fsum(y[lo : t + 1]) + 1.5 * x_lag * x[t] + 0.1
            y[t + 1] = math.tanh(v) if saturate else v
    if not np.all(np.isfinite(y)):
        raise NonFinite(f"NARMA({r}) output diverged")
    return y[1:]


def gen_narma(n: int, r: int = 20, seed: int = 0, saturate: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """NARMA task: uniform [0, 1] inputs and the system output one step ahead.

    Returns ``(x, y)`` with ``y[t]`` the value to be predicted from inputs up
    to ``x[t]``.
    """
    x = np.random.default_rng(seed).uniform(0.0, 1.0, size=n)
    return x, narma_response(x, r, saturate)


def gen_mso(n: int, dt: float = 1.0) -> TimeSeriesRecord:
    """Sum of six unit sines sampled at ``t = k * dt``."""
    if n < 1:
        raise ValueError("n must be positive")
    t = np.arange(n) * dt
    y = np.zeros(n)
    for f in MSO_FREQUENCIES:
        y += np.sin(f * t)
    return TimeSeriesRecord(y, dt, "mso", {"dt": dt, "frequencies": list(MSO_FREQUENCIES)})


def rk4(f, y0, dt: float, steps: int) -> np.ndarray:
    """Fixed-step classical Runge-Kutta; returns ``steps + 1`` states."""
    y = np.array(y0, dtype=float)
    out = np.empty((steps + 1, y.size))
    out[0] = y
    h2 = 0.5 * dt
    for k in range(steps):
        k1 = f(y)
        k2 = f(y + h2 * k1)
        k3 = f(y + h2 * k2)
        k4 = f(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = y
    return out


def lorenz_rhs(sigma: float, rho: float, beta: float):
    def f(s):
        x, y, z = s
        return np.array([sigma * (y - x), x * (rho - z) - y, x * y - beta * z])

    return f


def moore_spiegel_rhs(t_param: float, r_param: float):
    def f(s):
        x, y, z = s
        return np.array([y, z, -z - (t_param - r_param + r_param * x * x) * y - t_param * x])

    return f


def _integrate(rhs, init, dt, n, transient, name, params) -> TimeSeriesRecord:
    if n < 1:
        raise ValueError("n must be positive")
    with np.errstate(over="ignore", invalid="ignore"):
        traj = rk4(rhs, init, dt, transient + n - 1)[transient:]
    if not np.all(np.isfinite(traj)):
        raise NonFinite(f"{name} trajectory diverged; reduce dt (currently {dt})")
    return TimeSeriesRecord(traj, dt, name, params, observable=traj[:, 0].copy())


def gen_lorenz(
    n: int,
    sigma: float = 10.0,
    rho: float = 28.0,
    beta: float = 8.0 / 3.0,
    dt: float = 0.01,
    init=(1.0, 1.0, 1.0),
    transient: int = 1000,
) -> TimeSeriesRecord:
    """RK4 Lorenz trajectory of ``n`` samples after ``transient`` discarded steps."""
    params = dict(sigma=sigma, rho=rho, beta=beta, dt=dt, init=list(map(float, init)), transient=transient)
    return _integrate(lorenz_rhs(sigma, rho, beta), init, dt, n, transient, "lorenz", params)


def gen_moore_spiegel(
    n: int,
    t_param: float = 10.0,
    r_param: float = 100.0,
    dt: float = 0.01,
    init=(0.1, 0.0, 0.0),
    transient: int = 1000,
) -> TimeSeriesRecord:
    """RK4 Moore-Spiegel trajectory of ``n`` samples after ``transient`` discarded steps."""
    params = dict(t_param=t_param, r_param=r_param, dt=dt, init=list(map(float, init)), transient=transient)
    return _integrate(
        moore_spiegel_rhs(t_param, r_param), init, dt, n, transient, "moore_spiegel", params
    )


def autocorrelation(x, max_lag: int | None = None) -> np.ndarray:
    """Biased sample autocorrelation normalized to 1 at lag 0."""
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    n = x.size
    var = float(x @ x)
    if var == 0.0:
        raise NoZeroCrossing("series has zero variance")
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    ac = np.fft.irfft(f * np.conj(f), m)[:n] / var
    return ac if max_lag is None else ac[: max_lag + 1]


def autocorr_first_zero(x) -> int:
    """First lag at which the autocorrelation crosses zero.

    The crossing between the last positive lag and the next one is located by
    linear interpolation and rounded to the nearest integer (at least 1).
    """
    x = np.asarray(x, dtype=float)
    if x.size < 3:
        raise ValueError("need at least 3 samples")
    ac = autocorrelation(x, x.size // 2)
    nonpos = np.flatnonzero(ac[1:] <= 0.0)
    if nonpos.size == 0:
        raise NoZeroCrossing(f"autocorrelation stays positive up to lag {x.size // 2}")
    lag = int(nonpos[0]) + 1
    a, b = ac[lag - 1], ac[lag]
    crossing = (lag - 1) + a / (a - b)
    return max(1, int(math.floor(crossing + 0.5)))


def _segment_bounds(n: int, fractions) -> list[int]:
    fr = np.asarray(fractions, dtype=float)
    if fr.shape != (3,) or np.any(fr < 0) or not math.isclose(fr.sum(), 1.0, abs_tol=1e-9):
        raise ValueError(f"fractions must be three nonnegative reals summing to 1, got {fractions}")
    cuts = [int(round(c * n)) for c in np.cumsum(fr)]
    cuts[-1] = n
    return [0] + cuts


def split_dataset(x, tau_f: int, fractions=(0.5, 0.25, 0.25), min_pairs: int = 1) -> SupervisedSplit:
    """Cut a series into contiguous segments of ``(x[t], x[t + tau_f])`` pairs.

    The last ``tau_f`` samples of each segment only serve as targets.
    """
    x = np.asarray(x, dtype=float)
    if tau_f < 1:
        raise ValueError(f"tau_f must be positive, got {tau_f}")
    b = _segment_bounds(x.shape[0], fractions)
    parts = []
    for name, lo, hi in zip(("train", "validation", "test"), b[:-1], b[1:]):
        seg = x[lo:hi]
        if seg.shape[0] - tau_f < min_pairs:
            raise SegmentTooShort(
                f"{name} segment has {seg.shape[0]} samples, needs {tau_f + min_pairs}"
            )
        parts.append((seg[:-tau_f].copy(), seg[tau_f:].copy()))
    return SupervisedSplit(*parts, tau_f=tau_f)


def split_pairs(inputs, targets, fractions=(0.5, 0.25, 0.25), min_pairs: int = 1) -> SupervisedSplit:
    """Chronological split of an input/output task whose pairs are already aligned."""
    x = np.asarray(inputs, dtype=float)
    y = np.asarray(targets, dtype=float)
    if x.shape[0] != y.shape[0]:
        raise LengthMismatch(f"{x.shape[0]} inputs vs {y.shape[0]} targets")
    b = _segment_bounds(x.shape[0], fractions)
    parts = []
    for name, lo, hi in zip(("train", "validation", "test"), b[:-1], b[1:]):
        if hi - lo < min_pairs:
            raise SegmentTooShort(f"{name} segment has {hi - lo} pairs, needs {min_pairs}")
        parts.append((x[lo:hi].copy(), y[lo:hi].copy()))
    return SupervisedSplit(*parts, tau_f=1)


def write_series_csv(record: TimeSeriesRecord, path) -> None:
    """Write ``t,value`` (scalar) or ``t,x,y,z`` (trajectory) with a params comment line."""
    path = Path(path)
    meta = {"name": record.name, "dt": record.dt, "params": record.params}
    vals = record.values if record.values.ndim == 2 else record.values[:, None]
    header = "t,value" if record.values.ndim == 1 else "t," + ",".join("xyz"[: vals.shape[1]])
    data = np.column_stack([record.times, vals])
    with path.open("w") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        fh.write(header + "\n")
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_series_csv(path) -> TimeSeriesRecord:
    path = Path(path)
    with path.open() as fh:
        first = fh.readline()
        meta = json.loads(first[1:]) if first.startswith("#") else {}
        header = (fh.readline() if meta else first).strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    times, vals = data[:, 0], data[:, 1:]
    dt = meta.get("dt", float(times[1] - times[0]) if len(times) > 1 else 1.0)
    name = meta.get("name", path.stem)
    params = meta.get("params", {})
    if header[1:] == ["value"]:
        return TimeSeriesRecord(vals[:, 0].copy(), dt, name, params)
    return TimeSeriesRecord(vals.copy(), dt, name, params, observable=vals[:, 0].copy())
