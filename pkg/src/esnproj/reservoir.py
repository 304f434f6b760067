"""Recurrent layer of the echo state network.

Weight initialization, spectral radius control, teacher-forced state
harvesting and closed-loop prediction through a projector and a readout.

The state update is::

    h[k] = tanh(W_res h[k-1] + W_in (w_i x[k]) + W_fb (w_f w_o y[k-1]) + xi[k])

where ``y[k-1]`` is the teacher signal while harvesting and the network's own
previous prediction while predicting. ``xi`` is uniform noise on
``[-noise_level, noise_level]`` and is only injected while harvesting.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, LengthMismatch, ZeroSpectralRadius


@dataclass(frozen=True)
class EsnConfig:
    """Reservoir hyperparameters.

    Attributes:
        n_reservoir: Number of reservoir neurons.
        spectral_radius: Target largest absolute eigenvalue of ``w_res``.
        noise_level: Half-width of the uniform state noise used while harvesting.
        input_scaling: Gain applied to the input signal.
        teacher_scaling: Gain applied to the output signal on the feedback channel.
        feedback_scaling: Additional gain of the feedback channel.
        washout: Number of initial harvested states discarded.
        rng_seed: Seed for the weights and the noise stream.
    """

    n_reservoir: int = 100
    spectral_radius: float = 0.9
    noise_level: float = 0.0
    input_scaling: float = 0.5
    teacher_scaling: float = 0.5
    feedback_scaling: float = 0.0
    washout: int = 100
    rng_seed: int = 0

    def __post_init__(self):
        if int(self.n_reservoir) != self.n_reservoir or self.n_reservoir < 1:
            raise ValueError(f"n_reservoir must be a positive integer, got {self.n_reservoir}")
        if not self.spectral_radius > 0:
            raise ValueError(f"spectral_radius must be positive, got {self.spectral_radius}")
        if self.noise_level < 0:
            raise ValueError(f"noise_level must be nonnegative, got {self.noise_level}")
        if int(self.washout) != self.washout or self.washout < 0:
            raise ValueError(f"washout must be a nonnegative integer, got {self.washout}")

    @property
    def feedback_gain(self) -> float:
        return self.feedback_scaling * self.teacher_scaling


@dataclass(frozen=True)
class WeightSet:
    """The three fixed random matrices of a reservoir."""

    w_res: np.ndarray  # (N_r, N_r)
    w_in: np.ndarray  # (N_r, N_i)
    w_fb: np.ndarray  # (N_r, N_o)

    @property
    def n_reservoir(self) -> int:
        return self.w_res.shape[0]

    @property
    def n_input(self) -> int:
        return self.w_in.shape[1]

    @property
    def n_output(self) -> int:
        return self.w_fb.shape[1]


@dataclass(frozen=True)
class StateMatrix:
    """Harvested post-washout states stacked as rows ``[x[k], h[k]]``.

    ``last_state`` and ``last_output`` are ``h`` and the teacher value at the
    final step, used to continue the run into the next data segment.
    """

    rows: np.ndarray
    n_input: int
    n_reservoir: int
    last_state: np.ndarray
    last_output: np.ndarray

    @property
    def inputs(self) -> np.ndarray:
        return self.rows[:, : self.n_input]

    @property
    def states(self) -> np.ndarray:
        return self.rows[:, self.n_input :]

    def __len__(self) -> int:
        return self.rows.shape[0]


def spectral_radius(m: np.ndarray) -> float:
    """Largest absolute eigenvalue of a square matrix."""
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def rescale_spectral_radius(m: np.ndarray, target: float) -> np.ndarray:
    """Return ``m`` scaled so that its spectral radius equals ``target``."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    if not target > 0:
        raise ValueError(f"target must be positive, got {target}")
    rho = spectral_radius(m)
    if rho < 1e-14:
        raise ZeroSpectralRadius(f"spectral radius {rho:.3e} is numerically zero")
    return m * (target / rho)


def _weight_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), 0])


def _noise_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), 1])


def init_weights(config: EsnConfig, n_input: int = 1, n_output: int = 1) -> WeightSet:
    """Sample uniform [-1, 1] weights and rescale the reservoir matrix."""
    if n_input < 1 or n_output < 1:
        raise ValueError("n_input and n_output must be at least 1")
    rng = _weight_rng(config.rng_seed)
    n = int(config.n_reservoir)
    w_res = rng.uniform(-1.0, 1.0, size=(n, n))
    w_in = rng.uniform(-1.0, 1.0, size=(n, n_input))
    w_fb = rng.uniform(-1.0, 1.0, size=(n, n_output))
    w_res = rescale_spectral_radius(w_res, config.spectral_radius)
    return WeightSet(w_res=w_res, w_in=w_in, w_fb=w_fb)


def _as_2d(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be 1-D or 2-D, got shape {a.shape}")
    return a


def harvest_states(
    weights: WeightSet,
    config: EsnConfig,
    inputs,
    teacher,
    h_init: Optional[np.ndarray] = None,
    y_init=None,
    washout: Optional[int] = None,
) -> StateMatrix:
    """Drive the reservoir with teacher forcing and collect its states.

    Args:
        weights: Reservoir matrices.
        config: Scalings, noise level and washout.
        inputs: Input sequence, shape ``(T,)`` or ``(T, N_i)``.
        teacher: Desired outputs, shape ``(T,)`` or ``(T, N_o)``. The value at
            step ``k-1`` is fed back at step ``k``.
        h_init: State before the first step, zeros by default.
        y_init: Output fed back at the first step, zeros by default.
        washout: Overrides ``config.washout`` (e.g. 0 when continuing a run).

    Returns:
        StateMatrix with ``T - washout`` rows.
    """
    x = _as_2d(inputs, "inputs")
    y = _as_2d(teacher, "teacher")
    if x.shape[0] != y.shape[0]:
        raise LengthMismatch(f"inputs have {x.shape[0]} steps, teacher has {y.shape[0]}")
    if x.shape[1] != weights.n_input:
        raise DimensionMismatch(f"inputs have {x.shape[1]} channels, w_in expects {weights.n_input}")
    if y.shape[1] != weights.n_output:
        raise DimensionMismatch(f"teacher has {y.shape[1]} channels, w_fb expects {weights.n_output}")
    D = config.washout if washout is None else int(washout)
    T = x.shape[0]
    if T <= D:
        raise LengthMismatch(f"sequence length {T} does not exceed washout {D}")

    n = weights.n_reservoir
    y_prev = np.empty_like(y)
    y_prev[0] = 0.0 if y_init is None else np.asarray(y_init, dtype=float).reshape(-1)
    y_prev[1:] = y[:-1]
    drive = (config.input_scaling * x) @ weights.w_in.T
    drive += (config.feedback_gain * y_prev) @ weights.w_fb.T
    if config.noise_level > 0:
        drive += _noise_rng(config.rng_seed).uniform(
            -config.noise_level, config.noise_level, size=(T, n)
        )

    H = np.empty((T, n))
    h = np.zeros(n) if h_init is None else np.array(h_init, dtype=float)
    w = weights.w_res
    for k in range(T):
        h = np.tanh(w @ h + drive[k])
        H[k] = h

    rows = np.hstack([x[D:], H[D:]])
    return StateMatrix(
        rows=rows,
        n_input=x.shape[1],
        n_reservoir=n,
        last_state=h.copy(),
        last_output=y[-1].copy(),
    )


def closed_loop(
    weights: WeightSet,
    config: EsnConfig,
    projector,
    readout,
    inputs,
    h_init: Optional[np.ndarray] = None,
    y_init=0.0,
):
    """Closed-loop run returning ``(outputs, projected_states, final_state)``."""
    x = _as_2d(inputs, "inputs")
    if x.shape[1] != weights.n_input:
        raise DimensionMismatch(f"inputs have {x.shape[1]} channels, w_in expects {weights.n_input}")
    n = weights.n_reservoir
    if projector.n_features != n:
        raise DimensionMismatch(
            f"projector expects {projector.n_features} features, reservoir has {n}"
        )
    T = x.shape[0]
    w = weights.w_res
    drive = (config.input_scaling * x) @ weights.w_in.T
    h = np.zeros(n) if h_init is None else np.array(h_init, dtype=float)
    fb = config.feedback_gain * weights.w_fb[:, 0]

    if not np.any(fb):
        # Without feedback the states do not depend on the predictions.
        H = np.empty((T, n))
        for k in range(T):
            h = np.tanh(w @ h + drive[k])
            H[k] = h
        P = projector.transform(H)
        return readout.predict(np.hstack([x, P])), P, h

    out = np.empty(T)
    P = np.empty((T, projector.n_components))
    y = float(np.asarray(y_init, dtype=float).reshape(-1)[0])
    for k in range(T):
        h = np.tanh(w @ h + drive[k] + fb * y)
        p = projector.project(h)
        y = readout.predict_one(np.concatenate([x[k], p]))
        out[k] = y
        P[k] = p
    return out, P, h


def run_prediction(
    weights: WeightSet,
    config: EsnConfig,
    projector,
    readout,
    inputs,
    h_init: Optional[np.ndarray] = None,
    y_init=0.0,
    return_states: bool = False,
):
    """Run the network forward feeding back its own predictions.

    Each step updates the reservoir, maps ``h`` through ``projector``, forms
    ``[x[k], P(h[k])]`` and evaluates ``readout`` on it. ``h_init`` and
    ``y_init`` carry the state and output of a preceding segment. With
    ``return_states=True`` the projected states are returned as well.
    """
    out, P, _ = closed_loop(weights, config, projector, readout, inputs, h_init, y_init)
    return (out, P) if return_states else out
