"""Reservoir -> projector -> readout wiring used by the optimizer, the
attractor study and the CLI."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dimred import IdentityProjector, fit_kpca, fit_pca
from .readout import train_nu_svr, train_ridge
from .reservoir import EsnConfig, WeightSet, closed_loop, harvest_states, init_weights

READOUTS = ("ridge", "svr")
DIMREDS = ("none", "pca", "kpca")


@dataclass(frozen=True)
class PipelineKind:
    readout: str = "ridge"
    dimred: str = "none"

    def __post_init__(self):
        if self.readout not in READOUTS:
            raise ValueError(f"unknown readout {self.readout!r}; valid: {READOUTS}")
        if self.dimred not in DIMREDS:
            raise ValueError(f"unknown dimred {self.dimred!r}; valid: {DIMREDS}")

    @classmethod
    def parse(cls, text: str) -> "PipelineKind":
        """Parse ``"svr|pca"`` or ``"svr+pca"``."""
        for sep in ("|", "+", "/"):
            if sep in text:
                a, b = text.split(sep, 1)
                return cls(a.strip(), b.strip())
        return cls(text.strip(), "none")

    @property
    def reduces(self) -> bool:
        return self.dimred != "none"

    def __str__(self) -> str:
        return f"{self.readout}|{self.dimred}"


@dataclass(frozen=True)
class ReadoutParams:
    n_components: int | None = None  # None keeps every reservoir dimension
    kpca_gamma: float = 0.01
    ridge_lambda: float = 0.1
    svr_c: float = 1.0
    svr_nu: float = 0.5
    svr_gamma: float = 0.01


@dataclass
class FittedPipeline:
    """A trained ESN together with the state reached at the end of its data.

    ``h_last`` and ``y_last`` seed the next segment so that no second washout
    is needed.
    """

    kind: PipelineKind
    config: EsnConfig
    weights: WeightSet
    projector: object
    readout: object
    h_last: np.ndarray
    y_last: np.ndarray

    def predict(self, inputs, return_states: bool = False):
        """Closed-loop prediction continuing from the stored state."""
        preds, P, h = closed_loop(
            self.weights, self.config, self.projector, self.readout, inputs, self.h_last, self.y_last
        )
        self.h_last = h
        self.y_last = np.atleast_1d(preds[-1])
        return (preds, P) if return_states else preds

    def advance(self, inputs, teacher):
        """Teacher-forced pass over a segment; only the carried state changes."""
        cfg = replace(self.config, noise_level=0.0)
        sm = harvest_states(
            self.weights, cfg, inputs, teacher, h_init=self.h_last, y_init=self.y_last, washout=0
        )
        self.h_last = sm.last_state
        self.y_last = sm.last_output


def _subsample_rows(X: np.ndarray, cap: int | None) -> np.ndarray:
    if cap is None or X.shape[0] <= cap:
        return X
    idx = np.linspace(0, X.shape[0] - 1, cap).round().astype(int)
    return X[idx]


def fit_pipeline(
    kind: PipelineKind,
    config: EsnConfig,
    inputs,
    targets,
    params: ReadoutParams,
    kpca_max_samples: int | None = 1000,
    svr_max_samples: int | None = 2000,
    svr_tol: float = 1e-3,
    fit_intercept: bool = True,
) -> FittedPipeline:
    """Harvest states on the training segment, fit the projector and the readout.

    kPCA is fitted on at most ``kpca_max_samples`` evenly strided training
    states; all training states are then projected through the Nystrom map.
    The SVR is trained on at most ``svr_max_samples`` strided rows, and its
    ``svr_c`` is a per-sample cost: the solver receives ``svr_c * T`` so the
    box bound on each coefficient is ``svr_c`` whatever the row count.
    """
    weights = init_weights(config, n_input=1, n_output=1)
    sm = harvest_states(weights, config, inputs, targets)
    y = np.asarray(targets, dtype=float).reshape(-1)[config.washout :]
    H = sm.states
    n = config.n_reservoir
    d = n if params.n_components is None else int(min(max(1, params.n_components), n))
    if kind.dimred == "none":
        projector = IdentityProjector(n)
    elif kind.dimred == "pca":
        projector = fit_pca(H, min(d, H.shape[0]))
    else:
        fit_states = _subsample_rows(H, kpca_max_samples)
        projector = fit_kpca(fit_states, min(d, fit_states.shape[0]), params.kpca_gamma)
    P = projector.transform(H)
    S = np.hstack([sm.inputs, P])
    if kind.readout == "ridge":
        readout = train_ridge(S, y, params.ridge_lambda, fit_intercept=fit_intercept)
    else:
        S_fit = _subsample_rows(S, svr_max_samples)
        y_fit = _subsample_rows(y[:, None], svr_max_samples)[:, 0]
        readout = train_nu_svr(
            S_fit,
            y_fit,
            params.svr_c * S_fit.shape[0],
            params.svr_nu,
            params.svr_gamma,
            tol=svr_tol,
        )
    return FittedPipeline(
        kind=kind,
        config=config,
        weights=weights,
        projector=projector,
        readout=readout,
        h_last=sm.last_state,
        y_last=sm.last_output,
    )
