"""PCA and Gaussian kernel PCA projectors for reservoir states.

Every projector exposes ``n_features``, ``n_components``, ``transform`` for a
matrix of row states and ``project`` for a single state vector.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .errors import (
    DimensionMismatch,
    InsufficientPositiveEigenvalues,
    LengthMismatch,
    RankDeficientWarning,
)

EIGVAL_FLOOR = 1e-12


def gaussian_kernel(a, b, gamma: float) -> float:
    """exp(-gamma * ||a - b||^2)."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise LengthMismatch(f"vectors of shape {a.shape} and {b.shape}")
    d = a - b
    return float(np.exp(-gamma * np.dot(d, d)))


def sq_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances between the rows of A and B."""
    aa = np.einsum("ij,ij->i", A, A)
    bb = np.einsum("ij,ij->i", B, B)
    d2 = aa[:, None] + bb[None, :] - 2.0 * (A @ B.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def gaussian_gram(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    d2 = sq_distances(A, B)
    d2 *= -gamma
    return np.exp(d2, out=d2)


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


@dataclass(frozen=True)
class IdentityProjector:
    """Pass-through projector used when no reduction is applied."""

    n_features: int

    @property
    def n_components(self) -> int:
        return self.n_features

    def transform(self, H: np.ndarray) -> np.ndarray:
        return np.asarray(H, dtype=float)

    def project(self, h: np.ndarray) -> np.ndarray:
        return np.asarray(h, dtype=float)


@dataclass(frozen=True)
class PcaModel:
    """Leading principal subspace of a set of states.

    Attributes:
        mean: Training mean, shape ``(N_r,)``.
        basis: Orthonormal columns, shape ``(N_r, d)``.
        eigvals: Covariance eigenvalues in non-increasing order, shape ``(d,)``.
    """

    mean: np.ndarray
    basis: np.ndarray
    eigvals: np.ndarray

    @property
    def n_features(self) -> int:
        return self.basis.shape[0]

    @property
    def n_components(self) -> int:
        return self.basis.shape[1]

    def transform(self, H: np.ndarray) -> np.ndarray:
        H = np.asarray(H, dtype=float)
        if H.ndim != 2 or H.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected (*, {self.n_features}) states, got {H.shape}")
        return (H - self.mean) @ self.basis

    def project(self, h: np.ndarray) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        if h.shape != (self.n_features,):
            raise DimensionMismatch(f"expected a state of length {self.n_features}, got {h.shape}")
        return (h - self.mean) @ self.basis

    def reconstruct(self, scores: np.ndarray) -> np.ndarray:
        return self.mean + np.asarray(scores) @ self.basis.T


def fit_pca(states: np.ndarray, d: int) -> PcaModel:
    """Fit PCA on the rows of ``states`` keeping ``d`` components.

    The sample covariance (``ddof=1``) is eigendecomposed; eigenvalues below
    zero from round-off are clamped to 0.
    """
    X = np.asarray(states, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch(f"states must be 2-D, got shape {X.shape}")
    T, n = X.shape
    if T < 2:
        raise ValueError("PCA needs at least two samples")
    if not 1 <= d <= min(T, n):
        raise ValueError(f"d must lie in [1, {min(T, n)}], got {d}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = (Xc.T @ Xc) / (T - 1)
    vals, vecs = eigh(cov, subset_by_index=[n - d, n - 1])
    order = np.argsort(vals)[::-1]
    vals = np.maximum(vals[order], 0.0)
    vecs = _fix_signs(vecs[:, order])
    if vals[0] > 0 and vals[-1] < EIGVAL_FLOOR * vals[0]:
        warnings.warn(
            f"component {d} has eigenvalue {vals[-1]:.3e}, {vals[-1] / vals[0]:.1e} of the largest",
            RankDeficientWarning,
            stacklevel=2,
        )
    return PcaModel(mean=mean, basis=vecs, eigvals=vals)


@dataclass(frozen=True)
class KpcaModel:
    """Gaussian kernel PCA with Nystrom out-of-sample projection.

    The kernel matrix is used uncentered unless ``centered`` is set, in which
    case feature-space centering is applied consistently in and out of sample.
    """

    training_states: np.ndarray
    gamma: float
    eigvecs: np.ndarray
    eigvals: np.ndarray
    centered: bool = False
    k_col_means: np.ndarray | None = None
    k_mean: float = 0.0

    @property
    def n_features(self) -> int:
        return self.training_states.shape[1]

    @property
    def n_components(self) -> int:
        return self.eigvecs.shape[1]

    @property
    def in_sample(self) -> np.ndarray:
        """Projection of the training states, ``E * sqrt(Lambda)``."""
        return self.eigvecs * np.sqrt(self.eigvals)

    def _kernel_rows(self, H: np.ndarray) -> np.ndarray:
        K = gaussian_gram(H, self.training_states, self.gamma)
        if self.centered:
            K = K - K.mean(axis=1, keepdims=True) - self.k_col_means[None, :] + self.k_mean
        return K

    def transform(self, H: np.ndarray) -> np.ndarray:
        H = np.asarray(H, dtype=float)
        if H.ndim != 2 or H.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected (*, {self.n_features}) states, got {H.shape}")
        return self._kernel_rows(H) @ (self.eigvecs / np.sqrt(self.eigvals))

    def project(self, h: np.ndarray) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        if h.shape != (self.n_features,):
            raise DimensionMismatch(f"expected a state of length {self.n_features}, got {h.shape}")
        return self.transform(h[None, :])[0]


def fit_kpca(states: np.ndarray, d: int, gamma: float, centered: bool = False) -> KpcaModel:
    """Fit Gaussian kernel PCA on the rows of ``states`` keeping ``d`` components."""
    X = np.asarray(states, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch(f"states must be 2-D, got shape {X.shape}")
    N = X.shape[0]
    if not 1 <= d <= N:
        raise ValueError(f"d must lie in [1, {N}], got {d}")
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    K = gaussian_gram(X, X, gamma)
    K = 0.5 * (K + K.T)
    col_means = None
    k_mean = 0.0
    if centered:
        col_means = K.mean(axis=0)
        k_mean = float(col_means.mean())
        K = K - col_means[None, :] - col_means[:, None] + k_mean
    vals, vecs = eigh(K, subset_by_index=[N - d, N - 1])
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    n_pos = int(np.sum(vals > EIGVAL_FLOOR))
    if n_pos < d:
        raise InsufficientPositiveEigenvalues(
            f"only {n_pos} of the {d} leading kernel eigenvalues exceed {EIGVAL_FLOOR}"
        )
    return KpcaModel(
        training_states=X.copy(),
        gamma=float(gamma),
        eigvecs=_fix_signs(vecs),
        eigvals=vals,
        centered=centered,
        k_col_means=col_means,
        k_mean=k_mean,
    )


def project_pca(model: PcaModel, h: np.ndarray) -> np.ndarray:
    return model.project(h)


def project_kpca(model: KpcaModel, h: np.ndarray) -> np.ndarray:
    return model.project(h)
