"""Memory-less readouts: ridge regression and nu-SVR with a Gaussian kernel."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .dimred import gaussian_gram
from .errors import DimensionMismatch, NonFinite, SolverNotConverged


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFinite("inputs contain NaN or Inf")


@dataclass(frozen=True)
class RidgeModel:
    """Linear readout ``y = weights . s + intercept``.

    ``intercept`` is 0 unless the model was trained with ``fit_intercept``;
    it is never penalized.
    """

    weights: np.ndarray
    lam: float
    intercept: float = 0.0

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    def predict(self, S: np.ndarray) -> np.ndarray:
        S = np.asarray(S, dtype=float)
        if S.ndim != 2 or S.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected (*, {self.n_features}) rows, got {S.shape}")
        return S @ self.weights + self.intercept

    def predict_one(self, s: np.ndarray) -> float:
        return float(s @ self.weights) + self.intercept


def train_ridge(s, targets, lam: float, fit_intercept: bool = False) -> RidgeModel:
    """Solve ``(S^T S + lam I) w = S^T y`` by Cholesky factorization.

    With ``fit_intercept`` the columns and targets are centered first, which is
    the same as adding an unpenalized constant feature.
    """
    S = np.asarray(s, dtype=float)
    y = np.asarray(targets, dtype=float).reshape(-1)
    if S.ndim != 2 or S.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"S has shape {S.shape}, targets have length {y.shape[0]}")
    if S.shape[0] < 1:
        raise ValueError("need at least one training row")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    _check_finite(S, y)
    if fit_intercept:
        s_mean = S.mean(axis=0)
        y_mean = y.mean()
        S = S - s_mean
        y = y - y_mean
    A = S.T @ S
    A[np.diag_indices_from(A)] += lam
    w = cho_solve(cho_factor(A), S.T @ y)
    b = float(y_mean - s_mean @ w) if fit_intercept else 0.0
    return RidgeModel(weights=w, lam=float(lam), intercept=b)


def ridge_objective(S, y, w, lam) -> float:
    r = S @ w - y
    return 0.5 * float(r @ r) + 0.5 * lam * float(w @ w)


@dataclass(frozen=True)
class SvrModel:
    """Kernel expansion ``y(s) = sum_i coeffs_i K(support_i, s) + bias``.

    ``coeffs`` are ``alpha_i - alpha_i^*`` of the dual solution restricted to
    the support rows; ``epsilon`` is the tube width found by the solver.
    """

    support_states: np.ndarray
    coeffs: np.ndarray
    bias: float
    gamma_r: float
    c: float
    nu: float
    epsilon: float = 0.0
    n_train: int = 0
    dual_objective: float = float("nan")
    n_iter: int = 0

    @property
    def n_features(self) -> int:
        return self.support_states.shape[1]

    def predict(self, S: np.ndarray) -> np.ndarray:
        S = np.asarray(S, dtype=float)
        if S.ndim != 2 or S.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected (*, {self.n_features}) rows, got {S.shape}")
        if self.coeffs.size == 0:
            return np.full(S.shape[0], self.bias)
        return gaussian_gram(S, self.support_states, self.gamma_r) @ self.coeffs + self.bias

    def predict_one(self, s: np.ndarray) -> float:
        if self.coeffs.size == 0:
            return self.bias
        d = self.support_states - s
        k = np.exp(-self.gamma_r * np.einsum("ij,ij->i", d, d))
        return float(k @ self.coeffs) + self.bias


_TAU = 1e-12


@numba.njit(cache=True)
def _shrink(idx, n, x, f, y, upper, sgn, gup, glo):
    """Drop bounded variables whose gradient points out of the box."""
    k = 0
    for r in range(n):
        t = idx[r]
        g = sgn * (f[t] - y[t])
        drop = (x[t] >= upper and -g > gup) or (x[t] <= 0.0 and g > glo)
        if not drop:
            idx[k] = t
            k += 1
    return k


@numba.njit(cache=True)
def _smo_nu(K, y, upper, half_sum, eps, max_iter):
    """Pairwise SMO for the nu-SVR dual with shrinking.

    ``a`` holds alpha and ``b`` holds alpha^*. Both sums stay equal to
    ``half_sum``, so every update moves two variables of the same kind. With
    ``f = K (a - b)`` the gradient is ``f - y`` for ``a`` and ``y - f`` for
    ``b``. ``f`` is always kept in full, so shrinking only narrows the
    working-set search and undoing it costs nothing.
    """
    l = y.shape[0]
    a = np.zeros(l)
    b = np.zeros(l)
    rem = half_sum
    for i in range(l):
        v = min(rem, upper)
        a[i] = v
        b[i] = v
        rem -= v
    # a - b starts at zero, hence f does too
    f = np.zeros(l)
    qd = np.empty(l)
    for t in range(l):
        qd[t] = K[t, t]
    act_a = np.arange(l)
    act_b = np.arange(l)
    n_a = l
    n_b = l
    unshrunk = False
    counter = min(l, 1000) + 1

    it = 0
    gap = np.inf
    while it < max_iter:
        counter -= 1
        if counter == 0:
            counter = min(l, 1000)
            g1 = -np.inf
            g2 = -np.inf
            for r in range(n_a):
                t = act_a[r]
                g = f[t] - y[t]
                if a[t] < upper:
                    g1 = max(g1, -g)
                if a[t] > 0.0:
                    g2 = max(g2, g)
            g3 = -np.inf
            g4 = -np.inf
            for r in range(n_b):
                t = act_b[r]
                g = y[t] - f[t]
                if b[t] < upper:
                    g3 = max(g3, -g)
                if b[t] > 0.0:
                    g4 = max(g4, g)
            if not unshrunk and max(g1 + g2, g3 + g4) <= 10.0 * eps:
                unshrunk = True
                for t in range(l):
                    act_a[t] = t
                    act_b[t] = t
                n_a = l
                n_b = l
            n_a = _shrink(act_a, n_a, a, f, y, upper, 1.0, g1, g2)
            n_b = _shrink(act_b, n_b, b, f, y, upper, -1.0, g3, g4)

        # first member of the pair in each class
        gmaxp = -np.inf
        ip = -1
        for r in range(n_a):
            t = act_a[r]
            g = f[t] - y[t]
            if a[t] < upper and -g >= gmaxp:
                gmaxp = -g
                ip = t
        gmaxn = -np.inf
        iN = -1
        for r in range(n_b):
            t = act_b[r]
            g = y[t] - f[t]
            if b[t] > 0.0 and g >= gmaxn:
                gmaxn = g
                iN = t
        # second member: largest second-order decrease
        gmaxp2 = -np.inf
        gmaxn2 = -np.inf
        jbest = -1
        jpos = True
        obj_min = np.inf
        if ip >= 0:
            Kp = K[ip]
            for r in range(n_a):
                t = act_a[r]
                if a[t] > 0.0:
                    g = f[t] - y[t]
                    if g >= gmaxp2:
                        gmaxp2 = g
                    gd = gmaxp + g
                    if gd > 0:
                        q = qd[ip] + qd[t] - 2.0 * Kp[t]
                        if q <= 0:
                            q = _TAU
                        od = -(gd * gd) / q
                        if od <= obj_min:
                            jbest = t
                            jpos = True
                            obj_min = od
        else:
            for r in range(n_a):
                t = act_a[r]
                if a[t] > 0.0:
                    gmaxp2 = max(gmaxp2, f[t] - y[t])
        if iN >= 0:
            Kn = K[iN]
            for r in range(n_b):
                t = act_b[r]
                if b[t] < upper:
                    g = y[t] - f[t]
                    if -g >= gmaxn2:
                        gmaxn2 = -g
                    gd = gmaxn - g
                    if gd > 0:
                        q = qd[iN] + qd[t] - 2.0 * Kn[t]
                        if q <= 0:
                            q = _TAU
                        od = -(gd * gd) / q
                        if od <= obj_min:
                            jbest = t
                            jpos = False
                            obj_min = od
        else:
            for r in range(n_b):
                t = act_b[r]
                if b[t] < upper:
                    gmaxn2 = max(gmaxn2, f[t] - y[t])
        gap = max(gmaxp + gmaxp2, gmaxn + gmaxn2)
        if gap < eps or jbest < 0:
            if n_a == l and n_b == l:
                break
            # converged on the shrunk problem; recheck every variable
            for t in range(l):
                act_a[t] = t
                act_b[t] = t
            n_a = l
            n_b = l
            # the next pass searches the full set before any new shrinking
            counter = min(l, 1000) + 1
            continue
        j = jbest
        if jpos:
            i = ip
            x = a
            gi = f[i] - y[i]
            gj = f[j] - y[j]
            sgn = 1.0
        else:
            i = iN
            x = b
            gi = y[i] - f[i]
            gj = y[j] - f[j]
            sgn = -1.0
        q = qd[i] + qd[j] - 2.0 * K[i, j]
        if q <= 0:
            q = _TAU
        old_i = x[i]
        old_j = x[j]
        delta = (gi - gj) / q
        total = old_i + old_j
        xi = old_i - delta
        xj = old_j + delta
        if total > upper:
            if xi > upper:
                xi = upper
                xj = total - upper
        else:
            if xj < 0:
                xj = 0.0
                xi = total
        if total > upper:
            if xj > upper:
                xj = upper
                xi = total - upper
        else:
            if xi < 0:
                xi = 0.0
                xj = total
        x[i] = xi
        x[j] = xj
        di = (xi - old_i) * sgn
        dj = (xj - old_j) * sgn
        Ki = K[i]
        Kj = K[j]
        for t in range(l):
            f[t] += Ki[t] * di + Kj[t] * dj
        it += 1

    # offsets from free variables, falling back to the bound midpoints
    ub1 = np.inf
    lb1 = -np.inf
    sf1 = 0.0
    nf1 = 0
    ub2 = np.inf
    lb2 = -np.inf
    sf2 = 0.0
    nf2 = 0
    for t in range(l):
        g = f[t] - y[t]
        if a[t] >= upper:
            lb1 = max(lb1, g)
        elif a[t] <= 0.0:
            ub1 = min(ub1, g)
        else:
            nf1 += 1
            sf1 += g
        if b[t] >= upper:
            lb2 = max(lb2, -g)
        elif b[t] <= 0.0:
            ub2 = min(ub2, -g)
        else:
            nf2 += 1
            sf2 -= g
    r1 = sf1 / nf1 if nf1 > 0 else 0.5 * (ub1 + lb1)
    r2 = sf2 / nf2 if nf2 > 0 else 0.5 * (ub2 + lb2)
    return a, b, it, gap, r1, r2


def train_nu_svr(
    s,
    targets,
    c: float,
    nu: float,
    gamma_r: float,
    tol: float = 1e-4,
    max_iter: int | None = None,
) -> SvrModel:
    """Solve the nu-SVR dual with a Gaussian kernel.

    minimize    0.5 (a - a*)^T K (a - a*) - y^T (a - a*)
    subject to  1^T (a - a*) = 0,  1^T (a + a*) <= c nu,  0 <= a, a* <= c / T

    The sum constraint is active at the optimum and is split evenly between
    ``a`` and ``a*``. The bias and tube width come from the free variables.

    Raises:
        SolverNotConverged: if the KKT gap is still above ``tol`` after
            ``max_iter`` pair updates.
    """
    S = np.asarray(s, dtype=float)
    y = np.asarray(targets, dtype=float).reshape(-1)
    if S.ndim != 2 or S.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"S has shape {S.shape}, targets have length {y.shape[0]}")
    T = S.shape[0]
    if T < 2:
        raise ValueError("nu-SVR needs at least two training rows")
    if not c > 0 or not gamma_r > 0:
        raise ValueError("c and gamma_r must be positive")
    if not 0 < nu <= 1:
        raise ValueError(f"nu must lie in (0, 1], got {nu}")
    _check_finite(S, y)

    K = gaussian_gram(S, S, gamma_r)
    upper = c / T
    if max_iter is None:
        max_iter = max(10_000_000, 100 * T)
    alpha, alpha_star, n_iter, gap, r1, r2 = _smo_nu(K, y, upper, 0.5 * c * nu, tol, max_iter)
    if gap >= tol:
        raise SolverNotConverged(
            f"nu-SVR stopped after {n_iter} iterations with KKT gap {gap:.3e}", float(gap)
        )
    coef = alpha - alpha_star
    rho = 0.5 * (r1 - r2)
    obj = 0.5 * float(coef @ K @ coef) - float(y @ coef)
    keep = np.abs(coef) > 1e-8
    return SvrModel(
        support_states=S[keep].copy(),
        coeffs=coef[keep],
        bias=-rho,
        gamma_r=float(gamma_r),
        c=float(c),
        nu=float(nu),
        epsilon=float(-0.5 * (r1 + r2)),
        n_train=T,
        dual_objective=obj,
        n_iter=int(n_iter),
    )


def predict(model, s) -> float:
    """Evaluate a trained readout on a single feature vector."""
    s = np.asarray(s, dtype=float)
    if s.shape != (model.n_features,):
        raise DimensionMismatch(f"expected a vector of length {model.n_features}, got {s.shape}")
    return model.predict_one(s)
