"""Epsilon-insensitive support vector regression solved by SMO.

The dual is handled in the doubled form with ``2n`` variables
``z = [alpha, alpha*]`` and signs ``s = [+1]*n + [-1]*n``::

    minimize   f(z) = 1/2 z' Q z + p' z,   Q_ij = s_i s_j K(x_i, x_j)
    subject to s' z = 0,  0 <= z <= C,     p = [eps - y, eps + y]

so that ``beta = alpha - alpha*`` and the reported dual objective is
``-f(z)``.  Working pairs are the maximal violating pair; ties go to the
lowest index.  Targets are standardized before solving, so ``C``, ``tol``
and the objective live in standardized units while ``epsilon`` and
predictions are in grams.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceWarning, NumericError, ParamError, ShapeError
from .kernels import KernelSpec, gram

TAU = 1e-12


@dataclass
class SvrModel:
    support_vectors: np.ndarray
    beta: np.ndarray           # standardized units
    bias: float                # standardized units
    epsilon: float             # grams
    C: float
    kernel: KernelSpec
    y_mean: float
    y_scale: float
    dual_objective: float
    support_index: np.ndarray
    n_iter: int
    converged: bool
    kkt_gap: float
    objective_trace: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    n_train: int = 0

    def decision_standardized(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.support_vectors.shape[1]:
            raise ShapeError(f"model expects {self.support_vectors.shape[1]} columns, got {X.shape[1]}")
        if self.beta.size == 0:
            return np.full(X.shape[0], self.bias)
        # row-wise reduction: a batch gives exactly the per-row results
        return np.sum(gram(self.kernel, X, self.support_vectors).values * self.beta, axis=1) + self.bias

    def summary(self) -> dict:
        return {"kernel": self.kernel.family, "C": self.C, "epsilon": self.epsilon,
                "n_support": int(self.beta.size), "n_train": self.n_train,
                "dual_objective": self.dual_objective, "iterations": self.n_iter,
                "converged": self.converged}


def standardize_targets(y) -> tuple[np.ndarray, float, float]:
    """``(y - mean) / std`` with population std; a constant ``y`` keeps scale 1."""
    y = np.asarray(y, dtype=float)
    mean = float(y.mean())
    scale = float(y.std())
    if not scale > 0:
        scale = 1.0
    return (y - mean) / scale, mean, scale


def solve_dual(K: np.ndarray, y: np.ndarray, C: float, epsilon: float, tol: float = 1e-3,
               max_iter: int = 100_000, record_trace: bool = True):
    """SMO on the doubled dual for a precomputed kernel matrix.

    Returns ``(beta, bias, objective, n_iter, converged, gap, trace)``.
    """
    n = y.shape[0]
    s = np.concatenate([np.ones(n), -np.ones(n)])
    p = np.concatenate([epsilon - y, epsilon + y])
    z = np.zeros(2 * n)
    G = p.copy()
    diag = np.diag(K)
    trace = [0.0] if record_trace else None
    obj = 0.0
    converged = False
    gap = np.inf
    it = 0
    for it in range(max_iter + 1):
        neg_sg = -s * G
        up = ((s > 0) & (z < C)) | ((s < 0) & (z > 0))
        low = ((s > 0) & (z > 0)) | ((s < 0) & (z < C))
        if not up.any() or not low.any():
            converged, gap = True, 0.0
            break
        vu = np.where(up, neg_sg, -np.inf)
        vl = np.where(low, neg_sg, np.inf)
        i = int(np.argmax(vu))
        j = int(np.argmin(vl))
        gap = vu[i] - vl[j]
        if gap < tol:
            converged = True
            break
        if it == max_iter:
            break
        ii, jj = i % n, j % n
        a = diag[ii] + diag[jj] - 2.0 * K[ii, jj]
        if a <= 0:
            a = TAU
        t = gap / a
        t = min(t, C - z[i] if s[i] > 0 else z[i])
        t = min(t, z[j] if s[j] > 0 else C - z[j])
        z[i] += s[i] * t
        z[j] -= s[j] * t
        col = (K[:, ii] - K[:, jj]) * t
        G += s * np.concatenate([col, col])
        if record_trace:
            obj = -0.5 * float(z @ (G + p))
            trace.append(obj)
    z = np.clip(z, 0.0, C)
    beta = z[:n] - z[n:]
    obj = -0.5 * float(z @ (G + p))

    # bias from free variables, else midpoint of the feasible interval
    yg = s * G
    free = (z > 0) & (z < C)
    if free.any():
        rho = float(yg[free].mean())
    else:
        at_upper = z >= C
        ub_mask = (at_upper & (s < 0)) | (~at_upper & (s > 0))
        lb_mask = ~ub_mask
        ub = yg[ub_mask].min() if ub_mask.any() else np.inf
        lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
        rho = 0.5 * (ub + lb) if np.isfinite(ub) and np.isfinite(lb) else (ub if np.isfinite(ub) else lb)
    return beta, -rho, obj, it, converged, float(gap), np.array(trace if record_trace else [])


def fit_svr(X, y, kernel: KernelSpec, C: float = 1.0, epsilon: float | None = None, tol: float = 1e-3,
            max_iter: int = 100_000, record_trace: bool = True) -> SvrModel:
    """Fit an epsilon-SVR.

    ``epsilon`` is the tube half-width in target units (grams); ``None``
    uses ``0.1 * std(y)``.  When the iteration cap is hit a
    :class:`ConvergenceWarning` is emitted and ``model.converged`` is False.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ShapeError("X and y row counts differ")
    if X.shape[0] < 2:
        raise ParamError("SVR needs at least two training rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NumericError("non-finite training data")
    ys, y_mean, y_scale = standardize_targets(y)
    eps_g = 0.1 * float(y.std()) if epsilon is None else float(epsilon)
    if not (C > 0 and tol > 0) or eps_g < 0 or (epsilon is not None and epsilon <= 0):
        raise ParamError("C, epsilon and tol must be positive")
    eps_s = eps_g / y_scale

    K = gram(kernel, X).values
    if not np.all(np.isfinite(K)):
        raise NumericError("kernel matrix contains non-finite values")
    beta, bias, obj, n_iter, converged, gap, trace = solve_dual(K, ys, C, eps_s, tol, max_iter, record_trace)
    if not converged:
        warnings.warn(f"SMO stopped after {max_iter} iterations (KKT gap {gap:.3g})", ConvergenceWarning)
    sv = np.flatnonzero(beta != 0)
    return SvrModel(support_vectors=X[sv].copy(), beta=beta[sv], bias=bias, epsilon=eps_g, C=C,
                    kernel=kernel, y_mean=y_mean, y_scale=y_scale, dual_objective=obj,
                    support_index=sv, n_iter=n_iter, converged=converged, kkt_gap=gap,
                    objective_trace=trace, n_train=X.shape[0])


def predict_svr(model: SvrModel, X) -> np.ndarray:
    """``f(x) = sum_i beta_i k(x_i, x) + b``, returned in grams."""
    return model.decision_standardized(X) * model.y_scale + model.y_mean
