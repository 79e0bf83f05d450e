"""Exact Gaussian-process regression via Cholesky factorization."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NumericError, ParamError, ShapeError
from .kernels import KernelSpec, default_scale_heuristic, gram
from .svr import standardize_targets

DEFAULT_NOISE = 1e-2
DEFAULT_JITTER = 1e-10
SCALE_GRID = (0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass
class GprModel:
    """Fitted GP; everything except ``X_train``/``y_train`` is in standardized-target units."""

    X_train: np.ndarray
    y_train: np.ndarray
    kernel: KernelSpec
    noise_variance: float
    jitter: float
    chol: np.ndarray
    weights: np.ndarray
    y_mean: float
    y_scale: float

    @property
    def n(self) -> int:
        return self.X_train.shape[0]

    @property
    def y_standardized(self) -> np.ndarray:
        return (self.y_train - self.y_mean) / self.y_scale

    def summary(self) -> dict:
        return {"kernel": self.kernel.family, "scale": self.kernel.scale,
                "lengthscales": self.kernel.lengthscales, "noise_variance": self.noise_variance,
                "jitter": self.jitter, "n_train": self.n}


def fit_gpr(X, y, kernel: KernelSpec, noise_variance: float = DEFAULT_NOISE,
            jitter: float = DEFAULT_JITTER, retries: int = 3) -> GprModel:
    """Factor ``K + (noise_variance + jitter) I`` and solve for the weights.

    On factorization failure the jitter grows tenfold, up to ``retries`` times
    (a zero jitter restarts from 1e-10).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ShapeError("X and y row counts differ")
    if X.shape[0] < 1:
        raise ParamError("GPR needs at least one training row")
    if noise_variance < 0 or jitter < 0:
        raise ParamError("noise_variance and jitter must be non-negative")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NumericError("non-finite training data")
    ys, y_mean, y_scale = standardize_targets(y)
    K = gram(kernel, X).values
    n = K.shape[0]

    j = jitter
    for attempt in range(retries + 1):
        try:
            L = np.linalg.cholesky(K + (noise_variance + j) * np.eye(n))
            if np.all(np.isfinite(L)) and np.all(np.diag(L) > 0):
                break
        except np.linalg.LinAlgError:
            pass
        if attempt == retries:
            raise NumericError(f"Cholesky failed with jitter up to {j:g}")
        j = j * 10 if j > 0 else DEFAULT_JITTER
    w = solve_triangular(L.T, solve_triangular(L, ys, lower=True), lower=False)
    return GprModel(X_train=X.copy(), y_train=y.copy(), kernel=kernel, noise_variance=noise_variance,
                    jitter=j, chol=L, weights=w, y_mean=y_mean, y_scale=y_scale)


def predict_standardized(model: GprModel, Xs) -> tuple[np.ndarray, np.ndarray]:
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
    if Xs.shape[1] != model.X_train.shape[1]:
        raise ShapeError(f"model expects {model.X_train.shape[1]} columns, got {Xs.shape[1]}")
    Ka = gram(model.kernel, Xs, model.X_train).values
    mean = Ka @ model.weights
    V = solve_triangular(model.chol, Ka.T, lower=True)
    Kaa = np.array([model.kernel.signal_variance if model.kernel.is_stationary
                    else gram(model.kernel, x[None, :]).values[0, 0] for x in Xs])
    var = Kaa - np.sum(V * V, axis=0)
    if np.any(var < -1e-10 * max(1.0, float(np.max(np.abs(Kaa))))):
        raise NumericError(f"negative predictive variance {var.min():.3g}")
    return mean, np.maximum(var, 0.0)


def predict_gpr(model: GprModel, Xs) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean (grams) and latent-function variance (grams^2).

    ``mean = K_a w``; ``var = K_aa - K_a (K + s2 I)^-1 K_a'`` via a
    triangular solve, clamped at zero.
    """
    mean, var = predict_standardized(model, Xs)
    return mean * model.y_scale + model.y_mean, var * model.y_scale**2


def log_marginal_likelihood(model: GprModel) -> float:
    """``-1/2 y'w - sum(log diag L) - n/2 log(2 pi)`` on standardized targets."""
    ys = model.y_standardized
    return float(-0.5 * ys @ model.weights - np.sum(np.log(np.diag(model.chol)))
                 - 0.5 * model.n * math.log(2 * math.pi))


def select_scale(X, y, kernel: KernelSpec, noise_variance: float = DEFAULT_NOISE,
                 factors=SCALE_GRID) -> KernelSpec:
    """Pick the grid multiple of the median-heuristic scale with the highest
    log marginal likelihood (ARD lengthscales are scaled jointly)."""
    base = default_scale_heuristic(X)
    best, best_ll = kernel, -np.inf
    for f in factors:
        if kernel.is_ard:
            cand = replace(kernel, lengthscales=tuple(f * v for v in kernel.lengthscales))
        else:
            cand = replace(kernel, scale=f * base)
        try:
            ll = log_marginal_likelihood(fit_gpr(X, y, cand, noise_variance))
        except NumericError:
            continue
        if ll > best_ll:
            best, best_ll = cand, ll
    return best
