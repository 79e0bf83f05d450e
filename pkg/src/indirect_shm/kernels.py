"""Kernel functions and Gram matrices shared by SVR and GPR."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import ParamError, ShapeError

STATIONARY = ("gaussian", "exponential", "squared_exponential", "matern32", "matern52", "rational_quadratic")
ARD = ("ard_exponential", "ard_squared_exponential", "ard_matern32", "ard_matern52", "ard_rational_quadratic")
FAMILIES = ("linear", "polynomial") + STATIONARY + ARD

SVR_KERNELS = ("linear", "polynomial", "gaussian")
GPR_KERNELS = ("exponential", "squared_exponential", "matern32", "matern52", "rational_quadratic") + ARD


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus hyperparameters.

    ``scale`` is the isotropic lengthscale; ARD families use
    ``lengthscales`` (one per input dimension) instead.
    """

    family: str
    scale: float = 1.0
    lengthscales: tuple | None = None
    degree: int = 3
    signal_variance: float = 1.0
    rq_alpha: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParamError(f"unknown kernel family {self.family!r}")
        if not (self.scale > 0 and self.signal_variance > 0 and self.rq_alpha > 0):
            raise ParamError("scale, signal_variance and rq_alpha must be positive")
        if int(self.degree) != self.degree or self.degree < 1:
            raise ParamError("degree must be a positive integer")
        if self.lengthscales is not None:
            ls = tuple(float(v) for v in self.lengthscales)
            if not ls or min(ls) <= 0:
                raise ParamError("lengthscales must be positive")
            object.__setattr__(self, "lengthscales", ls)
        if self.is_ard and self.lengthscales is None:
            raise ParamError(f"{self.family} needs per-dimension lengthscales")

    @property
    def is_ard(self) -> bool:
        return self.family.startswith("ard_")

    @property
    def is_stationary(self) -> bool:
        return self.family not in ("linear", "polynomial")

    @property
    def base_family(self) -> str:
        return self.family[4:] if self.is_ard else self.family

    @property
    def input_dim(self) -> int | None:
        return len(self.lengthscales) if self.is_ard else None

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["lengthscales"] is not None:
            d["lengthscales"] = list(d["lengthscales"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        d = dict(d)
        if d.get("lengthscales") is not None:
            d["lengthscales"] = tuple(d["lengthscales"])
        return cls(**d)


def _profile(family: str, r: np.ndarray, alpha: float) -> np.ndarray:
    """Stationary correlation as a function of scaled distance ``r``."""
    if family == "gaussian" or family == "squared_exponential":
        return np.exp(-0.5 * r**2)
    if family == "exponential":
        return np.exp(-r)
    if family == "matern32":
        a = math.sqrt(3.0) * r
        return (1.0 + a) * np.exp(-a)
    if family == "matern52":
        a = math.sqrt(5.0) * r
        return (1.0 + a + a**2 / 3.0) * np.exp(-a)
    if family == "rational_quadratic":
        return (1.0 + r**2 / (2.0 * alpha)) ** (-alpha)
    raise ParamError(family)


def _check_dims(spec: KernelSpec, X: np.ndarray, Y: np.ndarray):
    if X.shape[1] != Y.shape[1]:
        raise ShapeError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if spec.is_ard and spec.input_dim != X.shape[1]:
        raise ShapeError(f"{spec.family} has {spec.input_dim} lengthscales for {X.shape[1]}-d inputs")


def _matrix(spec: KernelSpec, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    _check_dims(spec, X, Y)
    s2 = spec.signal_variance
    if spec.family == "linear":
        return s2 * (X @ Y.T) / spec.scale**2
    if spec.family == "polynomial":
        return s2 * ((X @ Y.T) / spec.scale**2 + 1.0) ** spec.degree
    ls = np.asarray(spec.lengthscales) if spec.is_ard else spec.scale
    diff = (X[:, None, :] - Y[None, :, :]) / ls
    r = np.sqrt(np.sum(diff * diff, axis=-1))
    return s2 * _profile(spec.base_family, r, spec.rq_alpha)


def eval_kernel(spec: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ShapeError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    return float(_matrix(spec, x[None, :], y[None, :])[0, 0])


@dataclass(frozen=True)
class GramMatrix:
    values: np.ndarray
    spec: KernelSpec
    symmetric: bool


def gram(spec: KernelSpec, X, Y=None) -> GramMatrix:
    """Pairwise kernel matrix; ``Y=None`` (or ``Y is X``) gives the symmetric case."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    symmetric = Y is None or Y is X
    Yarr = X if Y is None else np.atleast_2d(np.asarray(Y, dtype=float))
    K = _matrix(spec, X, Yarr)
    if symmetric:
        # linear/polynomial go through BLAS, which need not be exactly symmetric
        K = 0.5 * (K + K.T)
    return GramMatrix(K, spec, symmetric)


def pairwise_distances(X) -> np.ndarray:
    """Condensed upper-triangle Euclidean distances."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    i, j = np.triu_indices(X.shape[0], k=1)
    d = X[i] - X[j]
    return np.sqrt(np.sum(d * d, axis=1))


def default_scale_heuristic(X) -> float:
    """Median pairwise Euclidean distance between rows of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] < 2:
        raise ParamError("need at least two rows for the median heuristic")
    med = float(np.median(pairwise_distances(X)))
    if not med > 0:
        raise ParamError("median pairwise distance is zero (rows identical)")
    return med


def default_lengthscales(X) -> tuple:
    """Per-dimension median heuristic, scaled by sqrt(d).

    With all columns spread alike this reduces to the isotropic median
    heuristic.  Degenerate columns fall back to the isotropic value.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    iso = default_scale_heuristic(X)
    d = X.shape[1]
    out = []
    for col in X.T:
        med = float(np.median(pairwise_distances(col[:, None])))
        out.append(med * math.sqrt(d) if med > 0 else iso)
    return tuple(out)


def with_heuristic_scale(spec: KernelSpec, X) -> KernelSpec:
    """Fill in the data-driven lengthscale(s) for ``spec``."""
    if spec.is_ard:
        return replace(spec, lengthscales=default_lengthscales(X))
    return replace(spec, scale=default_scale_heuristic(X))


def make_spec(family: str, dim: int | None = None, **kw) -> KernelSpec:
    """Convenience constructor giving ARD families unit lengthscales of ``dim``."""
    if family.startswith("ard_") and kw.get("lengthscales") is None:
        if dim is None:
            raise ParamError(f"{family} needs the input dimension")
        kw["lengthscales"] = (1.0,) * dim
    return KernelSpec(family, **kw)
