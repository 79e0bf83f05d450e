"""Nonlinear PCA with an autoassociative bottleneck network.

Architecture: ``input -> tanh(hidden) -> linear(k) -> tanh(hidden) -> linear(input)``.
The ``k`` bottleneck activations are the nonlinear components.  Inputs are
column-standardized inside :func:`fit_nlpca`; the affine map is stored with
the model so :func:`transform` applies it to unseen rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, ShapeError, TrainError
from .features import FeatureMatrix

PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3", "W4", "b4")
FORMAT_VERSION = 1


def init_params(n_inputs: int, hidden_units: int, n_components: int, rng: np.random.Generator) -> dict:
    def dense(fan_in, fan_out):
        return rng.standard_normal((fan_in, fan_out)) / math.sqrt(fan_in)

    return {
        "W1": dense(n_inputs, hidden_units), "b1": np.zeros(hidden_units),
        "W2": dense(hidden_units, n_components), "b2": np.zeros(n_components),
        "W3": dense(n_components, hidden_units), "b3": np.zeros(hidden_units),
        "W4": dense(hidden_units, n_inputs), "b4": np.zeros(n_inputs),
    }


def encode(params: dict, Xs: np.ndarray) -> np.ndarray:
    return np.tanh(Xs @ params["W1"] + params["b1"]) @ params["W2"] + params["b2"]


def decode(params: dict, S: np.ndarray) -> np.ndarray:
    return np.tanh(S @ params["W3"] + params["b3"]) @ params["W4"] + params["b4"]


def loss_and_grads(params: dict, Xs: np.ndarray) -> tuple[float, dict]:
    """Mean squared reconstruction error over all entries and its gradient."""
    A1 = np.tanh(Xs @ params["W1"] + params["b1"])
    S = A1 @ params["W2"] + params["b2"]
    A3 = np.tanh(S @ params["W3"] + params["b3"])
    Y = A3 @ params["W4"] + params["b4"]
    R = Y - Xs
    loss = float(np.mean(R**2))

    dY = 2.0 * R / R.size
    dZ3 = (dY @ params["W4"].T) * (1.0 - A3**2)
    dS = dZ3 @ params["W3"].T
    dZ1 = (dS @ params["W2"].T) * (1.0 - A1**2)
    grads = {
        "W4": A3.T @ dY, "b4": dY.sum(0),
        "W3": S.T @ dZ3, "b3": dZ3.sum(0),
        "W2": A1.T @ dS, "b2": dS.sum(0),
        "W1": Xs.T @ dZ1, "b1": dZ1.sum(0),
    }
    return loss, grads


@dataclass
class NlpcaModel:
    params: dict
    mean: np.ndarray
    scale: np.ndarray
    trace: np.ndarray
    seed: int
    hidden_units: int
    n_components: int
    contributions: np.ndarray = field(default_factory=lambda: np.zeros(0))
    input_kind: str = "acceleration"
    channel: str = "ax_rear"

    @property
    def input_dim(self) -> int:
        return self.mean.shape[0]

    @property
    def final_mse(self) -> float:
        return float(self.trace[-1])

    def standardize(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def scores(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.input_dim:
            raise ShapeError(f"model expects {self.input_dim} columns, got {X.shape[1]}")
        return encode(self.params, self.standardize(X))

    def decode(self, S) -> np.ndarray:
        S = np.atleast_2d(np.asarray(S, dtype=float))
        if S.shape[1] != self.n_components:
            raise ShapeError(f"model expects {self.n_components} scores, got {S.shape[1]}")
        return decode(self.params, S) * self.scale + self.mean

    def reconstruction_mse(self, X) -> float:
        """MSE in the standardized space the network was trained in."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return float(np.mean((self.standardize(self.decode(self.scores(X))) - self.standardize(X)) ** 2))

    def weights_equal(self, other: "NlpcaModel") -> bool:
        return all(np.array_equal(self.params[k], other.params[k]) for k in PARAM_NAMES) and \
            np.array_equal(self.mean, other.mean) and np.array_equal(self.scale, other.scale)


def _as_array(m) -> tuple[np.ndarray, str, str]:
    if isinstance(m, FeatureMatrix):
        return np.asarray(m.values, dtype=float), m.kind, m.channel
    return np.atleast_2d(np.asarray(m, dtype=float)), "acceleration", "ax_rear"


def _center_and_order(params: dict, Xs: np.ndarray) -> np.ndarray:
    """Center the bottleneck on the training data and sort components by
    how much reconstruction error grows when each one is zeroed."""
    S = encode(params, Xs)
    shift = S.mean(axis=0)
    params["b2"] = params["b2"] - shift
    params["b3"] = params["b3"] + shift @ params["W3"]
    S = S - shift
    base = np.mean((decode(params, S) - Xs) ** 2)
    increase = np.empty(S.shape[1])
    for i in range(S.shape[1]):
        ablated = S.copy()
        ablated[:, i] = 0.0
        increase[i] = np.mean((decode(params, ablated) - Xs) ** 2) - base
    order = np.argsort(-increase, kind="stable")
    params["W2"] = params["W2"][:, order]
    params["b2"] = params["b2"][order]
    params["W3"] = params["W3"][order, :]
    return increase[order]


def fit_nlpca(m, seed: int = 0, epochs: int = 2000, hidden_units: int = 16, learning_rate: float = 1e-3,
              n_components: int = 3, batch_size: int | None = None) -> NlpcaModel:
    """Train the bottleneck network with Adam on the reconstruction MSE.

    ``batch_size=None`` trains full-batch.  The result is a pure function of
    the data, the hyperparameters and ``seed``.

    Raises
    ------
    DataError
        Non-finite input.
    TrainError
        The loss became NaN or infinite.
    """
    X, kind, channel = _as_array(m)
    if not np.all(np.isfinite(X)):
        raise DataError("NLPCA input contains non-finite values")
    if X.shape[0] < 4:
        raise ShapeError("NLPCA needs at least 4 rows")
    if n_components < 1 or hidden_units < 1 or epochs < 0:
        raise ValueError("n_components, hidden_units must be >= 1 and epochs >= 0")

    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    Xs = (X - mean) / scale

    rng = np.random.default_rng(seed)
    params = init_params(X.shape[1], hidden_units, n_components, rng)
    moments = {k: (np.zeros_like(v), np.zeros_like(v)) for k, v in params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    n = Xs.shape[0]

    trace = [loss_and_grads(params, Xs)[0]]
    step = 0
    for _ in range(epochs):
        if batch_size is None or batch_size >= n:
            batches = [slice(None)]
        else:
            perm = rng.permutation(n)
            batches = [perm[i:i + batch_size] for i in range(0, n, batch_size)]
        for idx in batches:
            loss, grads = loss_and_grads(params, Xs[idx])
            if not math.isfinite(loss):
                raise TrainError(f"NLPCA loss diverged at step {step}")
            step += 1
            for k, g in grads.items():
                m1, m2 = moments[k]
                m1 *= beta1
                m1 += (1 - beta1) * g
                m2 *= beta2
                m2 += (1 - beta2) * g * g
                mhat = m1 / (1 - beta1**step)
                vhat = m2 / (1 - beta2**step)
                params[k] = params[k] - learning_rate * mhat / (np.sqrt(vhat) + eps)
        trace.append(loss_and_grads(params, Xs)[0])
        if not math.isfinite(trace[-1]):
            raise TrainError("NLPCA loss diverged")

    contributions = _center_and_order(params, Xs)
    # the column permutation can leave F-ordered arrays; BLAS results depend on layout
    params = {k: np.ascontiguousarray(v) for k, v in params.items()}
    trace[-1] = float(np.mean((decode(params, encode(params, Xs)) - Xs) ** 2))
    return NlpcaModel(params=params, mean=mean, scale=scale, trace=np.array(trace), seed=seed,
                      hidden_units=hidden_units, n_components=n_components,
                      contributions=contributions, input_kind=kind, channel=channel)


def transform(model: NlpcaModel, m: FeatureMatrix) -> FeatureMatrix:
    """Encoder pass; rows and labels carried through."""
    X, _, channel = _as_array(m)
    labels = m.labels if isinstance(m, FeatureMatrix) else np.zeros(X.shape[0])
    return FeatureMatrix("pca_scores", model.scores(X), labels, channel,
                         {"source": model.input_kind})


def reconstruct(model: NlpcaModel, s: FeatureMatrix) -> FeatureMatrix:
    S, _, channel = _as_array(s)
    labels = s.labels if isinstance(s, FeatureMatrix) else np.zeros(S.shape[0])
    return FeatureMatrix(model.input_kind, model.decode(S), labels, channel)


def weight_components(scores: FeatureMatrix, model: NlpcaModel) -> FeatureMatrix:
    """Scale score columns by their relative ablation contribution (largest = 1).

    Optional; by default components enter regression unweighted.
    """
    c = np.clip(model.contributions, 0.0, None)
    w = c / c.max() if c.size and c.max() > 0 else np.ones(model.n_components)
    return FeatureMatrix(scores.kind, scores.values * w, scores.labels, scores.channel, dict(scores.meta))


# --------------------------------------------------------------------------
# weight dump: "nlpca,<version>" then "name,rows,cols" + one line of values


def save_model(model: NlpcaModel, path: str | Path) -> Path:
    path = Path(path)
    arrays = dict(model.params)
    arrays.update(mean=model.mean, scale=model.scale, trace=model.trace, contributions=model.contributions)
    with path.open("w") as fh:
        fh.write(f"nlpca,{FORMAT_VERSION}\n")
        fh.write(f"meta,{model.seed},{model.hidden_units},{model.n_components},{model.input_kind},{model.channel}\n")
        for name, a in arrays.items():
            a2 = np.atleast_2d(a) if a.ndim < 2 else a
            fh.write(f"{name},{a.ndim},{','.join(str(d) for d in a.shape)}\n")
            fh.write(",".join(f"{v:.17g}" for v in a2.ravel()) + "\n")
    return path


def load_model(path: str | Path) -> NlpcaModel:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].split(",")[0] != "nlpca":
        raise FormatError(f"{path}: not an NLPCA weight dump")
    if int(lines[0].split(",")[1]) != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {lines[0]}")
    _, seed, hidden, k, kind, channel = lines[1].split(",")
    arrays = {}
    for head, body in zip(lines[2::2], lines[3::2]):
        name, ndim, *shape = head.split(",")
        shape = tuple(int(s) for s in shape)[: int(ndim)]
        values = np.array([float(v) for v in body.split(",")]) if body else np.zeros(0)
        arrays[name] = values.reshape(shape)
    params = {k2: arrays[k2] for k2 in PARAM_NAMES}
    return NlpcaModel(params=params, mean=arrays["mean"], scale=arrays["scale"], trace=arrays["trace"],
                      seed=int(seed), hidden_units=int(hidden), n_components=int(k),
                      contributions=arrays["contributions"], input_kind=kind, channel=channel)
