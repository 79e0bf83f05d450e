"""K-fold cross-validation, MSE metrics and the model-comparison sweep."""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ParamError, ShapeError, ShmError
from .features import FeatureMatrix
from .gpr import DEFAULT_NOISE, fit_gpr, predict_gpr, select_scale
from .kernels import GPR_KERNELS, SVR_KERNELS, KernelSpec, make_spec, with_heuristic_scale
from .svr import fit_svr, predict_svr

FEATURE_KINDS = ("acceleration_pcs", "fft_pcs", "wavelet_pcs", "combined_pcs")
METHODS = ("svr", "gpr")
REPORT_HEADER = ["method", "kernel", "dataset", "mse", "rmse", "meets_goal", "seed"]

FoldTransform = Callable[[np.ndarray, np.ndarray], "tuple[np.ndarray, np.ndarray]"]


@dataclass(frozen=True)
class ModelSpec:
    """One regression model of the sweep.

    With ``auto_scale`` the kernel lengthscale(s) are replaced on every fold
    by the median heuristic of that fold's training inputs.
    ``hyperparameters`` may hold ``C``, ``epsilon``, ``tol``, ``max_iter``
    (SVR) or ``noise_variance``, ``select_scale`` (GPR).
    """

    method: str
    kernel: KernelSpec
    feature_kind: str
    hyperparameters: tuple = ()
    auto_scale: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParamError(f"unknown method {self.method!r}")
        if self.feature_kind not in FEATURE_KINDS:
            raise ParamError(f"unknown feature kind {self.feature_kind!r}")
        hp = self.hyperparameters
        if isinstance(hp, Mapping):
            hp = tuple(sorted(hp.items()))
        object.__setattr__(self, "hyperparameters", tuple(hp))
        dim = self.kernel.input_dim
        if dim is not None and dim != self.expected_dim:
            raise ParamError(f"{self.feature_kind} has {self.expected_dim} columns, kernel expects {dim}")

    @property
    def expected_dim(self) -> int:
        return 6 if self.feature_kind == "combined_pcs" else 3

    @property
    def params(self) -> dict:
        return dict(self.hyperparameters)

    @property
    def dataset(self) -> str:
        return self.feature_kind.removesuffix("_pcs")

    @property
    def key(self) -> tuple:
        return (self.method, self.kernel.family, self.feature_kind)


@dataclass
class EvalRow:
    spec: ModelSpec
    mse: float
    rmse: float
    fold_mses: list
    fold_sizes: list
    seed: int
    failed: bool = False
    error: str = ""
    summaries: list = field(default_factory=list)
    predictions: np.ndarray | None = field(default=None, repr=False)

    def meets(self, threshold: float) -> bool:
        return (not self.failed) and self.rmse <= threshold


@dataclass
class EvalReport:
    rows: list
    goal_threshold_g: float
    seed: int
    k: int = 5

    def __len__(self):
        return len(self.rows)

    def best(self, **filters) -> EvalRow | None:
        for row in self.rows:
            if row.failed:
                continue
            if all(getattr(row.spec, k) == v or (k == "kernel" and row.spec.kernel.family == v)
                   for k, v in filters.items()):
                return row
        return None

    def select(self, method: str | None = None, dataset: str | None = None) -> list:
        return [r for r in self.rows if (method is None or r.spec.method == method)
                and (dataset is None or r.spec.dataset == dataset)]

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_HEADER)
            for r in self.rows:
                w.writerow([r.spec.method, r.spec.kernel.family, r.spec.dataset, repr(r.mse), repr(r.rmse),
                            str(r.meets(self.goal_threshold_g)).lower(), r.seed])
        return path


def read_report_csv(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["mse"] = float(r["mse"])
        r["rmse"] = float(r["rmse"])
        r["meets_goal"] = r["meets_goal"] == "true"
        r["seed"] = int(r["seed"])
    return rows


def kfold_split(n: int, k: int = 5, seed: int = 0, labels=None) -> list[np.ndarray]:
    """Shuffled k-fold partition of ``range(n)``.

    Passing ``labels`` stratifies: indices are shuffled within each label and
    dealt round-robin, so every fold gets a near-equal share of each level.
    Fold sizes differ by at most one either way.
    """
    if k < 2:
        raise ParamError("k must be >= 2")
    if n < k:
        raise ParamError(f"cannot split {n} rows into {k} folds")
    rng = np.random.default_rng(seed)
    if labels is None:
        return [np.sort(f) for f in np.array_split(rng.permutation(n), k)]
    labels = np.asarray(labels)
    if labels.shape[0] != n:
        raise ShapeError("labels length must equal n")
    order = np.concatenate([rng.permutation(np.flatnonzero(labels == v)) for v in np.unique(labels)])
    buckets = [[] for _ in range(k)]
    for pos, idx in enumerate(order):
        buckets[pos % k].append(idx)
    return [np.sort(np.array(b, dtype=int)) for b in buckets]


def mse(y, y_hat) -> float:
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.shape != y_hat.shape:
        raise ShapeError(f"length mismatch {y.shape[0]} vs {y_hat.shape[0]}")
    if y.size == 0:
        raise ShapeError("empty input")
    return float(np.mean((y - y_hat) ** 2))


def combine_features(a: FeatureMatrix, b: FeatureMatrix) -> FeatureMatrix:
    """Column-wise concatenation of two score matrices over the same runs."""
    if a.rows != b.rows or not np.array_equal(a.labels, b.labels):
        raise ShapeError("score matrices must share rows and label order")
    return FeatureMatrix("combined", np.hstack([a.values, b.values]), a.labels, a.channel,
                         {"sources": [a.meta.get("source", a.kind), b.meta.get("source", b.kind)]})


def fit_predict(spec: ModelSpec, Xtr, ytr, Xte) -> tuple[np.ndarray, dict]:
    kernel = with_heuristic_scale(spec.kernel, Xtr) if spec.auto_scale else spec.kernel
    hp = spec.params
    if spec.method == "svr":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = fit_svr(Xtr, ytr, kernel, C=hp.get("C", 1.0), epsilon=hp.get("epsilon"),
                            tol=hp.get("tol", 1e-3), max_iter=hp.get("max_iter", 100_000),
                            record_trace=False)
        return predict_svr(model, Xte), model.summary()
    noise = hp.get("noise_variance", DEFAULT_NOISE)
    if hp.get("select_scale", False):
        kernel = select_scale(Xtr, ytr, kernel, noise)
    model = fit_gpr(Xtr, ytr, kernel, noise)
    return predict_gpr(model, Xte)[0], model.summary()


def cross_validate(spec: ModelSpec, data: FeatureMatrix, seed: int = 0, k: int = 5,
                   stratify: bool = False, fold_transform: FoldTransform | None = None) -> EvalRow:
    """Pooled k-fold MSE of one model.

    ``fold_transform(train_idx, test_idx) -> (X_train, X_test)`` replaces the
    default row slicing of ``data.values``; strict mode uses it to refit
    NLPCA on each training fold.  Fit failures mark the row failed instead
    of raising.
    """
    y = np.asarray(data.labels, dtype=float)
    folds = kfold_split(data.rows, k, seed, y if stratify else None)
    pred = np.empty_like(y)
    fold_mses, sizes, summaries = [], [], []
    try:
        for test in folds:
            train = np.setdiff1d(np.arange(data.rows), test)
            if fold_transform is None:
                Xtr, Xte = data.values[train], data.values[test]
            else:
                Xtr, Xte = fold_transform(train, test)
            if Xtr.shape[1] != spec.expected_dim:
                raise ShapeError(f"{spec.feature_kind} expects {spec.expected_dim} columns, got {Xtr.shape[1]}")
            pred[test], summary = fit_predict(spec, Xtr, y[train], Xte)
            fold_mses.append(mse(y[test], pred[test]))
            sizes.append(int(test.size))
            summaries.append(summary)
    except (ShmError, np.linalg.LinAlgError) as exc:
        return EvalRow(spec, math.nan, math.nan, fold_mses, sizes, seed, failed=True,
                       error=f"{type(exc).__name__}: {exc}")
    total = mse(y, pred)
    return EvalRow(spec, total, math.sqrt(total), fold_mses, sizes, seed, summaries=summaries, predictions=pred)


def _sort_key(row: EvalRow):
    return (row.failed, row.mse if not row.failed else 0.0, row.spec.method, row.spec.kernel.family,
            row.spec.feature_kind)


def compare_models(specs: Sequence[ModelSpec], datasets: Mapping[str, FeatureMatrix], seed: int = 0,
                   k: int = 5, goal_threshold_g: float | None = None, goal_fraction: float = 0.10,
                   stratify: bool = False, jobs: int = 1,
                   fold_transforms: Mapping[str, FoldTransform] | None = None) -> EvalReport:
    """Cross-validate every spec on its dataset and rank by MSE.

    ``datasets`` maps feature kinds (``"fft_pcs"``...) to score matrices.
    The goal threshold defaults to ``goal_fraction`` of the largest label.
    Rows are computed independently, so ``jobs`` only changes wall time.
    """
    if not specs:
        raise ParamError("need at least one model spec")
    fold_transforms = fold_transforms or {}
    for s in specs:
        if s.feature_kind not in datasets:
            raise ParamError(f"no dataset for {s.feature_kind}")
    if goal_threshold_g is None:
        top = max(float(np.max(d.labels)) for d in datasets.values())
        goal_threshold_g = goal_fraction * top

    def run(spec):
        return cross_validate(spec, datasets[spec.feature_kind], seed, k, stratify,
                              fold_transforms.get(spec.feature_kind))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run, specs))
    else:
        rows = [run(s) for s in specs]
    rows.sort(key=_sort_key)
    return EvalReport(rows=rows, goal_threshold_g=goal_threshold_g, seed=seed, k=k)


def default_sweep_specs(svr_params: Mapping | None = None, gpr_params: Mapping | None = None,
                      svr_datasets=("acceleration_pcs", "fft_pcs", "wavelet_pcs", "combined_pcs"),
                      gpr_datasets=("acceleration_pcs", "fft_pcs", "combined_pcs")) -> list[ModelSpec]:
    """Three SVR kernels on four score sets plus ten GPR kernels on three (42 models)."""
    specs = []
    for ds in svr_datasets:
        dim = 6 if ds == "combined_pcs" else 3
        for fam in SVR_KERNELS:
            specs.append(ModelSpec("svr", make_spec(fam, dim), ds, tuple(sorted((svr_params or {}).items()))))
    for ds in gpr_datasets:
        dim = 6 if ds == "combined_pcs" else 3
        for fam in GPR_KERNELS:
            specs.append(ModelSpec("gpr", make_spec(fam, dim), ds, tuple(sorted((gpr_params or {}).items()))))
    return specs
