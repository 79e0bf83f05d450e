"""Stage orchestration: data -> features -> NLPCA -> sweep -> figures.

Intermediate results are cached under ``<out>/.cache`` keyed by a hash of
the relevant config sections chained with the upstream stage's key (and,
for ingested data, the input files' contents), so re-running a sweep with a
changed model list reuses the features and NLPCA fits.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import pickle
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .dataset import IngestSchema, RunCollection, build_collection, load_runs, write_runs
from .evaluate import EvalReport, combine_features, compare_models, read_report_csv
from .features import FeatureMatrix, build_feature_sets, save_feature_matrix
from .figures import emit_figures
from .nlpca import NlpcaModel, fit_nlpca, save_model, transform, weight_components

log = logging.getLogger(__name__)

STAGES = ("simulate", "features", "nlpca", "sweep", "report")


@dataclass
class PipelineResult:
    report: EvalReport | None = None
    artifacts: list = field(default_factory=list)
    failed_stage: str | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.failed_stage is None


class _Cache:
    def __init__(self, root: Path, enabled: bool = True):
        self.root = root / ".cache"
        self.enabled = enabled

    def get(self, stage: str, key: str):
        path = self.root / f"{stage}-{key}.pkl"
        if self.enabled and path.is_file():
            with path.open("rb") as fh:
                return pickle.load(fh)
        return None

    def put(self, stage: str, key: str, value):
        if not self.enabled:
            return
        self.root.mkdir(parents=True, exist_ok=True)
        with (self.root / f"{stage}-{key}.pkl").open("wb") as fh:
            pickle.dump(value, fh)


def _hash_directory(path: Path) -> str:
    h = hashlib.sha256()
    for f in sorted(p for p in path.rglob("*") if p.is_file()):
        h.update(f.name.encode())
        h.update(f.read_bytes())
    return h.hexdigest()[:16]


class Pipeline:
    def __init__(self, config: PipelineConfig, use_cache: bool = True):
        self.config = config
        self.out = config.output_dir
        self.cache = _Cache(self.out, use_cache)
        self.artifacts: list[Path] = []
        self.keys: dict[str, str] = {}

    # -- stages -------------------------------------------------------------
    def collection(self, write: bool | None = None) -> RunCollection:
        cfg = self.config
        d = cfg.raw["data"]
        upstream = _hash_directory(Path(d["ingest_path"])) if d["source"] == "ingest" else ""
        key = cfg.section_hash("data", upstream=upstream)
        self.keys["data"] = key
        coll = self.cache.get("data", key)
        if coll is None:
            if d["source"] == "ingest":
                log.info("ingesting runs from %s", d["ingest_path"])
                coll = load_runs(d["ingest_path"], IngestSchema(n_samples=d["n_samples"],
                                                                max_mass_g=d["max_mass_g"]))
            else:
                sim = d["simulate"]
                log.info("simulating %d x %d runs", sim["mass_count"], sim["runs_per_mass"])
                coll = build_collection(cfg.bridge(), cfg.vehicle(), cfg.mass_levels(), int(sim["runs_per_mass"]),
                                        cfg.seed, noise_rms=float(sim["noise_rms"]),
                                        relative_noise=bool(sim["relative_noise"]),
                                        speed_jitter=float(sim["speed_jitter"]), n_samples=d["n_samples"],
                                        sample_rate_hz=float(sim["sample_rate_hz"]),
                                        substeps=int(sim["substeps"]))
            self.cache.put("data", key, coll)
        if write is None:
            write = d["source"] == "simulate" and d["simulate"]["save_runs"]
        if write:
            self.artifacts.append(write_runs(coll, self.out / "data"))
        return coll

    def features(self) -> dict[str, FeatureMatrix]:
        coll = self.collection()
        key = self.config.section_hash("features", upstream=self.keys["data"])
        self.keys["features"] = key
        sets = self.cache.get("features", key)
        if sets is None:
            f = self.config.raw["features"]
            sets = build_feature_sets(coll, f["channel"], f["kinds"], f["wavelet"], int(f["levels"]))
            self.cache.put("features", key, sets)
        fdir = self.out / "features"
        fdir.mkdir(parents=True, exist_ok=True)
        for kind, m in sets.items():
            self.artifacts.append(save_feature_matrix(m, fdir / f"{kind}.csv"))
        return sets

    def _nlpca_kwargs(self) -> dict:
        n = self.config.raw["nlpca"]
        return dict(seed=self.config.nlpca_seed(), epochs=int(n["epochs"]), hidden_units=int(n["hidden_units"]),
                    learning_rate=float(n["learning_rate"]), n_components=int(n["n_components"]),
                    batch_size=n["batch_size"])

    def scores(self) -> tuple[dict[str, FeatureMatrix], dict[str, FeatureMatrix]]:
        """Return ``(score sets keyed like "fft_pcs", raw feature sets)``."""
        sets = self.features()
        key = self.config.section_hash("nlpca", upstream=self.keys["features"])
        self.keys["nlpca"] = key
        fitted = self.cache.get("nlpca", key)
        if fitted is None:
            fitted = {}
            for kind, m in sets.items():
                log.info("fitting NLPCA on %s (%d x %d)", kind, m.rows, m.cols)
                fitted[kind] = fit_nlpca(m, **self._nlpca_kwargs())
            self.cache.put("nlpca", key, fitted)
        weight = self.config.raw["nlpca"]["weight_components"]
        ndir = self.out / "nlpca"
        ndir.mkdir(parents=True, exist_ok=True)
        scores = {}
        for kind, model in fitted.items():
            s = transform(model, sets[kind])
            if weight:
                s = weight_components(s, model)
            scores[f"{kind}_pcs"] = s
            self.artifacts.append(save_model(model, ndir / f"{kind}_model.csv"))
            self.artifacts.append(save_feature_matrix(s, ndir / f"{kind}_pcs.csv"))
        if "acceleration_pcs" in scores and "fft_pcs" in scores:
            scores["combined_pcs"] = combine_features(scores["acceleration_pcs"], scores["fft_pcs"])
            self.artifacts.append(save_feature_matrix(scores["combined_pcs"], ndir / "combined_pcs.csv"))
        return scores, sets

    def _strict_transforms(self, sets: dict[str, FeatureMatrix]) -> dict:
        """Per-fold NLPCA refits (memoized per training index set)."""
        kwargs = self._nlpca_kwargs()
        weight = self.config.raw["nlpca"]["weight_components"]
        memo: dict = {}

        def fitted(kind, train):
            k = (kind, hashlib.sha1(train.tobytes()).hexdigest())
            if k not in memo:
                memo[k] = fit_nlpca(sets[kind].values[train], **kwargs)
            return memo[k]

        def encoder(kinds):
            def fold(train, test):
                tr, te = [], []
                for kind in kinds:
                    model: NlpcaModel = fitted(kind, train)
                    a, b = model.scores(sets[kind].values[train]), model.scores(sets[kind].values[test])
                    if weight:
                        w = np.clip(model.contributions, 0, None)
                        w = w / w.max() if w.max() > 0 else np.ones_like(w)
                        a, b = a * w, b * w
                    tr.append(a)
                    te.append(b)
                return np.hstack(tr), np.hstack(te)
            return fold

        out = {f"{k}_pcs": encoder([k]) for k in sets}
        if "acceleration" in sets and "fft" in sets:
            out["combined_pcs"] = encoder(["acceleration", "fft"])
        return out

    def sweep(self) -> EvalReport:
        scores, sets = self.scores()
        s = self.config.raw["sweep"]
        specs = self.config.model_specs()
        transforms = self._strict_transforms(sets) if s["strict_cv"] else None
        log.info("cross-validating %d models", len(specs))
        report = compare_models(specs, scores, seed=self.config.cv_seed(), k=int(s["k"]),
                                goal_fraction=float(self.config.raw["report"]["goal_fraction"]),
                                stratify=bool(s["stratify"]), jobs=int(s["jobs"]), fold_transforms=transforms)
        rdir = self.out / "report"
        rdir.mkdir(parents=True, exist_ok=True)
        self.artifacts.append(report.to_csv(rdir / "report.csv"))
        self.artifacts.append(_write_model_summaries(report, rdir / "models.csv"))
        if all(r.failed for r in report.rows):
            raise RuntimeError(f"every model failed; first error: {report.rows[0].error}")
        return report

    def figures(self, report: EvalReport | None = None) -> list[Path]:
        if report is None:
            path = self.out / "report" / "report.csv"
            if not path.is_file():
                raise FileNotFoundError(f"{path} not found; run the sweep first")
            paths = emit_figures(read_report_csv(path), self.out / "figures")
        else:
            paths = emit_figures(report, self.out / "figures")
        self.artifacts.extend(paths)
        return paths


def _write_model_summaries(report: EvalReport, path: Path) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "kernel", "dataset", "mse", "rmse", "failed", "error", "fold_mses", "fold_models"])
        for r in report.rows:
            w.writerow([r.spec.method, r.spec.kernel.family, r.spec.dataset, repr(r.mse), repr(r.rmse),
                        str(r.failed).lower(), r.error, json.dumps(r.fold_mses),
                        json.dumps(r.summaries, sort_keys=True, default=str)])
    return path


def _write_manifest(out: Path, result: PipelineResult, stage: str):
    out.mkdir(parents=True, exist_ok=True)
    rel = sorted({str(Path(p).resolve().relative_to(out.resolve())) for p in result.artifacts})
    manifest = {"stage": stage, "status": "ok" if result.ok else "failed", "artifacts": rel}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    failure = out / "failure.json"
    if result.ok:
        failure.unlink(missing_ok=True)
    else:
        failure.write_text(json.dumps({"stage": result.failed_stage, "error": result.error}, indent=2) + "\n")


def run_pipeline(config: PipelineConfig, until: str = "all", use_cache: bool = True) -> PipelineResult:
    """Run stages up to ``until`` (one of :data:`STAGES` or ``"all"``).

    ``"report"`` only redraws figures from an existing report CSV.  Stage
    exceptions are caught: the result records the failing stage and a
    failure manifest is written next to whatever artifacts were produced.
    """
    if until not in STAGES + ("all",):
        raise ValueError(f"unknown stage {until!r}")
    pipe = Pipeline(config, use_cache)
    result = PipelineResult()
    current = until
    try:
        if until == "simulate":
            current = "simulate"
            pipe.collection(write=True)
        elif until == "features":
            current = "features"
            pipe.features()
        elif until == "nlpca":
            current = "nlpca"
            pipe.scores()
        elif until == "sweep":
            current = "sweep"
            result.report = pipe.sweep()
        elif until == "report":
            current = "report"
            pipe.figures()
        else:
            current = "sweep"
            result.report = pipe.sweep()
            current = "report"
            pipe.figures(result.report)
    except Exception as exc:  # noqa: BLE001 - stage boundary, reported via exit code and manifest
        log.debug("stage %s failed\n%s", current, traceback.format_exc())
        result.failed_stage = current
        result.error = f"{type(exc).__name__}: {exc}"
    result.artifacts = pipe.artifacts
    _write_manifest(pipe.out, result, until)
    return result
