"""Pipeline configuration (YAML, schema version 1).

Every key is optional; omitted keys take the defaults below.  Example::

    version: 1
    seed: 0
    output_dir: out
    data:
      source: simulate          # or "ingest" with ingest_path
      ingest_path: null
      n_samples: 1024
      simulate:
        mass_step_g: 10
        mass_count: 20
        runs_per_mass: 31
        noise_rms: 0.02          # fraction of channel RMS when relative_noise
        relative_noise: true
        speed_jitter: 0.03
        sample_rate_hz: 1000
        save_runs: true
        bridge: {span_m: 1.5, flexural_rigidity_EI: 700, ...}
        vehicle: {speed_m_s: 1.0, ...}
    features: {channel: ax_rear, kinds: [acceleration, fft, wavelet], wavelet: db4, levels: 4}
    nlpca: {n_components: 3, hidden_units: 16, epochs: 2000, learning_rate: 0.001,
            batch_size: null, seed: null, weight_components: false}
    sweep:
      preset: standard           # or "custom" with a models list
      models: []                 # [{method: svr, kernel: gaussian, dataset: fft_pcs}, ...]
      svr: {C: 1.0, epsilon: null, tol: 0.001, max_iter: 100000}
      gpr: {noise_variance: 0.01, select_scale: false}
      k: 5
      cv_seed: null
      stratify: false
      strict_cv: false
      jobs: 1
    report: {goal_fraction: 0.10}
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import fields
from pathlib import Path

import yaml

from .dataset import CHANNELS, BridgeParams, VehicleParams
from .errors import ConfigError
from .evaluate import FEATURE_KINDS, METHODS, ModelSpec, default_sweep_specs
from .features import STACKED
from .kernels import FAMILIES, make_spec

SCHEMA_VERSION = 1

DEFAULTS = {
    "version": SCHEMA_VERSION,
    "seed": 0,
    "output_dir": "out",
    "data": {
        "source": "simulate",
        "ingest_path": None,
        "n_samples": 1024,
        "max_mass_g": 190.0,
        "simulate": {
            "mass_step_g": 10.0,
            "mass_count": 20,
            "runs_per_mass": 31,
            "noise_rms": 0.02,
            "relative_noise": True,
            "speed_jitter": 0.03,
            "sample_rate_hz": 1000.0,
            "substeps": 4,
            "save_runs": True,
            "bridge": {},
            "vehicle": {},
        },
    },
    "features": {"channel": "ax_rear", "kinds": ["acceleration", "fft", "wavelet"], "wavelet": "db4",
                 "levels": 4},
    "nlpca": {"n_components": 3, "hidden_units": 16, "epochs": 2000, "learning_rate": 1e-3,
              "batch_size": None, "seed": None, "weight_components": False},
    "sweep": {
        "preset": "standard",
        "models": [],
        "svr": {"C": 1.0, "epsilon": None, "tol": 1e-3, "max_iter": 100_000},
        "gpr": {"noise_variance": 1e-2, "select_scale": False},
        "k": 5,
        "cv_seed": None,
        "stratify": False,
        "strict_cv": False,
        "jobs": 1,
    },
    "report": {"goal_fraction": 0.10},
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and base[key] and key not in ("bridge", "vehicle"):
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} must be a mapping")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


class PipelineConfig:
    """Validated configuration; ``raw`` is the fully merged mapping."""

    def __init__(self, raw: dict | None = None):
        if raw is not None and not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
        self.raw = _merge(DEFAULTS, raw or {})
        self._validate()

    # -- construction -------------------------------------------------------
    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
        cfg = cls(raw or {})
        ingest = cfg.raw["data"]["ingest_path"]
        if ingest and not Path(ingest).is_absolute():
            cfg.raw["data"]["ingest_path"] = str((Path(path).parent / ingest).resolve())
        return cfg

    def override(self, **kw) -> "PipelineConfig":
        raw = copy.deepcopy(self.raw)
        if kw.get("seed") is not None:
            raw["seed"] = int(kw["seed"])
        if kw.get("output_dir") is not None:
            raw["output_dir"] = str(kw["output_dir"])
        if kw.get("strict_cv"):
            raw["sweep"]["strict_cv"] = True
        if kw.get("jobs") is not None:
            raw["sweep"]["jobs"] = int(kw["jobs"])
        return PipelineConfig(raw)

    # -- validation ---------------------------------------------------------
    def _validate(self):
        r = self.raw
        if r["version"] != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config version {r['version']!r}")
        if not isinstance(r["seed"], int):
            raise ConfigError("seed must be an integer")
        d = r["data"]
        if d["source"] not in ("simulate", "ingest"):
            raise ConfigError("data.source must be 'simulate' or 'ingest'")
        if d["source"] == "ingest" and not d["ingest_path"]:
            raise ConfigError("data.ingest_path is required for source 'ingest'")
        try:
            self.bridge()
            self.vehicle()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad bridge/vehicle parameters: {exc}") from exc
        sim = d["simulate"]
        if int(sim["runs_per_mass"]) < 1 or int(sim["mass_count"]) < 1:
            raise ConfigError("runs_per_mass and mass_count must be >= 1")
        f = r["features"]
        if f["channel"] not in CHANNELS + (STACKED,):
            raise ConfigError(f"features.channel must be one of {CHANNELS + (STACKED,)}")
        kinds = f["kinds"]
        if not kinds or any(k not in ("acceleration", "fft", "wavelet") for k in kinds):
            raise ConfigError("features.kinds must be a non-empty subset of acceleration, fft, wavelet")
        n = r["nlpca"]
        if int(n["n_components"]) < 1 or int(n["hidden_units"]) < 1 or int(n["epochs"]) < 0:
            raise ConfigError("bad nlpca sizes")
        if not float(n["learning_rate"]) > 0:
            raise ConfigError("nlpca.learning_rate must be positive")
        s = r["sweep"]
        if s["preset"] not in ("standard", "custom"):
            raise ConfigError("sweep.preset must be 'standard' or 'custom'")
        if int(s["k"]) < 2:
            raise ConfigError("sweep.k must be >= 2")
        goal = r["report"]["goal_fraction"]
        if not (isinstance(goal, (int, float)) and 0 < goal <= 1):
            raise ConfigError("report.goal_fraction must lie in (0, 1]")
        try:
            specs = self.model_specs()
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"bad model list: {exc}") from exc
        if not specs:
            raise ConfigError("sweep defines no models")
        needed = {sp.feature_kind for sp in specs}
        available = self.score_kinds()
        missing = needed - available
        if missing:
            raise ConfigError(f"models need feature sets that are not built: {sorted(missing)}")

    # -- accessors ----------------------------------------------------------
    @property
    def seed(self) -> int:
        return self.raw["seed"]

    @property
    def output_dir(self) -> Path:
        return Path(self.raw["output_dir"])

    def bridge(self) -> BridgeParams:
        kw = self.raw["data"]["simulate"]["bridge"] or {}
        allowed = {f.name for f in fields(BridgeParams)}
        bad = set(kw) - allowed
        if bad:
            raise ConfigError(f"unknown bridge parameters {sorted(bad)}")
        return BridgeParams(**kw)

    def vehicle(self) -> VehicleParams:
        kw = self.raw["data"]["simulate"]["vehicle"] or {}
        allowed = {f.name for f in fields(VehicleParams)}
        bad = set(kw) - allowed
        if bad:
            raise ConfigError(f"unknown vehicle parameters {sorted(bad)}")
        return VehicleParams(**kw)

    def mass_levels(self) -> list[float]:
        sim = self.raw["data"]["simulate"]
        return [float(sim["mass_step_g"]) * i for i in range(int(sim["mass_count"]))]

    def nlpca_seed(self) -> int:
        s = self.raw["nlpca"]["seed"]
        return self.seed if s is None else int(s)

    def cv_seed(self) -> int:
        s = self.raw["sweep"]["cv_seed"]
        return self.seed if s is None else int(s)

    def score_kinds(self) -> set:
        kinds = {f"{k}_pcs" for k in self.raw["features"]["kinds"]}
        if {"acceleration_pcs", "fft_pcs"} <= kinds:
            kinds.add("combined_pcs")
        return kinds

    def model_specs(self) -> list[ModelSpec]:
        s = self.raw["sweep"]
        svr_hp = {k: v for k, v in s["svr"].items() if v is not None}
        gpr_hp = {k: v for k, v in s["gpr"].items() if v is not None}
        if s["preset"] == "standard":
            kinds = self.score_kinds()
            svr_ds = [k for k in FEATURE_KINDS if k in kinds]
            gpr_ds = [k for k in ("acceleration_pcs", "fft_pcs", "combined_pcs") if k in kinds]
            return default_sweep_specs(svr_hp, gpr_hp, svr_ds, gpr_ds)
        specs = []
        for m in s["models"]:
            m = dict(m)
            method = m.pop("method")
            family = m.pop("kernel")
            dataset = m.pop("dataset")
            if method not in METHODS or family not in FAMILIES:
                raise ValueError(f"bad model entry {method}/{family}")
            kernel_kw = {k: m.pop(k) for k in ("scale", "lengthscales", "degree", "signal_variance", "rq_alpha")
                         if k in m}
            auto = m.pop("auto_scale", "scale" not in kernel_kw and "lengthscales" not in kernel_kw)
            hp = dict(svr_hp if method == "svr" else gpr_hp)
            hp.update(m)
            dim = 6 if dataset == "combined_pcs" else 3
            kernel = make_spec(family, dim, **kernel_kw)
            specs.append(ModelSpec(method, kernel, dataset, tuple(sorted(hp.items())), auto_scale=auto))
        return specs

    # -- hashing (stage cache keys) -----------------------------------------
    def section_hash(self, *parts: str, upstream: str = "") -> str:
        payload = {p: self.raw[p] if p in self.raw else None for p in parts}
        payload["_upstream"] = upstream
        payload["_seed"] = self.seed
        blob = json.dumps(payload, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]
