"""Indirect bridge damage quantification from vehicle-mounted accelerometers."""

from .dataset import (BridgeParams, Run, RunCollection, VehicleParams, build_collection, load_runs,
                      simulate_run, slice_forward_runs, write_runs)
from .evaluate import EvalReport, ModelSpec, combine_features, compare_models, cross_validate, kfold_split, mse
from .features import FeatureMatrix, build_feature_sets
from .gpr import fit_gpr, predict_gpr
from .kernels import KernelSpec, eval_kernel, gram
from .nlpca import fit_nlpca, reconstruct, transform
from .svr import fit_svr, predict_svr

__version__ = "0.1.0"

__all__ = [
    "BridgeParams", "Run", "RunCollection", "VehicleParams", "build_collection", "load_runs", "simulate_run",
    "slice_forward_runs", "write_runs", "EvalReport", "ModelSpec", "combine_features", "compare_models",
    "cross_validate", "kfold_split", "mse", "FeatureMatrix", "build_feature_sets", "fit_gpr", "predict_gpr",
    "KernelSpec", "eval_kernel", "gram", "fit_nlpca", "reconstruct", "transform", "fit_svr", "predict_svr",
]
