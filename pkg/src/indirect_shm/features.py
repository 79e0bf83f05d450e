"""Per-mass-group feature datasets: acceleration, FFT magnitude, wavelet.

Normalization is done inside each mass group, as in the lab procedure:
acceleration runs have the group's mean run subtracted; spectral features
are min-max scaled with the group's global minimum and range.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import CHANNELS, Run, RunCollection, slice_forward_runs
from .errors import DataError, FormatError, ShapeError
from .spectral import dwt, rfft_magnitude

KINDS = ("acceleration", "fft", "wavelet", "pca_scores", "combined")
STACKED = "stacked"


@dataclass(frozen=True)
class FeatureMatrix:
    """Rows are runs, columns are features; ``labels`` holds each row's mass (g)."""

    kind: str
    values: np.ndarray
    labels: np.ndarray
    channel: str = "ax_rear"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[None, :]
        labels = np.array(self.labels, dtype=float).ravel()
        if values.ndim != 2 or labels.shape[0] != values.shape[0]:
            raise ShapeError(f"{values.shape[0]} rows but {labels.shape[0]} labels")
        if not np.all(np.isfinite(values)):
            raise DataError(f"{self.kind} matrix contains non-finite values")
        values.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def take(self, idx) -> "FeatureMatrix":
        return FeatureMatrix(self.kind, self.values[idx], self.labels[idx], self.channel, dict(self.meta))


def _channel_matrix(runs: Sequence[Run], channel: str) -> np.ndarray:
    lengths = {r.n_samples for r in runs}
    if len(lengths) != 1:
        raise ShapeError(f"runs have unequal lengths {sorted(lengths)}")
    if channel == STACKED:
        return np.hstack([np.stack([r.channel(c) for r in runs]) for c in CHANNELS])
    if channel not in CHANNELS:
        raise ValueError(f"unknown channel {channel!r}")
    return np.stack([r.channel(channel) for r in runs])


def group_mean_normalize(group: Sequence[Run], channel: str = "ax_rear") -> FeatureMatrix:
    """Subtract the group's mean run from every run of one mass group.

    With ``channel="stacked"`` the four channels are concatenated column-wise.
    """
    if len(group) < 2:
        raise ShapeError("need at least two runs per group")
    X = _channel_matrix(group, channel)
    values = X - X.mean(axis=0)
    return FeatureMatrix("acceleration", values, [r.mass_g for r in group], channel)


def acceleration_dataset(collection: RunCollection, channel: str = "ax_rear") -> FeatureMatrix:
    """Stack the group-normalized forward runs of every mass level (ascending mass)."""
    blocks = []
    for mass in collection.mass_levels:
        runs = slice_forward_runs(collection, mass)
        if runs:
            blocks.append(group_mean_normalize(runs, channel))
    if not blocks:
        raise ShapeError("collection holds no forward runs")
    return FeatureMatrix("acceleration", np.vstack([b.values for b in blocks]),
                         np.concatenate([b.labels for b in blocks]), channel)


def fft_magnitude(m: FeatureMatrix) -> np.ndarray:
    """Magnitude spectrum of each row, zero-padded to a power of two.

    Returns the ``N/2 + 1`` non-redundant bins.  A stacked matrix is split
    back into its four channel blocks, each transformed separately.
    """
    if m.rows == 0 or m.cols == 0:
        raise ShapeError("empty matrix")
    if m.channel == STACKED:
        return np.hstack([rfft_magnitude(b) for b in np.hsplit(m.values, len(CHANNELS))])
    return rfft_magnitude(m.values)


def minmax_normalize_group(values, labels, kind: str = "fft", channel: str = "ax_rear") -> FeatureMatrix:
    """Scale each mass group's block to [0, 1] by its own global min and range.

    A group whose block is constant maps to zeros.
    """
    values = np.asarray(values, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if labels.shape[0] != values.shape[0]:
        raise ShapeError("labels must match rows")
    out = np.zeros_like(values)
    for mass in np.unique(labels):
        rows = labels == mass
        block = values[rows]
        lo, hi = block.min(), block.max()
        if hi > lo:
            out[rows] = (block - lo) / (hi - lo)
    return FeatureMatrix(kind, out, labels, channel)


def fft_features(m: FeatureMatrix) -> FeatureMatrix:
    return minmax_normalize_group(fft_magnitude(m), m.labels, "fft", m.channel)


def wavelet_coefficients(m: FeatureMatrix, levels: int = 4, wavelet: str = "db4") -> np.ndarray:
    """Concatenated ``[a_J, d_J, ..., d_1]`` per row (per channel block when stacked)."""
    blocks = np.hsplit(m.values, len(CHANNELS)) if m.channel == STACKED else [m.values]
    return np.hstack([np.concatenate(dwt(b, wavelet, levels), axis=-1) for b in blocks])


def wavelet_features(m: FeatureMatrix, levels: int = 4, wavelet: str = "db4") -> FeatureMatrix:
    out = minmax_normalize_group(wavelet_coefficients(m, levels, wavelet), m.labels, "wavelet", m.channel)
    return FeatureMatrix("wavelet", out.values, out.labels, m.channel, {"wavelet": wavelet, "levels": levels})


def build_feature_sets(collection: RunCollection, channel: str = "ax_rear",
                       kinds: Sequence[str] = ("acceleration", "fft", "wavelet"),
                       wavelet: str = "db4", levels: int = 4) -> dict[str, FeatureMatrix]:
    acc = acceleration_dataset(collection, channel)
    out = {}
    if "acceleration" in kinds:
        out["acceleration"] = acc
    if "fft" in kinds:
        out["fft"] = fft_features(acc)
    if "wavelet" in kinds:
        out["wavelet"] = wavelet_features(acc, levels, wavelet)
    return out


# --------------------------------------------------------------------------
# CSV persistence: first line ``kind,channel,labels-file``, then one row per run


def save_feature_matrix(m: FeatureMatrix, path: str | Path) -> Path:
    path = Path(path)
    labels_path = path.with_name(path.stem + "_labels.csv")
    with path.open("w", newline="") as fh:
        fh.write(f"{m.kind},{m.channel},{labels_path.name}\n")
        np.savetxt(fh, m.values, delimiter=",", fmt="%.17g")
    np.savetxt(labels_path, m.labels, fmt="%.17g")
    return path


def load_feature_matrix(path: str | Path) -> FeatureMatrix:
    path = Path(path)
    with path.open(newline="") as fh:
        header = next(csv.reader(fh), None)
        if not header or len(header) != 3:
            raise FormatError(f"{path}: expected header kind,channel,labels-file")
        values = np.loadtxt(fh, delimiter=",", ndmin=2)
    kind, channel, labels_name = header
    labels = np.loadtxt(path.with_name(labels_name), ndmin=1)
    return FeatureMatrix(kind, values, labels, channel)
