"""Vehicle runs: containers, CSV ingest/export, and a vehicle-bridge simulator.

The simulator couples an Euler-Bernoulli simply supported beam (modal
superposition, ``n_modes`` sine modes) to a two-axle vehicle modelled as one
quarter-car per axle.  Wheels stay in contact with the deck, so the axle
accelerometers read the deck acceleration under the wheel, including the
convective terms from the moving contact point.  Bridge "damage" is a lumped
mass added to the beam at a fixed position.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, IoError, NumericError, ParamError

CHANNELS = ("ax_front", "ax_rear", "ch_front", "ch_rear")
DIRECTIONS = ("forward", "backward")
GRAVITY = 9.81

RUN_HEADER = ["t", *CHANNELS]
MANIFEST_HEADER = ["run_id", "mass_g", "direction", "sample_rate_hz", "file"]
MANIFEST_NAME = "manifest.csv"


@dataclass(frozen=True)
class Run:
    """One vehicle pass: four acceleration channels plus labels.

    ``channels`` has shape ``(4, n_samples)`` in the order given by
    :data:`CHANNELS` (front axle, rear axle, front chassis, rear chassis).
    """

    run_id: int
    mass_g: float
    direction: str
    sample_rate_hz: float
    channels: np.ndarray

    def __post_init__(self):
        ch = np.array(self.channels, dtype=float)
        if ch.ndim != 2 or ch.shape[0] != len(CHANNELS):
            raise FormatError(
                f"run {self.run_id}: expected {len(CHANNELS)} channels, got shape {ch.shape}",
                run_id=self.run_id,
            )
        if ch.shape[1] < 2:
            raise FormatError(f"run {self.run_id}: fewer than 2 samples", run_id=self.run_id)
        if not self.sample_rate_hz > 0:
            raise ParamError(f"run {self.run_id}: sample rate must be positive")
        if self.mass_g < 0:
            raise ParamError(f"run {self.run_id}: negative mass {self.mass_g}")
        if self.direction not in DIRECTIONS:
            raise FormatError(f"run {self.run_id}: unknown direction {self.direction!r}", run_id=self.run_id)
        ch.setflags(write=False)
        object.__setattr__(self, "channels", ch)

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]

    def channel(self, name: str) -> np.ndarray:
        return self.channels[CHANNELS.index(name)]

    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.sample_rate_hz


@dataclass(frozen=True)
class RunCollection:
    runs: tuple
    mass_levels: tuple = field(default=())

    def __post_init__(self):
        runs = tuple(self.runs)
        levels = self.mass_levels or sorted({r.mass_g for r in runs})
        levels = tuple(float(m) for m in levels)
        if list(levels) != sorted(set(levels)):
            raise ParamError("mass levels must be distinct and sorted")
        known = set(levels)
        for r in runs:
            if r.mass_g not in known:
                raise FormatError(f"run {r.run_id}: mass {r.mass_g} not among mass levels", run_id=r.run_id)
        object.__setattr__(self, "runs", runs)
        object.__setattr__(self, "mass_levels", levels)

    def __len__(self):
        return len(self.runs)

    def __iter__(self):
        return iter(self.runs)


@dataclass(frozen=True)
class BridgeParams:
    """Simply supported beam with an optional lumped "damage" mass."""

    span_m: float = 1.5
    flexural_rigidity_EI: float = 700.0
    linear_mass_density: float = 1.5
    n_modes: int = 4
    modal_damping_ratio: float = 0.02
    damage_mass_g: float = 0.0
    damage_position_fraction: float = 0.5

    def __post_init__(self):
        if not (self.span_m > 0 and self.flexural_rigidity_EI > 0 and self.linear_mass_density > 0):
            raise ParamError("span, EI and mass density must be positive")
        if self.n_modes < 1:
            raise ParamError("n_modes must be >= 1")
        if not 0 <= self.modal_damping_ratio < 1:
            raise ParamError("damping ratio must lie in [0, 1)")
        if self.damage_mass_g < 0:
            raise ParamError("damage mass must be non-negative")
        if not 0 < self.damage_position_fraction < 1:
            raise ParamError("damage position must lie strictly inside the span")

    def wavenumbers(self) -> np.ndarray:
        return np.arange(1, self.n_modes + 1) * math.pi / self.span_m

    def undamaged_frequencies_hz(self) -> np.ndarray:
        """Analytic f_n = (n pi / L)^2 sqrt(EI / rho) / (2 pi)."""
        return self.wavenumbers() ** 2 * math.sqrt(self.flexural_rigidity_EI / self.linear_mass_density) / (2 * math.pi)

    def mass_matrix(self) -> np.ndarray:
        modal = 0.5 * self.linear_mass_density * self.span_m
        phi_d = np.sin(self.wavenumbers() * self.damage_position_fraction * self.span_m)
        return modal * np.eye(self.n_modes) + 1e-3 * self.damage_mass_g * np.outer(phi_d, phi_d)

    def stiffness_matrix(self) -> np.ndarray:
        modal = 0.5 * self.linear_mass_density * self.span_m
        omega = 2 * math.pi * self.undamaged_frequencies_hz()
        return np.diag(modal * omega**2)

    def damping_matrix(self) -> np.ndarray:
        modal = 0.5 * self.linear_mass_density * self.span_m
        omega = 2 * math.pi * self.undamaged_frequencies_hz()
        return np.diag(2 * self.modal_damping_ratio * omega * modal)

    def natural_frequencies_hz(self) -> np.ndarray:
        """Frequencies of the (possibly damaged) beam with no vehicle on it."""
        from scipy.linalg import eigh

        lam = eigh(self.stiffness_matrix(), self.mass_matrix(), eigvals_only=True)
        return np.sqrt(lam) / (2 * math.pi)


@dataclass(frozen=True)
class VehicleParams:
    """Two-axle vehicle; ``sprung_mass`` is split evenly between the axles.

    ``unsprung_mass``, ``suspension_stiffness`` and ``suspension_damping``
    are per axle.
    """

    speed_m_s: float = 1.0
    sprung_mass: float = 0.8
    unsprung_mass: float = 0.1
    suspension_stiffness: float = 400.0
    suspension_damping: float = 2.0
    axle_spacing_m: float = 0.25

    def __post_init__(self):
        for name in ("speed_m_s", "sprung_mass", "unsprung_mass", "suspension_stiffness",
                     "suspension_damping", "axle_spacing_m"):
            if not getattr(self, name) > 0:
                raise ParamError(f"vehicle {name} must be positive")


@dataclass(frozen=True)
class IngestSchema:
    """How recorded runs are read from disk.

    ``n_samples`` is the common length every run is resampled to (``None``
    keeps native lengths).  ``mass_levels``, when given, is the closed set
    of acceptable labels.
    """

    n_samples: int | None = 1024
    max_mass_g: float = 190.0
    mass_levels: tuple | None = None
    manifest_name: str = MANIFEST_NAME


# --------------------------------------------------------------------------
# simulation


@dataclass
class Response:
    """Raw simulator output for a batch of runs on a common time grid."""

    times: np.ndarray          # (T,)
    modal: np.ndarray          # (R, T, n_modes)
    accelerations: np.ndarray  # (R, 4, T) in CHANNELS order
    n_valid: np.ndarray        # (R,) samples inside each run's own crossing window


def _simulate_batch(bridge: BridgeParams, vehicles: Sequence[VehicleParams], sample_rate_hz: float,
                    substeps: int = 4, t_end: float | None = None,
                    damage_masses_g: Sequence[float] | None = None) -> Response:
    """Integrate all ``vehicles`` at once; run ``r`` optionally overrides the
    bridge's damage mass with ``damage_masses_g[r]``."""
    speeds = np.array([v.speed_m_s for v in vehicles], dtype=float)
    spacing = np.array([v.axle_spacing_m for v in vehicles], dtype=float)
    ms = np.array([v.sprung_mass / 2 for v in vehicles], dtype=float)
    mu = np.array([v.unsprung_mass for v in vehicles], dtype=float)
    ks = np.array([v.suspension_stiffness for v in vehicles], dtype=float)
    cs = np.array([v.suspension_damping for v in vehicles], dtype=float)
    R, n, L = len(vehicles), bridge.n_modes, bridge.span_m

    durations = (L + spacing) / speeds
    if t_end is None:
        t_end = float(durations.max())
    n_out = int(math.floor(t_end * sample_rate_hz + 1e-9)) + 1
    n_valid = np.floor(durations * sample_rate_hz + 1e-9).astype(int) + 1

    kx = bridge.wavenumbers()
    if damage_masses_g is None:
        damage_masses_g = [bridge.damage_mass_g] * R
    Mb = np.stack([replace(bridge, damage_mass_g=float(m)).mass_matrix() for m in damage_masses_g])
    Kb = np.diag(bridge.stiffness_matrix())
    Cb = np.diag(bridge.damping_matrix())
    offsets = np.stack([np.zeros(R), spacing], axis=1)  # (R, 2)
    static = ((mu + ms) * GRAVITY)[:, None]

    def derivs(t, q, qd, z, zd):
        x = speeds[:, None] * t - offsets
        on = ((x >= 0) & (x <= L))[..., None]
        arg = x[..., None] * kx
        phi = np.where(on, np.sin(arg), 0.0)
        dphi = np.where(on, kx * np.cos(arg), 0.0)
        ddphi = -(kx**2) * phi
        v = speeds[:, None]
        u = (phi * q[:, None, :]).sum(-1)
        ud = (phi * qd[:, None, :]).sum(-1) + v * (dphi * q[:, None, :]).sum(-1)
        conv = 2 * v * (dphi * qd[:, None, :]).sum(-1) + v**2 * (ddphi * q[:, None, :]).sum(-1)
        spring = ks[:, None] * (u - z) + cs[:, None] * (ud - zd)
        contact = static + mu[:, None] * conv + spring
        Meff = Mb + mu[:, None, None] * (phi[..., :, None] * phi[..., None, :]).sum(1)
        rhs = -Cb * qd - Kb * q - (phi * contact[..., None]).sum(1)
        qdd = np.linalg.solve(Meff, rhs[..., None])[..., 0]
        udd = (phi * qdd[:, None, :]).sum(-1) + conv
        zdd = spring / ms[:, None]
        return qdd, zdd, udd

    # RK4 is stable for omega*h < 2.78; keep the stiffest mode well inside that
    omega_max = 2 * math.pi * float(bridge.undamaged_frequencies_hz()[-1])
    substeps = max(int(substeps), math.ceil(omega_max / sample_rate_hz))
    h = 1.0 / (sample_rate_hz * substeps)
    q = np.zeros((R, n))
    qd = np.zeros((R, n))
    z = np.zeros((R, 2))
    zd = np.zeros((R, 2))
    times = np.arange(n_out) / sample_rate_hz
    modal = np.empty((R, n_out, n))
    acc = np.empty((R, 4, n_out))

    for i in range(n_out):
        t0 = times[i]
        qdd, zdd, udd = derivs(t0, q, qd, z, zd)
        modal[:, i] = q
        acc[:, 0:2, i] = udd
        acc[:, 2:4, i] = zdd
        if i == n_out - 1:
            break
        for s in range(substeps):
            t = t0 + s * h
            a1 = derivs(t, q, qd, z, zd)
            q2, qd2, z2, zd2 = q + 0.5 * h * qd, qd + 0.5 * h * a1[0], z + 0.5 * h * zd, zd + 0.5 * h * a1[1]
            a2 = derivs(t + 0.5 * h, q2, qd2, z2, zd2)
            q3, qd3, z3, zd3 = q + 0.5 * h * qd2, qd + 0.5 * h * a2[0], z + 0.5 * h * zd2, zd + 0.5 * h * a2[1]
            a3 = derivs(t + 0.5 * h, q3, qd3, z3, zd3)
            q4, qd4, z4, zd4 = q + h * qd3, qd + h * a3[0], z + h * zd3, zd + h * a3[1]
            a4 = derivs(t + h, q4, qd4, z4, zd4)
            q = q + h / 6 * (qd + 2 * qd2 + 2 * qd3 + qd4)
            z = z + h / 6 * (zd + 2 * zd2 + 2 * zd3 + zd4)
            qd = qd + h / 6 * (a1[0] + 2 * a2[0] + 2 * a3[0] + a4[0])
            zd = zd + h / 6 * (a1[1] + 2 * a2[1] + 2 * a3[1] + a4[1])
    if not (np.all(np.isfinite(acc)) and np.all(np.isfinite(modal))):
        raise NumericError("time integration produced non-finite values")
    return Response(times=times, modal=modal, accelerations=acc, n_valid=np.minimum(n_valid, n_out))


def _add_noise(clean: np.ndarray, seed: int, noise_rms: float, relative: bool) -> np.ndarray:
    if noise_rms < 0:
        raise ParamError("noise_rms must be non-negative")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(clean.shape)
    if noise_rms == 0:
        return clean.copy()
    if relative:
        level = noise_rms * np.sqrt(np.mean(clean**2, axis=1, keepdims=True))
    else:
        level = noise_rms
    return clean + level * noise


def simulate_run(bridge: BridgeParams, vehicle: VehicleParams, seed: int, noise_rms: float = 0.0, *,
                 relative_noise: bool = False, run_id: int = 0, sample_rate_hz: float = 1000.0,
                 substeps: int = 4) -> Run:
    """Simulate one forward crossing, front axle entering at ``t = 0``.

    The run lasts until the rear axle leaves the span.  With
    ``relative_noise`` the noise RMS is a fraction of each channel's clean
    RMS; otherwise it is absolute (m/s^2).
    """
    if not (bridge.span_m > 0 and vehicle.speed_m_s > 0):
        raise ParamError("span and speed must be positive")
    resp = _simulate_batch(bridge, [vehicle], sample_rate_hz, substeps)
    clean = resp.accelerations[0, :, : resp.n_valid[0]]
    channels = _add_noise(clean, seed, noise_rms, relative_noise)
    return Run(run_id=run_id, mass_g=float(bridge.damage_mass_g), direction="forward",
               sample_rate_hz=sample_rate_hz, channels=channels)


def resample_run(run: Run, n_samples: int | None) -> Run:
    """Linearly resample a run onto ``n_samples`` points spanning the same duration."""
    if n_samples is None or n_samples == run.n_samples:
        return run
    if n_samples < 2:
        raise ParamError("n_samples must be >= 2")
    old = np.arange(run.n_samples)
    new = np.linspace(0, run.n_samples - 1, n_samples)
    channels = np.stack([np.interp(new, old, ch) for ch in run.channels])
    rate = run.sample_rate_hz * (n_samples - 1) / (run.n_samples - 1)
    return replace(run, channels=channels, sample_rate_hz=rate)


def run_seed(master_seed: int, mass_index: int, run_index: int) -> int:
    """Per-run seed, a pure function of its coordinates (schedule independent)."""
    ss = np.random.SeedSequence([int(master_seed), int(mass_index), int(run_index)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def build_collection(bridge: BridgeParams, vehicle: VehicleParams, mass_levels: Sequence[float],
                     runs_per_mass: int, master_seed: int, *, noise_rms: float = 0.02,
                     relative_noise: bool = True, speed_jitter: float = 0.03,
                     n_samples: int | None = 1024, sample_rate_hz: float = 1000.0,
                     substeps: int = 4, batch_size: int = 640) -> RunCollection:
    """Simulate ``runs_per_mass`` forward runs for each damage mass.

    ``bridge`` is a template whose ``damage_mass_g`` is overridden per level.
    Each run draws its own speed, ``speed * (1 + speed_jitter * N(0, 1))``,
    and noise stream from a seed derived from ``(master_seed, mass, run)``,
    so the within-mass runs differ the way repeated lab passes do.  Runs
    are integrated in vectorized batches of ``batch_size``; the result does
    not depend on the batching.
    """
    if runs_per_mass < 1:
        raise ParamError("runs_per_mass must be >= 1")
    levels = [float(m) for m in mass_levels]
    if not levels or levels != sorted(set(levels)):
        raise ParamError("mass_levels must be non-empty, distinct and sorted")

    plan = []
    for mi, mass in enumerate(levels):
        for r in range(runs_per_mass):
            s = run_seed(master_seed, mi, r)
            # speed comes from its own stream so the noise stream stays that of simulate_run
            factor = 1.0 + speed_jitter * np.random.default_rng([s, 1]).standard_normal()
            plan.append((mi * runs_per_mass + r, mass, s,
                         replace(vehicle, speed_m_s=vehicle.speed_m_s * max(factor, 0.5))))

    runs = []
    for start in range(0, len(plan), batch_size):
        chunk = plan[start:start + batch_size]
        resp = _simulate_batch(bridge, [p[3] for p in chunk], sample_rate_hz, substeps,
                               damage_masses_g=[p[1] for p in chunk])
        for r, (run_id, mass, s, _) in enumerate(chunk):
            clean = resp.accelerations[r, :, : resp.n_valid[r]]
            run = Run(run_id=run_id, mass_g=mass, direction="forward", sample_rate_hz=sample_rate_hz,
                      channels=_add_noise(clean, s, noise_rms, relative_noise))
            runs.append(resample_run(run, n_samples))
    return RunCollection(runs=tuple(runs), mass_levels=tuple(levels))


def slice_forward_runs(collection: RunCollection, mass_g: float) -> list[Run]:
    """Forward runs recorded at ``mass_g``, ordered by run id."""
    if float(mass_g) not in collection.mass_levels:
        raise KeyError(mass_g)
    runs = [r for r in collection.runs if r.mass_g == float(mass_g) and r.direction == "forward"]
    return sorted(runs, key=lambda r: r.run_id)


# --------------------------------------------------------------------------
# file exchange


def write_runs(collection: RunCollection, directory: str | Path) -> Path:
    """Write one CSV per run plus the manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = directory / MANIFEST_NAME
    with manifest.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for run in collection.runs:
            name = f"run_{run.run_id:05d}.csv"
            data = np.column_stack([run.times(), run.channels.T])
            np.savetxt(directory / name, data, delimiter=",", header=",".join(RUN_HEADER),
                       comments="", fmt="%.17g")
            w.writerow([run.run_id, repr(run.mass_g), run.direction, repr(run.sample_rate_hz), name])
    return manifest


def _read_run_file(path: Path, run_id: int) -> np.ndarray:
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError as exc:
        raise IoError(f"run {run_id}: missing file {path}") from exc
    if not rows or [c.strip() for c in rows[0]] != RUN_HEADER:
        raise FormatError(f"run {run_id}: bad header in {path.name}", run_id=run_id)
    body = [r for r in rows[1:] if r]
    for lineno, r in enumerate(body, start=2):
        if len(r) != len(RUN_HEADER):
            raise FormatError(f"run {run_id}: line {lineno} has {len(r) - 1} channels, expected "
                              f"{len(CHANNELS)}", run_id=run_id)
    try:
        data = np.array(body, dtype=float)
    except ValueError as exc:
        raise FormatError(f"run {run_id}: non-numeric sample in {path.name}", run_id=run_id) from exc
    if data.shape[0] < 2 or not np.all(np.isfinite(data)):
        raise FormatError(f"run {run_id}: too few or non-finite samples", run_id=run_id)
    return data[:, 1:].T


def load_runs(path: str | Path, schema: IngestSchema | None = None) -> RunCollection:
    """Read a directory written by :func:`write_runs` (or by a DAQ export
    following the same layout)."""
    schema = schema or IngestSchema()
    path = Path(path)
    manifest = path / schema.manifest_name
    if not path.is_dir() or not manifest.is_file():
        raise IoError(f"no manifest {schema.manifest_name} in {path}")
    with manifest.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != MANIFEST_HEADER:
            raise FormatError(f"manifest header must be {','.join(MANIFEST_HEADER)}")
        entries = list(reader)
    if not entries:
        raise IoError(f"manifest {manifest} lists no runs")

    allowed = None if schema.mass_levels is None else {float(m) for m in schema.mass_levels}
    runs = []
    for e in entries:
        try:
            run_id = int(e["run_id"])
        except (TypeError, ValueError) as exc:
            raise FormatError(f"bad run_id {e['run_id']!r}") from exc
        try:
            mass = float(e["mass_g"])
            rate = float(e["sample_rate_hz"])
        except (TypeError, ValueError) as exc:
            raise FormatError(f"run {run_id}: unreadable mass label or sample rate", run_id=run_id) from exc
        if not 0 <= mass <= schema.max_mass_g or (allowed is not None and mass not in allowed):
            raise FormatError(f"run {run_id}: unknown mass label {mass}", run_id=run_id)
        channels = _read_run_file(path / e["file"], run_id)
        run = Run(run_id=run_id, mass_g=mass, direction=e["direction"].strip(),
                  sample_rate_hz=rate, channels=channels)
        runs.append(resample_run(run, schema.n_samples))
    levels = tuple(sorted(allowed)) if allowed is not None else ()
    return RunCollection(runs=tuple(runs), mass_levels=levels)


def default_mass_levels(step_g: float = 10.0, count: int = 20) -> list[float]:
    """0, 10, ..., 190 g."""
    return [step_g * i for i in range(count)]
