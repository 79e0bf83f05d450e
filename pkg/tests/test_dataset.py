import math
from dataclasses import replace

import numpy as np
import pytest

import oracles

from indirect_shm.dataset import (CHANNELS, MANIFEST_NAME, BridgeParams, IngestSchema, Run, RunCollection,
                                  VehicleParams, _simulate_batch, build_collection, load_runs,
                                  default_mass_levels, resample_run, simulate_run, slice_forward_runs,
                                  write_runs)
from indirect_shm.errors import FormatError, IoError, ParamError


def rayleigh_f1(bridge: BridgeParams) -> float:
    return oracles.rayleigh_f1(bridge.span_m, bridge.flexural_rigidity_EI, bridge.linear_mass_density,
                               bridge.damage_mass_g * 1e-3, bridge.damage_position_fraction)


# -- domain types -------------------------------------------------------------

def test_run_rejects_three_channels():
    with pytest.raises(FormatError) as exc:
        Run(7, 0.0, "forward", 1000.0, np.zeros((3, 10)))
    assert exc.value.run_id == 7


def test_run_rejects_short_or_bad_labels():
    with pytest.raises(FormatError):
        Run(0, 0.0, "forward", 1000.0, np.zeros((4, 1)))
    with pytest.raises(ParamError):
        Run(0, 0.0, "forward", 0.0, np.zeros((4, 4)))
    with pytest.raises(ParamError):
        Run(0, -1.0, "forward", 100.0, np.zeros((4, 4)))


def test_run_channels_read_only():
    run = Run(0, 0.0, "forward", 100.0, np.zeros((4, 4)))
    with pytest.raises(ValueError):
        run.channels[0, 0] = 1.0


def test_collection_infers_levels_and_checks_membership():
    runs = [Run(i, m, "forward", 100.0, np.zeros((4, 4))) for i, m in enumerate([20.0, 0.0, 20.0])]
    assert RunCollection(runs).mass_levels == (0.0, 20.0)
    with pytest.raises(FormatError):
        RunCollection(runs, mass_levels=(0.0,))


@pytest.mark.parametrize("kw", [dict(span_m=0), dict(flexural_rigidity_EI=-1), dict(n_modes=0),
                                dict(modal_damping_ratio=1.0), dict(damage_position_fraction=1.0)])
def test_bridge_params_validation(kw):
    with pytest.raises(ParamError):
        BridgeParams(**kw)


def test_vehicle_params_validation():
    with pytest.raises(ParamError):
        VehicleParams(speed_m_s=0.0)
    with pytest.raises(ParamError):
        VehicleParams(suspension_stiffness=-5.0)


# -- beam model ----------------------------------------------------------------

def test_undamaged_modal_frequencies_are_analytic():
    b = BridgeParams()
    np.testing.assert_allclose(b.natural_frequencies_hz(), b.undamaged_frequencies_hz(), rtol=1e-12)
    L, EI, rho = b.span_m, b.flexural_rigidity_EI, b.linear_mass_density
    assert b.undamaged_frequencies_hz()[0] == pytest.approx((math.pi / L) ** 2 * math.sqrt(EI / rho) / (2 * math.pi))


@pytest.mark.parametrize("mass_g", [0.0, 50.0, 120.0, 190.0])
def test_first_frequency_matches_rayleigh_quotient(mass_g):
    b = BridgeParams(damage_mass_g=mass_g)
    assert b.natural_frequencies_hz()[0] == pytest.approx(rayleigh_f1(b), rel=0.01)


def test_rayleigh_oracle_off_center():
    b = BridgeParams(damage_mass_g=150.0, damage_position_fraction=0.3)
    assert b.natural_frequencies_hz()[0] == pytest.approx(rayleigh_f1(b), rel=0.01)


def test_first_frequency_strictly_decreases_with_damage():
    f1 = [BridgeParams(damage_mass_g=m).natural_frequencies_hz()[0] for m in default_mass_levels()]
    assert np.all(np.diff(f1) < 0)


def test_free_vibration_peak_at_first_frequency():
    b = BridgeParams()
    v = VehicleParams()
    rate = 500.0
    crossing = (b.span_m + v.axle_spacing_m) / v.speed_m_s
    resp = _simulate_batch(b, [v], rate, substeps=4, t_end=crossing + 4.0)
    tail = resp.modal[0, resp.n_valid[0]:, 0]
    tail = tail[: 2048] - tail[:2048].mean()
    spec = np.abs(np.fft.rfft(tail))
    freqs = np.fft.rfftfreq(tail.size, 1 / rate)
    peak = freqs[np.argmax(spec[1:]) + 1]
    assert abs(peak - b.undamaged_frequencies_hz()[0]) <= rate / tail.size
    assert np.all(np.isfinite(resp.accelerations))


# -- simulate_run ---------------------------------------------------------------

def test_simulate_run_is_deterministic():
    b, v = BridgeParams(damage_mass_g=60.0), VehicleParams()
    r1 = simulate_run(b, v, seed=11, noise_rms=0.05)
    r2 = simulate_run(b, v, seed=11, noise_rms=0.05)
    assert np.array_equal(r1.channels, r2.channels)
    r3 = simulate_run(b, v, seed=12, noise_rms=0.05)
    assert not np.array_equal(r1.channels, r3.channels)


def test_simulate_run_geometry_and_labels():
    b, v = BridgeParams(damage_mass_g=30.0), VehicleParams()
    run = simulate_run(b, v, seed=0)
    expected = int(round((b.span_m + v.axle_spacing_m) / v.speed_m_s * 1000)) + 1
    assert run.n_samples == expected
    assert run.mass_g == 30.0 and run.direction == "forward"
    assert np.all(np.isfinite(run.channels))


def test_axles_ride_rigid_ground_off_span():
    # wheel in contact with rigid ground off the deck: no axle acceleration
    b, v = BridgeParams(), VehicleParams()
    run = simulate_run(b, v, seed=0)
    t = run.times()
    rear = run.channel("ax_rear")
    front = run.channel("ax_front")
    assert np.all(rear[t < v.axle_spacing_m / v.speed_m_s - 1e-9] == 0.0)
    assert np.all(front[t > b.span_m / v.speed_m_s + 1e-9] == 0.0)
    assert np.abs(rear).max() > 0 and np.abs(front).max() > 0


def test_simulate_run_rejects_bad_speed():
    with pytest.raises(ParamError):
        simulate_run(BridgeParams(), replace(VehicleParams(), speed_m_s=-1.0), 0)


def test_noise_level_is_relative_to_signal():
    b, v = _short_setup()
    clean = simulate_run(b, v, seed=5).channels
    noisy = simulate_run(b, v, seed=5, noise_rms=0.02, relative_noise=True).channels
    ratio = np.sqrt(np.mean((noisy - clean) ** 2, axis=1)) / np.sqrt(np.mean(clean**2, axis=1))
    np.testing.assert_allclose(ratio, 0.02, rtol=0.1)


def test_resample_keeps_endpoints():
    run = Run(0, 0.0, "forward", 10.0, np.vstack([np.linspace(0, 1, 11)] * 4))
    out = resample_run(run, 21)
    assert out.n_samples == 21
    np.testing.assert_allclose(out.channels[0], np.linspace(0, 1, 21), atol=1e-15)
    assert out.sample_rate_hz == pytest.approx(20.0)


# -- build_collection -----------------------------------------------------------

def _short_setup():
    # short soft deck and a fast vehicle keep these runs near a hundred samples
    return (BridgeParams(span_m=0.3, flexural_rigidity_EI=10.0),
            VehicleParams(speed_m_s=3.0, axle_spacing_m=0.05))


def test_default_geometry_counts():
    b, v = _short_setup()
    coll = build_collection(b, v, default_mass_levels(), 31, master_seed=0, n_samples=64)
    assert len(coll) == 620
    assert coll.mass_levels == tuple(float(10 * i) for i in range(20))
    assert all(len(slice_forward_runs(coll, m)) == 31 for m in coll.mass_levels)
    assert len(slice_forward_runs(coll, 0.0)) == 31


def test_single_run_collection():
    b, v = _short_setup()
    coll = build_collection(b, v, [40.0], 1, master_seed=1, n_samples=32)
    assert len(coll) == 1 and coll.runs[0].mass_g == 40.0


def test_build_collection_rejects_zero_runs():
    b, v = _short_setup()
    with pytest.raises(ParamError):
        build_collection(b, v, [0.0], 0, master_seed=0)
    with pytest.raises(ParamError):
        build_collection(b, v, [10.0, 0.0], 1, master_seed=0)


def test_build_collection_deterministic_and_batch_independent():
    b, v = _short_setup()
    a = build_collection(b, v, [0.0, 100.0], 5, master_seed=9, n_samples=64)
    c = build_collection(b, v, [0.0, 100.0], 5, master_seed=9, n_samples=64, batch_size=3)
    for r1, r2 in zip(a.runs, c.runs):
        assert r1.run_id == r2.run_id and np.array_equal(r1.channels, r2.channels)
    d = build_collection(b, v, [0.0, 100.0], 5, master_seed=10, n_samples=64)
    assert not np.array_equal(a.runs[0].channels, d.runs[0].channels)


def test_within_mass_runs_differ(small_collection):
    group = slice_forward_runs(small_collection, 90.0)
    assert not np.array_equal(group[0].channels, group[1].channels)
    assert all(r.n_samples == 256 for r in small_collection.runs)


# -- slicing ----------------------------------------------------------------------

def test_slice_drops_backward_runs_and_orders_by_id():
    runs = [Run(5, 10.0, "forward", 100.0, np.zeros((4, 4))),
            Run(2, 10.0, "backward", 100.0, np.zeros((4, 4))),
            Run(1, 10.0, "forward", 100.0, np.ones((4, 4)))]
    coll = RunCollection(runs)
    out = slice_forward_runs(coll, 10.0)
    assert [r.run_id for r in out] == [1, 5]
    one = RunCollection(runs[:2])
    assert len(slice_forward_runs(one, 10.0)) == 1
    with pytest.raises(KeyError):
        slice_forward_runs(coll, 20.0)


# -- file exchange ----------------------------------------------------------------

def test_write_load_round_trip(tmp_path, small_collection):
    write_runs(small_collection, tmp_path)
    back = load_runs(tmp_path, IngestSchema(n_samples=None))
    assert back.mass_levels == small_collection.mass_levels
    for r1, r2 in zip(small_collection.runs, back.runs):
        assert r1.run_id == r2.run_id and r1.mass_g == r2.mass_g
        assert np.array_equal(r1.channels, r2.channels)


def test_load_resamples_to_common_length(tmp_path, small_collection):
    write_runs(small_collection, tmp_path)
    back = load_runs(tmp_path, IngestSchema(n_samples=128))
    assert {r.n_samples for r in back.runs} == {128}


def test_load_empty_directory(tmp_path):
    with pytest.raises(IoError):
        load_runs(tmp_path)
    with pytest.raises(IoError):
        load_runs(tmp_path / "missing")


def test_load_missing_run_file(tmp_path, small_collection):
    write_runs(small_collection, tmp_path)
    (tmp_path / "run_00000.csv").unlink()
    with pytest.raises(IoError):
        load_runs(tmp_path)


def test_load_three_channel_row_names_run(tmp_path, small_collection):
    write_runs(small_collection, tmp_path)
    path = tmp_path / "run_00005.csv"
    lines = path.read_text().splitlines()
    lines[3] = ",".join(lines[3].split(",")[:4])
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError) as exc:
        load_runs(tmp_path)
    assert exc.value.run_id == 5
    assert "run 5" in str(exc.value)


def test_load_unknown_mass_label(tmp_path, small_collection):
    write_runs(small_collection, tmp_path)
    manifest = tmp_path / MANIFEST_NAME
    text = manifest.read_text().splitlines()
    parts = text[1].split(",")
    parts[1] = "heavy"
    text[1] = ",".join(parts)
    manifest.write_text("\n".join(text) + "\n")
    with pytest.raises(FormatError):
        load_runs(tmp_path)


def test_load_mass_outside_configured_levels(tmp_path, small_collection):
    write_runs(small_collection, tmp_path)
    with pytest.raises(FormatError):
        load_runs(tmp_path, IngestSchema(mass_levels=[0.0, 90.0]))
    with pytest.raises(FormatError):
        load_runs(tmp_path, IngestSchema(max_mass_g=100.0))


def test_channel_order_constant():
    assert CHANNELS == ("ax_front", "ax_rear", "ch_front", "ch_rear")
