"""Tests for the OT network capture and batch-process simulators."""

import io

import numpy as np
import pytest

from otids import modbus
from otids.core import BENIGN, InputError, validate_capture, write_capture
from otids.features import bin_traffic
from otids.simulate import (
    CNC_IP,
    KNOWN_MTU_IPS,
    NetScenarioConfig,
    ProcScenarioConfig,
    SCANNER_IP,
    preset,
    run_net,
    run_process,
)


def polling_only(duration=60.0, n_rtus=6, seed=0):
    return NetScenarioConfig(n_rtus=n_rtus, n_mtus=1, duration=duration,
                             human_rate=0.0, attacks=(), seed=seed)


# ---------------------------------------------------------------------------
# Network scenarios

def test_polling_only_record_count():
    records = run_net(polling_only())
    assert len(records) == 6 * 60 * 2  # 720: request + response per RTU per second
    assert all(r.label == BENIGN for r in records)


def test_polling_plus_human_all_benign():
    cfg = NetScenarioConfig(n_rtus=6, n_mtus=1, duration=60.0, human_rate=0.05,
                            attacks=(), seed=1)
    records = run_net(cfg)
    assert len(records) >= 720
    assert all(r.label == BENIGN for r in records)


def test_run_net_deterministic():
    cfg = NetScenarioConfig(n_rtus=4, n_mtus=2, duration=45.0, human_rate=0.05,
                            attacks=(("scan", 10.0),), seed=9)
    assert run_net(cfg) == run_net(cfg)


def test_run_net_byte_identical_capture(tmp_path):
    cfg = NetScenarioConfig(n_rtus=3, n_mtus=1, duration=30.0, attacks=(), seed=4)
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_capture(run_net(cfg), a)
    write_capture(run_net(cfg), b)
    assert a.read_bytes() == b.read_bytes()


def test_output_sorted_and_valid():
    cfg = NetScenarioConfig(n_rtus=6, n_mtus=1, duration=120.0, human_rate=0.05,
                            attacks=(("scan", 20.0), ("upload", 40.0),
                                     ("fake_command", 100.0)), seed=2)
    validate_capture(run_net(cfg))  # checks ordering and per-record invariants


def test_scan_attack_template():
    cfg = NetScenarioConfig(n_rtus=6, n_mtus=1, duration=60.0,
                            attacks=(("scan", 30.0),), seed=0)
    records = run_net(cfg)
    scans = [r for r in records if r.label == "scan"]
    assert len(scans) >= 6 * 8
    assert all(30.0 <= r.timestamp <= 40.0 for r in scans)
    assert all(r.src_ip == SCANNER_IP for r in scans)
    # each probe is a fresh IP- or port-pair
    pairs = {(r.src_ip, r.src_port, r.dst_ip, r.dst_port) for r in scans}
    assert len(pairs) == len(scans)
    assert all(modbus.decode(r.frame).function_code == 43 for r in scans)


def test_upload_attack_template():
    cfg = NetScenarioConfig(n_rtus=6, n_mtus=1, duration=180.0,
                            attacks=(("upload", 60.0),), seed=0)
    records = run_net(cfg)
    uploads = [r for r in records if r.label == "upload"]
    writes = [r for r in uploads
              if modbus.decode(r.frame).function_code == 21]
    assert len(writes) >= 200
    span = max(r.timestamp for r in uploads) - min(r.timestamp for r in uploads)
    assert 30.0 <= span <= 60.0
    assert all(128 <= len(modbus.decode(r.frame).data) <= 252 for r in uploads)
    assert any(r.src_ip in KNOWN_MTU_IPS for r in uploads)  # compromised MTU
    assert any(CNC_IP in (r.src_ip, r.dst_ip) for r in uploads)


def test_fake_command_attack_template():
    cfg = NetScenarioConfig(n_rtus=6, n_mtus=1, duration=60.0,
                            attacks=(("fake_command", 45.0),), seed=3)
    records = run_net(cfg)
    fakes = [r for r in records if r.label == "fake_command"]
    assert 1 <= len(fakes) <= 3
    assert all(modbus.decode(r.frame).function_code == 5 for r in fakes)
    assert all(r.src_ip not in KNOWN_MTU_IPS for r in fakes)


def test_label_soundness():
    cfg = NetScenarioConfig(n_rtus=6, n_mtus=1, duration=90.0, human_rate=0.05,
                            attacks=(("scan", 30.0), ("fake_command", 60.0)), seed=5)
    labels = {r.label for r in run_net(cfg)}
    assert labels == {BENIGN, "scan", "fake_command"}


def test_scan_increases_ip_pair_count():
    cfg = NetScenarioConfig(n_rtus=6, n_mtus=1, duration=120.0,
                            attacks=(("scan", 50.0),), seed=0)
    binned = bin_traffic(run_net(cfg), 1.0)
    pairs = binned.channels["ip_pair_count"].values
    attack = binned.bin_labels == "attack"
    assert pairs[attack].max() > pairs[~attack].max()


def test_upload_packet_count_spike():
    cfg = NetScenarioConfig(n_rtus=6, n_mtus=1, duration=300.0, human_rate=0.02,
                            attacks=(("upload", 100.0),), seed=0)
    binned = bin_traffic(run_net(cfg), 1.0)
    counts = binned.channels["packet_count"].values
    attack = binned.bin_labels == "attack"
    assert counts[attack].max() >= 3.0 * counts[~attack].mean()


@pytest.mark.parametrize("kwargs", [
    {"n_rtus": 2},
    {"n_rtus": 13},
    {"n_mtus": 0},
    {"n_mtus": 3},
    {"attacks": (("scan", 60.0),)},       # start beyond duration
    {"attacks": (("scan", -1.0),)},
    {"attacks": (("wormhole", 5.0),)},
    {"attacks": (("upload", 5.0), ("upload", 20.0))},  # same-kind overlap
    {"duration": 0.0},
    {"human_rate": -0.1},
])
def test_invalid_net_config(kwargs):
    base = dict(n_rtus=6, n_mtus=1, duration=60.0)
    base.update(kwargs)
    with pytest.raises(InputError):
        run_net(NetScenarioConfig(**base))


# ---------------------------------------------------------------------------
# Process scenarios

def test_process_level_stays_clamped():
    cfg = ProcScenarioConfig(noise_sigma=0.0, attack_samples=(), seed=0)
    flow, level = run_process(cfg)
    assert len(flow) == len(level) == cfg.n_samples
    assert np.all(level.values >= 0.0)
    assert np.all(level.values <= cfg.tank_capacity)
    assert np.all(flow.labels == BENIGN)


def test_process_cycle_recurs():
    cfg = ProcScenarioConfig(noise_sigma=0.0, attack_samples=(), seed=0)
    _, level = run_process(cfg)
    # fill -> hold -> drain -> idle repeats, so the level must return near
    # its drain setpoint many times over 8000 samples
    near_bottom = np.sum(level.values <= 0.06 * cfg.tank_capacity)
    assert near_bottom > 100


def test_process_attack_labels():
    cfg = ProcScenarioConfig(attack_samples=(4000, 6500), seed=0)
    flow, level = run_process(cfg)
    for series in (flow, level):
        attack = np.asarray(series.labels) == "attack"
        assert np.all(attack[4000:4050])
        assert np.all(attack[6500:6550])
    assert list(flow.labels) == list(level.labels)


def test_process_deterministic():
    cfg = ProcScenarioConfig(seed=11)
    f1, l1 = run_process(cfg)
    f2, l2 = run_process(cfg)
    np.testing.assert_array_equal(f1.values, f2.values)
    np.testing.assert_array_equal(l1.values, l2.values)


@pytest.mark.parametrize("kwargs", [
    {"n_samples": 5},
    {"fill_rate": 0.0},
    {"drain_rate": -1.0},
    {"noise_sigma": 0.5},
    {"attack_samples": (9000,)},
    {"tank_capacity": 0.0},
])
def test_invalid_process_config(kwargs):
    with pytest.raises(InputError):
        run_process(ProcScenarioConfig(**kwargs))


# ---------------------------------------------------------------------------
# Presets

def test_preset_ds1():
    (cfg,) = preset("ds1")
    assert cfg.n_rtus == 6
    assert all(kind == "upload" for kind, _ in cfg.attacks)


def test_preset_ds2():
    (cfg,) = preset("ds2")
    assert cfg.n_rtus == 6
    assert any(kind == "fake_command" for kind, _ in cfg.attacks)
    assert cfg.human_rate > 0


def test_preset_ds3():
    configs = preset("ds3")
    assert len(configs) == 2
    assert sum(1 for c in configs if not c.attacks) == 1


def test_preset_unknown():
    with pytest.raises(InputError):
        preset("ds9")


def test_preset_seed_threads_through():
    assert preset("ds1", seed=5)[0].seed == 5
