"""Deterministic generation of labeled OT captures and process data.

Network scenarios model a small Modbus/TCP loop: master terminal units (MTUs)
poll remote terminal units (RTUs) with ReadHoldingRegisters each period,
operators issue Poisson-timed ad-hoc reads/writes, and three attack templates
(network scan, file-upload burst with a command-and-control channel, spoofed
single-coil writes) inject labeled records. The process scenario is a
repeating fill/hold/drain batch cycle over a water tank, with disruption
windows that either block the inflow or force it on past the setpoint.

Everything is fully determined by the configured seed. The address plan is
fixed so IP/port-pair features are reproducible:

    RTUs      10.0.0.10+i : 502      MTUs     10.0.0.2+j : ephemeral
    scanner   10.0.0.200             C&C host 10.0.0.250
    spoofed command sources          10.0.0.100+s
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import modbus
from .core import BENIGN, InputError, PacketRecord, TimeSeries, make_rng, spawn_rng

RTU_PORT = 502
KNOWN_MTU_IPS = ("10.0.0.2", "10.0.0.3")
SCANNER_IP = "10.0.0.200"
CNC_IP = "10.0.0.250"
SCAN_PORTS = (502, 80, 102, 135, 443, 1502, 2404, 44818)

ATTACK_KINDS = ("scan", "upload", "fake_command")
# Nominal maximum span of each template, used for same-kind overlap checks.
_ATTACK_SPAN = {"scan": 10.0, "upload": 60.0, "fake_command": 5.0}

# Process cycle constants (fractions of tank capacity / fixed sample counts).
FILL_SETPOINT = 0.90
DRAIN_SETPOINT = 0.05
HOLD_SAMPLES = 60
IDLE_SAMPLES = 60


def rtu_ip(i: int) -> str:
    return f"10.0.0.{10 + i}"


def mtu_ip(j: int) -> str:
    return f"10.0.0.{2 + j}"


def spoof_ip(s: int) -> str:
    return f"10.0.0.{100 + s}"


@dataclass(frozen=True)
class NetScenarioConfig:
    n_rtus: int
    n_mtus: int
    duration: float
    poll_period: float = 1.0
    human_rate: float = 0.02
    attacks: tuple[tuple[str, float], ...] = ()
    seed: int = 0

    def validate(self) -> None:
        if not (3 <= self.n_rtus <= 12):
            raise InputError(f"n_rtus must be in 3..12, got {self.n_rtus}")
        if not (1 <= self.n_mtus <= 2):
            raise InputError(f"n_mtus must be in 1..2, got {self.n_mtus}")
        if self.duration <= 0 or self.poll_period <= 0:
            raise InputError("duration and poll_period must be > 0")
        if self.human_rate < 0:
            raise InputError("human_rate must be >= 0")
        by_kind: dict[str, list[float]] = {}
        for kind, start in self.attacks:
            if kind not in ATTACK_KINDS:
                raise InputError(f"unknown attack kind: {kind!r}")
            if not (0 <= start < self.duration):
                raise InputError(f"attack start {start} outside [0, {self.duration})")
            by_kind.setdefault(kind, []).append(start)
        for kind, starts in by_kind.items():
            starts.sort()
            span = _ATTACK_SPAN[kind]
            for a, b in zip(starts, starts[1:]):
                if b < a + span:
                    raise InputError(f"overlapping {kind} attacks at {a} and {b}")


@dataclass(frozen=True)
class ProcScenarioConfig:
    n_samples: int = 8000
    sample_period: float = 1.0
    tank_capacity: float = 1000.0
    fill_rate: float = 5.0
    drain_rate: float = 5.0
    noise_sigma: float = 0.02
    attack_samples: tuple[int, ...] = (4000, 6500)
    seed: int = 0

    def validate(self) -> None:
        if self.n_samples < 10:
            raise InputError("n_samples must be >= 10")
        if self.sample_period <= 0 or self.tank_capacity <= 0:
            raise InputError("sample_period and tank_capacity must be > 0")
        if self.fill_rate <= 0 or self.drain_rate <= 0:
            raise InputError("fill and drain rates must be > 0")
        if not (0 <= self.noise_sigma < 0.2):
            raise InputError(f"noise_sigma must be in [0, 0.2), got {self.noise_sigma}")
        for s in self.attack_samples:
            if not (0 <= s < self.n_samples):
                raise InputError(f"attack sample {s} outside 0..{self.n_samples - 1}")


def _read_request_data() -> bytes:
    return struct.pack(">HH", 0, 8)  # start address 0, 8 registers


def _read_response_data() -> bytes:
    return bytes([16]) + bytes(16)


def _record(t, src_ip, src_port, dst_ip, dst_port, frame, label=BENIGN) -> PacketRecord:
    return PacketRecord(
        timestamp=float(t), src_ip=src_ip, src_port=int(src_port),
        dst_ip=dst_ip, dst_port=int(dst_port), frame=modbus.encode(frame), label=label,
    )


def _bin_safe(t: float) -> float:
    """Nudge a timestamp away from the very end of its 1 s bin so a paired
    response 0.5 ms later lands in the same bin."""
    base = math.floor(t)
    return base + min(t - base, 0.998)


def run_net(config: NetScenarioConfig) -> list[PacketRecord]:
    """Generate one labeled capture; fully determined by config.seed."""
    config.validate()
    records: list[PacketRecord] = []

    # Periodic polling: every MTU reads every RTU once per period.
    rng_poll = spawn_rng(config.seed, 1)
    txn = 0
    n_cycles = math.ceil(config.duration / config.poll_period - 1e-9)
    for k in range(n_cycles):
        t0 = k * config.poll_period
        if t0 >= config.duration:
            break
        for j in range(config.n_mtus):
            for i in range(config.n_rtus):
                jitter = rng_poll.uniform(0.0, 0.008) * config.poll_period
                treq = t0 + jitter
                sport = 49152 + j * 16 + i
                req = modbus.ModbusFrame(txn & 0xFFFF, i + 1, 3, _read_request_data())
                resp = modbus.ModbusFrame(txn & 0xFFFF, i + 1, 3, _read_response_data())
                records.append(_record(treq, mtu_ip(j), sport, rtu_ip(i), RTU_PORT, req))
                records.append(_record(treq + 0.0005, rtu_ip(i), RTU_PORT, mtu_ip(j), sport, resp))
                txn += 1

    # Human interaction: Poisson-timed ad-hoc reads/writes from operator hosts.
    rng_human = spawn_rng(config.seed, 2)
    if config.human_rate > 0:
        t = rng_human.exponential(1.0 / config.human_rate)
        event = 0
        while t < config.duration:
            j = int(rng_human.integers(config.n_mtus))
            i = int(rng_human.integers(config.n_rtus))
            write = rng_human.random() < 0.3
            sport = 51000 + (event % 4000)
            treq = _bin_safe(t)
            if write:
                data = struct.pack(">HHB", 0, 2, 4) + bytes(4)
                req = modbus.ModbusFrame(txn & 0xFFFF, i + 1, 16, data)
                resp = modbus.ModbusFrame(txn & 0xFFFF, i + 1, 16, struct.pack(">HH", 0, 2))
            else:
                req = modbus.ModbusFrame(txn & 0xFFFF, i + 1, 3, _read_request_data())
                resp = modbus.ModbusFrame(txn & 0xFFFF, i + 1, 3, _read_response_data())
            records.append(_record(treq, mtu_ip(j), sport, rtu_ip(i), RTU_PORT, req))
            records.append(_record(treq + 0.0005, rtu_ip(i), RTU_PORT, mtu_ip(j), sport, resp))
            txn += 1
            event += 1
            t += rng_human.exponential(1.0 / config.human_rate)

    # Attacks; each template gets its own RNG stream so adding one attack
    # never perturbs another.
    fake_pair_cursor = 0
    for a_idx, (kind, start) in enumerate(config.attacks):
        rng = spawn_rng(config.seed, 10 + a_idx)
        if kind == "scan":
            records.extend(_scan_records(config, start, rng))
        elif kind == "upload":
            records.extend(_upload_records(config, start, rng))
        else:
            new, fake_pair_cursor = _fake_command_records(config, start, rng, fake_pair_cursor)
            records.extend(new)

    records.sort(key=lambda r: r.timestamp)
    return records


def _scan_records(config: NetScenarioConfig, start: float, rng) -> list[PacketRecord]:
    """New source sweeps every RTU address over several ports (fc 43)."""
    out = []
    n_probes = config.n_rtus * len(SCAN_PORTS)
    probe = 0
    for i in range(config.n_rtus):
        for port in SCAN_PORTS:
            t = start + 8.0 * probe / n_probes + rng.uniform(0.0, 0.01)
            frame = modbus.ModbusFrame(probe & 0xFFFF, 0, 43, b"\x0e\x01\x00")
            out.append(_record(t, SCANNER_IP, 40000 + probe, rtu_ip(i), port, frame, "scan"))
            probe += 1
    return out


def _upload_records(config: NetScenarioConfig, start: float, rng) -> list[PacketRecord]:
    """File-upload burst (fc 21) from a compromised MTU plus a C&C channel."""
    out = []
    dur = float(rng.uniform(35.0, 55.0))
    target = int(rng.integers(config.n_rtus))
    # Frames go out in 1 s file-chunk bursts so upload bins clearly exceed
    # the benign per-bin packet rate.
    n_frames = 205
    chunk = 30
    starts = [start + dur * k / math.ceil(n_frames / chunk)
              for k in range(math.ceil(n_frames / chunk))]
    times = np.sort(np.concatenate([
        cs + np.sort(rng.uniform(0.0, 0.9, size=min(chunk, n_frames - i * chunk)))
        for i, cs in enumerate(starts)]))
    for n, t in enumerate(times):
        plen = int(rng.integers(128, 253))
        payload = rng.integers(0, 256, size=plen, dtype=np.uint8).tobytes()
        frame = modbus.ModbusFrame(n & 0xFFFF, target + 1, 21, payload)
        out.append(_record(float(t), mtu_ip(0), 52000, rtu_ip(target), RTU_PORT, frame, "upload"))
    # C&C heartbeat/exfil: one frame per second to a host outside the loop.
    for n in range(int(dur)):
        t = _bin_safe(start + 0.5 + n)
        plen = int(rng.integers(128, 253))
        payload = rng.integers(0, 256, size=plen, dtype=np.uint8).tobytes()
        frame = modbus.ModbusFrame(n & 0xFFFF, 0, 65, payload)
        if n % 2 == 0:
            out.append(_record(t, mtu_ip(0), 52001, CNC_IP, RTU_PORT, frame, "upload"))
        else:
            out.append(_record(t, CNC_IP, RTU_PORT, mtu_ip(0), 52001, frame, "upload"))
    return out


def _fake_command_records(config: NetScenarioConfig, start: float, rng,
                          pair_cursor: int) -> tuple[list[PacketRecord], int]:
    """1-3 spoofed WriteSingleCoil frames, each from a fresh address pair."""
    out = []
    n = int(rng.integers(1, 4))
    for i in range(n):
        s_idx, r_idx = divmod(pair_cursor, config.n_rtus)
        pair_cursor += 1
        t = start + 0.4 * i + rng.uniform(0.0, 0.05)
        data = struct.pack(">H", int(rng.integers(0, 16))) + b"\xff\x00"
        frame = modbus.ModbusFrame(int(rng.integers(0, 65536)), r_idx + 1, 5, data)
        out.append(_record(t, spoof_ip(s_idx), 53000 + pair_cursor, rtu_ip(r_idx),
                           RTU_PORT, frame, "fake_command"))
    return out, pair_cursor


# ---------------------------------------------------------------------------
# Process scenario

def run_process(config: ProcScenarioConfig) -> tuple[TimeSeries, TimeSeries]:
    """Water flow and tank level of a repeating batch process, with labeled
    disruption windows at the configured attack samples."""
    config.validate()
    rng = make_rng(config.seed)
    n = config.n_samples
    dt = config.sample_period
    cap = config.tank_capacity
    high = FILL_SETPOINT * cap
    low = DRAIN_SETPOINT * cap

    # Disruption windows: widths grow per ordinal so two disruptions never
    # look like a recurring motif to the profile.
    windows = []
    for ordinal, s in enumerate(sorted(config.attack_samples)):
        width = 60 + 30 * ordinal
        windows.append((s, min(n, s + width)))

    flow = np.zeros(n)
    level = np.zeros(n)
    labels = np.asarray([BENIGN] * n, dtype=object)

    state = "fill"
    timer = 0
    lvl = low
    attack_mode: str | None = None
    attack_end = -1
    disrupted = False  # labels stay attack until the cycle re-synchronizes
    for i in range(n):
        nominal = config.fill_rate if state == "fill" else 0.0
        for s, e in windows:
            if i == s:
                attack_mode = "block" if nominal > 0 else "force"
                attack_end = e
                disrupted = True
        in_attack = attack_mode is not None and i < attack_end
        if not in_attack:
            attack_mode = None

        if in_attack and attack_mode == "block":
            f = 0.0
        elif in_attack and attack_mode == "force":
            f = config.fill_rate + rng.normal(0.0, config.noise_sigma * config.fill_rate)
        elif nominal > 0:
            f = nominal + rng.normal(0.0, config.noise_sigma * config.fill_rate)
        else:
            f = 0.0
        f = max(f, 0.0)

        drain = config.drain_rate if state == "drain" else 0.0
        lvl = min(cap, max(0.0, lvl + (f - drain) * dt))
        flow[i] = f
        level[i] = lvl
        if disrupted:
            labels[i] = "attack"

        if in_attack:
            continue  # controller state frozen while the disruption holds

        if state == "fill":
            if lvl >= high:
                state, timer = "hold", HOLD_SAMPLES
        elif state == "hold":
            timer -= 1
            if timer <= 0:
                state = "drain"
        elif state == "drain":
            if lvl <= low:
                state, timer = "idle", IDLE_SAMPLES
        else:
            timer -= 1
            if timer <= 0:
                state = "fill"
                disrupted = False  # next batch starts clean

    mk = lambda name, vals: TimeSeries(
        start_time=0.0, bin_width=dt, values=vals, channel_name=name, labels=labels.copy())
    return mk("flow", flow), mk("level", level)


# ---------------------------------------------------------------------------
# Presets standing in for the analyzed datasets

PRESET_NAMES = ("ds1", "ds2", "ds3")


def preset(name: str, seed: int = 0) -> list[NetScenarioConfig]:
    """Named scenario recipes. ds3 is a concatenation recipe and yields two
    sub-configs (one with attacks, one without); the others yield one."""
    if name == "ds1":
        return [NetScenarioConfig(
            n_rtus=6, n_mtus=1, duration=900.0, human_rate=0.02,
            attacks=(("upload", 250.0), ("upload", 600.0)), seed=seed)]
    if name == "ds2":
        return [NetScenarioConfig(
            n_rtus=6, n_mtus=1, duration=900.0, human_rate=0.05,
            attacks=tuple(("fake_command", 50.0 + 20.0 * k) for k in range(40)),
            seed=seed)]
    if name == "ds3":
        return [
            NetScenarioConfig(
                n_rtus=6, n_mtus=1, duration=450.0, human_rate=0.02,
                attacks=(("upload", 120.0), ("fake_command", 300.0)), seed=seed),
            NetScenarioConfig(
                n_rtus=6, n_mtus=1, duration=450.0, human_rate=0.02,
                attacks=(), seed=seed + 1),
        ]
    raise InputError(f"unknown preset: {name!r} (expected one of {PRESET_NAMES})")
