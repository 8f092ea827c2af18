"""Shared domain types, seeded randomness, and dataset file I/O.

All timestamps are relative seconds from capture start. Captures are stored
as JSONL (one exchange per line, frame bytes in lowercase hex), numeric
channels as CSV with a mandatory ``t,value[,label]`` header.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

BENIGN = "benign"
ATTACK_LABELS = ("scan", "upload", "fake_command", "process_disruption")
PACKET_LABELS = (BENIGN,) + ATTACK_LABELS

ALERT_SOURCES = ("ot_traffic", "process", "packet_classifier", "it_external")


class InputError(ValueError):
    """Malformed or invalid external input (files, wire bytes, config values)."""


class PreconditionError(ValueError):
    """A computation's precondition is not met (too short, single-class, ...)."""


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic generator (PCG64); equal seeds give equal streams."""
    if not (0 <= int(seed) < 2**64):
        raise InputError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(int(seed)))


def spawn_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent substream for (seed, stream); used for per-worker RNGs."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))))


def _check_ip(ip: str) -> None:
    parts = ip.split(".")
    if len(parts) != 4 or not all(p.isdigit() and 0 <= int(p) <= 255 for p in parts):
        raise InputError(f"not a dotted-quad address: {ip!r}")


@dataclass(frozen=True)
class PacketRecord:
    """One timestamped, labeled Modbus/TCP exchange unit in a capture."""

    timestamp: float
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    frame: bytes
    label: str = BENIGN

    def validate(self) -> None:
        if not np.isfinite(self.timestamp) or self.timestamp < 0:
            raise InputError(f"timestamp must be non-negative, got {self.timestamp}")
        _check_ip(self.src_ip)
        _check_ip(self.dst_ip)
        for port in (self.src_port, self.dst_port):
            if not (0 <= port <= 65535):
                raise InputError(f"port out of range: {port}")
        if len(self.frame) < 8:
            raise InputError(f"frame too short: {len(self.frame)} bytes (minimum 8)")
        if self.label not in PACKET_LABELS:
            raise InputError(f"unknown label: {self.label!r}")


def validate_capture(records: Sequence[PacketRecord]) -> None:
    prev = -np.inf
    for i, rec in enumerate(records):
        rec.validate()
        if rec.timestamp < prev:
            raise InputError(f"record {i}: timestamps not sorted ({rec.timestamp} < {prev})")
        prev = rec.timestamp


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """A uniformly binned numeric channel, optionally with per-bin labels."""

    start_time: float
    bin_width: float
    values: np.ndarray
    channel_name: str = ""
    labels: np.ndarray | None = None  # per-bin strings, "benign"/"attack"

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.labels is not None:
            object.__setattr__(self, "labels", np.asarray(self.labels, dtype=object))
        self.validate()

    def validate(self) -> None:
        if self.bin_width <= 0:
            raise InputError(f"bin_width must be > 0, got {self.bin_width}")
        if self.values.ndim != 1 or len(self.values) == 0:
            raise InputError("values must be a non-empty 1-D sequence")
        if self.labels is not None and len(self.labels) != len(self.values):
            raise InputError("labels must match values in length")

    def __len__(self) -> int:
        return len(self.values)

    def time_of(self, idx: int) -> float:
        return self.start_time + idx * self.bin_width


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Per-row feature vectors with binary labels (0 benign, 1 attack)."""

    feature_names: tuple[str, ...]
    X: np.ndarray  # (n, d) float64
    y: np.ndarray  # (n,) int, values in {0, 1}

    def __post_init__(self):
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "X", np.asarray(self.X, dtype=np.float64))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=np.int64))
        if self.X.ndim != 2 or self.X.shape[1] != len(self.feature_names):
            raise InputError("feature matrix width must match feature_names")
        if len(self.y) != len(self.X):
            raise InputError("labels must match rows in length")
        if not np.all(np.isfinite(self.X)):
            raise InputError("feature values must be finite")
        if not np.all((self.y == 0) | (self.y == 1)):
            raise InputError("labels must be 0 or 1")

    def __len__(self) -> int:
        return len(self.y)


@dataclass(frozen=True)
class Alert:
    """Detector output: a scored time interval from one source."""

    source: str
    start_time: float
    end_time: float
    score: float
    detail: str = ""

    def validate(self) -> None:
        if self.source not in ALERT_SOURCES:
            raise InputError(f"unknown alert source: {self.source!r}")
        if self.start_time > self.end_time:
            raise InputError("alert start_time must be <= end_time")
        if not np.isfinite(self.score) or self.score < 0:
            raise InputError("alert score must be finite and >= 0")


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write-to-temp plus rename; never leaves a partial file behind."""
    path = os.fspath(path)
    tmp = path + ".tmp"
    try:
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


# ---------------------------------------------------------------------------
# Capture JSONL

def write_capture(records: Sequence[PacketRecord], path: str | os.PathLike) -> None:
    validate_capture(records)
    lines = []
    for rec in records:
        lines.append(json.dumps({
            "ts": rec.timestamp,
            "src_ip": rec.src_ip,
            "src_port": rec.src_port,
            "dst_ip": rec.dst_ip,
            "dst_port": rec.dst_port,
            "frame_hex": rec.frame.hex(),
            "label": rec.label,
        }, sort_keys=True))
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def read_capture(path: str | os.PathLike) -> list[PacketRecord]:
    records: list[PacketRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                rec = PacketRecord(
                    timestamp=float(obj["ts"]),
                    src_ip=obj["src_ip"],
                    src_port=int(obj["src_port"]),
                    dst_ip=obj["dst_ip"],
                    dst_port=int(obj["dst_port"]),
                    frame=bytes.fromhex(obj["frame_hex"]),
                    label=obj["label"],
                )
                rec.validate()
            except (KeyError, ValueError, TypeError) as exc:
                raise InputError(f"{path}: line {lineno}: {exc}") from exc
            records.append(rec)
    try:
        validate_capture(records)
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from exc
    return records


# ---------------------------------------------------------------------------
# Series CSV

def write_series(series: TimeSeries, path: str | os.PathLike) -> None:
    series.validate()
    rows = []
    with_labels = series.labels is not None
    rows.append("t,value,label" if with_labels else "t,value")
    for i, v in enumerate(series.values):
        t = float(series.start_time + i * series.bin_width)
        if with_labels:
            rows.append(f"{t!r},{float(v)!r},{series.labels[i]}")
        else:
            rows.append(f"{t!r},{float(v)!r}")
    atomic_write_text(path, "".join(r + "\n" for r in rows))


def read_series(path: str | os.PathLike, channel_name: str = "") -> TimeSeries:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file, header row is mandatory")
        if header[:2] != ["t", "value"]:
            raise InputError(f"{path}: header must start with 't,value', got {header}")
        with_labels = len(header) >= 3 and header[2] == "label"
        times: list[float] = []
        values: list[float] = []
        labels: list[str] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                times.append(float(row[0]))
                values.append(float(row[1]))
            except (ValueError, IndexError) as exc:
                raise InputError(f"{path}: line {lineno}: non-numeric cell ({exc})") from exc
            if with_labels:
                labels.append(row[2])
    if not values:
        raise InputError(f"{path}: no data rows")
    t = np.asarray(times)
    if len(t) > 1:
        diffs = np.diff(t)
        width = float(diffs[0])
        if width <= 0 or np.any(np.abs(diffs - width) > 1e-6 * max(abs(width), 1.0)):
            raise InputError(f"{path}: non-uniform time spacing")
    else:
        width = 1.0
    return TimeSeries(
        start_time=float(t[0]),
        bin_width=width,
        values=np.asarray(values),
        channel_name=channel_name,
        labels=np.asarray(labels, dtype=object) if with_labels else None,
    )


# ---------------------------------------------------------------------------
# Alert JSONL / dataset CSV

def write_alerts(alerts: Iterable[Alert], path: str | os.PathLike) -> None:
    lines = []
    for a in alerts:
        a.validate()
        lines.append(json.dumps({
            "source": a.source,
            "start": a.start_time,
            "end": a.end_time,
            "score": a.score,
            "detail": a.detail,
        }, sort_keys=True))
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def read_alerts(path: str | os.PathLike) -> list[Alert]:
    alerts: list[Alert] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                alert = Alert(
                    source=obj["source"],
                    start_time=float(obj["start"]),
                    end_time=float(obj["end"]),
                    score=float(obj["score"]),
                    detail=str(obj.get("detail", "")),
                )
                alert.validate()
            except (KeyError, ValueError, TypeError) as exc:
                raise InputError(f"{path}: line {lineno}: {exc}") from exc
            alerts.append(alert)
    return alerts


def write_dataset(data: LabeledDataset, path: str | os.PathLike) -> None:
    rows = [",".join(data.feature_names) + ",label"]
    for vec, lab in zip(data.X, data.y):
        rows.append(",".join(repr(float(v)) for v in vec) + f",{int(lab)}")
    atomic_write_text(path, "".join(r + "\n" for r in rows))


def read_dataset(path: str | os.PathLike) -> LabeledDataset:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file")
        if not header or header[-1] != "label":
            raise InputError(f"{path}: final column must be 'label'")
        names = tuple(header[:-1])
        X: list[list[float]] = []
        y: list[int] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                X.append([float(v) for v in row[:-1]])
                y.append(int(row[-1]))
            except ValueError as exc:
                raise InputError(f"{path}: line {lineno}: {exc}") from exc
    if not X:
        raise InputError(f"{path}: no data rows")
    return LabeledDataset(feature_names=names, X=np.asarray(X), y=np.asarray(y))
