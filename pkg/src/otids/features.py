"""Turn captures into binned channels and per-packet feature vectors.

The binned channels are the traffic features used by the profile engine:
packets per bin plus distinct IP- and port-pair counts per bin (pair counts
reset each bin). Pairs are unordered endpoint sets, so request and response
of one exchange count once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import modbus
from .core import BENIGN, InputError, LabeledDataset, PacketRecord, TimeSeries
from .simulate import KNOWN_MTU_IPS

CHANNELS = ("packet_count", "ip_pair_count", "port_pair_count")

FEATURE_NAMES = (
    "function_code",
    "frame_length",
    "is_new_ip_pair",
    "is_new_port_pair",
    "inter_arrival_time",
    "src_is_known_mtu",
    "payload_size",
)


@dataclass(frozen=True, eq=False)
class BinnedFeatures:
    channels: dict[str, TimeSeries]
    bin_width: float
    bin_labels: np.ndarray  # per-bin "benign"/"attack"


def _ip_pair(rec: PacketRecord) -> frozenset:
    return frozenset((rec.src_ip, rec.dst_ip))


def _port_pair(rec: PacketRecord) -> frozenset:
    return frozenset(((rec.src_ip, rec.src_port), (rec.dst_ip, rec.dst_port)))


def bin_traffic(records: list[PacketRecord], bin_width: float = 1.0) -> BinnedFeatures:
    """Per-bin packet count and distinct IP-/port-pair counts; bin i covers
    [i*w, (i+1)*w). A bin is labeled attack iff any packet in it is."""
    if not records:
        raise InputError("cannot bin an empty record list")
    if bin_width <= 0:
        raise InputError("bin_width must be > 0")
    prev = -math.inf
    for rec in records:
        if rec.timestamp < prev:
            raise InputError("records must be sorted by timestamp")
        prev = rec.timestamp

    n_bins = int(records[-1].timestamp // bin_width) + 1
    counts = np.zeros(n_bins)
    ip_sets: list[set] = [set() for _ in range(n_bins)]
    port_sets: list[set] = [set() for _ in range(n_bins)]
    labels = np.asarray([BENIGN] * n_bins, dtype=object)
    for rec in records:
        b = int(rec.timestamp // bin_width)
        counts[b] += 1
        ip_sets[b].add(_ip_pair(rec))
        port_sets[b].add(_port_pair(rec))
        if rec.label != BENIGN:
            labels[b] = "attack"

    def mk(name, vals):
        return TimeSeries(start_time=0.0, bin_width=bin_width, values=vals,
                          channel_name=name, labels=labels.copy())

    return BinnedFeatures(
        channels={
            "packet_count": mk("packet_count", counts),
            "ip_pair_count": mk("ip_pair_count", np.asarray([len(s) for s in ip_sets], dtype=float)),
            "port_pair_count": mk("port_pair_count", np.asarray([len(s) for s in port_sets], dtype=float)),
        },
        bin_width=bin_width,
        bin_labels=labels,
    )


def packet_features(records: list[PacketRecord]) -> tuple[LabeledDataset, int]:
    """Per-packet feature vectors with binary labels; undecodable frames are
    skipped and counted. Returns (dataset, n_skipped)."""
    seen_ip_pairs: set = set()
    seen_port_pairs: set = set()
    last_seen_by_src: dict[str, float] = {}
    rows: list[list[float]] = []
    y: list[int] = []
    skipped = 0
    for rec in records:
        try:
            frame = modbus.decode(rec.frame)
        except InputError:
            skipped += 1
            continue
        ip_pair = _ip_pair(rec)
        port_pair = _port_pair(rec)
        new_ip = ip_pair not in seen_ip_pairs
        new_port = port_pair not in seen_port_pairs
        seen_ip_pairs.add(ip_pair)
        seen_port_pairs.add(port_pair)
        prev_t = last_seen_by_src.get(rec.src_ip)
        inter = 0.0 if prev_t is None else rec.timestamp - prev_t
        last_seen_by_src[rec.src_ip] = rec.timestamp
        rows.append([
            float(frame.function_code),
            float(len(rec.frame)),
            1.0 if new_ip else 0.0,
            1.0 if new_port else 0.0,
            inter,
            1.0 if rec.src_ip in KNOWN_MTU_IPS else 0.0,
            float(len(frame.data)),
        ])
        y.append(0 if rec.label == BENIGN else 1)
    if not rows:
        raise InputError("no decodable records")
    return LabeledDataset(feature_names=FEATURE_NAMES, X=np.asarray(rows), y=np.asarray(y)), skipped
