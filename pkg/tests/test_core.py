"""Tests for shared domain types, seeded RNG, and dataset file I/O."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otids.core import (
    Alert,
    InputError,
    LabeledDataset,
    PacketRecord,
    TimeSeries,
    atomic_write_text,
    make_rng,
    read_alerts,
    read_capture,
    read_dataset,
    read_series,
    spawn_rng,
    validate_capture,
    write_alerts,
    write_capture,
    write_dataset,
    write_series,
)


def mk_record(ts=0.5, src="10.0.0.2", sport=5000, dst="10.0.0.10", dport=502,
              frame=bytes.fromhex("000100000006110300 6b0003".replace(" ", "")),
              label="benign"):
    return PacketRecord(timestamp=ts, src_ip=src, src_port=sport, dst_ip=dst,
                        dst_port=dport, frame=frame, label=label)


# ---------------------------------------------------------------------------
# RNG

def test_equal_seeds_equal_streams():
    a = make_rng(42).random(10_000)
    b = make_rng(42).random(10_000)
    np.testing.assert_array_equal(a, b)


def test_different_seeds_differ():
    assert not np.array_equal(make_rng(0).random(100), make_rng(1).random(100))


def test_spawn_rng_substreams_are_independent_and_deterministic():
    a = spawn_rng(7, 0).random(100)
    b = spawn_rng(7, 1).random(100)
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, spawn_rng(7, 0).random(100))


def test_seed_out_of_range_rejected():
    with pytest.raises(InputError):
        make_rng(-1)
    with pytest.raises(InputError):
        make_rng(2**64)


# ---------------------------------------------------------------------------
# Validation

def test_valid_record_passes():
    mk_record().validate()


@pytest.mark.parametrize("kwargs", [
    {"ts": -0.1},
    {"src": "999.0.0.1"},
    {"src": "10.0.0"},
    {"sport": -1},
    {"dport": 70000},
    {"frame": b"\x00" * 7},
    {"label": "mystery"},
])
def test_invalid_record_rejected(kwargs):
    with pytest.raises(InputError):
        mk_record(**kwargs).validate()


def test_unsorted_capture_rejected():
    with pytest.raises(InputError):
        validate_capture([mk_record(ts=2.0), mk_record(ts=1.0)])


def test_alert_validation():
    Alert(source="ot_traffic", start_time=1.0, end_time=2.0, score=3.0).validate()
    with pytest.raises(InputError):
        Alert(source="nope", start_time=1.0, end_time=2.0, score=3.0).validate()
    with pytest.raises(InputError):
        Alert(source="process", start_time=2.0, end_time=1.0, score=3.0).validate()
    with pytest.raises(InputError):
        Alert(source="process", start_time=1.0, end_time=2.0, score=-1.0).validate()


def test_timeseries_invariants():
    with pytest.raises(InputError):
        TimeSeries(start_time=0.0, bin_width=0.0, values=[1.0])
    with pytest.raises(InputError):
        TimeSeries(start_time=0.0, bin_width=1.0, values=[])
    with pytest.raises(InputError):
        TimeSeries(start_time=0.0, bin_width=1.0, values=[1.0, 2.0],
                   labels=np.asarray(["benign"], dtype=object))


def test_labeled_dataset_invariants():
    with pytest.raises(InputError):
        LabeledDataset(feature_names=("a",), X=[[1.0, 2.0]], y=[0])
    with pytest.raises(InputError):
        LabeledDataset(feature_names=("a",), X=[[np.inf]], y=[0])
    with pytest.raises(InputError):
        LabeledDataset(feature_names=("a",), X=[[1.0]], y=[2])


# ---------------------------------------------------------------------------
# Capture JSONL

def test_empty_capture_round_trip(tmp_path):
    path = tmp_path / "cap.jsonl"
    write_capture([], path)
    assert path.read_text() == ""
    assert read_capture(path) == []


def test_single_record_round_trip(tmp_path):
    path = tmp_path / "cap.jsonl"
    rec = mk_record()
    write_capture([rec], path)
    assert read_capture(path) == [rec]


def test_capture_round_trip_many(tmp_path):
    rng = make_rng(3)
    records = []
    t = 0.0
    for _ in range(200):
        t += float(rng.random())
        records.append(mk_record(ts=t, sport=int(rng.integers(1024, 65536)),
                                 frame=bytes([0, 1, 0, 0, 0, 2, 0, 3]) + bytes(rng.integers(0, 256, size=int(rng.integers(0, 20))).tolist())))
    # fix up MBAP length so frames stay internally consistent
    records = [
        PacketRecord(timestamp=r.timestamp, src_ip=r.src_ip, src_port=r.src_port,
                     dst_ip=r.dst_ip, dst_port=r.dst_port,
                     frame=r.frame[:4] + (len(r.frame) - 6).to_bytes(2, "big") + r.frame[6:],
                     label=r.label)
        for r in records
    ]
    path = tmp_path / "cap.jsonl"
    write_capture(records, path)
    assert read_capture(path) == records


def test_read_capture_reports_line_number(tmp_path):
    path = tmp_path / "cap.jsonl"
    good = ('{"ts": 0.5, "src_ip": "10.0.0.2", "src_port": 5000, "dst_ip": "10.0.0.10",'
            ' "dst_port": 502, "frame_hex": "0001000000061103006b0003", "label": "benign"}')
    bad = good.replace("0001000000061103006b0003", "00010000")
    path.write_text(good + "\n" + bad + "\n")
    with pytest.raises(InputError, match="line 2"):
        read_capture(path)


def test_write_capture_rejects_unsorted_before_writing(tmp_path):
    path = tmp_path / "cap.jsonl"
    with pytest.raises(InputError):
        write_capture([mk_record(ts=2.0), mk_record(ts=1.0)], path)
    assert not path.exists()


def test_frame_hex_is_lowercase(tmp_path):
    path = tmp_path / "cap.jsonl"
    write_capture([mk_record()], path)
    text = path.read_text()
    assert "0001000000061103006b0003" in text


# ---------------------------------------------------------------------------
# Series CSV

def test_series_direct_read(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("t,value\n0,5\n1,7\n2,5\n")
    series = read_series(path)
    assert series.bin_width == 1.0
    np.testing.assert_array_equal(series.values, [5.0, 7.0, 5.0])
    assert series.labels is None


def test_series_non_uniform_spacing(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("t,value\n0,5\n1,7\n2.5,5\n")
    with pytest.raises(InputError, match="non-uniform"):
        read_series(path)


def test_series_non_numeric_cell(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("t,value\n0,5\n1,seven\n")
    with pytest.raises(InputError, match="line 3"):
        read_series(path)


def test_series_header_mandatory(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("")
    with pytest.raises(InputError):
        read_series(path)
    path.write_text("time,val\n0,5\n")
    with pytest.raises(InputError):
        read_series(path)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), with_labels=st.booleans())
def test_series_round_trip(tmp_path_factory, seed, with_labels):
    rng = make_rng(seed)
    n = int(rng.integers(1, 50))
    labels = None
    if with_labels:
        labels = np.asarray(rng.choice(["benign", "attack"], size=n), dtype=object)
    series = TimeSeries(start_time=float(rng.uniform(-5, 5)),
                        bin_width=float(rng.uniform(0.1, 10)),
                        values=rng.normal(size=n), channel_name="x", labels=labels)
    path = tmp_path_factory.mktemp("series") / "s.csv"
    write_series(series, path)
    back = read_series(path, channel_name="x")
    assert abs(back.start_time - series.start_time) < 1e-9
    np.testing.assert_allclose(back.values, series.values, atol=1e-9)
    if with_labels:
        assert list(back.labels) == list(series.labels)
    if n > 1:
        assert abs(back.bin_width - series.bin_width) < 1e-9


# ---------------------------------------------------------------------------
# Alerts JSONL and dataset CSV

def test_alerts_round_trip(tmp_path):
    alerts = [
        Alert(source="ot_traffic", start_time=10.0, end_time=20.0, score=5.5, detail="a"),
        Alert(source="it_external", start_time=12.5, end_time=12.5, score=0.0),
    ]
    path = tmp_path / "alerts.jsonl"
    write_alerts(alerts, path)
    assert read_alerts(path) == alerts


def test_dataset_round_trip(tmp_path):
    data = LabeledDataset(feature_names=("f1", "f2"),
                          X=[[1.5, 2.0], [0.25, -3.0]], y=[0, 1])
    path = tmp_path / "data.csv"
    write_dataset(data, path)
    back = read_dataset(path)
    assert back.feature_names == data.feature_names
    np.testing.assert_array_equal(back.X, data.X)
    np.testing.assert_array_equal(back.y, data.y)


def test_read_dataset_requires_label_column(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("f1,f2\n1,2\n")
    with pytest.raises(InputError):
        read_dataset(path)


# ---------------------------------------------------------------------------
# Atomic writes

def test_atomic_write_leaves_no_temp_file(tmp_path):
    path = tmp_path / "out.txt"
    atomic_write_text(path, "hello\n")
    assert path.read_text() == "hello\n"
    assert list(tmp_path.iterdir()) == [path]
