"""Tests for alert fusion into incidents and the static HTML report."""

import numpy as np
import pytest

from otids.core import Alert, InputError, TimeSeries, make_rng
from otids.correlate import (
    ChannelView,
    correlate,
    incidents_from_json,
    incidents_to_json,
    render_report,
)
from otids.mprofile import MatrixProfile, ProfileConfig


def alert(start, end, source="ot_traffic", score=1.0, detail=""):
    return Alert(source=source, start_time=start, end_time=end, score=score,
                 detail=detail)


def random_streams(rng, n_alerts):
    sources = ("ot_traffic", "process", "packet_classifier", "it_external")
    streams = [[] for _ in sources]
    for _ in range(n_alerts):
        s = int(rng.integers(len(sources)))
        start = float(rng.uniform(0, 500))
        streams[s].append(alert(start, start + float(rng.uniform(0, 30)),
                                source=sources[s]))
    for stream in streams:
        stream.sort(key=lambda a: a.start_time)
    return streams


# ---------------------------------------------------------------------------
# correlate

def test_two_source_example():
    incidents = correlate([[alert(100, 110, "ot_traffic")],
                           [alert(105, 120, "process")]], window=30)
    assert len(incidents) == 1
    assert incidents[0].severity == 2
    assert incidents[0].start_time == 100 and incidents[0].end_time == 120


def test_single_alert_single_incident():
    incidents = correlate([[alert(5, 6)]], window=30)
    assert len(incidents) == 1
    assert incidents[0].severity == 1


def test_gap_beyond_dilation_splits():
    incidents = correlate([[alert(0, 1), alert(100, 101)]], window=10)
    assert len(incidents) == 2


def test_gap_within_dilation_merges():
    # dilated by window/2 each: [0, 1+5] and [6-5, 7] touch at 6
    incidents = correlate([[alert(0, 1), alert(6, 7)]], window=10)
    assert len(incidents) == 1


def test_transitive_closure_chains():
    # a-b overlap and b-c overlap, but a-c do not: still one incident
    incidents = correlate([[alert(0, 10), alert(9, 20), alert(19, 30)]], window=0)
    assert len(incidents) == 1


def test_empty_input():
    assert correlate([], window=30) == []
    assert correlate([[], []], window=30) == []


def test_negative_window_rejected():
    with pytest.raises(InputError):
        correlate([], window=-1)


def test_incidents_ordered_by_start_time():
    rng = make_rng(0)
    incidents = correlate(random_streams(rng, 40), window=5)
    starts = [inc.start_time for inc in incidents]
    assert starts == sorted(starts)


def test_partition_property():
    rng = make_rng(1)
    for _ in range(50):
        streams = random_streams(rng, int(rng.integers(1, 30)))
        total = sum(len(s) for s in streams)
        incidents = correlate(streams, window=float(rng.uniform(0, 60)))
        assert sum(len(inc.alerts) for inc in incidents) == total


def test_window_monotonicity():
    rng = make_rng(2)
    for _ in range(30):
        streams = random_streams(rng, int(rng.integers(1, 25)))
        smaller = correlate(streams, window=5.0)
        larger = correlate(streams, window=50.0)
        assert len(larger) <= len(smaller)


def test_severity_is_distinct_source_count():
    rng = make_rng(3)
    for _ in range(30):
        streams = random_streams(rng, int(rng.integers(1, 25)))
        for inc in correlate(streams, window=20.0):
            assert inc.severity == len({a.source for a in inc.alerts})
            assert inc.start_time == min(a.start_time for a in inc.alerts)
            assert inc.end_time == max(a.end_time for a in inc.alerts)


def test_incidents_json_round_trip():
    incidents = correlate([[alert(100, 110, "ot_traffic", detail="spike")],
                           [alert(105, 120, "process")]], window=30)
    back = incidents_from_json(incidents_to_json(incidents))
    assert back == incidents


def test_incidents_from_json_rejects_garbage():
    with pytest.raises(InputError):
        incidents_from_json('[{"id": 0}]')


# ---------------------------------------------------------------------------
# render_report

def mk_view(name="packet_count", n=60):
    rng = make_rng(4)
    values = rng.random(n) * 10
    series = TimeSeries(start_time=0.0, bin_width=1.0, values=values,
                        channel_name=name)
    profile = MatrixProfile(values=rng.random(n - 7),
                            indices=np.zeros(n - 7, dtype=np.int64),
                            config=ProfileConfig(m=8), channel_name=name)
    return ChannelView(name=name, series=series, profile=profile, threshold=0.5)


def test_report_empty_incidents(tmp_path):
    path = tmp_path / "report.html"
    render_report([], [mk_view()], {"seed": 0}, path)
    text = path.read_text()
    assert "0 incidents" in text
    assert "<svg" in text
    assert "http" not in text  # self-contained, nothing external


def test_report_one_incident_shades_each_chart(tmp_path):
    incidents = correlate([[alert(30, 40)]], window=0)
    path = tmp_path / "report.html"
    render_report(incidents, [mk_view("a"), mk_view("b")], {}, path)
    text = path.read_text()
    assert text.count("<rect") == 2  # one shaded span per chart
    assert "severity" in text


def test_report_deterministic(tmp_path):
    incidents = correlate([[alert(10, 20), alert(100, 110, "process")]], window=5)
    a, b = tmp_path / "a.html", tmp_path / "b.html"
    render_report(incidents, [mk_view()], {"seed": 7, "flags": {"x": 1}}, a)
    render_report(incidents, [mk_view()], {"seed": 7, "flags": {"x": 1}}, b)
    assert a.read_bytes() == b.read_bytes()


def test_report_escapes_metadata(tmp_path):
    path = tmp_path / "report.html"
    render_report([], [], {"note": "<script>alert(1)</script>"}, path)
    assert "<script>" not in path.read_text()
