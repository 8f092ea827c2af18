"""Fuse alert streams into incidents and render a static operator report.

Two alerts land in the same incident when their intervals, each dilated by
half the correlation window, overlap (transitive closure). Incident severity
is the number of distinct alert sources, so an attack seen by several
detectors surfaces as one high-severity incident. The report is one
self-contained HTML file with inline SVG charts; no network access needed.
"""

from __future__ import annotations

import html
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import Alert, InputError, TimeSeries, atomic_write_text
from .mprofile import MatrixProfile


@dataclass(frozen=True)
class Incident:
    id: int
    alerts: tuple[Alert, ...]
    start_time: float
    end_time: float
    sources: frozenset[str]

    @property
    def severity(self) -> int:
        return len(self.sources)


def correlate(streams: list[list[Alert]], window: float = 30.0) -> list[Incident]:
    """Merge alert streams into incidents; empty input gives empty output."""
    if window < 0:
        raise InputError("window must be >= 0")
    merged: list[Alert] = []
    for stream in streams:
        for a in stream:
            a.validate()
            merged.append(a)
    if not merged:
        return []
    half = window / 2.0
    merged.sort(key=lambda a: (a.start_time, a.end_time, a.source, a.detail))
    groups: list[list[Alert]] = [[merged[0]]]
    reach = merged[0].end_time + half
    for a in merged[1:]:
        if a.start_time - half <= reach:
            groups[-1].append(a)
        else:
            groups.append([a])
            reach = a.end_time + half
        reach = max(reach, a.end_time + half)
    incidents = []
    for i, grp in enumerate(groups):
        incidents.append(Incident(
            id=i,
            alerts=tuple(grp),
            start_time=min(a.start_time for a in grp),
            end_time=max(a.end_time for a in grp),
            sources=frozenset(a.source for a in grp),
        ))
    return incidents


def incidents_to_json(incidents: list[Incident]) -> str:
    out = []
    for inc in incidents:
        out.append({
            "id": inc.id,
            "start_time": inc.start_time,
            "end_time": inc.end_time,
            "severity": inc.severity,
            "sources": sorted(inc.sources),
            "alerts": [{"source": a.source, "start": a.start_time, "end": a.end_time,
                        "score": a.score, "detail": a.detail} for a in inc.alerts],
        })
    return json.dumps(out, indent=2, sort_keys=True) + "\n"


def incidents_from_json(text: str) -> list[Incident]:
    try:
        raw = json.loads(text)
        out = []
        for obj in raw:
            alerts = tuple(Alert(source=a["source"], start_time=float(a["start"]),
                                 end_time=float(a["end"]), score=float(a["score"]),
                                 detail=str(a.get("detail", ""))) for a in obj["alerts"])
            out.append(Incident(id=int(obj["id"]), alerts=alerts,
                                start_time=float(obj["start_time"]),
                                end_time=float(obj["end_time"]),
                                sources=frozenset(obj["sources"])))
        return out
    except (KeyError, ValueError, TypeError) as exc:
        raise InputError(f"malformed incidents JSON: {exc}") from exc


# ---------------------------------------------------------------------------
# Static HTML report

@dataclass(frozen=True)
class ChannelView:
    """One chart in the report: a series with optional profile overlay."""
    name: str
    series: TimeSeries
    profile: MatrixProfile | None = None
    threshold: float | None = None


_SVG_W, _SVG_H = 900, 160


def _polyline(xs, ys, color: str, width: str = "1") -> str:
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    return f'<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{pts}"/>'


def _scale(values: np.ndarray, n_total: int) -> tuple[np.ndarray, np.ndarray]:
    """Map (index, value) to SVG coordinates, downsampled to <= 1200 points."""
    stride = max(1, math.ceil(len(values) / 1200))
    idx = np.arange(0, len(values), stride)
    vals = np.asarray(values, dtype=float)[idx]
    vals = np.where(np.isfinite(vals), vals, 0.0)
    lo, hi = float(np.min(vals)), float(np.max(vals))
    span = (hi - lo) or 1.0
    xs = idx / max(n_total - 1, 1) * _SVG_W
    ys = _SVG_H - 10 - (vals - lo) / span * (_SVG_H - 20)
    return xs, ys


def _chart(view: ChannelView, incidents: list[Incident]) -> str:
    s = view.series
    n = len(s.values)
    t_end = s.start_time + n * s.bin_width
    parts = [f'<svg viewBox="0 0 {_SVG_W} {_SVG_H}" width="{_SVG_W}" height="{_SVG_H}" '
             f'style="background:#fafafa;border:1px solid #ccc">']
    for inc in incidents:
        x0 = (inc.start_time - s.start_time) / max(t_end - s.start_time, 1e-12) * _SVG_W
        x1 = (inc.end_time - s.start_time) / max(t_end - s.start_time, 1e-12) * _SVG_W
        x0, x1 = max(x0, 0.0), min(x1, float(_SVG_W))
        if x1 > 0 and x0 < _SVG_W:
            parts.append(f'<rect x="{x0:.2f}" y="0" width="{max(x1 - x0, 1.0):.2f}" '
                         f'height="{_SVG_H}" fill="#e33" opacity="0.18"/>')
    xs, ys = _scale(s.values, n)
    parts.append(_polyline(xs, ys, "#555"))
    if view.profile is not None:
        # Profile values plotted on their own vertical scale, offset by the
        # window start so the x axis stays in series bins.
        pvals = view.profile.values
        pxs, pys = _scale(pvals, n)
        parts.append(_polyline(pxs, pys, "#06c"))
        if view.threshold is not None and np.any(np.isfinite(pvals)):
            finite = pvals[np.isfinite(pvals)]
            lo, hi = float(np.min(finite)), float(np.max(finite))
            span = (hi - lo) or 1.0
            y = _SVG_H - 10 - (view.threshold - lo) / span * (_SVG_H - 20)
            if 0 <= y <= _SVG_H:
                parts.append(f'<line x1="0" y1="{y:.2f}" x2="{_SVG_W}" y2="{y:.2f}" '
                             f'stroke="#000" stroke-dasharray="6,4"/>')
    parts.append("</svg>")
    return "".join(parts)


def render_report(incidents: list[Incident], channels: list[ChannelView],
                  metadata: dict, path) -> None:
    """Write a deterministic, self-contained HTML report: incident table,
    per-channel charts with profile overlays and shaded incident spans, and
    the run's seeds/configuration."""
    rows = []
    for inc in incidents:
        details = "<br>".join(
            html.escape(f"[{a.source}] {a.start_time:.1f}-{a.end_time:.1f} "
                        f"score={a.score:.3g} {a.detail}") for a in inc.alerts)
        rows.append(
            f"<tr><td>{inc.id}</td><td>{inc.start_time:.1f} &ndash; {inc.end_time:.1f}</td>"
            f"<td>{inc.severity}</td><td>{html.escape(', '.join(sorted(inc.sources)))}</td>"
            f"<td>{details}</td></tr>")
    table = ("<table><tr><th>id</th><th>time span (s)</th><th>severity</th>"
             "<th>sources</th><th>alerts</th></tr>" + "".join(rows) + "</table>"
             ) if rows else "<p>0 incidents</p>"

    charts = []
    for view in channels:
        charts.append(f"<h3>{html.escape(view.name)}</h3>" + _chart(view, incidents))

    meta = html.escape(json.dumps(metadata, indent=2, sort_keys=True))
    doc = f"""<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>OT intrusion detection report</title>
<style>
body {{ font-family: sans-serif; margin: 2em; color: #222; }}
table {{ border-collapse: collapse; }}
td, th {{ border: 1px solid #999; padding: 4px 8px; text-align: left; }}
pre {{ background: #f4f4f4; padding: 1em; overflow-x: auto; }}
</style>
</head>
<body>
<h1>OT intrusion detection report</h1>
<h2>Incidents ({len(incidents)})</h2>
{table}
<h2>Channels</h2>
<p>Grey: channel values. Blue: matrix profile (own scale). Dashed: calibrated
threshold. Shaded: incident spans.</p>
{"".join(charts)}
<h2>Run configuration</h2>
<pre>{meta}</pre>
</body>
</html>
"""
    atomic_write_text(path, doc)
