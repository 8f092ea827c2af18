"""End-to-end orchestration: simulate, extract, profile, classify, fuse.

One call regenerates the three analyses in a single output directory:
traffic matrix profiles with calibrated thresholds, packet-level
classification with a Random Forest and a linear SVM, and process-channel
matrix profiles, all fused into incidents and a static HTML report.
Every run is byte-reproducible from its flag set and seed.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import correlate as corr
from . import features, learn, modbus, mprofile, simulate
from .core import (Alert, BENIGN, PacketRecord, PreconditionError,
                   atomic_write_text, read_alerts, write_alerts, write_capture,
                   write_dataset, write_series)


@dataclass(frozen=True)
class PipelineOptions:
    seed: int = 0
    bin_width: float = 1.0
    net_window: int = 25
    proc_window: int = 250
    correlation_window: float = 30.0
    n_trees: int = 100
    svm_lambda: float = 1e-4
    svm_epochs: int = 50
    it_alerts_path: str | None = None
    run_process: bool = True


def _shift_records(records: list[PacketRecord], offset: float) -> list[PacketRecord]:
    return [PacketRecord(timestamp=r.timestamp + offset, src_ip=r.src_ip,
                         src_port=r.src_port, dst_ip=r.dst_ip, dst_port=r.dst_port,
                         frame=r.frame, label=r.label) for r in records]


def generate_capture(configs: list[simulate.NetScenarioConfig]) -> list[PacketRecord]:
    """Run each sub-config and concatenate on the time axis."""
    records: list[PacketRecord] = []
    offset = 0.0
    for cfg in configs:
        records.extend(_shift_records(simulate.run_net(cfg), offset))
        offset += math.ceil(cfg.duration)
    return records


def _classifier_alerts(records, dataset, skipped, model, gap: float = 5.0) -> list[Alert]:
    """Group packets flagged by the classifier into time-interval alerts."""
    pred = model.predict(dataset.X)
    kept = records
    if skipped:  # undecodable records were dropped from the dataset, re-map
        kept = []
        for r in records:
            try:
                modbus.decode(r.frame)
            except Exception:
                continue
            kept.append(r)
    flagged_times = [r.timestamp for r, p in zip(kept, pred) if p == 1]
    alerts = []
    if not flagged_times:
        return alerts
    start = prev = flagged_times[0]
    count = 1
    for t in flagged_times[1:]:
        if t - prev > gap:
            alerts.append(Alert(source="packet_classifier", start_time=start,
                                end_time=prev, score=float(count),
                                detail=f"{count} packets flagged"))
            start, count = t, 0
        prev = t
        count += 1
    alerts.append(Alert(source="packet_classifier", start_time=start, end_time=prev,
                        score=float(count), detail=f"{count} packets flagged"))
    return alerts


def run_pipeline(out_dir: str, configs: list[simulate.NetScenarioConfig],
                 opts: PipelineOptions, metadata: dict) -> dict:
    """Execute the full pipeline into out_dir; returns a result summary."""
    os.makedirs(out_dir, exist_ok=True)
    for sub in ("features", "profiles", "models"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    p = lambda *parts: os.path.join(out_dir, *parts)
    summary: dict = {"calibration": {}, "eval": {}}
    alert_streams: list[list[Alert]] = []
    channel_views: list[corr.ChannelView] = []

    # --- OT traffic -------------------------------------------------------
    records = generate_capture(configs)
    write_capture(records, p("capture.jsonl"))
    binned = features.bin_traffic(records, opts.bin_width)
    for name, series in binned.channels.items():
        write_series(series, p("features", f"{name}.csv"))

    mp_cfg = mprofile.ProfileConfig(m=opts.net_window)
    for name in ("packet_count", "ip_pair_count", "port_pair_count"):
        series = binned.channels[name]
        profile = mprofile.matrix_profile_fast(series, mp_cfg)
        mprofile.write_profile(profile, p("profiles", f"net_{name}.csv"))
        threshold = None
        try:
            cal = mprofile.calibrate_threshold(profile, series.labels)
            threshold = cal.threshold
            summary["calibration"][name] = {
                "threshold": cal.threshold,
                "false_positive_bins": cal.false_positive_bins,
                "attack_intervals": [list(iv) for iv in cal.attack_intervals],
                "n_windows": cal.n_windows,
                "n_attack_windows": cal.n_attack_windows,
            }
            alert_streams.append(mprofile.detect(profile, cal.threshold, source="ot_traffic"))
        except PreconditionError:
            summary["calibration"][name] = None  # nothing labeled to calibrate against
        channel_views.append(corr.ChannelView(name=name, series=series,
                                              profile=profile, threshold=threshold))

    # --- packet classifiers ----------------------------------------------
    dataset, skipped = features.packet_features(records)
    write_dataset(dataset, p("dataset.csv"))
    summary["skipped_records"] = skipped
    if len(np.unique(dataset.y)) == 2:
        train, test = learn.split(dataset, 0.7, seed=opts.seed)
        forest = learn.train_forest(train, n_trees=opts.n_trees, seed=opts.seed)
        svm = learn.train_svm(train, lam=opts.svm_lambda, epochs=opts.svm_epochs,
                              seed=opts.seed)
        learn.save_model(forest, p("models", "forest.json"))
        learn.save_model(svm, p("models", "svm.json"))
        summary["eval"]["forest"] = learn.evaluate(forest, test).to_dict()
        summary["eval"]["svm"] = learn.evaluate(svm, test).to_dict()
        alert_streams.append(_classifier_alerts(records, dataset, skipped, forest))

    # --- process channels -------------------------------------------------
    if opts.run_process:
        proc_cfg = simulate.ProcScenarioConfig(seed=opts.seed)
        flow, level = simulate.run_process(proc_cfg)
        write_series(flow, p("process_flow.csv"))
        write_series(level, p("process_level.csv"))
        proc_mp_cfg = mprofile.ProfileConfig(m=opts.proc_window)
        for series in (flow, level):
            profile = mprofile.matrix_profile_fast(series, proc_mp_cfg)
            mprofile.write_profile(profile, p("profiles", f"process_{series.channel_name}.csv"))
            threshold = None
            try:
                cal = mprofile.calibrate_threshold(profile, series.labels)
                threshold = cal.threshold
                summary["calibration"][f"process_{series.channel_name}"] = {
                    "threshold": cal.threshold,
                    "false_positive_bins": cal.false_positive_bins,
                    "attack_intervals": [list(iv) for iv in cal.attack_intervals],
                    "n_windows": cal.n_windows,
                    "n_attack_windows": cal.n_attack_windows,
                }
                alert_streams.append(mprofile.detect(profile, cal.threshold, source="process"))
            except PreconditionError:
                summary["calibration"][f"process_{series.channel_name}"] = None
            channel_views.append(corr.ChannelView(name=f"process {series.channel_name}",
                                                  series=series, profile=profile,
                                                  threshold=threshold))

    # --- external IT alerts and fusion ------------------------------------
    if opts.it_alerts_path:
        alert_streams.append(read_alerts(opts.it_alerts_path))
    for stream in alert_streams:
        stream.sort(key=lambda a: a.start_time)
    incidents = corr.correlate(alert_streams, window=opts.correlation_window)
    atomic_write_text(p("incidents.json"), corr.incidents_to_json(incidents))
    all_alerts = [a for stream in alert_streams for a in stream]
    all_alerts.sort(key=lambda a: (a.start_time, a.end_time, a.source, a.detail))
    write_alerts(all_alerts, p("alerts.jsonl"))

    corr.render_report(incidents, channel_views, metadata, p("report.html"))
    summary["n_incidents"] = len(incidents)
    summary["n_records"] = len(records)
    atomic_write_text(p("metadata.json"), json.dumps(metadata, indent=2, sort_keys=True) + "\n")
    atomic_write_text(p("summary.json"), json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
