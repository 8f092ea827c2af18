"""Command-line entry point wiring the whole pipeline.

Exit codes: 0 success, 1 usage error, 2 input/parse error, 3 computation
precondition failure. All errors go to stderr with an ``error:`` prefix.
Omitting --seed selects the recorded default 0, never wall-clock entropy.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import correlate as corr
from . import features, learn, mprofile, pipeline, simulate
from .core import (InputError, PreconditionError, atomic_write_text,
                   read_alerts, read_capture, read_dataset, read_series,
                   write_alerts, write_capture, write_dataset, write_series)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_PRECONDITION = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors, not argparse's 2
        raise _UsageError(message)


def _parse_attacks(specs: list[str]) -> tuple[tuple[str, float], ...]:
    out = []
    for spec in specs:
        if "@" not in spec:
            raise _UsageError(f"attack must be kind@time, got {spec!r}")
        kind, _, t = spec.partition("@")
        try:
            out.append((kind, float(t)))
        except ValueError:
            raise _UsageError(f"bad attack time in {spec!r}")
    return tuple(out)


def build_parser() -> _Parser:
    parser = _Parser(prog="otids", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate labeled captures or process data")
    sim_sub = sim.add_subparsers(dest="scenario", required=True)

    net = sim_sub.add_parser("net", help="OT network capture")
    net.add_argument("--rtus", type=int, default=6)
    net.add_argument("--mtus", type=int, default=1)
    net.add_argument("--duration", type=float, default=600.0)
    net.add_argument("--poll-period", type=float, default=1.0)
    net.add_argument("--human-rate", type=float, default=0.02)
    net.add_argument("--attack", action="append", default=[], metavar="KIND@TIME")
    net.add_argument("--seed", type=int, default=0)
    net.add_argument("--out", required=True)

    proc = sim_sub.add_parser("process", help="two-channel batch process data")
    proc.add_argument("--samples", type=int, default=8000)
    proc.add_argument("--sample-period", type=float, default=1.0)
    proc.add_argument("--capacity", type=float, default=1000.0)
    proc.add_argument("--fill-rate", type=float, default=5.0)
    proc.add_argument("--drain-rate", type=float, default=5.0)
    proc.add_argument("--noise", type=float, default=0.02)
    proc.add_argument("--attack-sample", action="append", type=int, default=None)
    proc.add_argument("--seed", type=int, default=0)
    proc.add_argument("--out-flow", required=True)
    proc.add_argument("--out-level", required=True)

    feat = sub.add_parser("features", help="bin a capture and extract packet features")
    feat.add_argument("--in", dest="inp", required=True)
    feat.add_argument("--bin-width", type=float, default=1.0)
    feat.add_argument("--out-dir", required=True)

    mp = sub.add_parser("mp", help="matrix profile of a series CSV")
    mp.add_argument("--in", dest="inp", required=True)
    mp.add_argument("--window", type=int, required=True)
    mp.add_argument("--column", default="", help="channel name recorded in outputs")
    mp.add_argument("--exclusion", type=int, default=0)
    mp.add_argument("--brute", action="store_true")
    mp.add_argument("--jobs", type=int, default=1)
    mp.add_argument("--out", required=True)

    cal = sub.add_parser("calibrate", help="minimum threshold recognising all attacks")
    cal.add_argument("--series", required=True, help="labeled series CSV")
    cal.add_argument("--profile", required=True)
    cal.add_argument("--out", required=True)

    det = sub.add_parser("detect", help="threshold a profile into alerts")
    det.add_argument("--series", required=True)
    det.add_argument("--profile", required=True)
    det.add_argument("--threshold", type=float, required=True)
    det.add_argument("--source", default="ot_traffic")
    det.add_argument("--out", required=True)

    tr = sub.add_parser("train", help="train a packet classifier")
    tr.add_argument("--model", choices=("rf", "svm"), required=True)
    tr.add_argument("--data", required=True)
    tr.add_argument("--trees", type=int, default=100)
    tr.add_argument("--depth", type=int, default=16)
    tr.add_argument("--lambda", dest="lam", type=float, default=1e-4)
    tr.add_argument("--epochs", type=int, default=50)
    tr.add_argument("--train-fraction", type=float, default=1.0,
                    help="train on this stratified fraction (1.0 = all rows)")
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--out", required=True)

    pred = sub.add_parser("predict", help="predict labels for a dataset")
    pred.add_argument("--model", required=True)
    pred.add_argument("--data", required=True)
    pred.add_argument("--out", required=True)

    ev = sub.add_parser("evaluate", help="confusion counts, accuracy, F1")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--out", required=True)

    km = sub.add_parser("kmeans", help="cluster dataset rows")
    km.add_argument("--data", required=True)
    km.add_argument("--k", type=int, default=2)
    km.add_argument("--seed", type=int, default=0)
    km.add_argument("--out", required=True)

    co = sub.add_parser("correlate", help="fuse alert streams into incidents")
    co.add_argument("alerts", nargs="+", help="alert JSONL files")
    co.add_argument("--window", type=float, default=30.0)
    co.add_argument("--out", required=True)

    rep = sub.add_parser("report", help="render a static HTML report")
    rep.add_argument("--incidents", required=True)
    rep.add_argument("--series", action="append", default=[], metavar="NAME=PATH")
    rep.add_argument("--meta", default=None, help="metadata JSON file")
    rep.add_argument("--out", required=True)

    pl = sub.add_parser("pipeline", help="run a preset or custom scenario end-to-end")
    pl.add_argument("preset", nargs="?", default=None,
                    help="ds1|ds2|ds3; omit to use custom scenario flags")
    pl.add_argument("--rtus", type=int, default=6)
    pl.add_argument("--mtus", type=int, default=1)
    pl.add_argument("--duration", type=float, default=600.0)
    pl.add_argument("--human-rate", type=float, default=0.02)
    pl.add_argument("--attack", action="append", default=[], metavar="KIND@TIME")
    pl.add_argument("--seed", type=int, default=0)
    pl.add_argument("--bin-width", type=float, default=1.0)
    pl.add_argument("--mp-window", type=int, default=25)
    pl.add_argument("--process-window", type=int, default=250)
    pl.add_argument("--correlation-window", type=float, default=30.0)
    pl.add_argument("--no-process", action="store_true")
    pl.add_argument("--it-alerts", default=None)
    pl.add_argument("--out-dir", required=True)
    return parser


def _cmd_simulate(args) -> None:
    if args.scenario == "net":
        cfg = simulate.NetScenarioConfig(
            n_rtus=args.rtus, n_mtus=args.mtus, duration=args.duration,
            poll_period=args.poll_period, human_rate=args.human_rate,
            attacks=_parse_attacks(args.attack), seed=args.seed)
        write_capture(simulate.run_net(cfg), args.out)
    else:
        cfg = simulate.ProcScenarioConfig(
            n_samples=args.samples, sample_period=args.sample_period,
            tank_capacity=args.capacity, fill_rate=args.fill_rate,
            drain_rate=args.drain_rate, noise_sigma=args.noise,
            attack_samples=tuple(args.attack_sample) if args.attack_sample else (4000, 6500),
            seed=args.seed)
        flow, level = simulate.run_process(cfg)
        write_series(flow, args.out_flow)
        write_series(level, args.out_level)


def _cmd_features(args) -> None:
    import os
    records = read_capture(args.inp)
    os.makedirs(args.out_dir, exist_ok=True)
    binned = features.bin_traffic(records, args.bin_width)
    for name, series in binned.channels.items():
        write_series(series, os.path.join(args.out_dir, f"{name}.csv"))
    dataset, skipped = features.packet_features(records)
    write_dataset(dataset, os.path.join(args.out_dir, "dataset.csv"))
    if skipped:
        print(f"skipped {skipped} undecodable records", file=sys.stderr)


def _cmd_mp(args) -> None:
    series = read_series(args.inp, channel_name=args.column)
    cfg = mprofile.ProfileConfig(m=args.window, exclusion_radius=args.exclusion)
    if args.brute:
        profile = mprofile.matrix_profile_brute(series, cfg)
    else:
        profile = mprofile.matrix_profile_fast(series, cfg, n_jobs=args.jobs)
    mprofile.write_profile(profile, args.out)


def _profile_from_files(series_path, profile_path):
    series = read_series(series_path)
    values, indices = mprofile.read_profile_values(profile_path)
    m = len(series) - len(values) + 1
    if m < 3:
        raise InputError("profile does not match series length")
    return series, mprofile.MatrixProfile(
        values=values, indices=indices, config=mprofile.ProfileConfig(m=m),
        start_time=series.start_time, bin_width=series.bin_width,
        channel_name=series.channel_name)


def _cmd_calibrate(args) -> None:
    series, profile = _profile_from_files(args.series, args.profile)
    if series.labels is None:
        raise InputError(f"{args.series}: series has no label column")
    cal = mprofile.calibrate_threshold(profile, series.labels)
    atomic_write_text(args.out, json.dumps({
        "threshold": cal.threshold,
        "false_positive_bins": cal.false_positive_bins,
        "attack_intervals": [list(iv) for iv in cal.attack_intervals],
        "n_windows": cal.n_windows,
        "n_attack_windows": cal.n_attack_windows,
    }, indent=2, sort_keys=True) + "\n")


def _cmd_detect(args) -> None:
    _, profile = _profile_from_files(args.series, args.profile)
    alerts = mprofile.detect(profile, args.threshold, source=args.source)
    write_alerts(alerts, args.out)


def _cmd_train(args) -> None:
    data = read_dataset(args.data)
    if args.train_fraction < 1.0:
        data, _ = learn.split(data, args.train_fraction, seed=args.seed)
    if args.model == "rf":
        model = learn.train_forest(data, n_trees=args.trees, max_depth=args.depth,
                                   seed=args.seed)
    else:
        model = learn.train_svm(data, lam=args.lam, epochs=args.epochs, seed=args.seed)
    learn.save_model(model, args.out)


def _cmd_predict(args) -> None:
    model = learn.load_model(args.model)
    data = read_dataset(args.data)
    pred = model.predict(data.X)
    lines = ["row,prediction"] + [f"{i},{int(p)}" for i, p in enumerate(pred)]
    atomic_write_text(args.out, "".join(line + "\n" for line in lines))


def _cmd_evaluate(args) -> None:
    model = learn.load_model(args.model)
    data = read_dataset(args.data)
    report = learn.evaluate(model, data)
    atomic_write_text(args.out, json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")


def _cmd_kmeans(args) -> None:
    data = read_dataset(args.data)
    centroids, assignments = learn.kmeans(data.X, k=args.k, seed=args.seed)
    atomic_write_text(args.out, json.dumps({
        "centroids": [list(map(float, c)) for c in centroids],
        "assignments": [int(a) for a in assignments],
    }, indent=2, sort_keys=True) + "\n")


def _cmd_correlate(args) -> None:
    streams = [read_alerts(path) for path in args.alerts]
    incidents = corr.correlate(streams, window=args.window)
    atomic_write_text(args.out, corr.incidents_to_json(incidents))


def _cmd_report(args) -> None:
    with open(args.incidents, encoding="utf-8") as fh:
        incidents = corr.incidents_from_json(fh.read())
    views = []
    for spec in args.series:
        if "=" not in spec:
            raise _UsageError(f"--series must be NAME=PATH, got {spec!r}")
        name, _, path = spec.partition("=")
        views.append(corr.ChannelView(name=name, series=read_series(path, name)))
    metadata = {}
    if args.meta:
        with open(args.meta, encoding="utf-8") as fh:
            metadata = json.load(fh)
    corr.render_report(incidents, views, metadata, args.out)


def _cmd_pipeline(args) -> None:
    if args.preset is not None:
        configs = simulate.preset(args.preset, seed=args.seed)
    else:
        configs = [simulate.NetScenarioConfig(
            n_rtus=args.rtus, n_mtus=args.mtus, duration=args.duration,
            human_rate=args.human_rate, attacks=_parse_attacks(args.attack),
            seed=args.seed)]
    opts = pipeline.PipelineOptions(
        seed=args.seed, bin_width=args.bin_width, net_window=args.mp_window,
        proc_window=args.process_window, correlation_window=args.correlation_window,
        it_alerts_path=args.it_alerts, run_process=not args.no_process)
    metadata = {"command": "pipeline",
                "flags": {k: v for k, v in sorted(vars(args).items()) if k != "command"}}
    summary = pipeline.run_pipeline(args.out_dir, configs, opts, metadata)
    print(json.dumps({"n_records": summary["n_records"],
                      "n_incidents": summary["n_incidents"]}, sort_keys=True))


_COMMANDS = {
    "simulate": _cmd_simulate,
    "features": _cmd_features,
    "mp": _cmd_mp,
    "calibrate": _cmd_calibrate,
    "detect": _cmd_detect,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "kmeans": _cmd_kmeans,
    "correlate": _cmd_correlate,
    "report": _cmd_report,
    "pipeline": _cmd_pipeline,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _COMMANDS[args.command](args)
        return EXIT_OK
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
