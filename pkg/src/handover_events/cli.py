"""Command-line entry point: ``handover-events {synth,train,eval,attribute,plot}``.

Exit codes: 0 success, 2 configuration or input error, 3 numeric failure,
4 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import io, net
from .attribution import frame_relevance, integrated_gradients, write_attribution_csv
from .config import RunConfig, load_config
from .events import (ConfidenceSignal, evaluate_stream, find_peaks, gt_intervals, smooth,
                     summarize)
from .exceptions import ConfigError, NumericError
from .svg import heat_strip_svg, trace_svg
from .synth import generate_dataset
from .train import TrainingData, predict, train
from .windowing import build_windows, window_arrays, window_features

logger = logging.getLogger("handover_events")

MANIFEST = "manifest.json"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


# -- dataset helpers -------------------------------------------------------------

def load_manifest(data_dir) -> dict:
    path = Path(data_dir) / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"no dataset manifest at {path}")
    return io.read_json(path)


def load_split(data_dir, split: str | None = None):
    """``[(stream, events), ...]`` for the manifest entries of ``split`` (all if None)."""
    data_dir = Path(data_dir)
    out = []
    for entry in load_manifest(data_dir)["streams"]:
        if split is not None and entry["split"] != split:
            continue
        stream = io.read_stream(data_dir / entry["file"], name=entry["name"])
        events = io.read_events(data_dir / entry["events_file"])
        out.append((stream, events))
    return out


# -- commands --------------------------------------------------------------------

def cmd_synth(cfg: RunConfig) -> dict:
    """Write synthetic streams, ground-truth sidecars and a manifest to ``data_dir``."""
    data_dir = Path(cfg.data_dir)
    (data_dir / "streams").mkdir(parents=True, exist_ok=True)
    scfg = cfg.synth_config()
    ext = ".csv" if cfg.stream_format == "csv" else ".jsonl"
    entries = []
    n_train = cfg.num_streams - cfg.num_test_streams
    for i, (stream, events) in enumerate(generate_dataset(scfg)):
        rel = Path("streams") / (stream.name + ext)
        rel_ev = Path("streams") / (stream.name + ".events.json")
        io.write_stream(data_dir / rel, stream)
        io.write_events(data_dir / rel_ev, events)
        entries.append({
            "name": stream.name,
            "split": "train" if i < n_train else "test",
            "file": rel.as_posix(),
            "events_file": rel_ev.as_posix(),
            "num_frames": stream.num_frames,
            "num_events": len(events),
            "num_receives": sum(int(e.direction) == 0 for e in events),
            "num_gives": sum(int(e.direction) == 1 for e in events),
            "height": stream.height,
            "width": stream.width,
        })
    manifest = {
        "format_version": 1,
        "seed": cfg.seed,
        "synth": asdict(scfg),
        "streams": entries,
        "num_events": {
            split: sum(e["num_events"] for e in entries if e["split"] == split)
            for split in ("train", "test")
        },
    }
    io.write_json(data_dir / MANIFEST, manifest)
    logger.info("wrote %d streams to %s", len(entries), data_dir)
    return manifest


def _split_train_val(streams, val_fraction: float):
    n_val = math.ceil(val_fraction * len(streams)) if len(streams) > 1 else 0
    n_val = min(n_val, len(streams) - 1)
    if n_val <= 0:
        return streams, []
    return streams[:-n_val], streams[-n_val:]


def cmd_train(cfg: RunConfig):
    pairs = load_split(cfg.data_dir, "train")
    if not pairs:
        raise ConfigError(f"dataset in {cfg.data_dir} has no training streams")
    streams = [s for s, _ in pairs]
    spec = cfg.window_spec()
    fit_streams, val_streams = _split_train_val(streams, cfg.val_fraction)
    X, y = window_arrays(fit_streams, spec)
    X_val, y_val = window_arrays(val_streams, spec) if val_streams else (None, None)
    dims = cfg.model_dims(streams[0].feature_dim)
    tcfg = cfg.train_config()
    logger.info("training on %d windows (%d validation)", len(X), 0 if X_val is None else len(X_val))
    result = train(TrainingData(X, y, X_val, y_val), dims, tcfg)
    for p in (cfg.checkpoint, cfg.history):
        Path(p).parent.mkdir(parents=True, exist_ok=True)
    net.save_checkpoint(cfg.checkpoint, result.params, seed=cfg.seed,
                        extra={"window_spec": asdict(spec)})
    io.write_history(cfg.history, result.history)
    return result


def _load_model(cfg: RunConfig, feature_dim: int):
    params, header = net.load_checkpoint(cfg.checkpoint)
    if params.dims.feature_dim != feature_dim:
        raise ConfigError(
            f"checkpoint expects feature dim {params.dims.feature_dim}, data has {feature_dim}")
    return params


def stream_signal(params, stream, spec, shuffle_rng=None) -> ConfidenceSignal:
    windows = build_windows(stream.labels, spec)
    X = window_features(stream, windows)
    if shuffle_rng is not None:
        X = np.stack([x[shuffle_rng.permutation(len(x))] for x in X]) if len(X) else X
    p_det, p_dir = predict(params, X) if len(X) else (np.empty(0), np.empty((0, 2)))
    return ConfidenceSignal([w.start for w in windows], p_det, p_dir[:, 1], name=stream.name)


def cmd_eval(cfg: RunConfig, plot: bool = False) -> dict:
    pairs = load_split(cfg.data_dir, "test")
    if not pairs:
        raise ConfigError(f"dataset in {cfg.data_dir} has no test streams")
    params = _load_model(cfg, pairs[0][0].feature_dim)
    spec, ep = cfg.window_spec(), cfg.eval_params()
    out_dir = Path(cfg.out_dir)
    (out_dir / "predictions").mkdir(parents=True, exist_ok=True)
    shuffle_rng = np.random.default_rng([cfg.seed, 2]) if cfg.shuffle_frames else None
    evaluations, per_stream = [], []
    for stream, events in pairs:
        sig = stream_signal(params, stream, spec, shuffle_rng)
        io.write_predictions(out_dir / "predictions" / f"{stream.name}.csv",
                             sig.starts, sig.det_scores, sig.dir_scores)
        ev = evaluate_stream(sig, gt_intervals(events, sig.starts, spec), ep)
        evaluations.append(ev)
        per_stream.append({"name": stream.name, "tp": ev.match.tp, "fp": ev.match.fp,
                           "fn": ev.match.fn, "num_peaks": len(ev.peaks)})
        if plot:
            (out_dir / "plots").mkdir(parents=True, exist_ok=True)
            (out_dir / "plots" / f"{stream.name}.svg").write_text(
                trace_svg(sig.det_scores, ev.smoothed, ev.peaks, ev.intervals, title=stream.name),
                encoding="utf-8")
    metrics = summarize(evaluations)
    metrics["streams"] = per_stream
    metrics["eval_params"] = asdict(ep)
    metrics["shuffle_frames"] = cfg.shuffle_frames
    Path(cfg.metrics).parent.mkdir(parents=True, exist_ok=True)
    io.write_json(cfg.metrics, metrics)
    return metrics


def parse_window_id(window_id: str):
    name, sep, start = window_id.rpartition(":")
    if not sep or not name:
        raise ConfigError(f"window id must look like '<stream>:<start>', got {window_id!r}")
    try:
        return name, int(start)
    except ValueError as exc:
        raise ConfigError(f"window start in {window_id!r} is not an integer") from exc


def cmd_attribute(cfg: RunConfig, window_id: str):
    name, start = parse_window_id(window_id)
    pairs = {s.name: s for s, _ in load_split(cfg.data_dir)}
    if name not in pairs:
        raise ConfigError(f"unknown stream {name!r} in window id {window_id!r}")
    stream = pairs[name]
    spec = cfg.window_spec()
    windows = {w.start: w for w in build_windows(stream.labels, spec)}
    if start not in windows:
        raise ConfigError(f"unknown window id {window_id!r}")
    params = _load_model(cfg, stream.feature_dim)
    E = net.project(window_features(stream, [windows[start]])[0], params)
    amap = integrated_gradients(params, E, steps=cfg.ig_steps, target=cfg.attribution_target)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"attribution_{name}_{start}"
    write_attribution_csv(out_dir / f"{stem}.csv", amap)
    signed, _ = frame_relevance(amap)
    (out_dir / f"{stem}.svg").write_text(
        heat_strip_svg(signed, title=f"{window_id} target={amap.target}"), encoding="utf-8")
    return amap


def cmd_plot(cfg: RunConfig, predictions, events_path, output) -> dict:
    """Trace SVG and single-stream metrics from a predictions CSV and a ground-truth JSON."""
    starts, det, gives = io.read_predictions(predictions)
    sig = ConfidenceSignal(starts, det, gives, name=Path(predictions).stem)
    events = io.read_events(events_path)
    ev = evaluate_stream(sig, gt_intervals(events, sig.starts, cfg.window_spec()), cfg.eval_params())
    Path(output).parent.mkdir(parents=True, exist_ok=True)
    Path(output).write_text(trace_svg(det, ev.smoothed, ev.peaks, ev.intervals, title=sig.name),
                            encoding="utf-8")
    return summarize([ev])


# -- argument parsing --------------------------------------------------------------

def _config_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="key=value config file")
    parent.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    group = parent.add_argument_group("config keys (flags override the config file)")
    for f in fields(RunConfig):
        default = f.default
        group.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, default=None,
                           metavar=f.type.upper() if f.type in ("int", "float", "str", "bool") else "V",
                           help=f"{f.metadata['help']} (default: {default})")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parent = _config_parent()
    parser = argparse.ArgumentParser(
        prog="handover-events",
        description="Handover event detection and direction classification on windowed embeddings.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[parent], help="generate a synthetic dataset")
    sub.add_parser("train", parents=[parent], help="train and write checkpoint + history")
    p = sub.add_parser("eval", parents=[parent], help="event-level evaluation on test streams")
    p.add_argument("--plot", action="store_true", help="write per-stream SVG traces")
    p = sub.add_parser("attribute", parents=[parent], help="integrated gradients for one window")
    p.add_argument("--window", required=True, help="window id '<stream>:<start frame>'")
    p = sub.add_parser("plot", parents=[parent], help="SVG trace from a predictions CSV")
    p.add_argument("--predictions", required=True, help="predictions CSV")
    p.add_argument("--events", required=True, help="ground-truth events JSON")
    p.add_argument("--output", required=True, help="output SVG path")
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)
                 if getattr(args, f.name) is not None}
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "synth":
            m = cmd_synth(cfg)
            print(f"{len(m['streams'])} streams, events {m['num_events']}")
        elif args.command == "train":
            res = cmd_train(cfg)
            print(f"{len(res.history)} epochs; checkpoint {cfg.checkpoint}")
        elif args.command == "eval":
            m = cmd_eval(cfg, plot=args.plot)
            d, r = m["detection"], m["direction"]
            print(f"detection P={d['precision']:.3f} R={d['recall']:.3f} F1={d['f1']:.3f}; "
                  f"direction F1@R={r['f1_receives']:.3f} F1@G={r['f1_gives']:.3f} "
                  f"mean={r['mean_f1']:.3f}")
        elif args.command == "attribute":
            amap = cmd_attribute(cfg, args.window)
            print(f"completeness gap {amap.completeness_gap:.3e}")
        elif args.command == "plot":
            m = cmd_plot(cfg, args.predictions, args.events, args.output)
            print(f"detection F1={m['detection']['f1']:.3f}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
