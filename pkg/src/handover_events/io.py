"""File formats: frame streams (JSONL / CSV), ground-truth event sidecars,
dataset manifests, window predictions, training history and metrics.

Floats are written with ``repr`` so a write/read round trip is exact and
reruns with identical inputs produce identical bytes.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .synth import PlantedEvent
from .windowing import LabeledFrameStream

HISTORY_COLUMNS = ("epoch", "lr", "train_det", "train_dir", "val_det", "val_dir", "val_total")


def _num(x) -> str:
    return repr(float(x))


# -- streams -------------------------------------------------------------------

def write_stream_jsonl(path, stream: LabeledFrameStream) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, (label, feats) in enumerate(zip(stream.labels, stream.features)):
            fh.write(json.dumps({
                "frame_index": i,
                "label": int(label),
                "features": [float(v) for v in feats],
            }) + "\n")


def read_stream_jsonl(path, name: str | None = None) -> LabeledFrameStream:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                rows.append((int(rec["frame_index"]), int(rec["label"]), rec["features"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed frame record ({exc})") from exc
    return _assemble(rows, path, name)


def write_stream_csv(path, stream: LabeledFrameStream) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame_index", "label"] + [f"f{k}" for k in range(stream.feature_dim)])
        for i, (label, feats) in enumerate(zip(stream.labels, stream.features)):
            w.writerow([i, int(label)] + [_num(v) for v in feats])


def read_stream_csv(path, name: str | None = None) -> LabeledFrameStream:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["frame_index", "label"]:
            raise ValueError(f"{path}: expected header starting with frame_index,label")
        expected = [f"f{k}" for k in range(len(header) - 2)]
        if header[2:] != expected:
            raise ValueError(f"{path}: feature columns must be named f0..f{len(header) - 3}")
        rows = []
        for lineno, rec in enumerate(reader, 2):
            if len(rec) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} columns, got {len(rec)}")
            rows.append((int(rec[0]), int(rec[1]), [float(v) for v in rec[2:]]))
    return _assemble(rows, path, name)


def _assemble(rows, path, name) -> LabeledFrameStream:
    rows.sort(key=lambda r: r[0])
    idx = [r[0] for r in rows]
    if idx != list(range(len(rows))):
        raise ValueError(f"{path}: frame indices must be 0..N-1 without gaps")
    dims = {len(r[2]) for r in rows}
    if len(dims) > 1:
        raise ValueError(f"{path}: feature dimension varies across frames ({sorted(dims)})")
    F = dims.pop() if dims else 0
    labels = np.array([r[1] for r in rows], dtype=np.int64)
    features = np.array([r[2] for r in rows], dtype=np.float64).reshape(len(rows), F)
    return LabeledFrameStream(labels, features, name=name or Path(path).stem)


def read_stream(path, name: str | None = None) -> LabeledFrameStream:
    path = Path(path)
    if path.suffix == ".csv":
        return read_stream_csv(path, name)
    return read_stream_jsonl(path, name)


def write_stream(path, stream: LabeledFrameStream) -> None:
    if Path(path).suffix == ".csv":
        write_stream_csv(path, stream)
    else:
        write_stream_jsonl(path, stream)


# -- ground truth --------------------------------------------------------------

def write_events(path, events) -> None:
    Path(path).write_text(
        json.dumps({"events": [e.to_dict() for e in events]}, indent=2) + "\n", encoding="utf-8")


def read_events(path) -> list[PlantedEvent]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    items = data["events"] if isinstance(data, dict) else data
    return [PlantedEvent.from_dict(d) for d in items]


# -- predictions ---------------------------------------------------------------

def write_predictions(path, starts, det_scores, dir_scores) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window_start", "det_score", "dir_score_gives"])
        for s, d, g in zip(starts, det_scores, dir_scores):
            w.writerow([int(s), _num(d), _num(g)])


def read_predictions(path):
    """Returns ``(starts, det_scores, dir_scores)`` arrays."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"window_start", "det_score", "dir_score_gives"} - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        rows = [(int(r["window_start"]), float(r["det_score"]), float(r["dir_score_gives"]))
                for r in reader]
    rows.sort()
    arr = np.array(rows, dtype=np.float64).reshape(-1, 3)
    return arr[:, 0].astype(np.int64), arr[:, 1], arr[:, 2]


# -- history / metrics / manifest ------------------------------------------------

def write_history(path, history) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for row in history:
            w.writerow([row["epoch"]] + [_num(row[c]) for c in HISTORY_COLUMNS[1:]])


def read_history(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [{k: (int(v) if k == "epoch" else float(v)) for k, v in row.items()}
                for row in csv.DictReader(fh)]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
