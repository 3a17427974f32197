import math

import numpy as np
import pytest

from handover_events import io
from handover_events.synth import PlantedEvent, SynthConfig, generate_dataset


@pytest.fixture
def stream_and_events():
    (pair,) = generate_dataset(SynthConfig(num_streams=1, frames_per_stream=300, feature_dim=4, seed=2))
    return pair


@pytest.mark.parametrize("suffix", [".jsonl", ".csv"])
def test_stream_round_trip(tmp_path, stream_and_events, suffix):
    stream, _ = stream_and_events
    path = tmp_path / f"s{suffix}"
    io.write_stream(path, stream)
    back = io.read_stream(path)
    np.testing.assert_array_equal(back.labels, stream.labels)
    np.testing.assert_array_equal(back.features, stream.features)
    assert back.name == "s"


def test_non_csv_suffix_is_jsonl(tmp_path, stream_and_events):
    io.write_stream(tmp_path / "s.txt", stream_and_events[0])
    assert (tmp_path / "s.txt").read_text().startswith('{"frame_index": 0')


def test_stream_rejects_gaps(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"frame_index": 0, "label": 2, "features": [0.0]}\n'
                    '{"frame_index": 2, "label": 2, "features": [0.0]}\n')
    with pytest.raises(ValueError):
        io.read_stream(path)


def test_events_round_trip(tmp_path, stream_and_events):
    _, events = stream_and_events
    io.write_events(tmp_path / "e.json", events)
    assert io.read_events(tmp_path / "e.json") == events
    io.write_events(tmp_path / "none.json", [])
    assert io.read_events(tmp_path / "none.json") == []


def test_predictions_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    starts, det, gives = np.arange(0, 20, 2), rng.random(10), rng.random(10)
    io.write_predictions(tmp_path / "p.csv", starts, det, gives)
    s2, d2, g2 = io.read_predictions(tmp_path / "p.csv")
    np.testing.assert_array_equal(s2, starts)
    np.testing.assert_array_equal(d2, det)
    np.testing.assert_array_equal(g2, gives)
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "window_start,det_score,dir_score_gives"


def test_history_round_trip_with_nan(tmp_path):
    rows = [{"epoch": 1, "lr": 1e-3, "train_det": 0.5, "train_dir": 0.6,
             "val_det": math.nan, "val_dir": math.nan, "val_total": math.nan}]
    io.write_history(tmp_path / "h.csv", rows)
    (back,) = io.read_history(tmp_path / "h.csv")
    assert back["epoch"] == 1 and back["train_dir"] == 0.6 and math.isnan(back["val_total"])


def test_json_is_stable_and_nan_safe(tmp_path):
    io.write_json(tmp_path / "a.json", {"b": np.float64(math.nan), "a": np.arange(2)})
    text = (tmp_path / "a.json").read_text()
    assert text.index('"a"') < text.index('"b"') and "null" in text
    assert io.read_json(tmp_path / "a.json") == {"a": [0, 1], "b": None}
