import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from handover_events.events import (ConfidenceSignal, EvalParams, EventMatchResult,
                                    GtEventInterval, aggregate_direction, detection_metrics,
                                    direction_metrics, evaluate_stream, find_peaks,
                                    gaussian_kernel, gt_intervals, match_events, smooth, summarize)
from handover_events.synth import PlantedEvent
from handover_events.windowing import FrameLabel, WindowSpec

R, G = FrameLabel.RECEIVES, FrameLabel.GIVES


# -- oracles -------------------------------------------------------------------

def naive_smooth(x, sigma=3.0, size=15, pad=9):
    """Direct convolution with explicit index reflection."""
    n = len(x)
    half = size // 2
    w = [math.exp(-k * k / (2 * sigma * sigma)) for k in range(-half, half + 1)]
    total = sum(w)

    def at(i):
        while i < 0 or i >= n:
            i = -i if i < 0 else 2 * (n - 1) - i
        return x[i]

    padded = [at(i) for i in range(-pad, n + pad)]
    return np.array([sum(w[k] / total * padded[t + pad + k - half] for k in range(size))
                     for t in range(n)])


def brute_peaks(x, min_height=0.1, prominence_frac=0.01):
    """Every index checked against the definition."""
    n = len(x)
    if n < 3:
        return []
    min_prom = prominence_frac * (max(x) - min(x))
    out = []
    for i in range(1, n - 1):
        a = i
        while a > 0 and x[a - 1] == x[i]:
            a -= 1
        b = i
        while b < n - 1 and x[b + 1] == x[i]:
            b += 1
        if a == 0 or b == n - 1 or not (x[a - 1] < x[i] > x[b + 1]) or i != (a + b) // 2:
            continue
        h = x[i]
        higher_left = [k for k in range(i) if x[k] > h]
        higher_right = [k for k in range(i + 1, n) if x[k] > h]
        left = min(x[higher_left[-1] + 1:i + 1]) if higher_left else min(x[:i + 1])
        right = min(x[i:higher_right[0]]) if higher_right else min(x[i:])
        prom = h - max(left, right)
        if h >= min_height and prom >= min_prom:
            out.append((i, h, prom))
    return out


def _plateau_signal(rng, n):
    if rng.random() < 0.5:
        return list(rng.integers(0, 6, n) / 5.0)
    return list(rng.random(n))


# -- kernel / smoothing ----------------------------------------------------------

def test_kernel_sums_to_one_and_is_symmetric():
    w = gaussian_kernel(3.0, 15)
    assert abs(w.sum() - 1.0) <= 1e-12
    np.testing.assert_array_equal(w, w[::-1])


def test_kernel_center_edge_ratio():
    w = gaussian_kernel(3.0, 15)
    assert w[7] / w[0] == pytest.approx(math.exp(49 / 18), rel=1e-12)
    assert round(w[7] / w[0], 2) == 15.21


def test_kernel_even_size_rejected():
    with pytest.raises(ValueError):
        gaussian_kernel(3.0, 14)


def test_smooth_constant():
    np.testing.assert_allclose(smooth(np.full(40, 0.37)), 0.37, atol=1e-12)


def test_smooth_impulse_response():
    x = np.zeros(41)
    x[20] = 1.0
    np.testing.assert_allclose(smooth(x)[13:28], gaussian_kernel(), atol=1e-15)


def test_smooth_matches_naive_oracle():
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = rng.normal(size=int(rng.integers(20, 501)))
        assert np.abs(smooth(x, 3.0, 15) - naive_smooth(list(x))).max() <= 1e-12


def test_smooth_short_signals_finite():
    for n in range(1, 12):
        out = smooth(np.arange(n, dtype=float))
        assert out.shape == (n,) and np.isfinite(out).all()


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=80))
def test_smooth_stays_within_range(values):
    out = smooth(np.array(values))
    assert out.min() >= min(values) - 1e-12 and out.max() <= max(values) + 1e-12


# -- peaks ---------------------------------------------------------------------

def test_peak_examples():
    (p,) = find_peaks([0, 0, 1, 0, 0])
    assert (p.index, p.height, p.prominence) == (2, 1.0, 1.0)
    assert find_peaks(np.arange(10.0)) == []
    peaks = find_peaks([0, 0.5, 0.2, 0.9, 0])
    assert [p.index for p in peaks] == [1, 3]
    assert [p.prominence for p in peaks] == pytest.approx([0.3, 0.9])


def test_plateau_midpoint_rounds_down():
    assert [p.index for p in find_peaks([0, 1, 1, 0])] == [1]
    assert [p.index for p in find_peaks([0, 1, 1, 1, 0])] == [2]
    assert find_peaks([1, 1, 0]) == []


def test_peak_thresholds():
    assert find_peaks([0, 0.05, 0]) == []
    x = [0, 1.0, 0.995, 0.996, 0]
    assert [p.index for p in find_peaks(x)] == [1]


def test_find_peaks_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        x = _plateau_signal(rng, int(rng.integers(1, 65)))
        got = [(p.index, p.height, p.prominence) for p in find_peaks(x)]
        assert got == brute_peaks(x)


def test_find_peaks_matches_scipy():
    signal = pytest.importorskip("scipy.signal")
    rng = np.random.default_rng(2)
    for _ in range(300):
        x = np.array(_plateau_signal(rng, int(rng.integers(3, 65))))
        idx, props = signal.find_peaks(x, height=0.1, prominence=0.01 * (x.max() - x.min()))
        ours = find_peaks(x)
        assert [p.index for p in ours] == idx.tolist()
        np.testing.assert_allclose([p.prominence for p in ours], props["prominences"], atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=3, max_size=40), st.integers(0, 40),
       st.floats(0.001, 0.099))
def test_small_side_lobe_does_not_change_peaks(values, where, lobe):
    where = min(where, len(values))
    x = values[:where] + [0.0, 0.0, 0.0] + values[where:]
    y = list(x)
    y[where + 1] = lobe
    assert find_peaks(x) == find_peaks(y) or (
        [p for p in find_peaks(y) if p.index != where + 1] == find_peaks(x))


# -- matching ------------------------------------------------------------------

def _iv(a, b, d=R):
    return GtEventInterval(a, b, d)


def test_match_examples():
    assert match_events([13], [_iv(10, 14)], 2).tp == 1
    r = match_events([17], [_iv(10, 14)], 2)
    assert (r.tp, r.fp, r.fn) == (0, 1, 1)
    r = match_events([11, 12], [_iv(10, 14)], 2)
    assert (r.tp, r.fp, r.fn) == (1, 1, 0)
    assert match_events([8, 16], [_iv(10, 14)], 2).tp == 1


def test_match_rejects_overlapping_intervals():
    with pytest.raises(ValueError):
        match_events([1], [_iv(0, 5), _iv(5, 9)])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 200), max_size=20), st.lists(st.integers(1, 12), max_size=10),
       st.integers(0, 4))
def test_match_counts(peaks, lengths, tol):
    ivs, pos = [], 0
    for n in lengths:
        ivs.append(_iv(pos, pos + n - 1))
        pos += n + 3
    r = match_events(peaks, ivs, tol)
    assert r.tp + r.fp == len(peaks) and r.tp + r.fn == len(ivs)
    assert len({j for _, j in r.pairs}) == r.tp


def test_detection_metric_examples():
    assert detection_metrics(EventMatchResult([(0, 0)], 1, 1)) == (1.0, 1.0, 1.0)
    assert detection_metrics(EventMatchResult([], 0, 5)) == (0.0, 0.0, 0.0)
    p, r, f = detection_metrics(EventMatchResult([(i, i) for i in range(43)], 53, 50))
    assert p == pytest.approx(43 / 53) and round(p, 3) == 0.811
    assert r == pytest.approx(0.86)
    assert f == pytest.approx(86 / 103, abs=1e-15)
    assert abs(f - 0.84) < 0.006


# -- direction -----------------------------------------------------------------

def test_aggregate_single_window():
    assert aggregate_direction([0.1, 0.9, 0.2], _iv(1, 1))[0] == G
    assert aggregate_direction([0.1, 0.3, 0.2], _iv(1, 1))[0] == R


def test_aggregate_symmetric_tie_goes_to_gives():
    label, p = aggregate_direction([0.8, 0.2], _iv(0, 1))
    assert p == pytest.approx(0.5, abs=1e-15) and label == G


def test_aggregate_matches_direct_sum():
    rng = np.random.default_rng(3)
    for _ in range(50):
        scores = rng.random(60)
        a = int(rng.integers(0, 50))
        b = int(rng.integers(a, 60))
        sd = max(1.0, (b - a + 1) / 4)
        mid = (a + b) / 2
        w = [math.exp(-(i - mid) ** 2 / (2 * sd * sd)) for i in range(a, b + 1)]
        direct = sum(wi * scores[i] for wi, i in zip(w, range(a, b + 1))) / sum(w)
        assert aggregate_direction(scores, _iv(a, b))[1] == pytest.approx(direct, abs=1e-12)


def test_aggregate_empty_interval():
    with pytest.raises(ValueError):
        aggregate_direction([0.5, 0.5], _iv(5, 7))


def test_direction_metrics_examples():
    d = direction_metrics([R, G, G], [R, G, G])
    np.testing.assert_array_equal(d.normalized_confusion, np.eye(2))
    assert d.mean_f1 == 1.0
    d = direction_metrics([G] * 4, [R, R, G, G])
    np.testing.assert_array_equal(d.normalized_confusion, [[0, 1], [0, 1]])
    assert d.f1_receives == 0.0


def test_direction_metrics_counting_oracle():
    rng = np.random.default_rng(4)
    truths = rng.integers(0, 2, 37)
    preds = rng.integers(0, 2, 37)
    d = direction_metrics(preds, truths)
    for c in (0, 1):
        tp = sum(1 for t, p in zip(truths, preds) if t == c and p == c)
        fp = sum(1 for t, p in zip(truths, preds) if t != c and p == c)
        fn = sum(1 for t, p in zip(truths, preds) if t == c and p != c)
        f1 = Fraction(2 * tp, 2 * tp + fp + fn)
        assert [d.f1_receives, d.f1_gives][c] == pytest.approx(float(f1), abs=1e-12)
        assert d.normalized_confusion[c, c] == pytest.approx(tp / (tp + fn))


# -- ground truth and pipeline --------------------------------------------------

def test_gt_intervals_match_brute_force():
    spec = WindowSpec()
    starts = np.arange(0, 400, 2)
    events = [PlantedEvent(100, 130, 0), PlantedEvent(250, 270, 1)]
    ivs = gt_intervals(events, starts, spec)
    for ev, iv in zip(events, ivs):
        hit = [k for k, s in enumerate(starts)
               if set(range(s, s + spec.extent)) & set(range(ev.start, ev.end + 1))]
        assert (iv.first, iv.last, iv.direction) == (hit[0], hit[-1], ev.direction)


def test_evaluate_stream_perfect_and_zero_scores():
    starts = np.arange(0, 600, 2)
    ivs = [_iv(40, 60, R), _iv(150, 170, G)]
    det = np.zeros(len(starts))
    gives = np.zeros(len(starts))
    for iv in ivs:
        det[iv.first:iv.last + 1] = 1.0
        gives[iv.first:iv.last + 1] = float(iv.direction == G)
    m = summarize([evaluate_stream(ConfidenceSignal(starts, det, gives), ivs, EvalParams())])
    assert m["detection"]["f1"] == 1.0 and m["direction"]["mean_f1"] == 1.0
    m = summarize([evaluate_stream(ConfidenceSignal(starts, det * 0, gives), ivs)])
    assert m["detection"]["recall"] == 0.0


def test_signal_validation():
    with pytest.raises(ValueError):
        ConfidenceSignal([0, 2, 2], [0, 0, 0], [0, 0, 0])
