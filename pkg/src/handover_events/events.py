"""Event-level evaluation of per-window detection scores.

Per stream the window scores form a confidence signal (one sample per
sequence stride). The signal is Gaussian-smoothed with reflective padding,
peaks are picked by height and prominence, and peaks are matched one-to-one
to ground-truth intervals (expressed in window indices) with a tolerance of
a few windows. Direction is scored separately: the direction scores inside
every ground-truth interval are averaged with Gaussian weights centred on the
interval and thresholded at 0.5.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .windowing import FrameLabel, WindowSpec


@dataclass
class ConfidenceSignal:
    starts: np.ndarray       # window start frames, ascending
    det_scores: np.ndarray   # p(handover) per window
    dir_scores: np.ndarray   # p(Gives) per window
    name: str = "stream"

    def __post_init__(self):
        self.starts = np.asarray(self.starts, dtype=np.int64)
        self.det_scores = np.asarray(self.det_scores, dtype=np.float64)
        self.dir_scores = np.asarray(self.dir_scores, dtype=np.float64)
        if not (len(self.starts) == len(self.det_scores) == len(self.dir_scores)):
            raise ValueError("signal arrays must have equal length")
        if len(self.starts) > 1 and np.any(np.diff(self.starts) <= 0):
            raise ValueError("window starts must be strictly ascending")


@dataclass(frozen=True)
class GtEventInterval:
    first: int   # first positive window index (inclusive)
    last: int    # last positive window index (inclusive)
    direction: FrameLabel

    @property
    def length(self) -> int:
        return self.last - self.first + 1


@dataclass(frozen=True)
class Peak:
    index: int
    height: float
    prominence: float


@dataclass
class EventMatchResult:
    pairs: list[tuple[int, int]] = field(default_factory=list)  # (peak index, interval position)
    num_peaks: int = 0
    num_intervals: int = 0

    @property
    def tp(self) -> int:
        return len(self.pairs)

    @property
    def fp(self) -> int:
        return self.num_peaks - self.tp

    @property
    def fn(self) -> int:
        return self.num_intervals - self.tp

    def __add__(self, other: EventMatchResult) -> EventMatchResult:
        return EventMatchResult(self.pairs + other.pairs, self.num_peaks + other.num_peaks,
                                self.num_intervals + other.num_intervals)


@dataclass
class DirectionResult:
    predictions: list[FrameLabel]
    confusion: np.ndarray             # rows true [R, G], columns predicted [R, G]
    normalized_confusion: np.ndarray
    f1_receives: float
    f1_gives: float

    @property
    def mean_f1(self) -> float:
        return (self.f1_receives + self.f1_gives) / 2.0


# -- smoothing -----------------------------------------------------------------

def gaussian_kernel(sigma: float = 3.0, size: int = 15) -> np.ndarray:
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be a positive odd integer, got {size}")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    k = np.arange(size) - size // 2
    w = np.exp(-(k * k) / (2.0 * sigma * sigma))
    return w / w.sum()


def smooth(signal, sigma: float = 3.0, size: int = 15, pad: int | None = None) -> np.ndarray:
    """Gaussian smoothing with reflective padding of ``pad`` (default 3 sigma) samples.

    The boundary sample is not repeated: the left pad is ``x[pad:0:-1]``.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1 or len(x) == 0:
        raise ValueError("signal must be a non-empty 1-D array")
    w = gaussian_kernel(sigma, size)
    half = size // 2
    pad = int(round(3 * sigma)) if pad is None else int(pad)
    pad = max(pad, half)
    if len(x) == 1:
        xp = np.full(len(x) + 2 * pad, x[0])
    else:
        xp = np.pad(x, pad, mode="reflect")
    out = np.convolve(xp, w[::-1], mode="valid")
    offset = pad - half
    return out[offset:offset + len(x)]


# -- peaks ---------------------------------------------------------------------

def _local_maxima(x: np.ndarray) -> list[int]:
    """Indices of strict local maxima; a flat top maps to its midpoint (rounded down)."""
    peaks = []
    n = len(x)
    i = 1
    while i < n - 1:
        if x[i - 1] < x[i]:
            j = i
            while j + 1 < n - 1 and x[j + 1] == x[i]:
                j += 1
            if x[j + 1] < x[i]:
                peaks.append((i + j) // 2)
            i = j + 1
        else:
            i += 1
    return peaks


def peak_prominence(x: np.ndarray, index: int) -> float:
    """Height above the higher of the two bases around ``index``.

    Each base is the minimum between the peak and the nearest strictly higher
    sample on that side, or the signal end if there is none.
    """
    h = x[index]
    k = index
    left_min = h
    while k > 0 and x[k - 1] <= h:
        k -= 1
        left_min = min(left_min, x[k])
    k = index
    right_min = h
    while k < len(x) - 1 and x[k + 1] <= h:
        k += 1
        right_min = min(right_min, x[k])
    return float(h - max(left_min, right_min))


def find_peaks(signal, min_height: float = 0.1, prominence_frac: float = 0.01) -> list[Peak]:
    x = np.asarray(signal, dtype=np.float64)
    if len(x) < 3:
        return []
    min_prom = prominence_frac * float(x.max() - x.min())
    out = []
    for i in _local_maxima(x):
        if x[i] < min_height:
            continue
        prom = peak_prominence(x, i)
        if prom >= min_prom:
            out.append(Peak(int(i), float(x[i]), prom))
    return out


# -- ground truth and matching -------------------------------------------------

def gt_intervals(events, starts, spec: WindowSpec) -> list[GtEventInterval]:
    """Window-index intervals whose extents overlap each planted event."""
    starts = np.asarray(starts)
    out = []
    for ev in sorted(events, key=lambda e: e.start):
        hit = np.flatnonzero((starts <= ev.end) & (starts + spec.extent - 1 >= ev.start))
        if len(hit):
            out.append(GtEventInterval(int(hit[0]), int(hit[-1]), FrameLabel(ev.direction)))
    return out


def match_events(peaks: Sequence[int], intervals: Sequence[GtEventInterval],
                 tol: int = 2) -> EventMatchResult:
    """Greedy one-to-one matching in ascending peak order.

    A peak matches the first still-unmatched interval ``[a, b]`` with
    ``a - tol <= peak <= b + tol``.
    """
    bounds = [(iv.first, iv.last) for iv in intervals]
    for (a0, b0), (a1, b1) in zip(bounds, bounds[1:]):
        if a1 <= b0 or a0 > a1:
            raise ValueError("ground-truth intervals must be sorted and disjoint")
    peaks = sorted(int(getattr(p, "index", p)) for p in peaks)
    used = [False] * len(bounds)
    pairs = []
    for p in peaks:
        for j, (a, b) in enumerate(bounds):
            if not used[j] and a - tol <= p <= b + tol:
                used[j] = True
                pairs.append((p, j))
                break
    return EventMatchResult(pairs, len(peaks), len(bounds))


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def detection_metrics(result: EventMatchResult) -> tuple[float, float, float]:
    """Precision, recall and F1, with 0 for any 0/0."""
    p = _ratio(result.tp, result.tp + result.fp)
    r = _ratio(result.tp, result.tp + result.fn)
    return p, r, _ratio(2 * p * r, p + r)


# -- direction -----------------------------------------------------------------

def default_sigma_dir(length: int, divisor: float = 4.0) -> float:
    return max(1.0, length / divisor)


def aggregate_direction(dir_scores, interval: GtEventInterval, sigma_dir: float | None = None,
                        divisor: float = 4.0):
    """Gaussian-weighted mean of p(Gives) over the interval's windows.

    Returns the predicted label (Gives iff the mean is >= 0.5) and the mean.
    """
    scores = np.asarray(dir_scores, dtype=np.float64)
    lo, hi = max(interval.first, 0), min(interval.last, len(scores) - 1)
    if hi < lo:
        raise ValueError(f"interval [{interval.first}, {interval.last}] contains no windows")
    if sigma_dir is None:
        sigma_dir = default_sigma_dir(interval.length, divisor)
    idx = np.arange(lo, hi + 1)
    mid = (interval.first + interval.last) / 2.0
    w = np.exp(-((idx - mid) ** 2) / (2.0 * sigma_dir ** 2))
    p = float(np.dot(w / w.sum(), scores[lo:hi + 1]))
    return (FrameLabel.GIVES if p >= 0.5 else FrameLabel.RECEIVES), p


def direction_metrics(predictions, truths) -> DirectionResult:
    preds = [FrameLabel(p) for p in predictions]
    truths = [FrameLabel(t) for t in truths]
    if len(preds) != len(truths):
        raise ValueError("predictions and truths differ in length")
    cm = np.zeros((2, 2), dtype=np.int64)
    for t, p in zip(truths, preds):
        cm[int(t), int(p)] += 1
    rows = cm.sum(axis=1, keepdims=True)
    norm = np.divide(cm, rows, out=np.zeros((2, 2)), where=rows > 0)
    f1 = []
    for c in (0, 1):
        tp = cm[c, c]
        prec = _ratio(tp, cm[:, c].sum())
        rec = _ratio(tp, cm[c, :].sum())
        f1.append(_ratio(2 * prec * rec, prec + rec))
    return DirectionResult(preds, cm, norm, f1[0], f1[1])


# -- whole pipeline ------------------------------------------------------------

@dataclass(frozen=True)
class EvalParams:
    sigma: float = 3.0
    kernel_size: int = 15
    min_height: float = 0.1
    prominence_frac: float = 0.01
    tolerance: int = 2
    sigma_dir_divisor: float = 4.0


@dataclass
class StreamEvaluation:
    signal: ConfidenceSignal
    smoothed: np.ndarray
    peaks: list[Peak]
    intervals: list[GtEventInterval]
    match: EventMatchResult
    direction_predictions: list[FrameLabel]
    direction_scores: list[float]


def evaluate_stream(signal: ConfidenceSignal, intervals: list[GtEventInterval],
                    params: EvalParams = EvalParams()) -> StreamEvaluation:
    smoothed = smooth(signal.det_scores, params.sigma, params.kernel_size)
    peaks = find_peaks(smoothed, params.min_height, params.prominence_frac)
    match = match_events([p.index for p in peaks], intervals, params.tolerance)
    preds, scores = [], []
    for iv in intervals:
        label, p = aggregate_direction(signal.dir_scores, iv, divisor=params.sigma_dir_divisor)
        preds.append(label)
        scores.append(p)
    return StreamEvaluation(signal, smoothed, peaks, intervals, match, preds, scores)


def summarize(evaluations: Sequence[StreamEvaluation]) -> dict:
    """Pooled metrics over streams, as a JSON-ready dict."""
    total = EventMatchResult()
    preds, truths = [], []
    for ev in evaluations:
        total = total + ev.match
        preds.extend(ev.direction_predictions)
        truths.extend(iv.direction for iv in ev.intervals)
    precision, recall, f1 = detection_metrics(total)
    d = direction_metrics(preds, truths)
    return {
        "detection": {
            "precision": precision, "recall": recall, "f1": f1,
            "tp": total.tp, "fp": total.fp, "fn": total.fn,
        },
        "direction": {
            "f1_receives": d.f1_receives, "f1_gives": d.f1_gives, "mean_f1": d.mean_f1,
            "confusion": d.confusion.tolist(),
            "normalized_confusion": d.normalized_confusion.tolist(),
            "num_events": len(truths),
        },
    }
