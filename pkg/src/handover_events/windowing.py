"""Temporal windows over labeled frame streams.

A window starting at frame ``t`` samples ``T`` frames at stride ``s_f``::

    t, t + s_f, ..., t + (T - 1) * s_f

and consecutive windows start ``s_s`` frames apart. Each window carries a
training label (majority vote over its central sampled frames), a binary
detection label and an evaluation label (any handover frame in the extent).
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Sequence

import numpy as np


class FrameLabel(IntEnum):
    RECEIVES = 0
    GIVES = 1
    IDLE = 2

    @property
    def is_handover(self) -> bool:
        return self is not FrameLabel.IDLE


HANDOVER_CLASSES = (FrameLabel.RECEIVES, FrameLabel.GIVES)

# 0-based positions among the T sampled frames that take part in the vote.
VOTE_POSITIONS = (2, 3, 4, 5, 6)


@dataclass(frozen=True)
class WindowSpec:
    frames_per_window: int = 8
    frame_stride: int = 4
    sequence_stride: int = 2

    def __post_init__(self):
        if self.frames_per_window < 2:
            raise ValueError("frames_per_window must be >= 2")
        if self.frame_stride < 1 or self.sequence_stride < 1:
            raise ValueError("strides must be >= 1")
        if self.frames_per_window < max(VOTE_POSITIONS) + 1:
            raise ValueError(
                f"frames_per_window must be >= {max(VOTE_POSITIONS) + 1} "
                "to hold the central vote frames"
            )

    @property
    def extent(self) -> int:
        """Number of raw frames covered by one window."""
        return (self.frames_per_window - 1) * self.frame_stride + 1

    def sampled_indices(self, start: int) -> np.ndarray:
        return start + self.frame_stride * np.arange(self.frames_per_window)


@dataclass(frozen=True)
class Window:
    start: int
    sampled_indices: tuple[int, ...]
    train_label: FrameLabel
    det_label: int
    eval_positive: int


@dataclass
class LabeledFrameStream:
    """Per-frame labels and feature vectors of one video segment.

    ``height``/``width`` describe the source frames and are kept as metadata
    only; pixels never enter this package.
    """

    labels: np.ndarray
    features: np.ndarray
    name: str = "stream"
    height: int | None = None
    width: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.labels.ndim != 1:
            raise ValueError("labels must be one-dimensional")
        if self.features.ndim != 2:
            raise ValueError("features must be a (num_frames, feature_dim) array")
        if len(self.labels) != len(self.features):
            raise ValueError(
                f"labels ({len(self.labels)}) and features ({len(self.features)}) "
                "differ in length"
            )
        if len(self.labels) and not np.isin(self.labels, [0, 1, 2]).all():
            raise ValueError("labels must be in {0, 1, 2}")

    @property
    def num_frames(self) -> int:
        return len(self.labels)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


def enumerate_windows(num_frames: int, spec: WindowSpec) -> list[int]:
    """Start indices of every window that fits inside ``num_frames`` frames."""
    last_start = num_frames - spec.extent
    if last_start < 0:
        return []
    return list(range(0, last_start + 1, spec.sequence_stride))


def majority_vote(votes: Sequence[int]) -> FrameLabel:
    """Majority class of ``votes``.

    Ties go to a handover class over Idle; a Receives/Gives tie goes to the
    class that appears first in ``votes``.
    """
    votes = [FrameLabel(v) for v in votes]
    counts = Counter(votes)
    best = max(counts.values())
    tied = [c for c, n in counts.items() if n == best]
    if len(tied) == 1:
        return tied[0]
    handover = [c for c in tied if c.is_handover]
    if not handover:
        return FrameLabel.IDLE
    if len(handover) == 1:
        return handover[0]
    return next(v for v in votes if v in handover)


def window_train_label(labels: np.ndarray, sampled_indices: Sequence[int]) -> FrameLabel:
    idx = np.asarray(sampled_indices)
    return majority_vote(labels[idx[list(VOTE_POSITIONS)]])


def derive_detection_label(y) -> int:
    return int(FrameLabel(y).is_handover)


def window_eval_positive(labels: np.ndarray, start: int, spec: WindowSpec) -> int:
    """1 if any raw frame of the window extent is a handover frame."""
    extent = labels[start:start + spec.extent]
    return int(np.any(extent != FrameLabel.IDLE))


def build_windows(labels: np.ndarray, spec: WindowSpec) -> list[Window]:
    labels = np.asarray(labels)
    windows = []
    for start in enumerate_windows(len(labels), spec):
        idx = spec.sampled_indices(start)
        y = window_train_label(labels, idx)
        windows.append(Window(
            start=start,
            sampled_indices=tuple(int(i) for i in idx),
            train_label=y,
            det_label=derive_detection_label(y),
            eval_positive=window_eval_positive(labels, start, spec),
        ))
    return windows


def window_features(stream: LabeledFrameStream, windows: Sequence[Window]) -> np.ndarray:
    """Stack the sampled feature vectors of ``windows`` into (n, T, F)."""
    if not windows:
        return np.empty((0, 0, stream.feature_dim))
    idx = np.array([w.sampled_indices for w in windows])
    return stream.features[idx]


def window_arrays(streams: Sequence[LabeledFrameStream], spec: WindowSpec):
    """Windows of several streams as arrays.

    Returns
    -------
    X : ndarray, shape (n, T, F)
    y : ndarray, shape (n,)
        Training labels (majority vote).
    """
    xs, ys = [], []
    for stream in streams:
        wins = build_windows(stream.labels, spec)
        if wins:
            xs.append(window_features(stream, wins))
            ys.append(np.array([int(w.train_label) for w in wins]))
    if not xs:
        F = streams[0].feature_dim if streams else 0
        return np.empty((0, spec.frames_per_window, F)), np.empty(0, dtype=np.int64)
    return np.concatenate(xs), np.concatenate(ys)
