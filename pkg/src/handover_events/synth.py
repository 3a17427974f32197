"""Synthetic frame-embedding streams with planted handover events.

Every event adds a pattern on top of i.i.d. Gaussian noise. The pattern
cross-fades between two fixed unit vectors ``u`` and ``v`` under a
triangular amplitude envelope. Receives fades ``u -> v``, Gives fades
``v -> u``; the two are exact time reversals of each other, so the set of
frames in an event is the same for both directions and only their order
tells them apart.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InfeasibleError
from .windowing import FrameLabel, LabeledFrameStream

# 334 assistant-to-surgeon vs 150 surgeon-to-assistant events.
DEFAULT_DIRECTION_RATIO = 334 / 484


@dataclass(frozen=True)
class SynthConfig:
    num_streams: int = 20
    frames_per_stream: int = 3000
    feature_dim: int = 16
    event_rate: float = 6.0
    event_min_duration: int = 24
    event_max_duration: int = 48
    direction_ratio: float = DEFAULT_DIRECTION_RATIO
    noise_sigma: float = 0.5
    signal_amplitude: float = 3.0
    min_gap: int = 29
    seed: int = 0

    def __post_init__(self):
        if self.event_min_duration < 1 or self.event_max_duration < self.event_min_duration:
            raise ValueError("need 1 <= event_min_duration <= event_max_duration")
        if not 0.0 <= self.direction_ratio <= 1.0:
            raise ValueError("direction_ratio must be in [0, 1]")
        if self.event_rate < 0 or self.noise_sigma < 0 or self.min_gap < 0:
            raise ValueError("event_rate, noise_sigma and min_gap must be >= 0")
        if self.feature_dim < 2:
            raise ValueError("feature_dim must be >= 2")


@dataclass(frozen=True)
class PlantedEvent:
    start: int
    end: int  # inclusive
    direction: FrameLabel

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError("event start must not exceed its end")
        if not FrameLabel(self.direction).is_handover:
            raise ValueError("event direction must be Receives or Gives")

    def to_dict(self) -> dict:
        return {"start": self.start, "end": self.end, "direction": int(self.direction)}

    @classmethod
    def from_dict(cls, d: dict) -> PlantedEvent:
        return cls(int(d["start"]), int(d["end"]), FrameLabel(int(d["direction"])))


def signal_vectors(cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    """The two orthonormal pattern vectors shared by every stream of ``cfg``."""
    rng = np.random.default_rng([cfg.seed, 1])
    a = rng.standard_normal((2, cfg.feature_dim))
    u = a[0] / np.linalg.norm(a[0])
    v = a[1] - (a[1] @ u) * u
    return u, v / np.linalg.norm(v)


def event_pattern(length: int, direction: FrameLabel, u: np.ndarray, v: np.ndarray,
                  amplitude: float) -> np.ndarray:
    """Noise-free feature offsets of one event, shape (length, F)."""
    phase = (np.arange(length) + 0.5) / length
    envelope = amplitude * (0.25 + 0.75 * (1.0 - np.abs(2.0 * phase - 1.0)))
    if direction == FrameLabel.GIVES:
        phase = 1.0 - phase
    return envelope[:, None] * ((1.0 - phase)[:, None] * u + phase[:, None] * v)


def _place_events(cfg: SynthConfig, rng: np.random.Generator) -> list[PlantedEvent]:
    n = int(round(cfg.event_rate * cfg.frames_per_stream / 1000.0))
    if n == 0:
        return []
    durations = rng.integers(cfg.event_min_duration, cfg.event_max_duration + 1, size=n)
    slack = cfg.frames_per_stream - int(durations.sum()) - (n + 1) * cfg.min_gap
    if slack < 0:
        raise InfeasibleError(
            f"infeasible event density: {n} events of mean length "
            f"{durations.mean():.1f} with gap {cfg.min_gap} need more than "
            f"{cfg.frames_per_stream} frames"
        )
    cuts = np.sort(rng.integers(0, slack + 1, size=n))
    extra = np.diff(np.concatenate([[0], cuts]))
    receives = rng.random(n) < cfg.direction_ratio

    events = []
    pos = 0
    for k in range(n):
        pos += cfg.min_gap + int(extra[k])
        end = pos + int(durations[k]) - 1
        direction = FrameLabel.RECEIVES if receives[k] else FrameLabel.GIVES
        events.append(PlantedEvent(pos, end, direction))
        pos = end + 1
    return events


def generate_stream(cfg: SynthConfig, rng, name: str = "stream"):
    """Generate one labeled stream and its ground-truth events.

    Parameters
    ----------
    cfg : SynthConfig
    rng : int or numpy.random.Generator
        Source of randomness for layout, directions and noise.

    Returns
    -------
    stream : LabeledFrameStream
    events : list of PlantedEvent
    """
    rng = np.random.default_rng(rng)
    events = _place_events(cfg, rng)
    N, F = cfg.frames_per_stream, cfg.feature_dim
    labels = np.full(N, int(FrameLabel.IDLE), dtype=np.int64)
    features = cfg.noise_sigma * rng.standard_normal((N, F))
    u, v = signal_vectors(cfg)
    for ev in events:
        length = ev.end - ev.start + 1
        labels[ev.start:ev.end + 1] = int(ev.direction)
        features[ev.start:ev.end + 1] += event_pattern(
            length, ev.direction, u, v, cfg.signal_amplitude)
    return LabeledFrameStream(labels, features, name=name), events


def generate_dataset(cfg: SynthConfig):
    """All ``cfg.num_streams`` streams; stream ``i`` is seeded with ``seed + i``."""
    return [generate_stream(cfg, cfg.seed + i, name=f"stream_{i:03d}")
            for i in range(cfg.num_streams)]


def jitter_embeddings(stream: LabeledFrameStream, strength: float, rng) -> LabeledFrameStream:
    """Copy of ``stream`` with N(0, strength^2) noise added to every feature."""
    if strength < 0:
        raise ValueError("strength must be >= 0")
    features = stream.features.copy()
    if strength > 0:
        rng = np.random.default_rng(rng)
        features += strength * rng.standard_normal(features.shape)
    return LabeledFrameStream(stream.labels.copy(), features, name=stream.name,
                              height=stream.height, width=stream.width,
                              meta=dict(stream.meta))
