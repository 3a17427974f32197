"""Run configuration: one flat set of ``key=value`` settings for every command.

Precedence, lowest first: built-in defaults, config file, the
``HANDOVER_EVENTS_SEED`` environment variable (seed only), command-line flags.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .events import EvalParams
from .exceptions import ConfigError
from .net import ModelDims
from .synth import DEFAULT_DIRECTION_RATIO, SynthConfig
from .train import TrainConfig
from .windowing import WindowSpec

SEED_ENV = "HANDOVER_EVENTS_SEED"


def _opt(default, help):
    return field(default=default, metadata={"help": help})


@dataclass
class RunConfig:
    seed: int = _opt(0, "global seed (data, init, sampling, dropout)")
    # synthetic data
    num_streams: int = _opt(20, "number of synthetic streams")
    num_test_streams: int = _opt(4, "trailing streams held out for evaluation")
    frames_per_stream: int = _opt(3000, "frames per synthetic stream")
    feature_dim: int = _opt(16, "per-frame feature dimension")
    event_rate: float = _opt(6.0, "planted events per 1000 frames")
    event_min_duration: int = _opt(24, "shortest event, frames")
    event_max_duration: int = _opt(48, "longest event, frames")
    direction_ratio: float = _opt(DEFAULT_DIRECTION_RATIO, "fraction of Receives events")
    noise_sigma: float = _opt(0.5, "feature noise std")
    signal_amplitude: float = _opt(3.0, "event pattern peak amplitude")
    min_gap: int = _opt(29, "minimum idle frames between events")
    stream_format: str = _opt("jsonl", "stream file format: jsonl or csv")
    # windows
    frames_per_window: int = _opt(8, "sampled frames per window (T)")
    frame_stride: int = _opt(4, "stride between sampled frames")
    sequence_stride: int = _opt(2, "stride between window starts")
    # model
    embedding_dim: int = _opt(64, "projection / embedding dimension")
    hidden_dim: int = _opt(64, "LSTM hidden size")
    projection_dropout: float = _opt(0.3, "dropout on projected embeddings")
    lstm_dropout: float = _opt(0.4, "dropout on the final hidden state")
    # training
    lr_projection: float = _opt(3e-6, "peak learning rate, projection group")
    lr_temporal: float = _opt(1e-5, "peak learning rate, LSTM + heads group")
    wd_projection: float = _opt(1e-4, "AdamW weight decay, projection group")
    wd_temporal: float = _opt(1e-5, "AdamW weight decay, LSTM + heads group")
    batch_size: int = _opt(8, "micro-batch size")
    accumulation_steps: int = _opt(2, "micro-batches per optimizer step")
    max_grad_norm: float = _opt(1.0, "global gradient norm clip")
    warmup_fraction: float = _opt(0.05, "linear warmup share of all steps")
    epochs: int = _opt(10, "maximum epochs")
    epoch_fraction: float = _opt(1.0 / 3.0, "share of training windows drawn per epoch")
    sampler_idle: float = _opt(0.6, "sampling probability, Idle windows")
    sampler_receives: float = _opt(0.2, "sampling probability, Receives windows")
    sampler_gives: float = _opt(0.2, "sampling probability, Gives windows")
    early_stop_patience: int = _opt(3, "epochs without validation improvement before stopping")
    val_fraction: float = _opt(0.15, "trailing share of training streams used for validation")
    embedding_jitter: float = _opt(0.0, "std of Gaussian feature jitter during training")
    w_pos: float = _opt(1.5, "positive weight of the detection BCE")
    lambda_det: float = _opt(2.5, "detection loss weight")
    lambda_dir: float = _opt(1.0, "direction loss weight")
    dir_class_weights: str = _opt("auto", "direction CE weights 'wR,wG' or 'auto' (inverse frequency)")
    # evaluation
    sigma: float = _opt(3.0, "Gaussian smoothing sigma, windows")
    kernel_size: int = _opt(15, "Gaussian kernel length (odd)")
    min_height: float = _opt(0.1, "minimum smoothed peak height")
    prominence_frac: float = _opt(0.01, "minimum prominence as a share of the signal range")
    tolerance: int = _opt(2, "matching tolerance around a ground-truth interval, windows")
    sigma_dir_divisor: float = _opt(4.0, "direction aggregation sigma = max(1, interval_length / divisor)")
    shuffle_frames: bool = _opt(False, "evaluation ablation: shuffle frame order inside each window")
    # attribution
    ig_steps: int = _opt(256, "integrated-gradients path steps")
    attribution_target: str = _opt("det", "attribution target: det, dir:0 or dir:1")
    # paths
    data_dir: str = _opt("data", "dataset directory")
    checkpoint: str = _opt("model.ckpt", "checkpoint path")
    history: str = _opt("history.csv", "training history CSV path")
    metrics: str = _opt("metrics.json", "evaluation metrics JSON path")
    out_dir: str = _opt("out", "directory for predictions, plots and attributions")

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            num_streams=self.num_streams, frames_per_stream=self.frames_per_stream,
            feature_dim=self.feature_dim, event_rate=self.event_rate,
            event_min_duration=self.event_min_duration, event_max_duration=self.event_max_duration,
            direction_ratio=self.direction_ratio, noise_sigma=self.noise_sigma,
            signal_amplitude=self.signal_amplitude, min_gap=self.min_gap, seed=self.seed,
        )

    def window_spec(self) -> WindowSpec:
        return WindowSpec(self.frames_per_window, self.frame_stride, self.sequence_stride)

    def model_dims(self, feature_dim: int | None = None) -> ModelDims:
        return ModelDims(feature_dim or self.feature_dim, self.embedding_dim, self.hidden_dim)

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)} - {"dir_class_weights", "seed"}
        kwargs = {n: getattr(self, n) for n in names}
        return TrainConfig(dir_class_weights=self.parsed_dir_weights(), seed=self.seed, **kwargs)

    def eval_params(self) -> EvalParams:
        return EvalParams(self.sigma, self.kernel_size, self.min_height, self.prominence_frac,
                          self.tolerance, self.sigma_dir_divisor)

    def parsed_dir_weights(self):
        if self.dir_class_weights.strip().lower() == "auto":
            return None
        try:
            w = tuple(float(v) for v in self.dir_class_weights.split(","))
        except ValueError:
            w = ()
        if len(w) != 2:
            raise ConfigError(f"dir_class_weights must be 'auto' or 'wR,wG', got {self.dir_class_weights!r}")
        return w

    def validate(self) -> RunConfig:
        try:
            self.synth_config()
            self.window_spec()
            self.model_dims()
            self.train_config()
            if self.kernel_size < 1 or self.kernel_size % 2 == 0:
                raise ValueError("kernel_size must be a positive odd integer")
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.stream_format not in ("jsonl", "csv"):
            raise ConfigError("stream_format must be 'jsonl' or 'csv'")
        if not 0 <= self.num_test_streams <= self.num_streams:
            raise ConfigError("num_test_streams must be between 0 and num_streams")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must be in [0, 1)")
        return self


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def coerce(key: str, raw: str):
    if key not in FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    kind = FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"invalid {kind} value for {key}: {raw!r}") from exc
    return raw


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value")
        key, _, val = line.partition("=")
        key = key.strip()
        try:
            values[key] = coerce(key, val)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from exc
    return values


def load_config(path=None, overrides: dict | None = None, environ=None) -> RunConfig:
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        values.update(parse_config_text(text, str(path)))
    environ = os.environ if environ is None else environ
    if environ.get(SEED_ENV):
        values["seed"] = coerce("seed", environ[SEED_ENV])
    for key, val in (overrides or {}).items():
        values[key] = coerce(key, val) if isinstance(val, str) else val
    unknown = set(values) - set(FIELD_TYPES)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**values).validate()


def dump_config(cfg: RunConfig) -> str:
    return "".join(f"{f.name}={getattr(cfg, f.name)}\n" for f in fields(RunConfig))
