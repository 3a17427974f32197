"""Training loop: class-weighted window sampling, AdamW with two parameter
groups, linear warmup followed by cosine annealing, global-norm clipping,
gradient accumulation and early stopping on validation loss.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import net
from .exceptions import NumericError
from .loss import LossWeights, inverse_frequency_weights, total_loss
from .net import FIELDS, PROJECTION_FIELDS, ModelDims, ModelParams
from .windowing import FrameLabel

logger = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    lr_projection: float = 3e-6
    lr_temporal: float = 1e-5
    wd_projection: float = 1e-4
    wd_temporal: float = 1e-5
    batch_size: int = 8
    accumulation_steps: int = 2
    max_grad_norm: float = 1.0
    warmup_fraction: float = 0.05
    epochs: int = 10
    epoch_fraction: float = 1.0 / 3.0
    sampler_idle: float = 0.6
    sampler_receives: float = 0.2
    sampler_gives: float = 0.2
    early_stop_patience: int = 3
    projection_dropout: float = 0.3
    lstm_dropout: float = 0.4
    embedding_jitter: float = 0.0
    w_pos: float = 1.5
    lambda_det: float = 2.5
    lambda_dir: float = 1.0
    dir_class_weights: tuple[float, float] | None = None  # None: inverse class frequency
    seed: int = 0

    def __post_init__(self):
        if abs(sum(self.sampler_probs) - 1.0) > 1e-9:
            raise ValueError("sampler probabilities must sum to 1")
        rates = (self.lr_projection, self.lr_temporal, self.wd_projection, self.wd_temporal,
                 self.warmup_fraction, self.embedding_jitter, *self.sampler_probs)
        if min(rates) < 0:
            raise ValueError("rates and probabilities must be non-negative")
        if self.batch_size < 1 or self.accumulation_steps < 1 or self.epochs < 0:
            raise ValueError("batch_size and accumulation_steps must be >= 1, epochs >= 0")
        if self.max_grad_norm <= 0:
            raise ValueError("max_grad_norm must be positive")

    @property
    def sampler_probs(self) -> tuple[float, float, float]:
        """Class probabilities indexed by FrameLabel value."""
        return (self.sampler_receives, self.sampler_gives, self.sampler_idle)

    def loss_weights(self, train_labels=None) -> LossWeights:
        weights = self.dir_class_weights
        if weights is None:
            weights = (1.0, 1.0) if train_labels is None else inverse_frequency_weights(train_labels)
        return LossWeights(self.w_pos, tuple(weights), self.lambda_det, self.lambda_dir)


@dataclass
class OptimizerState:
    m: ModelParams
    v: ModelParams
    step: int = 0

    @classmethod
    def zeros(cls, params: ModelParams) -> OptimizerState:
        return cls(params.zeros_like(), params.zeros_like(), 0)


@dataclass
class TrainingData:
    X: np.ndarray            # (n, T, F) windowed features
    y: np.ndarray            # (n,) window training labels
    X_val: np.ndarray | None = None
    y_val: np.ndarray | None = None


@dataclass
class TrainResult:
    params: ModelParams
    history: list[dict] = field(default_factory=list)
    lr_trace: list[float] = field(default_factory=list)
    best_epoch: int | None = None


def group_by_label(labels) -> list[np.ndarray]:
    labels = np.asarray(labels)
    return [np.flatnonzero(labels == c) for c in FrameLabel]


def sample_batch(groups, probs, rng, batch_size: int = 8) -> np.ndarray:
    """Indices of one batch: class ~ ``probs``, then a uniform window of that class."""
    probs = np.asarray(probs, dtype=np.float64)
    for c, p in enumerate(probs):
        if p > 0 and len(groups[c]) == 0:
            raise ValueError(f"class {FrameLabel(c).name} has sampling probability {p} but no windows")
    classes = rng.choice(len(probs), size=batch_size, p=probs)
    return np.array([groups[c][rng.integers(len(groups[c]))] for c in classes], dtype=np.int64)


def lr_at(step: int, total_steps: int, warmup_fraction: float, base_lr: float) -> float:
    """Linear warmup over ceil(warmup_fraction * total) steps, then cosine to 0."""
    warmup = math.ceil(warmup_fraction * total_steps)
    if step < warmup:
        return base_lr * step / warmup
    span = total_steps - 1 - warmup
    if span <= 0:
        return base_lr
    progress = (step - warmup) / span
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def global_norm(grads: ModelParams) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for _, g in grads.items()))


def clip_grad_norm(grads: ModelParams, max_norm: float):
    """Scale ``grads`` so their global L2 norm is at most ``max_norm``.

    Returns the (possibly) scaled gradients and the norm before clipping.
    """
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        return grads.map(lambda g: g * scale), norm
    return grads, norm


def _per_field(value, name):
    return value[name] if isinstance(value, dict) else value


def adamw_step(params: ModelParams, grads: ModelParams, state: OptimizerState,
               lr, weight_decay, betas=ADAM_BETAS, eps=ADAM_EPS):
    """One decoupled-weight-decay Adam update.

    ``lr`` and ``weight_decay`` are scalars or dicts keyed by parameter field.
    Returns new ``(params, state)``; inputs are not modified.
    """
    b1, b2 = betas
    step = state.step + 1
    c1, c2 = 1.0 - b1 ** step, 1.0 - b2 ** step
    new_p, new_m, new_v = {}, {}, {}
    for name, theta in params.items():
        g = getattr(grads, name)
        lr_f, wd_f = _per_field(lr, name), _per_field(weight_decay, name)
        m = b1 * getattr(state.m, name) + (1.0 - b1) * g
        v = b2 * getattr(state.v, name) + (1.0 - b2) * g * g
        theta = theta - lr_f * wd_f * theta
        new_p[name] = theta - lr_f * (m / c1) / (np.sqrt(v / c2) + eps)
        new_m[name], new_v[name] = m, v
    return ModelParams(**new_p), OptimizerState(ModelParams(**new_m), ModelParams(**new_v), step)


def group_values(params: ModelParams, projection: float, temporal: float) -> dict:
    return {name: projection if name in PROJECTION_FIELDS else temporal for name, _ in params.items()}


def predict(params: ModelParams, X, chunk: int = 4096):
    """Eval-mode ``(p_det, p_dir)`` for a stack of windows ``(n, T, F)``."""
    X = np.asarray(X, dtype=np.float64)
    p_det = np.empty(len(X))
    p_dir = np.empty((len(X), 2))
    for s in range(0, len(X), chunk):
        p_det[s:s + chunk], p_dir[s:s + chunk], _ = net.forward(X[s:s + chunk], params)
    return p_det, p_dir


def evaluate_loss(params: ModelParams, X, y, lw: LossWeights):
    p_det, p_dir = predict(params, X)
    return total_loss(p_det, p_dir, y, lw)


def micro_batch_gradients(params, X, y, lw, cfg: TrainConfig, rng=None, masks=None):
    """Loss and parameter gradients of one micro-batch."""
    p_det, p_dir, cache = net.forward(
        X, params, dropout=(cfg.projection_dropout, cfg.lstm_dropout), rng=rng, masks=masks)
    res = total_loss(p_det, p_dir, y, lw)
    grads = net.backward(cache, params, grad_det_logit=res.grad_det_logit,
                         grad_dir_logit=res.grad_dir_logit)
    return res, grads


def schedule_length(num_windows: int, cfg: TrainConfig) -> tuple[int, int]:
    """``(micro_batches_per_epoch, optimizer_steps_per_epoch)``."""
    micro = math.ceil(num_windows * cfg.epoch_fraction / cfg.batch_size)
    updates = max(1, math.ceil(micro / cfg.accumulation_steps))
    return updates * cfg.accumulation_steps, updates


def train(data: TrainingData, dims: ModelDims, cfg: TrainConfig = TrainConfig(),
          params: ModelParams | None = None, on_step=None) -> TrainResult:
    """Train from ``init_params(dims, cfg.seed)`` (or ``params``).

    Deterministic for a given ``cfg.seed``. With validation data the returned
    parameters are those of the epoch with the lowest validation total loss.
    ``on_step(step, micro_grads, applied_grads)`` is called before every
    optimizer update with the accumulated micro-batch gradients and the
    averaged, clipped gradient that is applied.
    """
    params = net.init_params(dims, cfg.seed) if params is None else params.copy()
    result = TrainResult(params=params)
    if cfg.epochs == 0:
        return result

    X, y = np.asarray(data.X, dtype=np.float64), np.asarray(data.y, dtype=np.int64)
    if X.shape[-1] != dims.feature_dim:
        raise ValueError(f"window features have dim {X.shape[-1]}, model expects {dims.feature_dim}")
    lw = cfg.loss_weights(y)
    groups = group_by_label(y)
    probs = cfg.sampler_probs
    rng = np.random.default_rng(cfg.seed)
    has_val = data.X_val is not None and len(data.X_val) > 0

    micro_per_epoch, updates_per_epoch = schedule_length(len(X), cfg)
    total_steps = cfg.epochs * updates_per_epoch
    state = OptimizerState.zeros(params)
    wd = group_values(params, cfg.wd_projection, cfg.wd_temporal)

    best_val, best_params, stale = math.inf, params, 0
    for epoch in range(1, cfg.epochs + 1):
        det_sum = dir_sum = 0.0
        micro = []
        lr_t = 0.0
        for k in range(micro_per_epoch):
            idx = sample_batch(groups, probs, rng, cfg.batch_size)
            xb = X[idx]
            if cfg.embedding_jitter > 0:
                xb = xb + cfg.embedding_jitter * rng.standard_normal(xb.shape)
            res, grads = micro_batch_gradients(params, xb, y[idx], lw, cfg, rng=rng)
            if not math.isfinite(res.total):
                counts = np.bincount(y[idx], minlength=3).tolist()
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, optimizer step {state.step}, "
                    f"micro-batch {k}; batch class counts [R, G, I] = {counts}"
                )
            det_sum += res.det
            dir_sum += res.dir
            micro.append(grads)
            if len(micro) == cfg.accumulation_steps:
                acc = ModelParams(**{n: sum(getattr(g, n) for g in micro) / len(micro)
                                     for n in FIELDS})
                acc, _ = clip_grad_norm(acc, cfg.max_grad_norm)
                if on_step is not None:
                    on_step(state.step, micro, acc)
                lr_p = lr_at(state.step, total_steps, cfg.warmup_fraction, cfg.lr_projection)
                lr_t = lr_at(state.step, total_steps, cfg.warmup_fraction, cfg.lr_temporal)
                result.lr_trace.append(lr_t)
                params, state = adamw_step(params, acc, state, group_values(params, lr_p, lr_t), wd)
                micro = []

        row = {
            "epoch": epoch,
            "lr": lr_t,
            "train_det": det_sum / micro_per_epoch,
            "train_dir": dir_sum / micro_per_epoch,
        }
        if has_val:
            val = evaluate_loss(params, data.X_val, data.y_val, lw)
            if not math.isfinite(val.total):
                raise NumericError(f"non-finite validation loss after epoch {epoch}")
            row.update(val_det=val.det, val_dir=val.dir, val_total=val.total)
        else:
            row.update(val_det=math.nan, val_dir=math.nan, val_total=math.nan)
        result.history.append(row)
        logger.info("epoch %d: %s", epoch, row)

        if has_val:
            if row["val_total"] < best_val:
                best_val, best_params, stale = row["val_total"], params, 0
                result.best_epoch = epoch
            else:
                stale += 1
                if stale >= cfg.early_stop_patience:
                    logger.info("early stop after epoch %d", epoch)
                    break
    result.params = best_params if has_val else params
    return result

