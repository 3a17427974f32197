"""Multi-task objective: weighted BCE for detection plus masked weighted CE
for direction, combined as ``lambda_det * L_det + lambda_dir * L_dir``.

Both heads are reduced by a mean; the direction mean runs over the samples
with a handover label only.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .windowing import FrameLabel

EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    w_pos: float = 1.5
    dir_class_weights: tuple[float, float] = (1.0, 1.0)
    lambda_det: float = 2.5
    lambda_dir: float = 1.0

    def __post_init__(self):
        values = (self.w_pos, self.lambda_det, self.lambda_dir, *self.dir_class_weights)
        if len(self.dir_class_weights) != 2:
            raise ValueError("dir_class_weights needs one weight per direction")
        if min(values) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class LossResult:
    total: float
    det: float
    dir: float
    grad_p_det: np.ndarray       # d total / d p_det
    grad_det_logit: np.ndarray   # d total / d detection logit
    grad_dir_logit: np.ndarray   # d total / d direction logits, (B, 2)


def wbce(p_det, y_det, w_pos: float = 1.5):
    """Weighted binary cross-entropy and its derivative with respect to ``p_det``."""
    p = np.clip(np.asarray(p_det, dtype=np.float64), EPS, 1.0 - EPS)
    y = np.asarray(y_det, dtype=np.float64)
    loss = -w_pos * y * np.log(p) - (1.0 - y) * np.log(1.0 - p)
    grad = -w_pos * y / p + (1.0 - y) / (1.0 - p)
    return loss, grad


def wce_dir(p_dir, y_dir, weights=(1.0, 1.0)):
    """Weighted cross-entropy on the direction simplex.

    Returns the loss and its gradient with respect to the direction logits,
    ``weights[y] * (p_dir - onehot(y))``.
    """
    p = np.asarray(p_dir, dtype=np.float64)
    y = np.asarray(y_dir, dtype=np.int64)
    w = np.asarray(weights, dtype=np.float64)[y]
    p_true = np.take_along_axis(p, y[..., None], axis=-1)[..., 0]
    loss = -w * np.log(np.clip(p_true, EPS, 1.0))
    onehot = np.eye(2)[y]
    return loss, w[..., None] * (p - onehot)


def total_loss(p_det, p_dir, labels, lw: LossWeights = LossWeights()) -> LossResult:
    """Batch objective and its gradients with respect to both heads.

    ``labels`` are window training labels (0 Receives, 1 Gives, 2 Idle).
    """
    p_det = np.asarray(p_det, dtype=np.float64).reshape(-1)
    p_dir = np.asarray(p_dir, dtype=np.float64).reshape(-1, 2)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    B = len(labels)
    if B == 0:
        raise ValueError("empty batch")
    y_det = (labels != FrameLabel.IDLE).astype(np.float64)

    det_losses, det_grad_p = wbce(p_det, y_det, lw.w_pos)
    det_mean = float(det_losses.mean())
    grad_p_det = lw.lambda_det * det_grad_p / B
    p = p_det
    grad_det_logit = lw.lambda_det * (-lw.w_pos * y_det * (1.0 - p) + (1.0 - y_det) * p) / B

    grad_dir_logit = np.zeros((B, 2))
    pos = y_det > 0
    n_pos = int(pos.sum())
    dir_mean = 0.0
    if n_pos:
        dir_losses, g = wce_dir(p_dir[pos], labels[pos], lw.dir_class_weights)
        dir_mean = float(dir_losses.mean())
        grad_dir_logit[pos] = lw.lambda_dir * g / n_pos

    return LossResult(
        total=lw.lambda_det * det_mean + lw.lambda_dir * dir_mean,
        det=det_mean,
        dir=dir_mean,
        grad_p_det=grad_p_det,
        grad_det_logit=grad_det_logit,
        grad_dir_logit=grad_dir_logit,
    )


def inverse_frequency_weights(labels) -> tuple[float, float]:
    """Direction class weights ``n / (2 n_c)`` over the handover-labelled windows."""
    labels = np.asarray(labels)
    counts = np.array([(labels == FrameLabel.RECEIVES).sum(), (labels == FrameLabel.GIVES).sum()],
                      dtype=np.float64)
    if (counts == 0).any():
        return (1.0, 1.0)
    w = counts.sum() / (2.0 * counts)
    return (float(w[0]), float(w[1]))
