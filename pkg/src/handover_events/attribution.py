"""Embedding-level relevance maps for the detection and direction heads.

The attributed function is a head *logit* as a function of the LSTM input
embeddings ``E`` (T x D), evaluated without dropout.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import net
from .net import ModelParams

TARGETS = ("det", "dir:0", "dir:1")


@dataclass
class AttributionMap:
    relevance: np.ndarray      # (T, D) signed relevance per frame and dimension
    target: str
    baseline: str
    steps: int
    value: float               # F(E)
    baseline_value: float      # F(baseline)

    @property
    def frame(self) -> np.ndarray:
        return self.relevance.sum(axis=1)

    @property
    def completeness_gap(self) -> float:
        """sum(relevance) - (F(E) - F(baseline))."""
        return float(self.relevance.sum() - (self.value - self.baseline_value))


def _parse_target(target: str):
    if target == "det":
        return "det", None
    if target in ("dir:0", "dir:receives"):
        return "dir", 0
    if target in ("dir:1", "dir:gives"):
        return "dir", 1
    raise ValueError(f"unknown attribution target {target!r}; use one of {TARGETS}")


def target_logits_and_grads(params: ModelParams, E, target: str = "det"):
    """Target logit and its gradient w.r.t. ``E`` for a stack ``(S, T, D)``."""
    head, cls = _parse_target(target)
    E = np.asarray(E, dtype=np.float64)
    cache = net.forward_embeddings(E, params)
    S = cache.e.shape[0]
    if head == "det":
        values = cache.det_logit
        _, de = net.backward(cache, params, grad_det_logit=np.ones(S), return_input_grad=True)
    else:
        values = cache.dir_logit[:, cls]
        g = np.zeros((S, 2))
        g[:, cls] = 1.0
        _, de = net.backward(cache, params, grad_dir_logit=g, return_input_grad=True)
    return values.reshape(cache.batch_shape), de


def target_logit(params: ModelParams, E, target: str = "det") -> float:
    return float(target_logits_and_grads(params, E, target)[0])


def _check_shapes(params: ModelParams, E, baseline):
    E = np.asarray(E, dtype=np.float64)
    if E.ndim != 2 or E.shape[1] != params.w_ih.shape[1]:
        raise ValueError(f"embeddings must have shape (T, {params.w_ih.shape[1]}), got {E.shape}")
    B = np.zeros_like(E) if baseline is None else np.asarray(baseline, dtype=np.float64)
    if B.shape != E.shape:
        raise ValueError(f"baseline shape {B.shape} differs from embeddings {E.shape}")
    return E, B


def path_integral(grad_fn, E, baseline, steps: int) -> np.ndarray:
    """``(E - B) * mean_k grad_fn(B + a_k (E - B))`` with midpoints ``a_k = (k + 1/2) / steps``.

    ``grad_fn`` maps a stack of inputs ``(S, ...)`` to their gradients.
    """
    E = np.asarray(E, dtype=np.float64)
    B = np.asarray(baseline, dtype=np.float64)
    alphas = (np.arange(steps) + 0.5) / steps
    alphas = alphas.reshape((-1,) + (1,) * E.ndim)
    return (E - B) * np.asarray(grad_fn(B + alphas * (E - B))).mean(axis=0)


def integrated_gradients(params: ModelParams, E, baseline=None, steps: int = 256,
                         target: str = "det") -> AttributionMap:
    """Integrated gradients along the straight path from ``baseline`` to ``E``.

    The path integral uses the midpoint rule with ``steps`` points. The
    baseline defaults to an all-zero embedding sequence.
    """
    if steps < 8:
        raise ValueError("steps must be >= 8")
    E, B = _check_shapes(params, E, baseline)
    relevance = path_integral(lambda pts: target_logits_and_grads(params, pts, target)[1],
                              E, B, steps)
    ends, _ = target_logits_and_grads(params, np.stack([E, B]), target)
    return AttributionMap(
        relevance=relevance, target=target,
        baseline="zeros" if baseline is None else "custom",
        steps=steps, value=float(ends[0]), baseline_value=float(ends[1]),
    )


def grad_x_input(params: ModelParams, E, target: str = "det") -> AttributionMap:
    """Gradient times input, ``E * dF/dE`` at ``E``."""
    E, B = _check_shapes(params, E, None)
    values, grads = target_logits_and_grads(params, np.stack([E, B]), target)
    return AttributionMap(relevance=E * grads[0], target=target, baseline="zeros",
                          steps=1, value=float(values[0]), baseline_value=float(values[1]))


def frame_relevance(amap: AttributionMap):
    """Per-frame signed and absolute relevance sums."""
    return amap.relevance.sum(axis=1), np.abs(amap.relevance).sum(axis=1)


def write_attribution_csv(path, amap: AttributionMap) -> None:
    T, D = amap.relevance.shape
    lines = ["frame,dim,relevance"]
    for t in range(T):
        for d in range(D):
            lines.append(f"{t},{d},{float(amap.relevance[t, d])!r}")
    lines += [
        f"# target={amap.target}",
        f"# baseline={amap.baseline}",
        f"# steps={amap.steps}",
        f"# f_input={amap.value!r}",
        f"# f_baseline={amap.baseline_value!r}",
        f"# relevance_sum={float(amap.relevance.sum())!r}",
        f"# completeness_gap={amap.completeness_gap!r}",
    ]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_attribution_csv(path):
    """Returns ``(relevance (T, D), footer dict)``."""
    rows, footer = [], {}
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                footer[key] = val
            elif line:
                t, d, r = line.split(",")
                rows.append((int(t), int(d), float(r)))
    T = max(r[0] for r in rows) + 1
    D = max(r[1] for r in rows) + 1
    rel = np.zeros((T, D))
    for t, d, r in rows:
        rel[t, d] = r
    return rel, footer
