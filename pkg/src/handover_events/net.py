"""Projection -> LSTM -> detection/direction heads, forward and backward.

All array functions accept an optional leading batch dimension: a single
window is ``(T, F)``, a batch is ``(B, T, F)``.

LSTM gate blocks are stacked in the order (input, forget, candidate, output)
along the first axis of ``w_ih``, ``w_hh`` and ``b_lstm``::

    a_t = W_ih e_t + W_hh h_{t-1} + b
    i, f, o = sigmoid(a_i), sigmoid(a_f), sigmoid(a_o);  g = tanh(a_g)
    c_t = f * c_{t-1} + i * g
    h_t = o * tanh(c_t)

Checkpoint files are ``MAGIC | uint32 header length | JSON header | payload``
where the payload is every field of :class:`ModelParams`, in ``FIELDS``
order, flattened row-major as little-endian float32.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .exceptions import NumericError

NUM_DIRECTIONS = 2
FIELDS = ("proj_w", "proj_b", "w_ih", "w_hh", "b_lstm", "det_w", "det_b", "dir_w", "dir_b")
PROJECTION_FIELDS = ("proj_w", "proj_b")
TEMPORAL_FIELDS = tuple(f for f in FIELDS if f not in PROJECTION_FIELDS)
GATE_ORDER = ("input", "forget", "candidate", "output")

CHECKPOINT_MAGIC = b"HOEVCKPT"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelDims:
    feature_dim: int
    embedding_dim: int = 64
    hidden_dim: int = 64

    def __post_init__(self):
        if min(self.feature_dim, self.embedding_dim, self.hidden_dim) <= 0:
            raise ValueError("all model dimensions must be positive")

    def shapes(self) -> dict[str, tuple[int, ...]]:
        F, D, H = self.feature_dim, self.embedding_dim, self.hidden_dim
        return {
            "proj_w": (D, F), "proj_b": (D,),
            "w_ih": (4 * H, D), "w_hh": (4 * H, H), "b_lstm": (4 * H,),
            "det_w": (1, H), "det_b": (1,),
            "dir_w": (NUM_DIRECTIONS, H), "dir_b": (NUM_DIRECTIONS,),
        }


@dataclass
class ModelParams:
    """Every trainable tensor of the model. Also used to hold gradients."""

    proj_w: np.ndarray
    proj_b: np.ndarray
    w_ih: np.ndarray
    w_hh: np.ndarray
    b_lstm: np.ndarray
    det_w: np.ndarray
    det_b: np.ndarray
    dir_w: np.ndarray
    dir_b: np.ndarray

    @property
    def dims(self) -> ModelDims:
        D, F = self.proj_w.shape
        return ModelDims(F, D, self.w_hh.shape[1])

    def items(self):
        return ((name, getattr(self, name)) for name in FIELDS)

    def map(self, fn) -> ModelParams:
        return ModelParams(**{name: fn(arr) for name, arr in self.items()})

    def copy(self) -> ModelParams:
        return self.map(np.copy)

    def zeros_like(self) -> ModelParams:
        return self.map(np.zeros_like)

    def flat(self) -> np.ndarray:
        return np.concatenate([arr.ravel() for _, arr in self.items()])

    @classmethod
    def from_flat(cls, vec: np.ndarray, dims: ModelDims) -> ModelParams:
        out, pos = {}, 0
        for name in FIELDS:
            shape = dims.shapes()[name]
            n = int(np.prod(shape))
            out[name] = np.array(vec[pos:pos + n], dtype=np.float64).reshape(shape)
            pos += n
        if pos != len(vec):
            raise ValueError(f"flat vector has {len(vec)} entries, expected {pos}")
        return cls(**out)

    def validate(self, dims: ModelDims | None = None):
        dims = dims or self.dims
        for name, arr in self.items():
            if arr.shape != dims.shapes()[name]:
                raise ValueError(f"{name} has shape {arr.shape}, expected {dims.shapes()[name]}")
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"{name} contains non-finite values")


@dataclass
class ForwardCache:
    batch_shape: tuple
    x: np.ndarray | None       # (B, T, F); None when the pass started at the embeddings
    mask_e: np.ndarray | None  # (B, T, D), inverted-dropout scale per embedding entry
    e: np.ndarray        # (B, T, D) embeddings fed to the LSTM
    gates: np.ndarray    # (B, T, 4H) post-activation gate values
    c: np.ndarray        # (B, T + 1, H), c[:, 0] = 0
    h: np.ndarray        # (B, T + 1, H), h[:, 0] = 0
    mask_z: np.ndarray   # (B, H)
    z: np.ndarray        # (B, H) = h[:, T]
    z_drop: np.ndarray   # (B, H)
    det_logit: np.ndarray
    dir_logit: np.ndarray
    p_det: np.ndarray
    p_dir: np.ndarray


def init_params(dims: ModelDims, seed=0) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights; zero biases, forget bias 1."""
    rng = np.random.default_rng(seed)
    F, D, H = dims.feature_dim, dims.embedding_dim, dims.hidden_dim

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    b_lstm = np.zeros(4 * H)
    b_lstm[H:2 * H] = 1.0
    return ModelParams(
        proj_w=uniform((D, F), F), proj_b=np.zeros(D),
        w_ih=uniform((4 * H, D), D), w_hh=uniform((4 * H, H), H), b_lstm=b_lstm,
        det_w=uniform((1, H), H), det_b=np.zeros(1),
        dir_w=uniform((NUM_DIRECTIONS, H), H), dir_b=np.zeros(NUM_DIRECTIONS),
    )


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def dropout_mask(shape, rate: float, rng) -> np.ndarray:
    """Inverted-dropout multiplier: 0 for dropped entries, 1/(1-rate) otherwise."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if rng is None or rate == 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _as_batch(x: np.ndarray, trailing: int):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < trailing:
        raise ValueError(f"expected at least {trailing} dimensions, got shape {x.shape}")
    batch_shape = x.shape[:-trailing]
    return x.reshape((-1,) + x.shape[-trailing:]), batch_shape


def project(features, params: ModelParams, dropout_rate: float = 0.0, rng=None,
            mask=None) -> np.ndarray:
    """Linear projection of per-frame features into the embedding space.

    Dropout is active only when ``rng`` (or an explicit ``mask``) is given.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.shape[-1] != params.proj_w.shape[1]:
        raise ValueError(
            f"feature dimension {features.shape[-1]} does not match "
            f"projection input {params.proj_w.shape[1]}"
        )
    e = features @ params.proj_w.T + params.proj_b
    if mask is None:
        mask = dropout_mask(e.shape, dropout_rate, rng)
    return e * mask


def lstm_forward(e, params: ModelParams):
    """Run the LSTM over ``e`` (``(T, D)`` or ``(B, T, D)``) from zero state.

    Returns the final hidden state ``z`` and a cache dict for :func:`backward`.
    """
    e2, batch_shape = _as_batch(e, 2)
    B, T, D = e2.shape
    if T < 1:
        raise ValueError("need at least one time step")
    if D != params.w_ih.shape[1]:
        raise ValueError(f"embedding dim {D} does not match LSTM input {params.w_ih.shape[1]}")
    H = params.w_hh.shape[1]
    gates = np.empty((B, T, 4 * H))
    c = np.zeros((B, T + 1, H))
    h = np.zeros((B, T + 1, H))
    x_part = e2 @ params.w_ih.T + params.b_lstm
    for t in range(T):
        a = x_part[:, t] + h[:, t] @ params.w_hh.T
        gates[:, t, :2 * H] = sigmoid(a[:, :2 * H])
        gates[:, t, 2 * H:3 * H] = np.tanh(a[:, 2 * H:3 * H])
        gates[:, t, 3 * H:] = sigmoid(a[:, 3 * H:])
        i, f, g, o = np.split(gates[:, t], 4, axis=1)
        c[:, t + 1] = f * c[:, t] + i * g
        h[:, t + 1] = o * np.tanh(c[:, t + 1])
    if not np.all(np.isfinite(h[:, T])):
        raise NumericError("numeric overflow in LSTM recurrence")
    z = h[:, T]
    cache = {"e": e2, "gates": gates, "c": c, "h": h, "batch_shape": batch_shape}
    return z.reshape(batch_shape + (H,)), cache


def heads_forward(z, params: ModelParams):
    """Detection probability and the [Receives, Gives] direction distribution."""
    det_logit, dir_logit = head_logits(z, params)
    return sigmoid(det_logit), softmax(dir_logit)


def head_logits(z, params: ModelParams):
    z = np.asarray(z, dtype=np.float64)
    det_logit = (z @ params.det_w.T)[..., 0] + params.det_b[0]
    dir_logit = z @ params.dir_w.T + params.dir_b
    return det_logit, dir_logit


def forward(x, params: ModelParams, dropout=(0.0, 0.0), rng=None, masks=None):
    """Full forward pass.

    Parameters
    ----------
    x : array, shape (T, F) or (B, T, F)
    dropout : (projection_rate, lstm_output_rate)
        Only applied when ``rng`` is given (training mode).
    masks : (mask_e, mask_z), optional
        Explicit inverted-dropout multipliers; override ``rng``.

    Returns
    -------
    p_det, p_dir, cache
    """
    x2, batch_shape = _as_batch(x, 2)
    D, H = params.proj_w.shape[0], params.w_hh.shape[1]
    B, T, _ = x2.shape
    if masks is not None:
        mask_e = np.broadcast_to(np.asarray(masks[0], dtype=np.float64).reshape(-1, T, D), (B, T, D))
        mask_z = np.broadcast_to(np.asarray(masks[1], dtype=np.float64).reshape(-1, H), (B, H))
    else:
        mask_e = dropout_mask((B, T, D), dropout[0], rng)
        mask_z = dropout_mask((B, H), dropout[1], rng)
    e = project(x2, params, mask=mask_e)
    cache = forward_embeddings(e, params, mask_z=mask_z)
    cache.x, cache.mask_e, cache.batch_shape = x2, mask_e, batch_shape
    return cache.p_det.reshape(batch_shape), cache.p_dir.reshape(batch_shape + (2,)), cache


def forward_embeddings(e, params: ModelParams, mask_z=None) -> ForwardCache:
    """Forward pass starting at the LSTM input; ``cache.x`` is left as None.

    Backward through such a cache leaves the projection gradients at zero.
    """
    z, lc = lstm_forward(e, params)
    e2 = lc["e"]
    z = z.reshape(len(e2), -1)
    mask_z = np.ones_like(z) if mask_z is None else mask_z
    z_drop = z * mask_z
    det_logit, dir_logit = head_logits(z_drop, params)
    return ForwardCache(
        batch_shape=lc["batch_shape"], x=None, mask_e=None, e=e2, gates=lc["gates"],
        c=lc["c"], h=lc["h"], mask_z=mask_z, z=z, z_drop=z_drop,
        det_logit=det_logit, dir_logit=dir_logit,
        p_det=sigmoid(det_logit), p_dir=softmax(dir_logit),
    )


def backward(cache: ForwardCache, params: ModelParams, grad_p_det=None, grad_p_dir=None, *,
             grad_det_logit=None, grad_dir_logit=None, return_input_grad=False):
    """Reverse-mode gradients of a scalar loss through the whole network.

    Upstream gradients may be given with respect to the probabilities
    (``grad_p_det``, ``grad_p_dir``) or the head logits; both are summed.
    With ``return_input_grad`` also returns the gradient with respect to the
    LSTM input embeddings (after dropout), shaped like ``cache.e``.
    """
    B, T, D = cache.e.shape
    H = params.w_hh.shape[1]
    if D != params.w_ih.shape[1] or cache.h.shape[2] != H or \
            (cache.x is not None and cache.x.shape[2] != params.proj_w.shape[1]):
        raise ValueError("forward cache does not match parameter shapes")

    def upstream(value, shape):
        return np.zeros(shape) if value is None else np.asarray(value, dtype=np.float64).reshape(shape)

    p_det, p_dir = cache.p_det, cache.p_dir
    g_det = upstream(grad_det_logit, (B,))
    g_det = g_det + upstream(grad_p_det, (B,)) * p_det * (1.0 - p_det)
    g_dir = upstream(grad_dir_logit, (B, 2))
    gp = upstream(grad_p_dir, (B, 2))
    g_dir = g_dir + p_dir * (gp - (gp * p_dir).sum(axis=1, keepdims=True))

    grads = params.zeros_like()
    grads.det_w = (g_det @ cache.z_drop)[None, :]
    grads.det_b = np.array([g_det.sum()])
    grads.dir_w = g_dir.T @ cache.z_drop
    grads.dir_b = g_dir.sum(axis=0)
    dz = (g_det[:, None] * params.det_w + g_dir @ params.dir_w) * cache.mask_z

    da_all = np.empty((B, T, 4 * H))
    dh, dc = dz, np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        i, f, g, o = np.split(cache.gates[:, t], 4, axis=1)
        tc = np.tanh(cache.c[:, t + 1])
        dc = dc + dh * o * (1.0 - tc * tc)
        da = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * cache.c[:, t] * f * (1.0 - f),
            dc * i * (1.0 - g * g),
            dh * tc * o * (1.0 - o),
        ], axis=1)
        da_all[:, t] = da
        dh = da @ params.w_hh
        dc = dc * f
    grads.w_ih = np.einsum("btk,btd->kd", da_all, cache.e)
    grads.w_hh = np.einsum("btk,bth->kh", da_all, cache.h[:, :T])
    grads.b_lstm = da_all.sum(axis=(0, 1))
    de = da_all @ params.w_ih

    if cache.x is not None:
        de_pre = de * cache.mask_e
        grads.proj_w = np.einsum("btd,btf->df", de_pre, cache.x)
        grads.proj_b = de_pre.sum(axis=(0, 1))
    if return_input_grad:
        return grads, de.reshape(cache.batch_shape + de.shape[1:])
    return grads


# -- checkpoints ---------------------------------------------------------------

def save_checkpoint(path, params: ModelParams, seed=None, extra: dict | None = None) -> None:
    dims = params.dims
    header = {
        "format_version": CHECKPOINT_VERSION,
        "dims": asdict(dims),
        "seed": seed,
        "fields": [[name, list(dims.shapes()[name])] for name in FIELDS],
        "dtype": "<f4",
    }
    if extra:
        header["extra"] = extra
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = params.flat().astype("<f4").tobytes()
    Path(path).write_bytes(CHECKPOINT_MAGIC + struct.pack("<I", len(head)) + head + payload)


def load_checkpoint(path):
    """Returns ``(params, header)``."""
    raw = Path(path).read_bytes()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path} is not a checkpoint file")
    pos = len(CHECKPOINT_MAGIC)
    (n,) = struct.unpack("<I", raw[pos:pos + 4])
    header = json.loads(raw[pos + 4:pos + 4 + n].decode("utf-8"))
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('format_version')}")
    dims = ModelDims(**header["dims"])
    vec = np.frombuffer(raw[pos + 4 + n:], dtype="<f4").astype(np.float64)
    return ModelParams.from_flat(vec, dims), header

