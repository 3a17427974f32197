import math

import numpy as np
import pytest

from handover_events.net import ModelDims, ModelParams, init_params
from handover_events.synth import SynthConfig, generate_dataset
from handover_events.train import TrainConfig, TrainingData, train
from handover_events.windowing import WindowSpec, window_arrays

# Desk-scale training setup shared by the end-to-end tests.
DESK_DIMS = dict(embedding_dim=16, hidden_dim=16)
DESK_LR = dict(lr_projection=1e-3, lr_temporal=3e-3)

ACCEPTANCE_LINES = []


def central_fd(f, vec, h=1e-5):
    """Central finite-difference gradient of scalar ``f`` at ``vec``."""
    out = np.zeros_like(vec)
    for k in range(len(vec)):
        v = vec.copy()
        v[k] += h
        fp = f(v)
        v[k] -= 2 * h
        fm = f(v)
        out[k] = (fp - fm) / (2 * h)
    return out


def random_params(dims: ModelDims, seed: int, scale: float = 1.0) -> ModelParams:
    """Params with every field (biases included) drawn at random."""
    rng = np.random.default_rng(seed)
    p = init_params(dims, seed)
    return p.map(lambda a: a + scale * 0.3 * rng.standard_normal(a.shape))


@pytest.fixture(scope="session")
def desk_model():
    """A model trained on synthetic streams, with held-out test streams."""
    cfg = SynthConfig(num_streams=10, frames_per_stream=2000, seed=11)
    pairs = generate_dataset(cfg)
    train_streams = [s for s, _ in pairs[:7]]
    val_streams = [s for s, _ in pairs[7:8]]
    spec = WindowSpec()
    X, y = window_arrays(train_streams, spec)
    Xv, yv = window_arrays(val_streams, spec)
    res = train(TrainingData(X, y, Xv, yv), ModelDims(16, **DESK_DIMS),
                TrainConfig(seed=3, **DESK_LR))
    return {"params": res.params, "history": res.history, "test": pairs[8:], "spec": spec,
            "synth": cfg}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
