import math

import numpy as np
import pytest

from conftest import central_fd, random_params
from handover_events import net
from handover_events.attribution import (frame_relevance, grad_x_input, integrated_gradients,
                                         path_integral, read_attribution_csv, target_logit,
                                         target_logits_and_grads, write_attribution_csv)
from handover_events.net import ModelDims

DIMS = ModelDims(6, 5, 7)


def _setup(seed, T=8):
    p = random_params(DIMS, seed)
    E = np.random.default_rng(seed + 100).normal(size=(T, DIMS.embedding_dim))
    return p, E


def test_input_equal_to_baseline_gives_zero_map():
    p, E = _setup(0)
    amap = integrated_gradients(p, E, baseline=E.copy(), steps=16)
    assert (amap.relevance == 0).all()


def test_path_integral_exact_on_linear_function():
    w = np.random.default_rng(0).normal(size=(8, 5))
    E = np.random.default_rng(1).normal(size=(8, 5))
    B = np.random.default_rng(2).normal(size=(8, 5))
    rel = path_integral(lambda pts: np.broadcast_to(w, pts.shape), E, B, 8)
    np.testing.assert_allclose(rel, w * (E - B), atol=1e-15)


def test_path_integral_exact_on_quadratic():
    # the midpoint rule is exact for gradients linear along the path
    rng = np.random.default_rng(3)
    A = rng.normal(size=(6, 6))
    A = A + A.T
    E, B = rng.normal(size=6), rng.normal(size=6)
    rel = path_integral(lambda pts: pts @ A, E, B, 8)
    F = lambda x: 0.5 * x @ A @ x
    assert rel.sum() == pytest.approx(F(E) - F(B), abs=1e-12)


@pytest.mark.parametrize("target", ["det", "dir:0", "dir:1"])
def test_completeness(target):
    for seed in range(5):
        p, E = _setup(seed)
        amap = integrated_gradients(p, E, steps=256, target=target)
        assert abs(amap.completeness_gap) <= 1e-3
        assert amap.value == pytest.approx(target_logit(p, E, target), abs=1e-12)
        assert amap.baseline_value == pytest.approx(target_logit(p, np.zeros_like(E), target), abs=1e-12)


def test_ig_argument_checks():
    p, E = _setup(0)
    with pytest.raises(ValueError):
        integrated_gradients(p, E, steps=4)
    with pytest.raises(ValueError):
        integrated_gradients(p, E, baseline=np.zeros((7, 5)))
    with pytest.raises(ValueError):
        integrated_gradients(p, E[:, :3])
    with pytest.raises(ValueError):
        integrated_gradients(p, E, target="dir:2")


def test_grad_x_input_zero_embeddings():
    p, _ = _setup(1)
    assert (grad_x_input(p, np.zeros((8, 5))).relevance == 0).all()


def test_grad_x_input_recompute_and_finite_differences():
    p, E = _setup(2)
    for target in ("det", "dir:1"):
        amap = grad_x_input(p, E, target)
        _, grads = target_logits_and_grads(p, E[None], target)
        np.testing.assert_allclose(amap.relevance, E * grads[0], rtol=1e-12, atol=1e-15)
        num = central_fd(lambda v: target_logit(p, v.reshape(E.shape), target), E.ravel())
        rel = np.abs(grads[0].ravel() - num) / np.maximum(np.abs(num), 1e-6)
        assert rel.max() <= 1e-4


def test_frame_relevance():
    p, E = _setup(3)
    amap = integrated_gradients(p, E, steps=16)
    signed, absolute = frame_relevance(amap)
    np.testing.assert_allclose(signed, amap.relevance.sum(axis=1))
    np.testing.assert_allclose(absolute, np.abs(amap.relevance).sum(axis=1))
    perm = np.random.default_rng(0).permutation(amap.relevance.shape[1])
    amap.relevance = amap.relevance[:, perm]
    np.testing.assert_allclose(frame_relevance(amap)[0], signed, atol=1e-15)
    amap.relevance = np.zeros_like(amap.relevance)
    assert (frame_relevance(amap)[0] == 0).all()


def test_ig_invariant_to_gate_ordering():
    """A reference LSTM storing its gates as (o, g, f, i) gives the same map."""
    torch = pytest.importorskip("torch")
    p, E = _setup(4)
    H = DIMS.hidden_dim
    order = [3, 2, 1, 0]  # positions of (o, g, f, i) in the native (i, f, g, o) layout

    def blocks(a):
        return np.concatenate([a[k * H:(k + 1) * H] for k in order])

    w_ih, w_hh, b = (torch.from_numpy(blocks(a)) for a in (p.w_ih, p.w_hh, p.b_lstm))
    det_w, det_b = torch.from_numpy(p.det_w), torch.from_numpy(p.det_b)

    def logit(x):
        h = torch.zeros(x.shape[0], H, dtype=torch.float64)
        c = torch.zeros_like(h)
        for t in range(x.shape[1]):
            a = x[:, t] @ w_ih.T + h @ w_hh.T + b
            o, g, f, i = a.split(H, dim=1)
            c = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
            h = torch.sigmoid(o) * torch.tanh(c)
        return (h @ det_w.T + det_b)[:, 0]

    steps = 64
    alphas = (torch.arange(steps, dtype=torch.float64) + 0.5) / steps
    Et = torch.from_numpy(E)
    pts = (alphas[:, None, None] * Et).requires_grad_(True)
    logit(pts).sum().backward()
    ref = (Et * pts.grad.mean(dim=0)).numpy()
    ours = integrated_gradients(p, E, steps=steps).relevance
    np.testing.assert_allclose(ours, ref, atol=1e-9, rtol=0)


def test_csv_round_trip(tmp_path):
    p, E = _setup(5)
    amap = integrated_gradients(p, E, steps=32, target="dir:0")
    path = tmp_path / "a.csv"
    write_attribution_csv(path, amap)
    rel, footer = read_attribution_csv(path)
    np.testing.assert_array_equal(rel, amap.relevance)
    assert footer["target"] == "dir:0" and footer["steps"] == "32"
    assert float(footer["completeness_gap"]) == amap.completeness_gap
    assert float(footer["f_input"]) - float(footer["f_baseline"]) == pytest.approx(
        float(footer["relevance_sum"]), abs=1e-3)


def _sign_test_p(k, n):
    """One-sided binomial tail P(X >= k) for X ~ Bin(n, 1/2)."""
    return sum(math.comb(n, j) for j in range(k, n + 1)) / 2 ** n


@pytest.mark.slow
def test_event_frames_carry_more_relevance(desk_model):
    params, spec = desk_model["params"], desk_model["spec"]
    diffs = []
    for stream, events in desk_model["test"]:
        for ev in events:
            # windows straddling an event boundary: some sampled frames inside, some outside
            lead = range(ev.start - spec.extent + 9, ev.start - 4, 8)
            trail = range(ev.end - spec.extent + 9, ev.end - 4, 8)
            for start in [*lead, *trail]:
                if start < 0 or start + spec.extent > stream.num_frames:
                    continue
                idx = spec.sampled_indices(start)
                inside = (idx >= ev.start) & (idx <= ev.end)
                if inside.all() or not inside.any():
                    continue
                E = net.project(stream.features[idx], params)
                frame = integrated_gradients(params, E, steps=64).frame
                diffs.append(frame[inside].mean() - frame[~inside].mean())
    diffs = diffs[:50]
    assert len(diffs) == 50
    k = sum(d > 0 for d in diffs)
    assert _sign_test_p(k, 50) < 0.05
