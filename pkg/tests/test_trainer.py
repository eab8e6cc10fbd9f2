"""Optimizer math, training loop, determinism, resume."""

import logging

import numpy as np
import pytest

from arad.errors import DataError
from arad.pipeline import loss_grids
from arad.trainer import (
    AdamWState,
    TrainConfig,
    adamw_step,
    clip_global_norm,
    train,
)

from conftest import random_grids, tiny_model


def test_adamw_first_step_closed_form():
    cfg = TrainConfig(learning_rate=1e-3, weight_decay=0.01)
    theta = np.array([1.0, -2.0])
    g = np.array([0.5, -0.25])
    params = {"w": theta}
    state = AdamWState(params)
    adamw_step(params, {"w": g.copy()}, state, cfg)
    # bias-corrected first step: m_hat = g, v_hat = g*g, so the adaptive part
    # is sign(g) up to eps; decay acts on the original parameter value
    for i, (t0, gi) in enumerate(zip([1.0, -2.0], g)):
        m_hat = gi
        v_hat = gi * gi
        want = t0 - cfg.learning_rate * (m_hat / (np.sqrt(v_hat) + cfg.eps) + cfg.weight_decay * t0)
        assert abs(theta[i] - want) < 1e-15


def test_adamw_decay_is_decoupled():
    # zero gradient: moments stay zero, only the decay term moves the weights
    cfg = TrainConfig(learning_rate=0.1, weight_decay=0.5)
    theta = np.array([2.0])
    params = {"w": theta}
    state = AdamWState(params)
    adamw_step(params, {"w": np.zeros(1)}, state, cfg)
    assert abs(theta[0] - 2.0 * (1.0 - 0.1 * 0.5)) < 1e-15


def test_adamw_converges_on_quadratic_bowl():
    cfg = TrainConfig(learning_rate=0.05, weight_decay=0.0)
    rng = np.random.default_rng(3)
    target = rng.standard_normal(6)
    theta = np.zeros(6)
    params = {"w": theta}
    state = AdamWState(params)
    for _ in range(5000):
        adamw_step(params, {"w": 2.0 * (theta - target)}, state, cfg)
    assert np.max(np.abs(theta - target)) < 1e-6


def test_adamw_skips_nonfinite_gradients(caplog):
    cfg = TrainConfig()
    theta = np.array([1.0])
    other = np.array([1.0])
    params = {"bad": theta, "good": other}
    state = AdamWState(params)
    grads = {"bad": np.array([np.nan]), "good": np.array([0.5])}
    with caplog.at_level(logging.WARNING):
        adamw_step(params, grads, state, cfg)
    assert theta[0] == 1.0
    assert not state.m["bad"].any() and not state.v["bad"].any()
    assert other[0] != 1.0  # the healthy parameter still stepped
    assert any("non-finite gradient" in r.getMessage() for r in caplog.records)


def test_clip_global_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    norm = clip_global_norm(grads, 1.0)
    assert abs(norm - 5.0) < 1e-12
    assert abs(grads["a"][0] - 0.6) < 1e-12 and abs(grads["b"][0] - 0.8) < 1e-12
    grads = {"a": np.array([0.3])}
    clip_global_norm(grads, 1.0)
    assert grads["a"][0] == 0.3  # below the cap: untouched


def training_setup(rng, n_images=3, dtype=np.float32):
    model = tiny_model(
        image_size=(24, 24), downsamples=(6,), channels=8, n_layers=1, m=1, dtype=dtype
    )
    examples = [random_grids(model, rng, scale=0.5) for _ in range(n_images)]
    return model, examples


def test_train_empty_dataset(rng, tmp_path):
    model, _ = training_setup(rng)
    with pytest.raises(DataError, match="training set is empty"):
        train(model, [], TrainConfig(epochs=1), tmp_path)


def test_train_reduces_loss_and_logs(rng, tmp_path):
    model, examples = training_setup(rng)
    cfg = TrainConfig(learning_rate=2e-3, epochs=12, batch_size=2, seed=0, m=1)
    result = train(model, examples, cfg, tmp_path)
    assert (tmp_path / "checkpoint.ckpt").is_file()
    log_text = (tmp_path / "loss.csv").read_text()
    assert log_text.startswith("epoch,step,loss\n")
    assert len(log_text.strip().split("\n")) == 1 + len(result.rows)
    first = np.mean([r[2] for r in result.rows if r[0] == 1])
    last = np.mean([r[2] for r in result.rows if r[0] == cfg.epochs])
    assert last < first


def test_train_overfits_single_image(rng, tmp_path):
    model, examples = training_setup(rng, n_images=1)
    initial, _ = loss_grids(model, examples[0], want_grads=False)
    cfg = TrainConfig(learning_rate=5e-3, epochs=60, batch_size=1, seed=0, m=1)
    train(model, examples, cfg, tmp_path)
    final, _ = loss_grids(model, examples[0], want_grads=False)
    assert final < 0.05 * initial


def test_train_deterministic_across_runs(rng, tmp_path):
    rows = []
    ckpts = []
    for run in range(2):
        r = np.random.default_rng(9)  # rebuild everything from scratch
        model = tiny_model(image_size=(24, 24), downsamples=(6,), channels=8,
                           n_layers=1, m=1, dtype=np.float32, seed=7)
        examples = [random_grids(model, r, scale=0.5) for _ in range(4)]
        out = tmp_path / f"run{run}"
        result = train(model, examples, TrainConfig(epochs=3, seed=7, m=1), out)
        rows.append(result.rows)
        ckpts.append((out / "checkpoint.ckpt").read_bytes())
    assert rows[0] == rows[1]
    assert ckpts[0] == ckpts[1]


def test_train_threads_match_single_thread(rng, tmp_path):
    results = []
    for threads, name in ((1, "a"), (3, "b")):
        r = np.random.default_rng(4)
        model = tiny_model(image_size=(24, 24), downsamples=(6,), channels=8,
                           n_layers=1, m=1, dtype=np.float32, seed=2)
        examples = [random_grids(model, r, scale=0.5) for _ in range(5)]
        out = train(model, examples, TrainConfig(epochs=2, seed=2, m=1, batch_size=4),
                    tmp_path / name, threads=threads)
        results.append(out.rows)
    assert results[0] == results[1]


def test_resume_matches_uninterrupted_run(rng, tmp_path):
    def build(seed_rng):
        model = tiny_model(image_size=(24, 24), downsamples=(6,), channels=8,
                           n_layers=1, m=1, dtype=np.float32, seed=3)
        examples = [random_grids(model, seed_rng, scale=0.5) for _ in range(4)]
        return model, examples

    model_a, ex_a = build(np.random.default_rng(8))
    straight = train(model_a, ex_a, TrainConfig(epochs=4, seed=1, m=1), tmp_path / "straight")

    model_b, ex_b = build(np.random.default_rng(8))
    part = train(model_b, ex_b, TrainConfig(epochs=2, seed=1, m=1), tmp_path / "resumed")
    resumed = train(
        model_b,
        ex_b,
        TrainConfig(epochs=4, seed=1, m=1),
        tmp_path / "resumed",
        start_epoch=2,
        state=part.state,
        previous_rows=part.rows,
    )
    assert resumed.rows == straight.rows
    a = (tmp_path / "straight" / "checkpoint.ckpt").read_bytes()
    b = (tmp_path / "resumed" / "checkpoint.ckpt").read_bytes()
    assert a == b
