import json

import numpy as np
import pytest

from attn_cropnet import datagen as G, ingest as I, model as M, train as T
from conftest import tiny_model_cfg


def test_mse_loss_examples():
    assert T.mse_loss([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert T.mse_loss([0, 0], [3, 4]) == 12.5
    with pytest.raises(ValueError, match="length"):
        T.mse_loss([1, 2], [1])
    with pytest.raises(ValueError):
        T.mse_loss([], [])


def test_optimizer_step_examples():
    cfg = T.TrainConfig(learning_rate=1e-3)
    p = {"w": np.array([1.0, -2.0])}
    new, st = T.optimizer_step(p, {"w": np.zeros(2)}, T.AdamState(), cfg, 1)
    np.testing.assert_array_equal(new["w"], p["w"])
    g = {"w": np.array([0.3, -7.0])}
    new, st = T.optimizer_step(p, g, T.AdamState(), cfg, 1)
    # at t=1 bias correction gives m_hat = g and v_hat = g^2
    np.testing.assert_allclose(p["w"] - new["w"], cfg.learning_rate * np.sign(g["w"]), rtol=1e-6)
    again, _ = T.optimizer_step(p, g, T.AdamState(), cfg, 1)
    np.testing.assert_array_equal(new["w"], again["w"])
    with pytest.raises(ValueError):
        T.optimizer_step(p, g, T.AdamState(), cfg, 0)
    with pytest.raises(ValueError, match="shape"):
        T.optimizer_step(p, {"w": np.zeros(3)}, T.AdamState(), cfg, 1)


def test_config_validation():
    for kw in (dict(epochs=0), dict(batch_size=0), dict(learning_rate=-1.0),
               dict(attention_dropout=1.0)):
        with pytest.raises(ValueError):
            T.TrainConfig(**kw)
    assert T.TrainConfig().learning_rate == 1e-4 and T.TrainConfig().epochs == 100


def _norm(samples):
    n = I.normalize_fit(samples)
    return [I.normalize_apply(n, s) for s in samples]


def test_zero_learning_rate_keeps_init(small_samples):
    cfg = tiny_model_cfg()
    tc = T.TrainConfig(learning_rate=0.0, epochs=3, seed=4)
    s = _norm(small_samples)
    params, rep = T.train(s, tc, cfg)
    init = T.initial_params(s, tc, cfg)
    for k in init:
        np.testing.assert_array_equal(params[k], init[k])
    assert len(rep.losses) == 3


def test_train_report_and_determinism(small_samples):
    cfg = tiny_model_cfg()
    tc = T.TrainConfig(learning_rate=1e-2, epochs=5, batch_size=7, seed=9)
    s = _norm(small_samples)
    p1, r1 = T.train(s, tc, cfg)
    p2, r2 = T.train(s, tc, cfg)
    assert r1.losses == r2.losses and len(r1.losses) == 5
    for k in p1:
        np.testing.assert_array_equal(p1[k], p2[k])
    doc = json.loads(r1.to_json())
    assert doc["config"]["train"]["seed"] == 9 and doc["wall_time_s"] >= 0
    assert r1.loss_csv().splitlines()[0] == "epoch,loss"
    assert len(r1.loss_csv().splitlines()) == 6
    p3, _ = T.train(s, T.TrainConfig(learning_rate=1e-2, epochs=5, batch_size=7, seed=10), cfg)
    assert any(not np.array_equal(p1[k], p3[k]) for k in p1)
    with pytest.raises(ValueError):
        T.train([], tc, cfg)


def test_warm_start_bias(small_samples):
    s = _norm(small_samples)
    p = T.initial_params(s, T.TrainConfig(), tiny_model_cfg())
    assert p["head1_b"][0] == pytest.approx(np.mean([x.yield_t_ha for x in s]))
    p = T.initial_params(s, T.TrainConfig(warm_start_bias=False), tiny_model_cfg())
    assert p["head1_b"][0] == 0.0


def test_loss_envelope_decreases_on_noiseless_data(tmp_path):
    G.generate_dataset(G.GenConfig(seed=2, n_fields=15, noise_sd=0.0, patch_h=4, patch_w=4), tmp_path)
    s, _ = I.dataset_samples(I.load_dataset(tmp_path), 1)
    _, rep = T.train(_norm(s), T.TrainConfig(learning_rate=3e-3, epochs=15, seed=0),
                     M.ModelConfig(patch_h=4, patch_w=4))
    env = np.minimum.accumulate(rep.losses)
    assert np.all(np.diff(env) <= 0)
    assert env[-1] < 0.8 * rep.losses[0]


def test_sensitivity_grid_shape_and_determinism(small_samples):
    cfg = tiny_model_cfg()
    tc = T.TrainConfig(epochs=1, seed=1)
    rows = T.sensitivity_grid(small_samples, tc, cfg)
    assert len(rows) == 9
    assert {(r["lr"], r["dropout"]) for r in rows} == {(a, b) for a in (1e-3, 1e-4, 1e-5)
                                                        for b in (0.1, 0.3, 0.5)}
    twice = T.sensitivity_grid(small_samples, tc, cfg, {"learning_rate": [1e-3, 1e-3],
                                                        "attention_dropout": [0.3]})
    assert twice[0]["mean_r2"] == twice[1]["mean_r2"] == rows[1]["mean_r2"]
    csv = T.grid_csv(rows).splitlines()
    assert csv[0] == "lr,dropout,mean_r2,mean_rmse,mean_mae" and len(csv) == 10
    with pytest.raises(ValueError):
        T.sensitivity_grid(small_samples, tc, cfg, {"learning_rate": [], "attention_dropout": [0.1]})


def test_faster_rate_wins_at_fixed_budget(tmp_path):
    G.generate_dataset(G.GenConfig(seed=21, n_fields=20, patch_h=4, patch_w=4), tmp_path)
    s, _ = I.dataset_samples(I.load_dataset(tmp_path), 1)
    rows = T.sensitivity_grid(s, T.TrainConfig(epochs=20, seed=0), M.ModelConfig(patch_h=4, patch_w=4),
                              {"learning_rate": [1e-4, 1e-5], "attention_dropout": [0.1]})
    assert rows[0]["mean_r2"] >= rows[1]["mean_r2"]
