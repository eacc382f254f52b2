"""Mini-batch training with bias-corrected adaptive moments."""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import model as M


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    epochs: int = 100
    batch_size: int = 16
    attention_dropout: float = 0.1
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # start the output bias at the mean training yield instead of 0
    warm_start_bias: bool = True

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if int(self.epochs) < 1:
            raise ValueError("epochs must be >= 1")
        if int(self.batch_size) < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.attention_dropout < 1.0:
            raise ValueError("attention_dropout must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class TrainReport:
    losses: list[float]
    wall_time_s: float
    config: dict
    checkpoint: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def loss_csv(self) -> str:
        return "epoch,loss\n" + "".join(f"{i + 1},{l!r}\n" for i, l in enumerate(self.losses))


def mse_loss(y, y_hat) -> float:
    y, y_hat = np.asarray(y, dtype=np.float64), np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {y_hat.shape}")
    if y.size == 0:
        raise ValueError("mse_loss of empty sequences")
    r = y_hat - y
    return float(np.mean(r * r))


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def optimizer_step(params, grads, state: AdamState, cfg: TrainConfig, step: int):
    """One adaptive-moment update; returns new ``(params, state)``."""
    if step < 1:
        raise ValueError("step index starts at 1")
    if set(params) != set(grads):
        raise ValueError("params and grads have different blocks")
    new_p, new_m, new_v = {}, {}, {}
    c1 = 1.0 - cfg.beta1 ** step
    c2 = 1.0 - cfg.beta2 ** step
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {k}")
        m = cfg.beta1 * state.m.get(k, 0.0) + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * state.v.get(k, 0.0) + (1.0 - cfg.beta2) * g * g
        new_p[k] = p - cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
        new_m[k], new_v[k] = m, v
    return new_p, AdamState(new_m, new_v)


def initial_params(samples, cfg: TrainConfig, model_cfg: M.ModelConfig):
    params = M.init_params(model_cfg, cfg.seed)
    if cfg.warm_start_bias:
        params["head1_b"] = np.array([float(np.mean([s.yield_t_ha for s in samples]))])
    return params


def train(samples, cfg: TrainConfig, model_cfg: M.ModelConfig, log=None):
    """Fit the model on already-normalized samples.

    Batches are reshuffled every epoch from a generator seeded by
    ``cfg.seed``; attention dropout uses ``cfg.attention_dropout``. The
    recorded loss per epoch is the mean of that epoch's batch losses.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("cannot train on an empty set")
    model_cfg = replace(model_cfg, attention_dropout=cfg.attention_dropout)
    t0 = time.perf_counter()
    patches, env, y = M.stack(samples)
    params = initial_params(samples, cfg, model_cfg)
    state = AdamState()
    rng = np.random.default_rng([cfg.seed, 1])
    n = len(samples)
    losses, step = [], 0
    for epoch in range(int(cfg.epochs)):
        order = rng.permutation(n)
        batch_losses, sizes = [], []
        for i in range(0, n, cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            masks = M.draw_masks(model_cfg, (len(idx), env.shape[1]), rng)
            loss, grads = M.loss_and_grads(params, model_cfg, patches[idx], env[idx], y[idx], masks)
            step += 1
            params, state = optimizer_step(params, grads, state, cfg, step)
            batch_losses.append(loss)
            sizes.append(len(idx))
        losses.append(float(np.average(batch_losses, weights=sizes)))
        if log is not None:
            log(epoch + 1, losses[-1])
    report = TrainReport(losses, time.perf_counter() - t0,
                         {"train": asdict(cfg), "model": model_cfg.to_dict()})
    return params, report


DEFAULT_GRID = {"learning_rate": (1e-3, 1e-4, 1e-5), "attention_dropout": (0.1, 0.3, 0.5)}


def sensitivity_grid(samples, cfg: TrainConfig, model_cfg: M.ModelConfig, grid=None):
    """LOYO metrics for every (learning rate, dropout) cell.

    Every cell reuses ``cfg.seed`` and the same folds, so cells differ only
    in the two swept settings.
    """
    from .evaluation import loyo_cv

    grid = grid or DEFAULT_GRID
    lrs, drops = list(grid["learning_rate"]), list(grid["attention_dropout"])
    if not lrs or not drops:
        raise ValueError("sensitivity grid must be non-empty")
    rows = []
    for lr in lrs:
        for rate in drops:
            cv = loyo_cv(samples, replace(cfg, learning_rate=lr, attention_dropout=rate), model_cfg)
            m = cv.aggregate
            rows.append({"lr": lr, "dropout": rate, "mean_r2": m.r2,
                         "mean_rmse": m.rmse, "mean_mae": m.mae})
    return rows


def grid_csv(rows) -> str:
    keys = ("lr", "dropout", "mean_r2", "mean_rmse", "mean_mae")
    return ",".join(keys) + "\n" + "".join(",".join(repr(r[k]) for k in keys) + "\n" for r in rows)
