"""Attention-weighted CNN/MLP fusion network for yield regression.

Per timestep ``t`` a small CNN embeds the satellite patch and an MLP embeds
the environment vector; the two embeddings are concatenated into ``h_t``.
Attention scores ``u . tanh(W_a h_t + b_a)`` are softmaxed over time, the
weighted sum of ``h_t`` goes through a one-hidden-layer regression head.

Parameters live in a plain ``dict`` of float64 arrays. Dense weights are
stored ``[out, in]``; conv kernels are ``[Kh, Kw, Cin, Cout]``.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as tc
from .ingest import FieldSample, Normalizer

MODALITIES = ("satellite", "climate", "soil")
_MODALITY_COLUMNS = {"climate": (0, 1, 2), "soil": (3, 4, 5)}


@dataclass(frozen=True)
class ModelConfig:
    patch_h: int = 8
    patch_w: int = 8
    in_channels: int = 3
    channels: tuple[int, ...] = (8, 16, 32)
    kernel: int = 3
    mlp_hidden: tuple[int, ...] = (32, 32)
    d_e: int = 16
    d_a: int = 32
    head_hidden: int = 32
    attention_dropout: float = 0.1
    modalities: tuple[str, ...] = MODALITIES
    # "learned" attention or "uniform" (plain temporal mean, no attention weights)
    attention: str = "learned"

    def __post_init__(self):
        for k in ("channels", "mlp_hidden", "modalities"):
            object.__setattr__(self, k, tuple(getattr(self, k)))
        dims = [self.patch_h, self.patch_w, self.in_channels, self.kernel, self.d_e,
                self.d_a, self.head_hidden, *self.channels, *self.mlp_hidden]
        if any(int(d) < 1 for d in dims):
            raise ValueError("all model dimensions must be positive")
        if self.kernel % 2 == 0:
            raise ValueError("kernel size must be odd")
        if not self.modalities or any(m not in MODALITIES for m in self.modalities):
            raise ValueError(f"modalities must be a non-empty subset of {MODALITIES}")
        if self.attention not in ("learned", "uniform"):
            raise ValueError("attention must be 'learned' or 'uniform'")
        if not 0.0 <= self.attention_dropout < 1.0:
            raise ValueError("attention_dropout must lie in [0, 1)")

    @property
    def use_cnn(self) -> bool:
        return "satellite" in self.modalities

    @property
    def env_columns(self) -> tuple[int, ...]:
        return tuple(c for m in ("climate", "soil") if m in self.modalities
                     for c in _MODALITY_COLUMNS[m])

    @property
    def d_s(self) -> int:
        return self.channels[-1] if self.use_cnn else 0

    @property
    def d_env(self) -> int:
        return self.d_e if self.env_columns else 0

    @property
    def d_h(self) -> int:
        return self.d_s + self.d_env

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class AttentionTrace:
    alpha: np.ndarray
    months: tuple[int, ...] = ()
    years: tuple[int, ...] = ()


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    shapes = {}
    if cfg.use_cnn:
        cin = cfg.in_channels
        for i, cout in enumerate(cfg.channels):
            shapes[f"conv{i}_k"] = (cfg.kernel, cfg.kernel, cin, cout)
            shapes[f"conv{i}_b"] = (cout,)
            cin = cout
    if cfg.env_columns:
        widths = [len(cfg.env_columns), *cfg.mlp_hidden, cfg.d_e]
        for i in range(len(widths) - 1):
            shapes[f"mlp{i}_w"] = (widths[i + 1], widths[i])
            shapes[f"mlp{i}_b"] = (widths[i + 1],)
    if cfg.attention == "learned":
        shapes["att_w"] = (cfg.d_a, cfg.d_h)
        shapes["att_b"] = (cfg.d_a,)
        shapes["att_u"] = (cfg.d_a,)
    shapes["head0_w"] = (cfg.head_hidden, cfg.d_h)
    shapes["head0_b"] = (cfg.head_hidden,)
    shapes["head1_w"] = (1, cfg.head_hidden)
    shapes["head1_b"] = (1,)
    return shapes


def _fans(name: str, shape) -> tuple[int, int]:
    if name.startswith("conv"):
        kh, kw, cin, cout = shape
        return kh * kw * cin, kh * kw * cout
    if name == "att_u":
        return shape[0], 1
    return shape[1], shape[0]


def init_params(cfg: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith("_b"):
            params[name] = np.zeros(shape)
        else:
            fan_in, fan_out = _fans(name, shape)
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-bound, bound, shape)
    return params


def glorot_bound(name: str, shape) -> float:
    fan_in, fan_out = _fans(name, shape)
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


# ---------------------------------------------------------------- branches

def _cnn_forward(params, cfg, x):
    cache = []
    for i in range(len(cfg.channels)):
        z = tc.conv2d(x, params[f"conv{i}_k"], params[f"conv{i}_b"], "same")
        a = tc.activation(z, "relu")
        p = tc.maxpool2x2(a)
        cache.append((x, z, a))
        x = p
    return tc.global_avg_pool(x), (cache, x.shape)


def _cnn_backward(params, cfg, dg, cache, grads):
    layers, pooled_shape = cache
    dx = tc.global_avg_pool_backward(dg, pooled_shape)
    for i in reversed(range(len(cfg.channels))):
        x, z, a = layers[i]
        da = tc.maxpool2x2_backward(dx, a)
        dz = tc.activation_backward(da, z, "relu")
        dx, grads[f"conv{i}_k"], grads[f"conv{i}_b"] = tc.conv2d_backward(
            dz, x, params[f"conv{i}_k"], "same", need_dx=i > 0)


def _mlp_forward(params, cfg, x):
    n = len(cfg.mlp_hidden) + 1
    cache = []
    for i in range(n):
        z = x @ params[f"mlp{i}_w"].T + params[f"mlp{i}_b"]
        cache.append((x, z))
        x = tc.activation(z, "relu") if i < n - 1 else z
    return x, cache


def _mlp_backward(params, cfg, dout, cache, grads):
    n = len(cfg.mlp_hidden) + 1
    d = dout
    for i in reversed(range(n)):
        x, z = cache[i]
        if i < n - 1:
            d = tc.activation_backward(d, z, "relu")
        grads[f"mlp{i}_w"] = d.T @ x
        grads[f"mlp{i}_b"] = d.sum(axis=0)
        d = d @ params[f"mlp{i}_w"]


def cnn_branch(params, cfg: ModelConfig, patch) -> np.ndarray:
    """Embed one ``[H, W, C]`` patch (or a batch ``[..., H, W, C]``) to ``[d_s]``."""
    patch = tc.as_tensor(patch)
    want = (cfg.patch_h, cfg.patch_w, cfg.in_channels)
    if patch.shape[-3:] != want:
        raise tc.ShapeError(f"patch shape {patch.shape[-3:]} != configured {want}")
    return _cnn_forward(params, cfg, patch)[0]


def mlp_branch(params, cfg: ModelConfig, env) -> np.ndarray:
    """Embed an environment vector restricted to the configured columns."""
    env = tc.as_tensor(env)
    k = len(cfg.env_columns)
    if env.shape[-1] != k:
        raise tc.ShapeError(f"environment vector width {env.shape[-1]} != expected {k}")
    return _mlp_forward(params, cfg, env)[0]


# ---------------------------------------------------------------- attention

def attention_scores(params, h):
    pre = h @ params["att_w"].T + params["att_b"]
    e = np.tanh(pre)
    return e @ params["att_u"], e


def attention(params, h, mask=None) -> AttentionTrace:
    """Attention weights over the rows of ``h`` [T, d_h]."""
    h = tc.as_tensor(h)
    if h.ndim != 2 or h.shape[0] < 1:
        raise tc.ShapeError(f"attention expects [T>=1, d_h], got {h.shape}")
    hd = h if mask is None else h * mask
    scores, _ = attention_scores(params, hd)
    return AttentionTrace(tc.softmax(scores))


def fuse(h, alpha) -> np.ndarray:
    h, alpha = tc.as_tensor(h), tc.as_tensor(alpha)
    if h.shape[-2] != alpha.shape[-1]:
        raise tc.ShapeError(f"{alpha.shape[-1]} attention weights for {h.shape[-2]} timesteps")
    return np.einsum("...t,...td->...d", alpha, h)


# ---------------------------------------------------------------- full model

def forward(params, cfg: ModelConfig, patches, env, masks=None):
    """Batched forward pass.

    ``patches`` is ``[B, T, H, W, C]``, ``env`` is ``[B, T, 6]``, ``masks``
    an optional ``[B, T, d_h]`` dropout mask applied to ``h`` before scoring.
    Returns ``(y_hat [B], alpha [B, T], cache)``.
    """
    env = tc.as_tensor(env)
    b, t = env.shape[:2]
    parts, cache = [], {}
    if cfg.use_cnn:
        patches = tc.as_tensor(patches)
        want = (cfg.patch_h, cfg.patch_w, cfg.in_channels)
        if patches.shape[-3:] != want:
            raise tc.ShapeError(f"patch shape {patches.shape[-3:]} != configured {want}")
        g, cache["cnn"] = _cnn_forward(params, cfg, patches.reshape(b * t, *want))
        parts.append(g)
    if cfg.env_columns:
        m, cache["mlp"] = _mlp_forward(params, cfg, env[..., list(cfg.env_columns)].reshape(b * t, -1))
        parts.append(m)
    h = tc.concat(parts, axis=-1).reshape(b, t, cfg.d_h)

    if cfg.attention == "learned":
        hd = h if masks is None else h * masks
        scores, e = attention_scores(params, hd)
        alpha = tc.softmax(scores, axis=1)
        cache["att"] = (hd, e)
    else:
        alpha = np.full((b, t), 1.0 / t)
    v = fuse(h, alpha)
    z = v @ params["head0_w"].T + params["head0_b"]
    a = tc.activation(z, "relu")
    y = (a @ params["head1_w"].T + params["head1_b"])[:, 0]
    cache.update(h=h, alpha=alpha, v=v, z=z, a=a, masks=masks)
    return y, alpha, cache


def backward(params, cfg: ModelConfig, dy, cache) -> dict[str, np.ndarray]:
    """Gradients of a loss w.r.t. every parameter given ``dL/dy_hat`` [B]."""
    grads = {}
    h, alpha, v, z, a = (cache[k] for k in ("h", "alpha", "v", "z", "a"))
    b, t, _ = h.shape
    dy = dy[:, None]
    grads["head1_w"] = dy.T @ a
    grads["head1_b"] = dy.sum(axis=0)
    dz = tc.activation_backward(dy @ params["head1_w"], z, "relu")
    grads["head0_w"] = dz.T @ v
    grads["head0_b"] = dz.sum(axis=0)
    dv = dz @ params["head0_w"]

    dh = alpha[:, :, None] * dv[:, None, :]
    if cfg.attention == "learned":
        hd, e = cache["att"]
        dalpha = np.einsum("bd,btd->bt", dv, h)
        ds = tc.softmax_backward(dalpha, alpha, axis=1)
        grads["att_u"] = np.einsum("bt,bta->a", ds, e)
        dpre = ds[:, :, None] * params["att_u"] * (1.0 - e * e)
        grads["att_w"] = np.einsum("bta,btd->ad", dpre, hd)
        grads["att_b"] = dpre.sum(axis=(0, 1))
        dhd = dpre @ params["att_w"]
        dh = dh + (dhd if cache["masks"] is None else dhd * cache["masks"])

    dh = dh.reshape(b * t, cfg.d_h)
    sizes = [s for s in (cfg.d_s, cfg.d_env) if s]
    pieces = tc.concat_backward(dh, sizes, axis=-1)
    if cfg.use_cnn:
        _cnn_backward(params, cfg, pieces[0], cache["cnn"], grads)
    if cfg.env_columns:
        _mlp_backward(params, cfg, pieces[-1], cache["mlp"], grads)
    return grads


def loss_and_grads(params, cfg: ModelConfig, patches, env, y, masks=None):
    y = tc.as_tensor(y)
    if y.size == 0:
        raise ValueError("empty batch")
    y_hat, _, cache = forward(params, cfg, patches, env, masks)
    r = y_hat - y
    loss = float(np.mean(r * r))
    return loss, backward(params, cfg, 2.0 * r / r.size, cache)


def stack(samples):
    """Stack samples into ``(patches, env, y)`` arrays."""
    samples = list(samples)
    return (np.stack([s.patches for s in samples]), np.stack([s.env for s in samples]),
            np.array([s.yield_t_ha for s in samples]))


def draw_masks(cfg: ModelConfig, shape_bt, rng):
    if cfg.attention != "learned" or cfg.attention_dropout == 0.0:
        return None
    return tc.dropout_mask((*shape_bt, cfg.d_h), cfg.attention_dropout, rng)


def predict(params, cfg: ModelConfig, sample: FieldSample, mode: str = "infer", rng=None):
    """Predicted yield (t/ha) and attention trace for one normalized sample."""
    if mode not in ("train", "infer"):
        raise ValueError("mode must be 'train' or 'infer'")
    masks = None
    if mode == "train":
        if rng is None:
            raise ValueError("train mode needs an rng for dropout")
        masks = draw_masks(cfg, (1, sample.T), rng)
    y, alpha, _ = forward(params, cfg, sample.patches[None], sample.env[None], masks)
    return float(y[0]), AttentionTrace(alpha[0], sample.months, sample.years)


def predict_batch(params, cfg: ModelConfig, samples, chunk: int = 64):
    """Inference-mode predictions and attention for many samples."""
    ys, alphas = [], []
    samples = list(samples)
    for i in range(0, len(samples), chunk):
        p, e, _ = stack(samples[i:i + chunk])
        y, a, _ = forward(params, cfg, p, e)
        ys.append(y)
        alphas.append(a)
    return np.concatenate(ys), np.concatenate(alphas)


def gradients(params, cfg: ModelConfig, batch, masks=None):
    """Batch-mean squared error and its gradient for every parameter block."""
    batch = list(batch)
    if not batch:
        raise ValueError("gradients needs a non-empty batch")
    p, e, y = stack(batch)
    return loss_and_grads(params, cfg, p, e, y, masks)


# ---------------------------------------------------------------- checkpoints

def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def save_checkpoint(path, params, cfg: ModelConfig, normalizer: Normalizer | None = None,
                    extra: dict | None = None) -> None:
    doc = {
        "config": cfg.to_dict(),
        "params": {k: {"shape": list(v.shape), "values": v.reshape(-1).tolist()}
                   for k, v in params.items()},
        "normalizer": normalizer.to_dict() if normalizer is not None else None,
    }
    if extra:
        doc.update(extra)
    atomic_write_text(path, json.dumps(doc) + "\n")


def load_checkpoint(path):
    """Return ``(params, cfg, normalizer, doc)``."""
    doc = json.loads(Path(path).read_text())
    cfg = ModelConfig.from_dict(doc["config"])
    params = {k: np.array(v["values"], dtype=np.float64).reshape(v["shape"])
              for k, v in doc["params"].items()}
    if set(params) != set(param_shapes(cfg)):
        raise ValueError("checkpoint parameter blocks do not match its config")
    norm = Normalizer.from_dict(doc["normalizer"]) if doc.get("normalizer") else None
    return params, cfg, norm, doc
