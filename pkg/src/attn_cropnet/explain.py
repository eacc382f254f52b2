"""Attention summaries, modality Shapley values and permutation importance."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from . import model as M
from .evaluation import compute_metrics, loyo_cv
from .ingest import ENV_FEATURES

PLAYERS = ("satellite", "climate", "soil")


def attention_summary(folds) -> dict[int, float]:
    """Mean attention mass per calendar month, averaged over folds."""
    months = sorted({m for f in folds for m in f.month_alpha})
    return {m: float(np.mean([f.month_alpha.get(m, 0.0) for f in folds])) for m in months}


def attention_csv(summary: dict[int, float]) -> str:
    return "month,mean_alpha\n" + "".join(f"{m},{a!r}\n" for m, a in summary.items())


# ---------------------------------------------------------------- Shapley

@dataclass
class ShapleyReport:
    phi: dict[str, float]
    values: dict[frozenset, float]
    players: tuple[str, ...] = PLAYERS

    @property
    def v_full(self) -> float:
        return self.values[frozenset(self.players)]

    def to_dict(self) -> dict:
        return {**self.phi, "v_full": self.v_full}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


def modality_shapley(values: dict, players=PLAYERS) -> ShapleyReport:
    """Exact Shapley values from a characteristic function over all coalitions.

    ``values`` maps coalitions (any iterable of player names) to their value;
    the empty coalition defaults to 0.
    """
    players = tuple(players)
    v = {frozenset(k): float(x) for k, x in values.items()}
    v.setdefault(frozenset(), 0.0)
    n = len(players)
    missing = [set(c) for r in range(n + 1) for c in itertools.combinations(players, r)
               if frozenset(c) not in v]
    if missing:
        raise KeyError(f"characteristic function missing coalition(s) {missing}")
    phi = {}
    for p in players:
        others = [q for q in players if q != p]
        terms = []
        for r in range(n):
            wgt = math.factorial(r) * math.factorial(n - r - 1) / math.factorial(n)
            for c in itertools.combinations(others, r):
                s = frozenset(c)
                terms.append(wgt * (v[s | {p}] - v[s]))
        phi[p] = math.fsum(terms)
    return ShapleyReport(phi, v, players)


def shapley_by_permutations(values: dict, players=PLAYERS) -> dict[str, float]:
    """Average marginal contribution over every player ordering."""
    players = tuple(players)
    v = {frozenset(k): float(x) for k, x in values.items()}
    v.setdefault(frozenset(), 0.0)
    total = {p: [] for p in players}
    for order in itertools.permutations(players):
        seen = frozenset()
        for p in order:
            total[p].append(v[seen | {p}] - v[seen])
            seen = seen | {p}
    return {p: math.fsum(x) / len(x) for p, x in total.items()}


def coalition_values(samples, train_cfg, model_cfg, known=None) -> dict[frozenset, float]:
    """Mean LOYO R^2 of a model trained on each non-empty modality coalition."""
    values = dict(known or {})
    values[frozenset()] = 0.0
    for r in range(1, len(PLAYERS) + 1):
        for c in itertools.combinations(PLAYERS, r):
            key = frozenset(c)
            if key not in values:
                cfg = replace(model_cfg, modalities=c, attention="learned")
                values[key] = loyo_cv(samples, train_cfg, cfg).aggregate.r2
    return values


# ---------------------------------------------------------------- permutation importance

def _permute_feature(samples, feature: str, perm):
    col = ENV_FEATURES.index(feature)
    out = []
    for i, s in enumerate(samples):
        env = s.env.copy()
        env[:, col] = samples[perm[i]].env[:, col]
        out.append(replace(s, env=env))
    return out


def permutation_importance(params, model_cfg: M.ModelConfig, samples, feature: str,
                           repeats: int = 5, rng=None, perms=None) -> float:
    """Mean drop in R^2 when one structured feature is shuffled across samples.

    The feature's whole time series moves with the sample it was taken from,
    so static soil values stay consistent over timesteps. ``perms`` may pin
    the permutations explicitly (one per repeat).
    """
    samples = list(samples)
    if feature not in ENV_FEATURES:
        raise KeyError(f"unknown feature {feature!r}; expected one of {ENV_FEATURES}")
    if len(samples) < 2:
        raise ValueError("permutation importance needs at least two samples")
    y = [s.yield_t_ha for s in samples]
    base = compute_metrics(y, M.predict_batch(params, model_cfg, samples)[0]).r2
    if perms is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        perms = [rng.permutation(len(samples)) for _ in range(repeats)]
    drops = []
    for perm in perms:
        shuffled = _permute_feature(samples, feature, perm)
        drops.append(base - compute_metrics(y, M.predict_batch(params, model_cfg, shuffled)[0]).r2)
    return float(np.mean(drops))


def importance_csv(scores: dict[str, float]) -> str:
    return "feature,importance\n" + "".join(f"{k},{v!r}\n" for k, v in scores.items())
