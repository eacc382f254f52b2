"""Metrics, leave-one-year-out CV, ablation and window sensitivity."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import model as M
from .ingest import dataset_samples, normalize_apply, normalize_fit
from .train import TrainConfig, train


@dataclass(frozen=True)
class Metrics:
    r2: float
    rmse: float
    mae: float
    n: int

    def to_dict(self) -> dict:
        return {"r2": self.r2, "rmse": self.rmse, "mae": self.mae, "n": self.n}


def compute_metrics(y, y_hat) -> Metrics:
    y, y_hat = np.asarray(y, dtype=np.float64), np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {y_hat.shape}")
    if y.size < 2:
        raise ValueError("need at least two observations")
    ss_tot = math.fsum((y - y.mean()) ** 2)
    if ss_tot == 0.0:
        raise ValueError("R^2 undefined: observed values have zero variance")
    r = y_hat - y
    ss_res = math.fsum(r * r)
    return Metrics(1.0 - ss_res / ss_tot, math.sqrt(ss_res / y.size),
                   math.fsum(np.abs(r)) / y.size, int(y.size))


@dataclass
class FoldReport:
    held_out_year: int
    metrics: Metrics
    y: list[float]
    y_hat: list[float]
    train_years: tuple[int, ...]
    # calendar month -> attention mass, averaged over held-out samples
    month_alpha: dict[int, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"held_out_year": self.held_out_year, **self.metrics.to_dict(),
                "train_years": list(self.train_years),
                "month_alpha": {str(k): v for k, v in self.month_alpha.items()}}


@dataclass
class CVResult:
    folds: list[FoldReport]
    aggregate: Metrics   # unweighted mean of fold metrics
    pooled: Metrics      # metrics over all held-out predictions at once

    def to_dict(self) -> dict:
        return {**self.aggregate.to_dict(), "pooled": self.pooled.to_dict(),
                "folds": [f.to_dict() for f in self.folds]}


def month_mass(alpha, months) -> dict[int, float]:
    """Sum attention weights per calendar month, averaged over samples."""
    alpha = np.atleast_2d(alpha)
    months = np.asarray(months)
    return {int(m): float(alpha[:, months == m].sum(axis=1).mean()) for m in sorted(set(months))}


def loyo_splits(samples, years=None):
    """Yield ``(year, train, test)`` with every sample of ``year`` held out."""
    all_years = sorted({s.harvest_year for s in samples})
    if len(all_years) < 2:
        raise ValueError("leave-one-year-out needs at least two harvest years")
    for year in (years or all_years):
        train = [s for s in samples if s.harvest_year != year]
        test = [s for s in samples if s.harvest_year == year]
        if test:
            yield year, train, test


def fit_and_predict(train_samples, test_samples, train_cfg: TrainConfig,
                    model_cfg: M.ModelConfig):
    """Normalize on the training split, train, and predict the test split."""
    norm = normalize_fit(train_samples)
    params, report = train([normalize_apply(norm, s) for s in train_samples], train_cfg, model_cfg)
    test_n = [normalize_apply(norm, s) for s in test_samples]
    model_cfg = replace(model_cfg, attention_dropout=train_cfg.attention_dropout)
    y_hat, alpha = M.predict_batch(params, model_cfg, test_n)
    return params, norm, report, y_hat, alpha


def loyo_cv(samples, train_cfg: TrainConfig, model_cfg: M.ModelConfig, years=None) -> CVResult:
    """Leave-one-year-out CV; the normalizer is refit inside every fold.

    Training samples may carry feature history from before the held-out
    harvest year; only samples whose harvest year is held out are excluded.
    """
    samples = list(samples)
    folds = []
    all_y, all_hat = [], []
    for k, (year, tr, te) in enumerate(loyo_splits(samples, years)):
        assert all(s.harvest_year != year for s in tr)
        cfg_k = replace(train_cfg, seed=int(np.random.SeedSequence([train_cfg.seed, k]).generate_state(1)[0]))
        _, _, _, y_hat, alpha = fit_and_predict(tr, te, cfg_k, model_cfg)
        y = np.array([s.yield_t_ha for s in te])
        folds.append(FoldReport(year, compute_metrics(y, y_hat), y.tolist(), y_hat.tolist(),
                                tuple(sorted({s.harvest_year for s in tr})),
                                month_mass(alpha, te[0].months)))
        all_y.extend(y)
        all_hat.extend(y_hat)
    agg = Metrics(float(np.mean([f.metrics.r2 for f in folds])),
                  float(np.mean([f.metrics.rmse for f in folds])),
                  float(np.mean([f.metrics.mae for f in folds])),
                  sum(f.metrics.n for f in folds))
    return CVResult(folds, agg, compute_metrics(all_y, all_hat))


def leak_free(result: CVResult) -> bool:
    return all(f.held_out_year not in f.train_years for f in result.folds)


# ---------------------------------------------------------------- ablation

ABLATION_ROWS = (
    ("satellite", ("satellite",), "learned"),
    ("satellite+climate", ("satellite", "climate"), "learned"),
    ("satellite+climate+soil:static", ("satellite", "climate", "soil"), "uniform"),
    ("satellite+climate+soil:full", ("satellite", "climate", "soil"), "learned"),
)
# reported values of the reference study, shown next to ours; not targets
REFERENCE_ABLATION_R2 = (0.72, 0.82, 0.85, 0.89)
REFERENCE_WINDOW_R2 = (0.74, 0.79, 0.83, 0.86, 0.89)


@dataclass
class AblationRow:
    modalities: str
    mean_r2: float
    cv: CVResult | None = None


def ablation_study(samples, train_cfg: TrainConfig, model_cfg: M.ModelConfig) -> list[AblationRow]:
    """Retrain with modality subsets under identical folds and seeds.

    The static row feeds all three modalities but replaces learned attention
    by a plain temporal mean; the full row is the complete model.
    """
    rows = []
    for label, mods, att in ABLATION_ROWS:
        cfg = replace(model_cfg, modalities=mods, attention=att)
        cv = loyo_cv(samples, train_cfg, cfg)
        rows.append(AblationRow(label, cv.aggregate.r2, cv))
    return rows


def ablation_csv(rows) -> str:
    return "modalities,mean_r2\n" + "".join(f"{r.modalities},{r.mean_r2!r}\n" for r in rows)


# ---------------------------------------------------------------- windows

@dataclass
class WindowRow:
    window_years: int
    r2: float
    rmse: float
    mae: float
    improvement: str


def common_harvest_years(dataset, windows) -> list[int]:
    """Harvest years assemblable at the deepest requested window."""
    samples, _ = dataset_samples(dataset, max(windows))
    return sorted({s.harvest_year for s in samples})


def window_sensitivity(dataset, windows, train_cfg: TrainConfig, model_cfg: M.ModelConfig):
    """LOYO metrics per history depth, evaluated on the same harvest years.

    The improvement column is the relative R^2 gain over the previous row.
    """
    windows = list(windows)
    years = common_harvest_years(dataset, windows)
    if len(years) < 2:
        raise ValueError(f"dataset spans too few years for a {max(windows)}-year window")
    rows, prev = [], None
    for w in windows:
        samples, _ = dataset_samples(dataset, w)
        samples = [s for s in samples if s.harvest_year in years]
        m = loyo_cv(samples, train_cfg, model_cfg).aggregate
        imp = "Base" if prev is None else f"{100.0 * (m.r2 - prev) / abs(prev):.1f}%"
        rows.append(WindowRow(w, m.r2, m.rmse, m.mae, imp))
        prev = m.r2
    return rows


def window_csv(rows) -> str:
    return "window_years,r2,rmse,mae,improvement\n" + "".join(
        f"{r.window_years},{r.r2!r},{r.rmse!r},{r.mae!r},{r.improvement}\n" for r in rows)
