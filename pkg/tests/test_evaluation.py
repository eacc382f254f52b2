import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from attn_cropnet import evaluation as E, ingest as I, train as T
from conftest import tiny_model_cfg

FAST = T.TrainConfig(learning_rate=1e-3, epochs=2, seed=3)


def test_compute_metrics_examples():
    m = E.compute_metrics([1, 2, 3], [1, 2, 3])
    assert (m.r2, m.rmse, m.mae, m.n) == (1.0, 0.0, 0.0, 3)
    assert E.compute_metrics([1, 2, 3], [2, 2, 2]).r2 == 0.0
    m = E.compute_metrics([1, 2, 3], [1.5, 2, 2.5])
    assert abs(m.r2 - 0.75) < 1e-12
    assert abs(m.rmse - math.sqrt(1 / 6)) < 1e-12
    assert abs(m.mae - 1 / 3) < 1e-12
    with pytest.raises(ValueError, match="zero variance"):
        E.compute_metrics([2, 2], [1, 3])
    with pytest.raises(ValueError, match="length"):
        E.compute_metrics([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        E.compute_metrics([1], [1])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=2, max_size=40))
def test_metric_invariants(pairs):
    y, yh = map(np.array, zip(*pairs))
    if np.ptp(y) < 1e-6:
        return
    m = E.compute_metrics(y, yh)
    assert m.mae <= m.rmse * (1 + 1e-12)
    assert m.r2 <= 1.0
    assert E.compute_metrics(y, y).r2 == 1.0
    if np.sum((y - yh) ** 2) > 1e-9 * np.sum((y - y.mean()) ** 2):
        assert m.r2 < 1.0


def test_month_mass():
    a = np.array([[0.1, 0.2, 0.3, 0.2, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0]])
    mm = E.month_mass(a, (6, 7, 8, 9, 10) * 2)
    assert mm == pytest.approx({6: 0.1, 7: 0.2, 8: 0.3, 9: 0.2, 10: 0.2})


def test_loyo_folds_and_leak_freedom(small_samples):
    cv = E.loyo_cv(small_samples, FAST, tiny_model_cfg())
    assert [f.held_out_year for f in cv.folds] == [2020, 2021, 2022, 2023, 2024]
    assert E.leak_free(cv)
    f24 = cv.folds[-1]
    assert 2024 not in f24.train_years and f24.train_years == (2020, 2021, 2022, 2023)
    assert cv.aggregate.r2 == pytest.approx(np.mean([f.metrics.r2 for f in cv.folds]), abs=1e-15)
    assert cv.aggregate.n == cv.pooled.n == len(small_samples)
    for f in cv.folds:
        assert sum(f.month_alpha.values()) == pytest.approx(1.0, abs=1e-9)
    d = cv.to_dict()
    assert {"r2", "rmse", "mae", "n", "folds", "pooled"} <= set(d)
    with pytest.raises(ValueError, match="two harvest years"):
        E.loyo_cv([s for s in small_samples if s.harvest_year == 2022], FAST, tiny_model_cfg())


def test_loyo_refits_normalizer_per_fold(small_samples, monkeypatch):
    seen = []
    real = E.normalize_fit

    def spy(samples):
        seen.append(sorted({s.harvest_year for s in samples}))
        return real(samples)

    monkeypatch.setattr(E, "normalize_fit", spy)
    E.loyo_cv(small_samples, FAST, tiny_model_cfg())
    assert len(seen) == 5
    for held, years in zip(range(2020, 2025), seen):
        assert held not in years


def test_loyo_deterministic(small_samples):
    a = E.loyo_cv(small_samples, FAST, tiny_model_cfg())
    b = E.loyo_cv(small_samples, FAST, tiny_model_cfg())
    assert a.to_dict() == b.to_dict()


def test_ablation_rows_and_fold_membership(small_samples):
    rows = E.ablation_study(small_samples, FAST, tiny_model_cfg())
    assert [r.modalities for r in rows] == [
        "satellite", "satellite+climate", "satellite+climate+soil:static", "satellite+climate+soil:full"]
    ref = [(f.held_out_year, f.y) for f in rows[0].cv.folds]
    for r in rows[1:]:
        assert [(f.held_out_year, f.y) for f in r.cv.folds] == ref
    csv = E.ablation_csv(rows).splitlines()
    assert csv[0] == "modalities,mean_r2" and len(csv) == 5


def test_window_sensitivity_table(small_dataset):
    rows = E.window_sensitivity(small_dataset, [1, 2, 3], FAST, tiny_model_cfg())
    assert [r.window_years for r in rows] == [1, 2, 3]
    assert rows[0].improvement == "Base"
    assert all(r.improvement.endswith("%") for r in rows[1:])
    want = 100 * (rows[1].r2 - rows[0].r2) / abs(rows[0].r2)
    assert rows[1].improvement == f"{want:.1f}%"
    assert E.common_harvest_years(small_dataset, [1, 2, 3]) == [2022, 2023, 2024]
    csv = E.window_csv(rows).splitlines()
    assert csv[0] == "window_years,r2,rmse,mae,improvement" and csv[1].endswith(",Base")
    with pytest.raises(ValueError, match="too few years"):
        E.window_sensitivity(small_dataset, [1, 5], FAST, tiny_model_cfg())
