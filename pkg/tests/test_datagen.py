import filecmp

import numpy as np
import pytest

from attn_cropnet import datagen as G, ingest as I
from attn_cropnet.evaluation import compute_metrics
from attn_cropnet.ingest import MonthlyClimate, SoilRecord


def _files(d):
    return sorted(p.relative_to(d) for p in d.rglob("*") if p.is_file())


def test_generate_is_byte_deterministic(tmp_path):
    cfg = G.GenConfig(seed=5, n_fields=3, patch_h=3, patch_w=2)
    G.generate_dataset(cfg, tmp_path / "a")
    G.generate_dataset(cfg, tmp_path / "b")
    names = _files(tmp_path / "a")
    assert names == _files(tmp_path / "b") and len(names) == 8
    for n in names:
        assert filecmp.cmp(tmp_path / "a" / n, tmp_path / "b" / n, shallow=False), n
    G.generate_dataset(G.GenConfig(seed=6, n_fields=3, patch_h=3, patch_w=2), tmp_path / "c")
    assert not filecmp.cmp(tmp_path / "a" / "yield.csv", tmp_path / "c" / "yield.csv", shallow=False)


def test_row_count_and_zero_skips(tmp_path):
    G.generate_dataset(G.GenConfig(seed=1, n_fields=50, patch_h=2, patch_w=2), tmp_path)
    ds = I.load_dataset(tmp_path)
    assert len(ds.yields) == 250
    for w in range(1, 6):
        samples, rep = I.dataset_samples(ds, w)
        assert len(rep) == 50 * (w - 1)
        assert len(samples) == 50 * (6 - w)
    assert len(ds.patches) == 50 * 5 * 5


def test_noiseless_yields_equal_ground_truth(tmp_path):
    spec = G.generate_dataset(G.GenConfig(seed=2, n_fields=10, noise_sd=0.0, patch_h=2, patch_w=2), tmp_path)
    ds = I.load_dataset(tmp_path)
    soil = {s.field_id: s for s in ds.soils}
    for (fid, year), y in ds.yields.items():
        win = spec.window(ds.monthly, fid, year)
        gt = G.ground_truth_yield(spec, soil[fid], win, spec.canopy[f"{fid}/{year}"], year)
        assert y == gt
    loaded = G.load_ground_truth(tmp_path / "ground_truth.json")
    assert loaded == spec
    pred = G.oracle_predictions(loaded, ds)
    keys = sorted(ds.yields)
    assert compute_metrics([ds.yields[k] for k in keys], [pred[k] for k in keys]).r2 == 1.0


def _flat_window(spec, year, precip=0.0, srad=None):
    srad = spec.srad_ref if srad is None else srad
    return {(y, m): MonthlyClimate("f", y, m, precip, 0.0, srad)
            for y in range(year - spec.memory_years, year + 1) for m in spec.season_months}


def test_ground_truth_examples():
    spec = G.GroundTruthSpec()
    soil = SoilRecord("f", 6.5, 12.0, 30.0)
    win = _flat_window(spec, 2024)
    y = G.ground_truth_yield(spec, soil, win, 0.0, 2024)
    assert y == pytest.approx(spec.beta0 + spec.beta_oc * 12.0, abs=1e-12)
    y2 = G.ground_truth_yield(spec, SoilRecord("f", 6.5, 24.0, 30.0), win, 0.0, 2024)
    assert y2 - y == pytest.approx(spec.beta_oc * 12.0, abs=1e-12)
    wet = dict(win)
    delta = 37.5
    wet[(2024, 6)] = MonthlyClimate("f", 2024, 6, spec.precip_threshold + delta, 0.0, spec.srad_ref)
    assert y - G.ground_truth_yield(spec, soil, wet, 0.0, 2024) == pytest.approx(spec.kappa_precip * delta, abs=1e-12)
    del win[(2021, 8)]
    with pytest.raises(ValueError, match="incomplete"):
        G.ground_truth_yield(spec, soil, win, 0.0, 2024)


def test_memory_term_uses_prior_seasons_only():
    spec = G.GroundTruthSpec(memory_strength=1.0)
    soil = SoilRecord("f", 6.5, 12.0, 30.0)
    base = _flat_window(spec, 2024, precip=spec.precip_ref / 5)
    y0 = G.ground_truth_yield(spec, soil, base, 0.5, 2024)
    drier = dict(base)
    drier[(2023, 8)] = MonthlyClimate("f", 2023, 8, 0.0, 0.0, spec.srad_ref)
    d1 = spec.memory_weights()[0]
    assert y0 - G.ground_truth_yield(spec, soil, drier, 0.5, 2024) == pytest.approx(
        spec.memory_scale * d1 * (spec.precip_ref / 5) / spec.precip_scale, abs=1e-12)
    assert sum(spec.memory_weights()) == pytest.approx(1.0)


def test_config_validation():
    with pytest.raises(ValueError, match="seed"):
        G.GenConfig.from_dict({"n_fields": 3})
    bad = [dict(month_weights=(0, 0, 0, 0, 0)), dict(month_weights=(1, -1, 0, 0, 0)),
           dict(memory_strength=1.5), dict(noise_sd=-1), dict(years=(2020, 2022)), dict(n_fields=0)]
    for kw in bad:
        with pytest.raises(ValueError):
            G.GenConfig(seed=0, **kw)


def test_organic_carbon_correlates_with_yield():
    _, _, _, soils, yields, _ = G.simulate(G.GenConfig(seed=3, n_fields=120, patch_h=2, patch_w=2))
    oc = {s.field_id: s.organic_carbon_g_kg for s in soils}
    pairs = np.array([(oc[f], y) for (f, _), y in yields.items()])
    assert np.corrcoef(pairs.T)[0, 1] > 0


def test_early_season_extremes_occur():
    _, _, daily, _, _, _ = G.simulate(G.GenConfig(seed=4, n_fields=40, patch_h=2, patch_w=2))
    monthly = I.aggregate_monthly(daily)
    early = [r.precip_mm for r in monthly if r.month in (6, 7)]
    assert max(early) > G.GroundTruthSpec().precip_threshold


def _oracle_gap(tmp_path, mem):
    d = tmp_path / f"m{mem}"
    spec = G.generate_dataset(G.GenConfig(seed=8, n_fields=40, noise_sd=0.0, memory_strength=mem,
                                          patch_h=2, patch_w=2, years=tuple(range(2016, 2025))), d)
    ds = I.load_dataset(d)
    keys = sorted(ds.yields)
    y = [ds.yields[k] for k in keys]
    r2 = {}
    for hist in (True, False):
        p = G.oracle_predictions(spec, ds, see_history=hist)
        r2[hist] = compute_metrics(y, [p[k] for k in keys]).r2
    return r2[True] - r2[False]


def test_memory_strength_widens_history_gap(tmp_path):
    gaps = [_oracle_gap(tmp_path, m) for m in (0.0, 0.5, 1.0)]
    assert gaps[0] == pytest.approx(0.0, abs=1e-12)
    assert gaps[0] < gaps[1] < gaps[2]
