"""Synthetic multi-modal fixtures with a known yield function.

The generator writes ordinary ingest fixtures (so the parsers run on every
use) plus ``ground_truth.json``. Expected yield for field ``f`` in harvest
year ``y`` is::

    beta0 + beta_oc * OC
          + gamma_ndvi * canopy(f, y)
          + beta_srad * sum_m month_weight[m] * (srad[y, m] - srad_ref)
          - kappa_precip * sum_{m in early} max(0, precip[y, m] - precip_threshold)
          + memory_strength * memory_scale
              * sum_{k=1..memory_years} d_k * (season_precip[y - k] - precip_ref) / precip_scale

with recency weights ``d_k`` proportional to ``memory_decay ** (k - 1)`` and
summing to one. ``canopy`` is the season mean of the latent NDVI that the satellite
patches encode. ``memory_years`` seasons before the first emitted year are
simulated but not written; their monthly climate is stored in the ground
truth file so the function stays fully determined.
"""
from __future__ import annotations

import calendar
import datetime as dt
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .ingest import (DailyClimateRecord, DatasetManifest, MonthlyClimate, SatellitePatch,
                     SoilRecord, aggregate_monthly, write_climate_daily,
                     write_satellite_csv, write_soil, write_yields)

DEFAULT_MONTH_WEIGHTS = (0.05, 0.35, 0.35, 0.15, 0.10)

# per-month climatology over June..October
_TMAX_CLIM = (26.0, 31.0, 30.0, 24.0, 18.0)
_PRECIP_CLIM = (90.0, 80.0, 70.0, 60.0, 60.0)
_PHENOLOGY = (0.60, 0.95, 1.00, 0.80, 0.45)
_SRAD_MEAN = 20.0


@dataclass(frozen=True)
class GenConfig:
    seed: int
    n_fields: int = 50
    years: tuple[int, ...] = (2020, 2021, 2022, 2023, 2024)
    patch_h: int = 8
    patch_w: int = 8
    noise_sd: float = 0.3
    memory_strength: float = 0.0
    month_weights: tuple[float, ...] = DEFAULT_MONTH_WEIGHTS
    season_months: tuple[int, ...] = (6, 7, 8, 9, 10)

    def __post_init__(self):
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)):
            raise ValueError(f"seed must be an integer, got {self.seed!r}")
        if self.n_fields < 1:
            raise ValueError("n_fields must be >= 1")
        years = tuple(int(y) for y in self.years)
        if not years or list(years) != list(range(years[0], years[0] + len(years))):
            raise ValueError(f"years must be a non-empty consecutive run, got {self.years}")
        object.__setattr__(self, "years", years)
        if self.patch_h < 1 or self.patch_w < 1:
            raise ValueError("patch dims must be positive")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if not 0.0 <= self.memory_strength <= 1.0:
            raise ValueError("memory_strength must lie in [0, 1]")
        w = tuple(float(x) for x in self.month_weights)
        if len(w) != len(self.season_months) or len(w) != 5:
            raise ValueError("month_weights needs one weight per season month (5)")
        if any(x < 0 for x in w) or not any(x > 0 for x in w):
            raise ValueError("month_weights must be non-negative with at least one positive")
        object.__setattr__(self, "month_weights", w)
        object.__setattr__(self, "season_months", tuple(int(m) for m in self.season_months))

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        if "seed" not in d:
            raise ValueError("generator config is missing required key 'seed'")
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        for k in ("years", "month_weights", "season_months"):
            if k in known:
                known[k] = tuple(known[k])
        return cls(**known)


@dataclass
class GroundTruthSpec:
    beta0: float = 3.0
    beta_oc: float = 0.08
    gamma_ndvi: float = 6.0
    beta_srad: float = 0.4
    srad_ref: float = _SRAD_MEAN
    kappa_precip: float = 0.01
    precip_threshold: float = 150.0
    early_months: tuple[int, ...] = (6, 7)
    month_weights: tuple[float, ...] = DEFAULT_MONTH_WEIGHTS
    season_months: tuple[int, ...] = (6, 7, 8, 9, 10)
    memory_strength: float = 0.0
    memory_scale: float = 2.0
    memory_years: int = 4
    memory_decay: float = 0.7
    precip_ref: float = 360.0
    precip_scale: float = 90.0
    # latent season-mean NDVI per "field/year"
    canopy: dict[str, float] = field(default_factory=dict)
    # monthly climate of the simulated-but-unwritten burn-in seasons
    hidden_climate: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("early_months", "month_weights", "season_months"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruthSpec":
        d = dict(d)
        for k in ("early_months", "month_weights", "season_months"):
            d[k] = tuple(d[k])
        return cls(**d)

    def season_precip(self, window: dict, year: int) -> float:
        return math.fsum(window[(year, m)].precip_mm for m in self.season_months)

    def memory_weights(self) -> list[float]:
        raw = [self.memory_decay ** k for k in range(self.memory_years)]
        total = math.fsum(raw)
        return [r / total for r in raw]

    def memory_term(self, window: dict, harvest_year: int) -> float:
        bal = [d * (self.season_precip(window, harvest_year - k) - self.precip_ref) / self.precip_scale
               for k, d in enumerate(self.memory_weights(), 1)]
        return self.memory_strength * self.memory_scale * math.fsum(bal)

    def current_terms(self, soil: SoilRecord, window: dict, canopy: float,
                      harvest_year: int) -> float:
        srad = math.fsum(w * (window[(harvest_year, m)].srad_mj_m2 - self.srad_ref)
                         for w, m in zip(self.month_weights, self.season_months))
        excess = math.fsum(max(0.0, window[(harvest_year, m)].precip_mm - self.precip_threshold)
                           for m in self.early_months)
        return (self.beta0 + self.beta_oc * soil.organic_carbon_g_kg + self.gamma_ndvi * canopy
                + self.beta_srad * srad - self.kappa_precip * excess)

    def window(self, monthly, field_id: str, harvest_year: int) -> dict:
        """Collect the (year, month) -> MonthlyClimate map the yield function needs."""
        recs = [r for r in monthly if r.field_id == field_id]
        recs += [MonthlyClimate(**h) for h in self.hidden_climate if h["field_id"] == field_id]
        years = range(harvest_year - self.memory_years, harvest_year + 1)
        return {(r.year, r.month): r for r in recs
                if r.year in years and r.month in self.season_months}


def ground_truth_yield(spec: GroundTruthSpec, soil: SoilRecord, window: dict,
                       canopy: float, harvest_year: int) -> float:
    """Noise-free expected yield (t/ha).

    ``window`` maps ``(year, month)`` to a monthly climate record and must
    cover every season month of ``harvest_year`` and the ``memory_years``
    seasons before it.
    """
    need = [(y, m) for y in range(harvest_year - spec.memory_years, harvest_year + 1)
            for m in spec.season_months]
    missing = [k for k in need if k not in window]
    if missing:
        raise ValueError(f"incomplete climate window: missing {missing[:3]}"
                         f"{' ...' if len(missing) > 3 else ''}")
    return (spec.current_terms(soil, window, canopy, harvest_year)
            + spec.memory_term(window, harvest_year))


# ---------------------------------------------------------------- generation

def _texture(rng, h, w, sd):
    noise = rng.normal(0.0, 1.0, (h + 2, w + 2))
    smooth = sum(noise[i:i + h, j:j + w] for i in range(3) for j in range(3)) / 3.0
    return sd * smooth


def _patch(rng, ndvi, h, w):
    pix = np.clip(ndvi + _texture(rng, h, w, 0.03), -0.95, 0.95)
    bright = 0.4 + rng.normal(0.0, 0.01, (h, w))
    nir = bright * (1.0 + pix) / 2.0
    red = bright * (1.0 - pix) / 2.0
    blue = np.clip(0.6 * red + rng.normal(0.0, 0.005, (h, w)), 0.0, 1.0)
    return np.round(np.stack([red, nir, blue], axis=-1), 4)


def _daily_month(rng, fid, year, month, precip_total, tmax_mean, srad_mean):
    ndays = calendar.monthrange(year, month)[1]
    share = rng.dirichlet(np.full(ndays, 0.7))
    precip = np.round(precip_total * share, 1)
    tmax = np.round(tmax_mean + rng.normal(0.0, 2.5, ndays), 2)
    srad = np.round(np.maximum(0.0, srad_mean + rng.normal(0.0, 2.0, ndays)), 2)
    return [DailyClimateRecord(fid, dt.date(year, month, d + 1), float(precip[d]),
                               float(tmax[d]), float(srad[d])) for d in range(ndays)]


def simulate(cfg: GenConfig):
    """Draw every covariate and yield in memory.

    Returns ``(manifest, patches, daily, soils, yields, spec)``.
    """
    rng = np.random.default_rng(cfg.seed)
    spec = GroundTruthSpec(month_weights=cfg.month_weights, season_months=cfg.season_months,
                           memory_strength=cfg.memory_strength,
                           early_months=cfg.season_months[:2])
    fields = [f"f{i:03d}" for i in range(cfg.n_fields)]
    first = cfg.years[0] - spec.memory_years
    all_years = range(first, cfg.years[-1] + 1)

    soils = [SoilRecord(fid, round(float(rng.uniform(5.5, 7.8)), 2),
                        round(float(rng.uniform(5.0, 30.0)), 2),
                        round(float(rng.uniform(10.0, 45.0)), 2)) for fid in fields]
    potential = rng.normal(0.55, 0.08, cfg.n_fields)
    # field-specific radiation climatology per season month (local microclimate)
    srad_clim = _SRAD_MEAN + rng.normal(0.0, 2.0, (cfg.n_fields, len(cfg.season_months)))

    patches, daily, hidden = [], [], []
    for fi, fid in enumerate(fields):
        for year in all_years:
            emitted = year >= cfg.years[0]
            wetness = math.exp(rng.normal(0.0, 0.25))
            t_offset = rng.normal(0.0, 3.0)
            health = potential[fi] + rng.normal(0.0, 0.03)
            ndvis = []
            for k, month in enumerate(cfg.season_months):
                p = _PRECIP_CLIM[k] * wetness * math.exp(rng.normal(0.0, 0.15))
                if month in spec.early_months and rng.random() < 0.12:
                    p += rng.uniform(60.0, 160.0)
                srad = srad_clim[fi, k] + rng.normal(0.0, 0.7)
                recs = _daily_month(rng, fid, year, month, p, _TMAX_CLIM[k] + t_offset, srad)
                ndvi = float(np.clip(_PHENOLOGY[k] * health + rng.normal(0.0, 0.02), -0.9, 0.9))
                ndvis.append(ndvi)
                if emitted:
                    daily.extend(recs)
                    patches.append(SatellitePatch(fid, year, month,
                                                  _patch(rng, ndvi, cfg.patch_h, cfg.patch_w)))
                else:
                    hidden.extend(asdict(r) for r in aggregate_monthly(recs))
            spec.canopy[f"{fid}/{year}"] = math.fsum(ndvis) / len(ndvis)
    spec.hidden_climate = hidden

    monthly = aggregate_monthly(daily)
    soil_by = {s.field_id: s for s in soils}
    yields = {}
    for fid in fields:
        for year in cfg.years:
            window = spec.window(monthly, fid, year)
            mu = ground_truth_yield(spec, soil_by[fid], window, spec.canopy[f"{fid}/{year}"], year)
            y = mu + (rng.normal(0.0, cfg.noise_sd) if cfg.noise_sd > 0 else 0.0)
            yields[(fid, year)] = max(0.0, y)
    manifest = DatasetManifest(cfg.patch_h, cfg.patch_w, cfg.season_months, cfg.years,
                               tuple(fields))
    return manifest, patches, daily, soils, yields, spec


def generate_dataset(cfg: GenConfig, out_dir) -> GroundTruthSpec:
    """Write manifest, satellite, climate, soil, yield and ground-truth files."""
    out = Path(out_dir)
    (out / "climate").mkdir(parents=True, exist_ok=True)
    manifest, patches, daily, soils, yields, spec = simulate(cfg)
    (out / "manifest.json").write_text(json.dumps(manifest.to_dict(), indent=1) + "\n")
    write_satellite_csv(out / "satellite.csv", patches)
    by_field = {}
    for r in daily:
        by_field.setdefault(r.field_id, []).append(r)
    for fid, recs in by_field.items():
        write_climate_daily(out / "climate" / f"{fid}.json", fid, recs)
    write_soil(out / "soil.jsonl", soils)
    write_yields(out / "yield.csv", yields)
    (out / "ground_truth.json").write_text(json.dumps(spec.to_dict(), sort_keys=True) + "\n")
    return spec


def load_ground_truth(path) -> GroundTruthSpec:
    return GroundTruthSpec.from_dict(json.loads(Path(path).read_text()))


def oracle_predictions(spec: GroundTruthSpec, ds, see_history: bool = True) -> dict:
    """Analytic predictions from the recorded yield function.

    With ``see_history=False`` the memory term (which depends only on prior
    seasons) is replaced by its dataset mean, i.e. the best a single-season
    model can do.
    """
    soil_by = {s.field_id: s for s in ds.soils}
    cur, mem = {}, {}
    for (fid, year) in ds.yields:
        window = spec.window(ds.monthly, fid, year)
        cur[(fid, year)] = spec.current_terms(soil_by[fid], window, spec.canopy[f"{fid}/{year}"], year)
        mem[(fid, year)] = spec.memory_term(window, year)
    if not see_history:
        avg = math.fsum(mem.values()) / len(mem)
        mem = {k: avg for k in mem}
    return {k: cur[k] + mem[k] for k in cur}
