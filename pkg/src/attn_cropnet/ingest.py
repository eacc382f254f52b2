"""Fixture parsing, monthly alignment, windowed sample assembly and scaling.

File layouts (all UTF-8):

* climate JSON, one file per field::

    {"field_id": "f000",
     "parameters": {"PRECTOTCORR": {"20240601": 3.2, ...},
                    "T2M_MAX": {...}, "ALLSKY_SFC_SW_DWN": {...}}}

  ``-999`` marks a missing value and is rejected.
* soil JSON-lines: ``{"field_id": ..., "phh2o": ..., "soc": ..., "clay": ...}``
* satellite CSV: ``field_id,year,month,band,p0,...,p{H*W-1}``, row-major pixels,
  band in ``red``/``nir``/``blue``.
* yield CSV: ``field_id,year,yield_t_ha``.
* manifest JSON: ``{"patch_h", "patch_w", "season_months", "years", "fields"}``.
"""
from __future__ import annotations

import csv
import datetime as dt
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

BANDS = ("red", "nir", "blue")
CLIMATE_PARAMS = {
    "PRECTOTCORR": "precip_mm",
    "T2M_MAX": "tmax_c",
    "ALLSKY_SFC_SW_DWN": "srad_mj_m2",
}
CLIMATE_FEATURES = ("precip", "tmax", "srad")
SOIL_FEATURES = ("ph", "organic_carbon", "clay")
ENV_FEATURES = CLIMATE_FEATURES + SOIL_FEATURES
FEATURES = BANDS + ENV_FEATURES
MISSING = -999.0
NDVI_EPS = 1e-9


class DataContractError(ValueError):
    """A fixture violates its documented format or value ranges."""


@dataclass(frozen=True)
class DatasetManifest:
    patch_h: int
    patch_w: int
    season_months: tuple[int, ...] = (6, 7, 8, 9, 10)
    years: tuple[int, ...] = ()
    fields: tuple[str, ...] = ()

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        try:
            return cls(int(d["patch_h"]), int(d["patch_w"]),
                       tuple(int(m) for m in d.get("season_months", (6, 7, 8, 9, 10))),
                       tuple(int(y) for y in d.get("years", ())),
                       tuple(str(f) for f in d.get("fields", ())))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataContractError(f"bad manifest: {exc}") from exc

    def to_dict(self) -> dict:
        return {"patch_h": self.patch_h, "patch_w": self.patch_w,
                "season_months": list(self.season_months),
                "years": list(self.years), "fields": list(self.fields)}


@dataclass(frozen=True)
class DailyClimateRecord:
    field_id: str
    date: dt.date
    precip_mm: float
    tmax_c: float
    srad_mj_m2: float


@dataclass(frozen=True, order=True)
class MonthlyClimate:
    field_id: str
    year: int
    month: int
    precip_mm: float
    tmax_c: float
    srad_mj_m2: float


@dataclass(frozen=True)
class SoilRecord:
    field_id: str
    ph: float
    organic_carbon_g_kg: float
    clay_pct: float

    def vector(self) -> np.ndarray:
        return np.array([self.ph, self.organic_carbon_g_kg, self.clay_pct])


@dataclass(frozen=True, eq=False)
class SatellitePatch:
    field_id: str
    year: int
    month: int
    bands: np.ndarray  # [H, W, 3] ordered red, nir, blue


@dataclass(eq=False)
class FieldSample:
    """One (field, harvest year) record over a ``window_years`` history.

    ``patches`` is ``[T, H, W, 3]`` and ``env`` is ``[T, 6]`` holding
    ``precip, tmax, srad, ph, organic_carbon, clay`` per timestep, with the
    soil columns repeated over time.
    """
    field_id: str
    harvest_year: int
    window_years: int
    years: tuple[int, ...]
    months: tuple[int, ...]
    patches: np.ndarray
    env: np.ndarray
    soil: SoilRecord
    yield_t_ha: float

    @property
    def T(self) -> int:
        return len(self.months)


# ---------------------------------------------------------------- climate

def _parse_date(key: str, path) -> dt.date:
    try:
        return dt.datetime.strptime(key, "%Y%m%d").date()
    except ValueError as exc:
        raise DataContractError(f"{path}: bad date key {key!r}") from exc


def parse_climate_daily(path) -> list[DailyClimateRecord]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataContractError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    try:
        field_id = str(doc["field_id"])
        params = doc["parameters"]
    except (KeyError, TypeError) as exc:
        raise DataContractError(f"{path}: missing key {exc}") from exc

    series = {}
    for key in CLIMATE_PARAMS:
        if key not in params:
            raise DataContractError(f"{path}: missing parameter {key!r}")
        series[key] = params[key]
    dates = sorted(set().union(*(s.keys() for s in series.values())))
    records = []
    for d in dates:
        values = {}
        for key, attr in CLIMATE_PARAMS.items():
            if d not in series[key]:
                raise DataContractError(f"{path}: parameter {key} has no value for {d}")
            v = float(series[key][d])
            if v == MISSING:
                raise DataContractError(f"{path}: missing-value sentinel for {key} on {d}")
            if not math.isfinite(v):
                raise DataContractError(f"{path}: non-finite {key} on {d}")
            values[attr] = v
        if values["precip_mm"] < 0 or values["srad_mj_m2"] < 0:
            raise DataContractError(f"{path}: negative precipitation or radiation on {d}")
        records.append(DailyClimateRecord(field_id, _parse_date(d, path), **values))
    return records


def write_climate_daily(path, field_id: str, records) -> None:
    params = {key: {} for key in CLIMATE_PARAMS}
    for r in records:
        d = r.date.strftime("%Y%m%d")
        for key, attr in CLIMATE_PARAMS.items():
            params[key][d] = getattr(r, attr)
    Path(path).write_text(json.dumps({"field_id": field_id, "parameters": params},
                                     sort_keys=True) + "\n")


def aggregate_monthly(records) -> list[MonthlyClimate]:
    """Monthly precipitation totals and mean tmax/radiation per field."""
    groups = defaultdict(list)
    for r in records:
        groups[(r.field_id, r.date.year, r.date.month)].append(r)
    out = []
    for (fid, year, month), rs in groups.items():
        # sorted summation keeps the result independent of input order
        precip = math.fsum(sorted(r.precip_mm for r in rs))
        tmax = math.fsum(sorted(r.tmax_c for r in rs)) / len(rs)
        srad = math.fsum(sorted(r.srad_mj_m2 for r in rs)) / len(rs)
        out.append(MonthlyClimate(fid, year, month, precip, tmax, srad))
    return sorted(out)


# ---------------------------------------------------------------- soil

def parse_soil(path) -> list[SoilRecord]:
    path = Path(path)
    seen = set()
    out = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            rec = SoilRecord(str(d["field_id"]), float(d["phh2o"]), float(d["soc"]),
                             float(d["clay"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataContractError(f"{path}:{lineno}: {exc}") from exc
        if rec.field_id in seen:
            raise DataContractError(f"{path}:{lineno}: duplicate field_id {rec.field_id!r}")
        if not 0 < rec.ph < 14:
            raise DataContractError(f"{path}:{lineno}: field {rec.field_id} ph={rec.ph} outside (0, 14)")
        if not rec.organic_carbon_g_kg >= 0:
            raise DataContractError(
                f"{path}:{lineno}: field {rec.field_id} organic carbon {rec.organic_carbon_g_kg} < 0")
        if not 0 <= rec.clay_pct <= 100:
            raise DataContractError(f"{path}:{lineno}: field {rec.field_id} clay={rec.clay_pct} outside [0, 100]")
        seen.add(rec.field_id)
        out.append(rec)
    return out


def write_soil(path, records) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps({"field_id": r.field_id, "phh2o": r.ph,
                                 "soc": r.organic_carbon_g_kg, "clay": r.clay_pct}) + "\n")


# ---------------------------------------------------------------- satellite

def parse_satellite_csv(path, manifest: DatasetManifest) -> list[SatellitePatch]:
    path = Path(path)
    h, w = manifest.patch_h, manifest.patch_w
    npix = h * w
    bands = defaultdict(dict)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:4] != ["field_id", "year", "month", "band"]:
            raise DataContractError(f"{path}: bad header")
        if len(header) != 4 + npix:
            raise DataContractError(
                f"{path}: header has {len(header) - 4} pixels, manifest expects {npix}")
        for lineno, row in enumerate(reader, 2):
            if len(row) != 4 + npix:
                raise DataContractError(f"{path}:{lineno}: row width {len(row)} != {4 + npix}")
            fid, band = row[0], row[3]
            if band not in BANDS:
                raise DataContractError(f"{path}:{lineno}: unknown band {band!r}")
            try:
                year, month = int(row[1]), int(row[2])
                pix = np.array(row[4:], dtype=np.float64)
            except ValueError as exc:
                raise DataContractError(f"{path}:{lineno}: {exc}") from exc
            if not np.all((pix >= 0.0) & (pix <= 1.0)):
                bad = pix[~((pix >= 0.0) & (pix <= 1.0))][0]
                raise DataContractError(
                    f"{path}:{lineno}: reflectance {bad} outside [0, 1] ({fid} {year}-{month:02d} {band})")
            key = (fid, year, month)
            if band in bands[key]:
                raise DataContractError(f"{path}:{lineno}: duplicate {band} band for {key}")
            bands[key][band] = pix.reshape(h, w)
    out = []
    for key in sorted(bands):
        got = bands[key]
        missing = [b for b in BANDS if b not in got]
        if missing:
            raise DataContractError(f"{path}: patch {key} missing band(s) {missing}")
        out.append(SatellitePatch(*key, np.stack([got[b] for b in BANDS], axis=-1)))
    return out


def write_satellite_csv(path, patches, fmt: str = "%.4f") -> None:
    patches = list(patches)
    npix = patches[0].bands.shape[0] * patches[0].bands.shape[1] if patches else 0
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["field_id", "year", "month", "band"] + [f"p{i}" for i in range(npix)]) + "\n")
        for p in patches:
            for b, name in enumerate(BANDS):
                pix = ",".join(fmt % v for v in p.bands[..., b].reshape(-1))
                fh.write(f"{p.field_id},{p.year},{p.month},{name},{pix}\n")


def compute_ndvi(patch: SatellitePatch) -> np.ndarray:
    red, nir = patch.bands[..., 0], patch.bands[..., 1]
    return (nir - red) / (nir + red + NDVI_EPS)


# ---------------------------------------------------------------- yields

def parse_yields(path) -> dict[tuple[str, int], float]:
    path = Path(path)
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["field_id", "year", "yield_t_ha"]:
            raise DataContractError(f"{path}: bad header {reader.fieldnames}")
        for lineno, row in enumerate(reader, 2):
            try:
                key = (row["field_id"], int(row["year"]))
                y = float(row["yield_t_ha"])
            except (TypeError, ValueError) as exc:
                raise DataContractError(f"{path}:{lineno}: {exc}") from exc
            if not y >= 0:
                raise DataContractError(f"{path}:{lineno}: negative yield {y}")
            if key in out:
                raise DataContractError(f"{path}:{lineno}: duplicate yield for {key}")
            out[key] = y
    return out


def write_yields(path, yields: dict) -> None:
    with open(path, "w") as fh:
        fh.write("field_id,year,yield_t_ha\n")
        for (fid, year), y in sorted(yields.items()):
            fh.write(f"{fid},{year},{y!r}\n")


# ---------------------------------------------------------------- dataset

@dataclass
class Dataset:
    manifest: DatasetManifest
    patches: list[SatellitePatch]
    monthly: list[MonthlyClimate]
    soils: list[SoilRecord]
    yields: dict[tuple[str, int], float]


def load_dataset(directory) -> Dataset:
    """Parse every fixture in a generated dataset directory."""
    d = Path(directory)
    try:
        manifest = DatasetManifest.from_dict(json.loads((d / "manifest.json").read_text()))
    except json.JSONDecodeError as exc:
        raise DataContractError(f"{d / 'manifest.json'}: {exc}") from exc
    daily = []
    for p in sorted((d / "climate").glob("*.json")):
        daily.extend(parse_climate_daily(p))
    return Dataset(manifest,
                   parse_satellite_csv(d / "satellite.csv", manifest),
                   aggregate_monthly(daily),
                   parse_soil(d / "soil.jsonl"),
                   parse_yields(d / "yield.csv"))


@dataclass
class SkipReport:
    skipped: list[tuple[str, int, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.skipped)


def assemble_samples(patches, monthly, soils, yields, window_years: int,
                     season_months=(6, 7, 8, 9, 10)) -> tuple[list[FieldSample], SkipReport]:
    """Build one sample per (field, harvest year) with a complete window.

    Combinations with any missing (year, month) patch or climate slot, or
    without soil, are skipped and listed in the report.
    """
    if not 1 <= window_years <= 5:
        raise ValueError(f"window_years must be in 1..5, got {window_years}")
    patch_by = {(p.field_id, p.year, p.month): p for p in patches}
    clim_by = {(c.field_id, c.year, c.month): c for c in monthly}
    soil_by = {s.field_id: s for s in soils}
    samples, report = [], SkipReport()
    for (fid, harvest), y in sorted(yields.items()):
        soil = soil_by.get(fid)
        if soil is None:
            report.skipped.append((fid, harvest, "no soil record"))
            continue
        slots = [(yr, m) for yr in range(harvest - window_years + 1, harvest + 1)
                 for m in season_months]
        gaps = [s for s in slots if (fid, *s) not in patch_by or (fid, *s) not in clim_by]
        if gaps:
            yr, m = gaps[0]
            report.skipped.append((fid, harvest, f"missing {yr}-{m:02d} ({len(gaps)} gap(s))"))
            continue
        pats = np.stack([patch_by[(fid, *s)].bands for s in slots])
        env = np.array([[clim_by[(fid, *s)].precip_mm, clim_by[(fid, *s)].tmax_c,
                         clim_by[(fid, *s)].srad_mj_m2, *soil.vector()] for s in slots])
        samples.append(FieldSample(fid, harvest, window_years,
                                   tuple(s[0] for s in slots), tuple(s[1] for s in slots),
                                   pats, env, soil, float(y)))
    return samples, report


def dataset_samples(ds: Dataset, window_years: int):
    return assemble_samples(ds.patches, ds.monthly, ds.soils, ds.yields, window_years,
                            ds.manifest.season_months)


# ---------------------------------------------------------------- scaling

@dataclass
class Normalizer:
    """Per-feature (min, max) learned on a training split."""
    ranges: dict[str, tuple[float, float]]

    @property
    def degenerate(self) -> list[str]:
        return [k for k, (lo, hi) in self.ranges.items() if lo == hi]

    def to_dict(self) -> dict:
        return {k: [lo, hi] for k, (lo, hi) in self.ranges.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls({k: (float(v[0]), float(v[1])) for k, v in d.items()})


def _feature_arrays(sample: FieldSample) -> dict[str, np.ndarray]:
    arrays = {b: sample.patches[..., i] for i, b in enumerate(BANDS)}
    arrays.update({f: sample.env[:, i] for i, f in enumerate(ENV_FEATURES)})
    return arrays


def normalize_fit(samples) -> Normalizer:
    samples = list(samples)
    if not samples:
        raise ValueError("normalize_fit needs at least one training sample")
    ranges = {}
    for name in FEATURES:
        lo = min(float(_feature_arrays(s)[name].min()) for s in samples)
        hi = max(float(_feature_arrays(s)[name].max()) for s in samples)
        ranges[name] = (lo, hi)
    return Normalizer(ranges)


def scale(x, lo: float, hi: float):
    if hi == lo:
        return np.full_like(np.asarray(x, dtype=np.float64), 0.5)
    return (np.asarray(x, dtype=np.float64) - lo) / (hi - lo)


def normalize_apply(normalizer: Normalizer, sample: FieldSample) -> FieldSample:
    """Min-max scaled copy; the yield target is left in t/ha."""
    unknown = [f for f in FEATURES if f not in normalizer.ranges]
    if unknown:
        raise KeyError(f"normalizer has no range for feature(s) {unknown}")
    patches = np.stack([scale(sample.patches[..., i], *normalizer.ranges[b])
                        for i, b in enumerate(BANDS)], axis=-1)
    env = np.stack([scale(sample.env[:, i], *normalizer.ranges[f])
                    for i, f in enumerate(ENV_FEATURES)], axis=-1)
    return replace(sample, patches=patches, env=env)
