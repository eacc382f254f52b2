"""
From fixture files to model-ready samples
=========================================

A dataset directory holds satellite patches (CSV), daily climate (one JSON
per field, laid out like the public daily point API), soil properties
(JSON lines) and yields. Ingest turns them into windowed samples.
"""
import tempfile
from pathlib import Path

import numpy as np

from attn_cropnet import datagen, ingest

out = Path(tempfile.mkdtemp()) / "fields"
datagen.generate_dataset(datagen.GenConfig(seed=3, n_fields=4, patch_h=4, patch_w=4), out)
print(sorted(p.name for p in out.iterdir()))

ds = ingest.load_dataset(out)
print(len(ds.patches), "patches,", len(ds.monthly), "monthly climate rows,", len(ds.yields), "yields")

# Daily climate is aggregated per month: precipitation summed, the rest averaged.
m = ds.monthly[0]
print(f"{m.field_id} {m.year}-{m.month:02d}: {m.precip_mm:.1f} mm, tmax {m.tmax_c:.1f} C, "
      f"srad {m.srad_mj_m2:.1f} MJ/m2")

# NDVI is a diagnostic derived from the red and NIR bands.
print("mean NDVI of the first patch:", ingest.compute_ndvi(ds.patches[0]).mean().round(3))

# A three-year window gives 15 monthly timesteps; early harvests lack the history
# and are reported as skipped rather than padded.
samples, skipped = ingest.dataset_samples(ds, window_years=3)
s = samples[0]
print(f"{len(samples)} samples, {len(skipped)} skipped; T={s.T}, patches {s.patches.shape}, env {s.env.shape}")
print("first skip:", skipped.skipped[0])

# Min-max ranges come from the training split only; held-out values may leave [0, 1].
train = [x for x in samples if x.harvest_year < 2024]
norm = ingest.normalize_fit(train)
test = ingest.normalize_apply(norm, next(x for x in samples if x.harvest_year == 2024))
print("held-out precip range after scaling:", np.round([test.env[:, 0].min(), test.env[:, 0].max()], 3))
