"""
How much history helps
======================

With soil memory switched on, last seasons' rainfall shifts this season's
yield. Longer input windows let the model see that. All windows are scored
on the same harvest years so the rows are comparable.
"""
import tempfile
from pathlib import Path

from attn_cropnet import datagen, evaluation, ingest, model, train
from attn_cropnet.svg import line_chart

d = Path(tempfile.mkdtemp())
datagen.generate_dataset(datagen.GenConfig(seed=0, n_fields=30, memory_strength=1.0,
                                           years=tuple(range(2016, 2025)), patch_h=4, patch_w=4), d)
ds = ingest.load_dataset(d)
rows = evaluation.window_sensitivity(ds, [1, 3, 5], train.TrainConfig(learning_rate=2e-3, epochs=30, seed=0),
                                     model.ModelConfig(patch_h=4, patch_w=4))
print(evaluation.window_csv(rows))

svg = line_chart([r.window_years for r in rows], {"R2": [r.r2 for r in rows], "RMSE": [r.rmse for r in rows]},
                 title="LOYO accuracy vs window", xlabel="window (years)")
(d / "window.svg").write_text(svg)
print("chart written to", d / "window.svg")
