"""
Training the fusion model and reading its attention
===================================================

Each monthly timestep is embedded by a CNN (satellite patch) and an MLP
(climate + soil); softmax attention over time weights the fused vectors.
After training, the attention mass per calendar month shows which months
the model leans on.
"""
import tempfile

from attn_cropnet import datagen, ingest, model, train
from attn_cropnet.evaluation import compute_metrics, month_mass

d = tempfile.mkdtemp()
datagen.generate_dataset(datagen.GenConfig(seed=104, n_fields=30, patch_h=4, patch_w=4), d)
samples, _ = ingest.dataset_samples(ingest.load_dataset(d), 1)
norm = ingest.normalize_fit(samples)
samples = [ingest.normalize_apply(norm, s) for s in samples]

cfg = model.ModelConfig(patch_h=4, patch_w=4)
params, report = train.train(samples, train.TrainConfig(learning_rate=1e-3, epochs=40, seed=0), cfg,
                             log=lambda e, l: print(f"epoch {e:3d}  loss {l:.4f}") if e % 10 == 0 else None)

y_hat, alpha = model.predict_batch(params, cfg, samples)
print("training R^2:", round(compute_metrics([s.yield_t_ha for s in samples], y_hat).r2, 3))
for m, a in month_mass(alpha, samples[0].months).items():
    print(f"month {m:2d}  mean attention {a:.3f}  " + "#" * int(100 * a))

# The attention trace of a single prediction:
y, trace = model.predict(params, cfg, samples[0])
print(f"{samples[0].field_id} {samples[0].harvest_year}: {y:.2f} t/ha (observed {samples[0].yield_t_ha:.2f})")
print("alpha:", trace.alpha.round(3), "months", trace.months)
