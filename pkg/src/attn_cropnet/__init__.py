"""Attention-fused multimodal crop yield model in plain numpy.

Modules: ``tensor`` (primitives and gradient checks), ``ingest`` (fixture
parsing, windowing, normalization), ``datagen`` (seeded synthetic fields),
``model`` (CNN + MLP branches, temporal attention, regression head),
``train``, ``evaluation`` (metrics, LOYO CV, ablation, window sweeps),
``explain`` (attention summaries, Shapley values, permutation importance)
and ``cli``.
"""
__version__ = "0.1.0"
