"""``attn-cropnet`` command line: generate, train, evaluate, ablate, sensitivity, explain.

Every subcommand reads one JSON config (``--config``) whose keys can be
overridden with ``--set dotted.key=value`` (value parsed as JSON when
possible). Relative paths resolve against the config file's directory.

Exit codes: 0 success, 2 config error, 3 I/O error, 4 data-contract violation.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import datagen, evaluation, explain, ingest, model as M, train as T
from .model import atomic_write_text
from .svg import line_chart

log = logging.getLogger("attn_cropnet")

EXIT_CONFIG, EXIT_IO, EXIT_DATA = 2, 3, 4


class ConfigError(Exception):
    pass


COMMON_KEYS = ["seed (required integer)", "paths.dataset", "paths.output"]
KEYS = {
    "generate": ["seed", "paths.dataset", "generate.n_fields", "generate.years",
                 "generate.patch_h", "generate.patch_w", "generate.noise_sd",
                 "generate.memory_strength", "generate.month_weights", "generate.season_months"],
    "train": COMMON_KEYS + ["paths.checkpoint", "model.*", "train.*", "eval.window_years"],
    "evaluate": COMMON_KEYS + ["paths.checkpoint", "model.*", "train.*", "eval.window_years"],
    "ablate": COMMON_KEYS + ["model.*", "train.*", "eval.window_years"],
    "sensitivity": COMMON_KEYS + ["model.*", "train.*", "eval.window_years", "eval.windows",
                                  "eval.grid.learning_rate", "eval.grid.attention_dropout"],
    "explain": COMMON_KEYS + ["model.*", "train.*", "eval.window_years", "eval.repeats",
                              "eval.features"],
}
KEY_NOTES = """
model.* keys: patch_h, patch_w, channels, kernel, mlp_hidden, d_e, d_a, head_hidden
train.* keys: learning_rate, epochs, batch_size, attention_dropout, beta1, beta2, eps,
              warm_start_bias (train.seed defaults to the global seed)"""


# ---------------------------------------------------------------- config

def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, value = assignment.split("=", 1)
    node = cfg
    parts = key.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {key}: {p!r} is not a section")
    node[parts[-1]] = _parse_value(value)


class RunConfig:
    """Parsed config plus resolved paths."""

    def __init__(self, raw: dict, base: Path):
        self.raw = raw
        if "seed" not in raw:
            raise ConfigError("config is missing required key 'seed'")
        seed = raw["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise ConfigError(f"'seed' must be an integer, got {seed!r}")
        self.seed = seed
        paths = raw.get("paths", {})
        self.dataset = (base / paths.get("dataset", "data")).resolve()
        self.output = (base / paths.get("output", "out")).resolve()
        self.checkpoint = (base / paths.get("checkpoint", str(Path(paths.get("output", "out")) / "model.json"))).resolve()
        ev = raw.get("eval", {})
        self.window = int(ev.get("window_years", 1))
        self.windows = [int(w) for w in ev.get("windows", [1, 2, 3, 4, 5])]
        self.grid = ev.get("grid", T.DEFAULT_GRID)
        self.repeats = int(ev.get("repeats", 5))
        self.features = list(ev.get("features", ingest.ENV_FEATURES))
        try:
            self.gen = datagen.GenConfig.from_dict({"seed": seed, **raw.get("generate", {})})
            self.model = M.ModelConfig.from_dict(raw.get("model", {}))
            self.train = T.TrainConfig.from_dict({"seed": seed, **raw.get("train", {})})
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if not 1 <= self.window <= 5 or not all(1 <= w <= 5 for w in self.windows):
            raise ConfigError("window sizes must lie in 1..5")


def load_config(path, overrides=()) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    for o in overrides:
        apply_override(raw, o)
    return RunConfig(raw, path.parent)


# ---------------------------------------------------------------- helpers

def _require_dataset(rc: RunConfig) -> ingest.Dataset:
    if not (rc.dataset / "manifest.json").is_file():
        raise OSError(f"dataset directory {rc.dataset} is missing or has no manifest.json")
    return ingest.load_dataset(rc.dataset)


def _samples(rc: RunConfig, ds, window=None):
    samples, report = ingest.dataset_samples(ds, window or rc.window)
    if report.skipped:
        log.warning("skipped %d incomplete (field, year) combinations", len(report))
    if not samples:
        raise ingest.DataContractError("no complete samples could be assembled")
    return samples


def _model_cfg(rc: RunConfig, ds) -> M.ModelConfig:
    return replace(rc.model, patch_h=ds.manifest.patch_h, patch_w=ds.manifest.patch_w,
                   attention_dropout=rc.train.attention_dropout)


def _write(rc: RunConfig, name: str, text: str) -> Path:
    path = rc.output / name
    atomic_write_text(path, text)
    log.info("wrote %s", path)
    return path


def _json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


# ---------------------------------------------------------------- commands

def cmd_generate(rc: RunConfig) -> None:
    target = rc.dataset
    if target.exists() and any(target.iterdir()) and not (target / "manifest.json").exists():
        raise OSError(f"refusing to overwrite non-dataset directory {target}")
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(dir=target.parent, prefix=f".{target.name}."))
    try:
        datagen.generate_dataset(rc.gen, tmp)
        if target.exists():
            shutil.rmtree(target)
        os.replace(tmp, target)
    finally:
        if tmp.exists():
            shutil.rmtree(tmp)
    log.info("generated dataset in %s", target)


def cmd_train(rc: RunConfig) -> None:
    ds = _require_dataset(rc)
    samples = _samples(rc, ds)
    mcfg = _model_cfg(rc, ds)
    norm = ingest.normalize_fit(samples)
    params, report = T.train([ingest.normalize_apply(norm, s) for s in samples], rc.train, mcfg,
                             log=lambda e, l: log.debug("epoch %d loss %.5f", e, l))
    M.save_checkpoint(rc.checkpoint, params, replace(mcfg, attention_dropout=rc.train.attention_dropout),
                      norm, extra={"window_years": rc.window})
    # relative path keeps the report identical wherever the run directory lives
    report.checkpoint = os.path.relpath(rc.checkpoint, rc.output)
    doc = report.to_dict()
    doc.pop("wall_time_s")  # keeps the report byte-stable across reruns
    _write(rc, "train_report.json", _json(doc))
    _write(rc, "loss_curve.csv", report.loss_csv())


def cmd_evaluate(rc: RunConfig) -> None:
    ds = _require_dataset(rc)
    samples = _samples(rc, ds)
    cv = evaluation.loyo_cv(samples, rc.train, _model_cfg(rc, ds))
    doc = cv.to_dict()
    if rc.checkpoint.is_file():
        params, mcfg, norm, ck = M.load_checkpoint(rc.checkpoint)
        w = int(ck.get("window_years", rc.window))
        ck_samples = [ingest.normalize_apply(norm, s) for s in _samples(rc, ds, w)]
        y_hat, _ = M.predict_batch(params, mcfg, ck_samples)
        doc["checkpoint"] = evaluation.compute_metrics(
            [s.yield_t_ha for s in ck_samples], y_hat).to_dict()
    _write(rc, "metrics.json", _json(doc))
    _write(rc, "attention.csv", explain.attention_csv(explain.attention_summary(cv.folds)))


def cmd_ablate(rc: RunConfig) -> None:
    ds = _require_dataset(rc)
    samples = _samples(rc, ds)
    mcfg = _model_cfg(rc, ds)
    rows = evaluation.ablation_study(samples, rc.train, mcfg)
    _write(rc, "ablation.csv", evaluation.ablation_csv(rows))
    known = {frozenset(("satellite",)): rows[0].mean_r2,
             frozenset(("satellite", "climate")): rows[1].mean_r2,
             frozenset(explain.PLAYERS): rows[3].mean_r2}
    values = explain.coalition_values(samples, rc.train, mcfg, known)
    _write(rc, "shapley.json", explain.modality_shapley(values).to_json())


def cmd_sensitivity(rc: RunConfig, mode: str) -> None:
    ds = _require_dataset(rc)
    mcfg = _model_cfg(rc, ds)
    if mode == "window":
        rows = evaluation.window_sensitivity(ds, rc.windows, rc.train, mcfg)
        _write(rc, "window_sensitivity.csv", evaluation.window_csv(rows))
        svg = line_chart([r.window_years for r in rows],
                         {"R2": [r.r2 for r in rows], "RMSE (t/ha)": [r.rmse for r in rows]},
                         title="LOYO accuracy vs historical window", xlabel="window (years)")
        _write(rc, "window_sensitivity.svg", svg)
    else:
        rows = T.sensitivity_grid(_samples(rc, ds), rc.train, mcfg, rc.grid)
        _write(rc, "sensitivity.csv", T.grid_csv(rows))


def cmd_explain(rc: RunConfig) -> None:
    ds = _require_dataset(rc)
    samples = _samples(rc, ds)
    held = max(s.harvest_year for s in samples)
    tr = [s for s in samples if s.harvest_year != held]
    te = [s for s in samples if s.harvest_year == held]
    if not tr or len(te) < 2:
        raise ingest.DataContractError("explain needs at least two harvest years")
    mcfg = _model_cfg(rc, ds)
    norm = ingest.normalize_fit(tr)
    params, _ = T.train([ingest.normalize_apply(norm, s) for s in tr], rc.train, mcfg)
    te_n = [ingest.normalize_apply(norm, s) for s in te]
    rng = np.random.default_rng([rc.seed, 2])
    scores = {}
    for f in rc.features:
        if f not in ingest.ENV_FEATURES:
            raise ConfigError(f"eval.features: unknown feature {f!r}")
        scores[f] = explain.permutation_importance(params, mcfg, te_n, f, rc.repeats, rng)
    _write(rc, "importance.csv", explain.importance_csv(scores))


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attn-cropnet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "generate": "write a synthetic dataset and its ground_truth.json",
        "train": "train on all harvest years; writes checkpoint, train_report.json, loss_curve.csv",
        "evaluate": "leave-one-year-out CV; writes metrics.json and attention.csv",
        "ablate": "modality ablation and Shapley values; writes ablation.csv and shapley.json",
        "sensitivity": "window depth (window_sensitivity.csv/.svg) or hyperparameter grid (sensitivity.csv)",
        "explain": "permutation importance on the last harvest year; writes importance.csv",
    }
    for name, text in helps.items():
        epilog = "config keys read:\n  " + "\n  ".join(KEYS[name])
        if any(k.endswith(".*") for k in KEYS[name]):
            epilog += "\n" + KEY_NOTES
        p = sub.add_parser(name, help=text, description=text, epilog=epilog,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (dotted path)")
        if name == "sensitivity":
            p.add_argument("--mode", choices=("window", "hyper"), default="window")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        rc = load_config(args.config, args.set)
        if args.command == "sensitivity":
            cmd_sensitivity(rc, args.mode)
        else:
            globals()[f"cmd_{args.command}"](rc)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except ValueError as exc:  # DataContractError and other input-content failures
        log.error("data contract violation: %s", exc)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
