import hashlib
import json
import shutil
import subprocess
import sys

import pytest

from attn_cropnet import cli

TINY = {
    "seed": 5,
    "paths": {"dataset": "data", "output": "out"},
    "generate": {"n_fields": 6, "patch_h": 4, "patch_w": 4},
    "model": {"channels": [3, 4, 4], "mlp_hidden": [4, 4], "d_e": 3, "d_a": 4, "head_hidden": 4},
    "train": {"epochs": 2, "learning_rate": 1e-3},
    "eval": {"windows": [1, 2], "repeats": 2, "grid": {"learning_rate": [1e-3], "attention_dropout": [0.1, 0.3]}},
}


def _config(tmp_path, doc=TINY):
    p = tmp_path / "run.json"
    p.write_text(json.dumps(doc))
    return str(p)


def _digest(d):
    return {p.relative_to(d).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(d.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    cfg = _config(tmp)
    codes = {c: cli.main([c, "--config", cfg]) for c in ("generate", "train", "evaluate", "ablate", "explain")}
    codes["sensitivity"] = cli.main(["sensitivity", "--config", cfg])
    codes["hyper"] = cli.main(["sensitivity", "--config", cfg, "--mode", "hyper"])
    return tmp, cfg, codes


def test_all_subcommands_succeed(pipeline):
    tmp, _, codes = pipeline
    assert set(codes.values()) == {0}
    assert (tmp / "data" / "ground_truth.json").is_file()
    out = {p.name for p in (tmp / "out").iterdir()}
    assert out == {"model.json", "train_report.json", "loss_curve.csv", "metrics.json", "attention.csv",
                   "ablation.csv", "shapley.json", "importance.csv", "window_sensitivity.csv",
                   "window_sensitivity.svg", "sensitivity.csv"}
    metrics = json.loads((tmp / "out" / "metrics.json").read_text())
    assert {"r2", "rmse", "mae", "n", "folds", "checkpoint"} <= set(metrics)
    assert len(metrics["folds"]) == 5
    assert set(json.loads((tmp / "out" / "shapley.json").read_text())) == {"satellite", "climate", "soil", "v_full"}
    assert (tmp / "out" / "sensitivity.csv").read_text().count("\n") == 3
    svg = (tmp / "out" / "window_sensitivity.svg").read_text()
    assert svg.startswith("<svg") and "polyline" in svg and "window (years)" in svg


def test_rerun_is_byte_identical_and_inputs_untouched(pipeline, tmp_path):
    tmp, cfg, _ = pipeline
    before_data = _digest(tmp / "data")
    before_out = _digest(tmp / "out")
    for c in ("train", "evaluate", "ablate", "explain"):
        assert cli.main([c, "--config", cfg]) == 0
    assert cli.main(["sensitivity", "--config", cfg]) == 0
    assert cli.main(["sensitivity", "--config", cfg, "--mode", "hyper"]) == 0
    assert _digest(tmp / "data") == before_data
    assert _digest(tmp / "out") == before_out
    # regenerate elsewhere: identical fixture bytes
    doc = dict(TINY, paths={"dataset": "data2", "output": "out2"})
    assert cli.main(["generate", "--config", _config(tmp_path, doc)]) == 0
    assert _digest(tmp_path / "data2") == before_data


def test_config_errors_exit_2(tmp_path, caplog):
    doc = {k: v for k, v in TINY.items() if k != "seed"}
    assert cli.main(["generate", "--config", _config(tmp_path, doc)]) == 2
    assert "missing required key 'seed'" in caplog.text
    assert cli.main(["train", "--config", str(tmp_path / "nope.json")]) == 2
    (tmp_path / "bad.json").write_text("{")
    assert cli.main(["train", "--config", str(tmp_path / "bad.json")]) == 2
    cfg = _config(tmp_path)
    assert cli.main(["train", "--config", cfg, "--set", "train.epochs=0"]) == 2
    assert cli.main(["train", "--config", cfg, "--set", "noequals"]) == 2
    assert cli.main(["generate", "--config", cfg, "--set", "generate.memory_strength=3"]) == 2


def test_io_error_exit_3(tmp_path):
    cfg = _config(tmp_path)
    for c in ("train", "evaluate", "ablate", "explain", "sensitivity"):
        assert cli.main([c, "--config", cfg, "--set", "paths.dataset=missing"]) == 3
    (tmp_path / "notdata").mkdir()
    (tmp_path / "notdata" / "keep.txt").write_text("x")
    assert cli.main(["generate", "--config", cfg, "--set", "paths.dataset=notdata"]) == 3
    assert (tmp_path / "notdata" / "keep.txt").read_text() == "x"


def test_data_contract_exit_4(pipeline, tmp_path):
    src, _, _ = pipeline
    shutil.copytree(src / "data", tmp_path / "data")
    y = tmp_path / "data" / "yield.csv"
    lines = y.read_text().splitlines()
    lines[1] = lines[1].rsplit(",", 1)[0] + ",-1.0"
    y.write_text("\n".join(lines) + "\n")
    assert cli.main(["train", "--config", _config(tmp_path)]) == 4


def test_set_override_parsing():
    doc = {"train": {"epochs": 3}}
    cli.apply_override(doc, "train.epochs=7")
    cli.apply_override(doc, "eval.windows=[1,3]")
    cli.apply_override(doc, "paths.output=some/dir")
    assert doc == {"train": {"epochs": 7}, "eval": {"windows": [1, 3]}, "paths": {"output": "some/dir"}}


@pytest.mark.parametrize("cmd", ["generate", "train", "evaluate", "ablate", "sensitivity", "explain"])
def test_help_lists_config_keys(cmd, capsys):
    with pytest.raises(SystemExit) as e:
        cli.main([cmd, "--help"])
    assert e.value.code == 0
    text = capsys.readouterr().out
    for key in cli.KEYS[cmd]:
        assert key in text


def test_console_script_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "attn_cropnet.cli", "generate", "--config",
                        _config(tmp_path, {"paths": {}})], capture_output=True, text=True)
    assert r.returncode == 2 and "seed" in r.stderr
