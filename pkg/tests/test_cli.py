import json
import os
import re
import sys

import numpy as np
import pytest

from ptxens import cli
from ptxens.imgio import load_image, load_manifest

MICRO_CONFIG = {
    "seed": 5,
    "synth": {
        "n_negative": 12,
        "n_positive": 12,
        "image_size": 16,
        "blob_radius_range": [2.0, 4.0],
        "blob_contrast": 0.5,
        "texture_scales": [2, 4],
    },
    "ensemble": {
        "branch_sizes": [12, 8],
        "arch": {"stem_channels": 2, "stage_channels": [2], "dropout_rate": 0.0},
    },
    "train": {
        "lr0": 1e-3,
        "max_epochs": 2,
        "patience": 5,
        "phase1_epochs": 0,
        "batch_size": 4,
    },
}


def _write_config(dirpath, outdir, extra=None):
    data = dict(MICRO_CONFIG)
    data["outdir"] = str(outdir)
    if extra:
        data.update(extra)
    path = os.path.join(dirpath, "config.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f)
    return path


def _run_chain(cfgfile):
    for command in ("synth", "split", "train", "eval"):
        assert cli.run([command, "--config", cfgfile]) == 0


@pytest.fixture(scope="module")
def chain(tmp_path_factory):
    base = tmp_path_factory.mktemp("chain")
    outdir = base / "run"
    cfgfile = _write_config(base, outdir)
    _run_chain(cfgfile)
    return {"cfgfile": cfgfile, "outdir": outdir}


def test_chain_artifacts(chain):
    out = chain["outdir"]
    assert (out / "dataset" / "manifest.csv").exists()
    assert len(load_manifest(out / "dataset" / "manifest.csv")) == 24
    for name in ("train", "validation", "test"):
        assert (out / "split" / f"{name}.csv").exists()
    assert (out / "bundle" / "bundle.json").exists()
    assert (out / "bundle" / "branch_0012.w8").exists()
    assert (out / "bundle" / "branch_0008.w8").exists()
    assert (out / "eval" / "report.txt").exists()
    assert (out / "eval" / "report.json").exists()
    for slug in ("model_12", "model_8", "ensemble"):
        assert (out / "eval" / f"roc_{slug}.txt").exists()


def test_report_table_rows(chain):
    text = (chain["outdir"] / "eval" / "report.txt").read_text()
    lines = [l for l in text.splitlines() if l.strip()]
    assert lines[0].split() == ["Model", "AUC", "Sp", "(%)", "Se", "(%)", "Acc", "(%)"]
    assert any(l.startswith("Model 12 ") for l in lines)
    assert any(l.startswith("Model 8 ") for l in lines)
    assert any(l.startswith("Ensemble ") for l in lines)
    # every data row carries four numeric columns
    for line in lines[1:]:
        cols = line.split()
        assert len(cols[-4:]) == 4
        float(cols[-1])


def test_bundle_stores_cutoff(chain):
    manifest = json.loads((chain["outdir"] / "bundle" / "bundle.json").read_text())
    assert 0.0 <= manifest["cutoff"] <= 1.0
    assert manifest["seed"] == 5
    assert manifest["branch_sizes"] == [12, 8]
    assert manifest["metrics"]["cutoff_set"] == "validation"


def test_predict_output_contract(chain, capsys):
    out = chain["outdir"]
    entries = load_manifest(out / "dataset" / "manifest.csv")
    images = [str(out / "dataset" / e.path) for e in entries[:3]]
    assert cli.run(["predict", "--config", chain["cfgfile"], "--images"] + images) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3
    cutoff = json.loads((out / "bundle" / "bundle.json").read_text())["cutoff"]
    for line, path in zip(lines, images):
        m = re.fullmatch(rf"{re.escape(path)} score (\d\.\d{{6}}) class ([01])", line)
        assert m, line
        score, label = float(m.group(1)), int(m.group(2))
        assert 0.0 <= score <= 1.0
        assert label == (1 if score >= cutoff else 0)


def test_report_rerenders_stored_table(chain, capsys):
    out = chain["outdir"]
    assert cli.run(["report", "--results", str(out / "eval" / "report.json")]) == 0
    rendered = capsys.readouterr().out
    assert rendered == (out / "eval" / "report.txt").read_text()


def test_augment_preview(chain, tmp_path, capsys):
    out = chain["outdir"]
    entries = load_manifest(out / "dataset" / "manifest.csv")
    src = str(out / "dataset" / entries[0].path)
    dst = str(tmp_path / "preview.pgm")
    assert cli.run(["augment-preview", "--config", chain["cfgfile"],
                    "--image", src, "--save", dst]) == 0
    assert "flip=" in capsys.readouterr().out
    img = load_image(dst)
    orig = load_image(src)
    assert (img.width, img.height) == (orig.width, orig.height)


def test_eval_without_bundle_reports_missing_artifact(tmp_path):
    cfgfile = _write_config(tmp_path, tmp_path / "empty")
    os.makedirs(tmp_path / "empty", exist_ok=True)
    with pytest.raises(FileNotFoundError, match="missing"):
        cli.run(["eval", "--config", cfgfile])


def test_train_without_split_reports_missing_artifact(tmp_path):
    cfgfile = _write_config(tmp_path, tmp_path / "empty")
    with pytest.raises(FileNotFoundError, match="missing artifact: split"):
        cli.run(["train", "--config", cfgfile])


def test_unknown_override_key_rejected(tmp_path):
    cfgfile = _write_config(tmp_path, tmp_path / "run")
    with pytest.raises(KeyError, match="unknown configuration key"):
        cli.run(["synth", "--config", cfgfile, "--set", "synth.bogus=1"])


def test_main_reports_errors_on_stderr(tmp_path, capsys, monkeypatch):
    cfgfile = _write_config(tmp_path, tmp_path / "run")
    monkeypatch.setattr(sys, "argv",
                        ["ptxens", "eval", "--config", cfgfile])
    assert cli.main() == 1
    assert "error:" in capsys.readouterr().err


def test_override_beats_config_file(tmp_path):
    cfgfile = _write_config(tmp_path, tmp_path / "run")
    assert cli.run(["synth", "--config", cfgfile,
                    "--set", "synth.n_negative=3",
                    "--set", "synth.n_positive=2"]) == 0
    entries = load_manifest(tmp_path / "run" / "dataset" / "manifest.csv")
    assert len(entries) == 5
    assert [e.label for e in entries] == [0, 0, 0, 1, 1]


def test_chain_is_reproducible(chain, tmp_path):
    """Same config in a different directory yields byte-identical weights
    and reports (provenance differs: it hashes inputs by absolute path)."""
    cfgfile = _write_config(tmp_path, tmp_path / "run2")
    _run_chain(cfgfile)
    a, b = chain["outdir"], tmp_path / "run2"
    for name in ("bundle.json", "branch_0012.w8", "branch_0008.w8",
                 "history_0012.json", "history_0008.json"):
        assert (a / "bundle" / name).read_bytes() == (b / "bundle" / name).read_bytes()
    assert (a / "eval" / "report.txt").read_bytes() == (b / "eval" / "report.txt").read_bytes()
    assert (a / "eval" / "report.json").read_bytes() == (b / "eval" / "report.json").read_bytes()


def test_parallel_branch_training_matches_serial(chain, tmp_path):
    cfgfile = _write_config(tmp_path, tmp_path / "run3")
    assert cli.run(["synth", "--config", cfgfile]) == 0
    assert cli.run(["split", "--config", cfgfile]) == 0
    assert cli.run(["train", "--config", cfgfile, "--parallel-branches"]) == 0
    a, b = chain["outdir"], tmp_path / "run3"
    for name in ("branch_0012.w8", "branch_0008.w8"):
        assert (a / "bundle" / name).read_bytes() == (b / "bundle" / name).read_bytes()
