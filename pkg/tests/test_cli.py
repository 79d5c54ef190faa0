import hashlib
import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from ehrseq.cli import main
from ehrseq.vq import Codebook


@pytest.fixture()
def runner():
    return CliRunner()


def dir_digest(path):
    parts = []
    for p in sorted(Path(path).rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            parts.append(p.name.encode() + p.read_bytes())
    return hashlib.sha256(b"".join(parts)).hexdigest()


def test_gen_is_deterministic(runner, tmp_path):
    for sub in ("a", "b"):
        result = runner.invoke(main, ["gen", "--seed", "7", "--n-patients", "8",
                                      "--out", str(tmp_path / sub)])
        assert result.exit_code == 0, result.output
    assert dir_digest(tmp_path / "a") == dir_digest(tmp_path / "b")
    assert (tmp_path / "a" / "manifest.json").exists()


def test_gen_seed_changes_output(runner, tmp_path):
    for seed, sub in ((1, "a"), (2, "b")):
        runner.invoke(main, ["gen", "--seed", str(seed), "--n-patients", "8",
                             "--out", str(tmp_path / sub)])
    assert dir_digest(tmp_path / "a") != dir_digest(tmp_path / "b")


def test_gen_missing_config_fails(runner, tmp_path):
    result = runner.invoke(main, ["gen", "--config", str(tmp_path / "nope.json"),
                                  "--out", str(tmp_path / "out")])
    assert result.exit_code == 1


def test_load_reports_counts(runner, tmp_path):
    runner.invoke(main, ["gen", "--seed", "3", "--n-patients", "6",
                         "--out", str(tmp_path / "corpus")])
    result = runner.invoke(main, ["load", "--in", str(tmp_path / "corpus")])
    assert result.exit_code == 0
    assert "6 patients" in result.output and "3 tables" in result.output


def test_load_missing_dir_fails(runner, tmp_path):
    result = runner.invoke(main, ["load", "--in", str(tmp_path / "missing")])
    assert result.exit_code == 1
    assert "error" in result.output


def serialize_corpus(runner, tmp_path, sub="streams", seed="5"):
    corpus_dir = tmp_path / f"corpus_{sub}"
    runner.invoke(main, ["gen", "--seed", seed, "--n-patients", "6",
                         "--out", str(corpus_dir)])
    out = tmp_path / sub
    result = runner.invoke(main, ["serialize", "--in", str(corpus_dir),
                                  "--out", str(out)])
    assert result.exit_code == 0, result.output
    return corpus_dir, out


def test_serialize_writes_streams_and_vocab(runner, tmp_path):
    _, out = serialize_corpus(runner, tmp_path)
    for name in ("vocab.txt", "streams_hier.jsonl", "streams_flat.jsonl",
                 "manifest.json"):
        assert (out / name).exists()
    assert len((out / "streams_flat.jsonl").read_text().splitlines()) == 6


def test_audit_of_own_serialization_is_perfect(runner, tmp_path):
    corpus_dir, out = serialize_corpus(runner, tmp_path)
    report_dir = tmp_path / "audit"
    result = runner.invoke(main, [
        "audit", "--real", str(corpus_dir),
        "--generated", str(out / "streams_hier.jsonl"),
        "--vocab", str(out / "vocab.txt"), "--out", str(report_dir)])
    assert result.exit_code == 0, result.output
    report = json.loads((report_dir / "audit_report.json").read_text())
    assert report["rce"] == 1.0 and report["rue"] == 1.0 and report["rcs"] == 1.0


def test_plan_prints_golden_layers(runner, tmp_path):
    result = runner.invoke(main, ["plan", "--backbone", "cnn",
                                  "--input", "8192x256", "--output", "64x8",
                                  "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    lines = result.output.splitlines()
    assert lines[0] == "layer 1: Lnd -> (4096,128)"
    assert lines[4] == "layer 5: Ln -> (256,16)"
    assert lines[6] == "layer 7: Ln -> (64,8)"
    assert (tmp_path / "plan.json").exists()
    assert (tmp_path / "analysis.json").exists()


def test_plan_rejects_expansion(runner, tmp_path):
    result = runner.invoke(main, ["plan", "--input", "64x8", "--output", "128x8",
                                  "--out", str(tmp_path)])
    assert result.exit_code == 1


def test_plan_grid_sweep(runner, tmp_path):
    result = runner.invoke(main, ["plan", "--grid", "256:1024",
                                  "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    lines = (tmp_path / "grid.tsv").read_text().splitlines()
    assert lines[0] == "l\tt\tc\tbackbone\trate\tparams\tflops"
    # three l values (256, 512, 1024), five latents each
    assert len(lines) == 1 + 15


def test_analyze_existing_plan(runner, tmp_path):
    runner.invoke(main, ["plan", "--input", "8192x256", "--output", "64x8",
                         "--out", str(tmp_path)])
    result = runner.invoke(main, ["analyze", "--plan", str(tmp_path / "plan.json")])
    assert result.exit_code == 0
    report = json.loads(result.output)
    assert report["params"] > 0 and len(report["trace"]) == 7


def test_quantize_roundtrip(runner, tmp_path):
    book = Codebook.new(np.asarray([[0.0, 0.0], [1.0, 1.0]]))
    book.save(tmp_path / "codebook.json")
    (tmp_path / "latent.json").write_text(json.dumps([[0.9, 0.8] * 4]))
    out = tmp_path / "quantized.json"
    result = runner.invoke(main, ["quantize", "--latent", str(tmp_path / "latent.json"),
                                  "--codebook", str(tmp_path / "codebook.json"),
                                  "--beta", "0.25", "--out", str(out)])
    assert result.exit_code == 0, result.output
    doc = json.loads(out.read_text())
    assert doc["indices"] == [[1, 1, 1, 1]]
    assert doc["commitment_term"] == pytest.approx(0.25 * doc["commitment_distance"])


def test_quantize_rejects_bad_width(runner, tmp_path):
    book = Codebook.new(np.zeros((2, 2)))
    book.save(tmp_path / "codebook.json")
    (tmp_path / "latent.json").write_text(json.dumps([[0.0] * 6]))
    result = runner.invoke(main, ["quantize", "--latent", str(tmp_path / "latent.json"),
                                  "--codebook", str(tmp_path / "codebook.json"),
                                  "--out", str(tmp_path / "q.json")])
    assert result.exit_code == 1


def test_privacy_disjoint_pools(runner, tmp_path):
    _, train = serialize_corpus(runner, tmp_path, "train", seed="1")
    _, heldout = serialize_corpus(runner, tmp_path, "heldout", seed="2")
    _, synth = serialize_corpus(runner, tmp_path, "synth", seed="3")
    out = tmp_path / "privacy"
    result = runner.invoke(main, [
        "privacy", "--train", str(train / "streams_flat.jsonl"),
        "--heldout", str(heldout / "streams_flat.jsonl"),
        "--synthetic", str(synth / "streams_flat.jsonl"),
        "--nr", "4", "--thresholds", "0,0.5,1.0", "--out", str(out)])
    assert result.exit_code == 0, result.output
    lines = (out / "privacy_curve.tsv").read_text().splitlines()
    assert lines[0] == "threshold\tprecision\trecall"
    assert len(lines) == 4
    first = lines[1].split("\t")
    assert first[0] == "0.0" and first[2] == "0.0"
    last = lines[3].split("\t")
    assert last[1] == "0.5" and last[2] == "1.0"


def test_privacy_copied_synthetic_detected(runner, tmp_path):
    _, train = serialize_corpus(runner, tmp_path, "train", seed="1")
    _, heldout = serialize_corpus(runner, tmp_path, "heldout", seed="2")
    out = tmp_path / "privacy"
    result = runner.invoke(main, [
        "privacy", "--train", str(train / "streams_flat.jsonl"),
        "--heldout", str(heldout / "streams_flat.jsonl"),
        "--synthetic", str(train / "streams_flat.jsonl"),
        "--nr", "4", "--thresholds", "0", "--out", str(out)])
    assert result.exit_code == 0, result.output
    report = json.loads((out / "privacy_report.json").read_text())
    assert report["results"][0]["recall"] == 1.0
    assert report["results"][0]["precision"] == 1.0


def test_metrics_accuracy_and_auroc(runner, tmp_path):
    _, out = serialize_corpus(runner, tmp_path)
    scores = tmp_path / "scores.tsv"
    scores.write_text("0.1\t0\n0.4\t0\n0.35\t1\n0.8\t1\n")
    result = runner.invoke(main, [
        "metrics", "--reference", str(out / "streams_flat.jsonl"),
        "--hypothesis", str(out / "streams_flat.jsonl"),
        "--scores", str(scores)])
    assert result.exit_code == 0, result.output
    assert "token_accuracy\t1.0" in result.output
    assert "auroc\t0.75" in result.output


def test_metrics_without_inputs_fails(runner):
    result = CliRunner().invoke(main, ["metrics"])
    assert result.exit_code == 1


def test_manifest_contents(runner, tmp_path):
    out = tmp_path / "corpus"
    runner.invoke(main, ["gen", "--seed", "7", "--n-patients", "4", "--out", str(out)])
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "gen"
    assert manifest["seed"] == 7
    assert manifest["outputs"] and all(isinstance(p, str) for p in manifest["outputs"])
