import json

import numpy as np
import pytest

from t20embed import cli, data
from t20embed.clustering import LabelScheme


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Synthetic dataset + labels shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    assert run_cli("synth", "--out", root / "data", "--players", "26",
                   "--venues", "8", "--innings", "160", "--venue-sd", "1.0",
                   "--seed", "5", "--pitch-vec", "--pitch-texts") == 0
    assert run_cli("labels", "--data", root / "data" / "dataset.jsonl",
                   "--out", root / "labels", "--seed", "5") == 0
    return root


def test_synth_outputs(workspace):
    ds_path = workspace / "data" / "dataset.jsonl"
    assert ds_path.exists()
    assert len(ds_path.read_text().splitlines()) == 160
    assert (workspace / "data" / "dataset.jsonl.truth.json").exists()
    assert (workspace / "data" / "pitch.vec").exists()
    assert (workspace / "data" / "pitch_texts.jsonl").exists()
    assert (workspace / "data" / "run_config.json").exists()


def test_synth_rejects_too_few_players(tmp_path, capsys):
    assert run_cli("synth", "--out", tmp_path / "x", "--players", "10") == 2
    assert "num_players" in capsys.readouterr().err


def test_synth_deterministic(tmp_path):
    for sub in ("a", "b"):
        assert run_cli("synth", "--out", tmp_path / sub, "--players", "24",
                       "--innings", "50", "--seed", "9") == 0
    a = (tmp_path / "a" / "dataset.jsonl").read_bytes()
    b = (tmp_path / "b" / "dataset.jsonl").read_bytes()
    assert a == b


def test_labels_outputs(workspace):
    doc = json.loads((workspace / "labels" / "labels.json").read_text())
    assert len(doc["centroids"]) == 4
    assert doc["centroids"] == sorted(doc["centroids"])
    assert "split_class" in doc["provenance"]
    assert [k for k, _ in doc["elbow"]["curve"]] == list(range(1, 9))
    assert (workspace / "labels" / "elbow.png").exists()
    assert (workspace / "labels" / "elbow.csv").read_text().startswith("k,dispersion")
    scheme = LabelScheme.from_dict(doc)
    assert scheme.class_centroids.shape == (4,)


def test_labels_missing_file(tmp_path, capsys):
    assert run_cli("labels", "--data", tmp_path / "nope.jsonl",
                   "--out", tmp_path / "out") == 2
    assert "nope.jsonl" in capsys.readouterr().err


def test_labels_deterministic(workspace, tmp_path):
    assert run_cli("labels", "--data", workspace / "data" / "dataset.jsonl",
                   "--out", tmp_path / "labels2", "--seed", "5") == 0
    assert (tmp_path / "labels2" / "labels.json").read_bytes() == \
        (workspace / "labels" / "labels.json").read_bytes()


@pytest.fixture(scope="module")
def trained(workspace, tmp_path_factory):
    root = tmp_path_factory.mktemp("trained")
    ds = workspace / "data" / "dataset.jsonl"
    labels = workspace / "labels" / "labels.json"
    assert run_cli("train-embed", "--data", ds, "--labels", labels,
                   "--out", root / "embed_ce", "--objective", "ce",
                   "--epochs", "3", "--seed", "1") == 0
    assert run_cli("train-embed", "--data", ds, "--labels", labels,
                   "--out", root / "embed_con", "--objective", "contrastive",
                   "--epochs", "3", "--seed", "1") == 0
    assert run_cli("train-predict", "--data", ds, "--labels", labels,
                   "--embed-model", root / "embed_ce" / "model.json",
                   "--out", root / "pred_ce", "--objective", "ce",
                   "--epochs", "3", "--seed", "1") == 0
    assert run_cli("train-predict", "--data", ds, "--labels", labels,
                   "--embed-model", root / "embed_con" / "model.json",
                   "--out", root / "pred_con", "--objective", "contrastive",
                   "--pitch", "on", "--pitch-file", workspace / "data" / "pitch.vec",
                   "--epochs", "3", "--seed", "1") == 0
    return root


def test_train_outputs(trained):
    for sub in ("embed_ce", "embed_con", "pred_ce", "pred_con"):
        assert (trained / sub / "model.json").exists()
        assert (trained / sub / "train_report.json").exists()
        assert (trained / sub / "loss_curve.png").exists()
        report = json.loads((trained / sub / "train_report.json").read_text())
        assert len(report["loss_curve"]) == 3
        assert "seconds" in report
    assert (trained / "embed_con" / "index.json").exists()
    assert (trained / "pred_con" / "index.json").exists()
    assert not (trained / "embed_ce" / "index.json").exists()


def test_train_predict_pitch_flag_consistency(workspace, trained, tmp_path, capsys):
    ds = workspace / "data" / "dataset.jsonl"
    labels = workspace / "labels" / "labels.json"
    assert run_cli("train-predict", "--data", ds, "--labels", labels,
                   "--embed-model", trained / "embed_ce" / "model.json",
                   "--out", tmp_path / "x", "--objective", "ce",
                   "--pitch", "on", "--epochs", "1") == 2
    assert "--pitch-file" in capsys.readouterr().err


def test_eval_logits_and_similarity(workspace, trained, tmp_path):
    ds = workspace / "data" / "dataset.jsonl"
    labels = workspace / "labels" / "labels.json"
    assert run_cli("eval", "--data", ds, "--labels", labels,
                   "--model", trained / "pred_ce" / "model.json",
                   "--out", tmp_path / "eval_ce", "--mode", "logits") == 0
    report = json.loads((tmp_path / "eval_ce" / "eval_report.json").read_text())
    assert sum(sum(row) for row in report["confusion"]) == 160
    assert report["ci95"][0] <= report["accuracy"] <= report["ci95"][1]
    assert (tmp_path / "eval_ce" / "confusion.png").exists()
    assert (tmp_path / "eval_ce" / "confusion.csv").exists()

    assert run_cli("eval", "--data", ds, "--labels", labels,
                   "--model", trained / "pred_con" / "model.json",
                   "--out", tmp_path / "eval_con", "--mode", "similarity",
                   "--index", trained / "pred_con" / "index.json", "--k", "3",
                   "--pitch-file", workspace / "data" / "pitch.vec") == 0


def test_eval_refuses_head_mode_mismatch(workspace, trained, tmp_path, capsys):
    ds = workspace / "data" / "dataset.jsonl"
    labels = workspace / "labels" / "labels.json"
    assert run_cli("eval", "--data", ds, "--labels", labels,
                   "--model", trained / "pred_ce" / "model.json",
                   "--out", tmp_path / "bad", "--mode", "similarity") == 2
    assert "representation" in capsys.readouterr().err


def test_predict_classifier_on_training_record(workspace, trained, tmp_path, capsys):
    ds = data.load_dataset(workspace / "data" / "dataset.jsonl")
    rec_path = tmp_path / "one.json"
    rec_path.write_text(json.dumps(ds.records[0].to_dict()))
    assert run_cli("predict", "--model", trained / "pred_ce" / "model.json",
                   "--labels", workspace / "labels" / "labels.json",
                   "--innings", rec_path) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["class_id"] in range(4)
    assert len(doc["evidence"]["logits"]) == 4


def test_predict_similarity_self_neighbor(workspace, trained, tmp_path, capsys):
    # a training record's own representation is its nearest neighbor
    ds = data.load_dataset(workspace / "data" / "dataset.jsonl")
    rec = ds.records[3]
    rec_path = tmp_path / "one.json"
    rec_path.write_text(json.dumps(rec.to_dict()))
    assert run_cli("predict", "--model", trained / "pred_con" / "model.json",
                   "--labels", workspace / "labels" / "labels.json",
                   "--innings", rec_path,
                   "--index", trained / "pred_con" / "index.json",
                   "--pitch-file", workspace / "data" / "pitch.vec") == 0
    doc = json.loads(capsys.readouterr().out)
    neighbor = doc["evidence"]["neighbors"][0]
    assert neighbor["record_id"] == rec.innings_id
    assert neighbor["distance"] < 1e-9
    assert doc["class_id"] == neighbor["class"]


def test_vectorize_pitch_fallback_round_trip(workspace, tmp_path):
    out = tmp_path / "pitch_hash.vec"
    assert run_cli("vectorize-pitch-fallback",
                   "--in", workspace / "data" / "pitch_texts.jsonl",
                   "--out", out, "--dim", "32") == 0
    pset = data.load_pitch_embeddings(out)
    assert pset.dim == 32
    truth = data.load_truth(workspace / "data" / "dataset.jsonl.truth.json")
    assert set(pset.vectors) == set(truth.pitch_ids)
    assert "# model=hash-fallback:32" in out.read_text()


def test_vectorize_fallback_rejects_duplicates(tmp_path, capsys):
    src = tmp_path / "texts.jsonl"
    src.write_text('{"pitch_text_id":"a","text":"dry pitch"}\n'
                   '{"pitch_text_id":"a","text":"green top"}\n')
    assert run_cli("vectorize-pitch-fallback", "--in", src,
                   "--out", tmp_path / "v.vec") == 2
    assert "duplicate" in capsys.readouterr().err


def test_config_file_defaults_and_flag_override(workspace, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"players": 24, "innings": 44, "seed": 3}))
    assert run_cli("synth", "--config", cfg, "--out", tmp_path / "c1") == 0
    assert len((tmp_path / "c1" / "dataset.jsonl").read_text().splitlines()) == 44
    # explicit flag beats the config file
    assert run_cli("synth", "--config", cfg, "--out", tmp_path / "c2",
                   "--innings", "46") == 0
    assert len((tmp_path / "c2" / "dataset.jsonl").read_text().splitlines()) == 46
    echo = json.loads((tmp_path / "c2" / "run_config.json").read_text())
    assert echo["players"] == 24 and echo["innings"] == 46


def test_experiment_smoke_four_settings(workspace, tmp_path):
    out = tmp_path / "exp"
    assert run_cli("experiment", "--data", workspace / "data" / "dataset.jsonl",
                   "--labels", workspace / "labels" / "labels.json",
                   "--pitch-file", workspace / "data" / "pitch.vec",
                   "--out", out, "--seeds", "0,1", "--embed-epochs", "2",
                   "--predict-epochs", "2", "--per-class", "5") == 0
    aggs = sorted(p.name for p in out.glob("aggregate_*.json"))
    assert aggs == ["aggregate_ce_pitch_off.json", "aggregate_ce_pitch_on.json",
                    "aggregate_contrastive_pitch_off.json",
                    "aggregate_contrastive_pitch_on.json"]
    summary = (out / "summary.csv").read_text().splitlines()
    assert summary[0] == "setting,seed,accuracy,ci_lo,ci_hi"
    assert len(summary) == 1 + 4 * 2
    assert (out / "accuracy_comparison.png").exists()
    report = json.loads(
        (out / "ce_pitch_off" / "seed_0" / "eval_report.json").read_text())
    assert report["setting"] == {"objective": "ce", "pitch": "off", "k": 1}


def test_numeric_failure_maps_to_exit_3(workspace, monkeypatch, capsys):
    from t20embed.errors import NumericError

    def explode(args):
        raise NumericError("non-finite loss at step 3")

    monkeypatch.setattr(cli, "cmd_labels", explode)
    assert run_cli("labels", "--data", workspace / "data" / "dataset.jsonl",
                   "--out", workspace / "never") == 3
    assert "non-finite loss" in capsys.readouterr().err


def test_train_embed_deterministic_outputs(workspace, tmp_path):
    ds = workspace / "data" / "dataset.jsonl"
    labels = workspace / "labels" / "labels.json"
    outs = []
    for sub in ("r1", "r2"):
        assert run_cli("train-embed", "--data", ds, "--labels", labels,
                       "--out", tmp_path / sub, "--objective", "contrastive",
                       "--epochs", "2", "--seed", "7") == 0
        outs.append(tmp_path / sub)
    assert (outs[0] / "model.json").read_bytes() == (outs[1] / "model.json").read_bytes()
    a = json.loads((outs[0] / "train_report.json").read_text())
    b = json.loads((outs[1] / "train_report.json").read_text())
    a["seconds"] = b["seconds"] = None  # wall time is the one permitted delta
    assert a == b
    assert (outs[0] / "index.json").read_bytes() == (outs[1] / "index.json").read_bytes()
