import json

import pytest

from vgsloc.cli import main

TINY = {
    "corpus": {"toy": {"V": 4, "n_train": 24, "n_dev": 8, "n_test": 10, "seed": 3}},
    "model": {"architecture": "CNN-Attend", "channels": [8, 8, 8, 8, 8, 16], "clf_hidden": 16, "seed": 0},
    "train": {"epochs": 2, "batch_size": 8, "kind": "bow", "seed": 0},
    "localisation": {"methods": ["attention", "gradcam", "masked_in", "masked_out"]},
}


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "tiny.json"
    p.write_text(json.dumps(TINY))
    return p


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "tiny.json").write_text(json.dumps(TINY))
    assert main(["run", "--config", str(d / "tiny.json"), "--out", str(d / "run")]) == 0
    return d / "run"


def test_run_writes_every_artifact(run_dir):
    for name in ("config.json", "manifest.sha256", "train_log.jsonl", "checkpoint.pt", "checkpoint.pt.json",
                 "scores.jsonl", "report.json", "report.csv", "plots/per_keyword_f1.png"):
        assert (run_dir / name).is_file(), name
    assert len((run_dir / "train_log.jsonl").read_text().splitlines()) == 2
    report = json.loads((run_dir / "report.json").read_text())
    assert sorted(report["localisation"]) == ["attention", "gradcam", "masked_in", "masked_out"]
    assert report["upper_bound_violations"] == []


def test_run_is_byte_identical(run_dir, config, tmp_path):
    assert main(["run", "--config", str(config), "--out", str(tmp_path / "again")]) == 0
    assert (tmp_path / "again" / "report.json").read_bytes() == (run_dir / "report.json").read_bytes()
    assert (tmp_path / "again" / "scores.jsonl").read_bytes() == (run_dir / "scores.jsonl").read_bytes()


def test_evaluate_reproduces_report(run_dir, tmp_path):
    corpus = run_dir / "corpus"
    rc = main(["evaluate", "--manifest", str(corpus / "manifest.jsonl"), "--vocab", str(corpus / "vocab.txt"),
               "--scores", str(run_dir / "scores.jsonl"), "--out", str(tmp_path)])
    assert rc == 0
    full = json.loads((run_dir / "report.json").read_text())
    again = json.loads((tmp_path / "report.json").read_text())
    for key in ("detection", "spotting", "localisation", "baselines"):
        assert again[key] == full[key]


def test_report_subcommand_rebuilds(run_dir, tmp_path):
    assert main(["report", "--run", str(run_dir), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "report.json").read_bytes() == (run_dir / "report.json").read_bytes()
    assert (tmp_path / "report.csv").read_bytes() == (run_dir / "report.csv").read_bytes()


def test_staged_pipeline_matches_run(run_dir, config, tmp_path):
    corpus = tmp_path / "corpus"
    assert main(["toygen", "--config", str(config), "--out", str(corpus)]) == 0
    assert (corpus / "manifest.jsonl").read_bytes() == (run_dir / "corpus" / "manifest.jsonl").read_bytes()
    m = ["--manifest", str(corpus / "manifest.jsonl"), "--vocab", str(corpus / "vocab.txt")]
    assert main(["train", "--config", str(config), "--out", str(tmp_path / "t"), *m]) == 0
    assert main(["localise", *m, "--checkpoint", str(tmp_path / "t" / "checkpoint.pt"),
                 "--methods", "attention", "--out", str(tmp_path / "s.jsonl")]) == 0
    assert main(["evaluate", *m, "--scores", str(tmp_path / "s.jsonl"), "--out", str(tmp_path / "e")]) == 0
    staged = json.loads((tmp_path / "e" / "report.json").read_text())
    full = json.loads((run_dir / "report.json").read_text())
    assert staged["detection"] == full["detection"]
    assert staged["localisation"]["attention"] == full["localisation"]["attention"]


def test_set_override(config, tmp_path):
    out = tmp_path / "r"
    rc = main(["run", "--config", str(config), "--out", str(out), "--methods", "attention",
               "--set", "train.epochs=1", "--set", "eval.theta=0.4"])
    assert rc == 0
    saved = json.loads((out / "config.json").read_text())
    assert saved["train"]["epochs"] == 1 and saved["eval"]["theta"] == 0.4
    assert json.loads((out / "report.json").read_text())["theta"] == 0.4


def test_kappa_subcommand(tmp_path, capsys):
    for lang in ("en", "yo"):
        assert main(["toygen", "--out", str(tmp_path / lang), "--language", lang, "--seed", "2"]) == 0
    rc = main(["kappa", "--manifest-a", str(tmp_path / "en" / "manifest.jsonl"),
               "--vocab-a", str(tmp_path / "en" / "vocab.txt"),
               "--manifest-b", str(tmp_path / "yo" / "manifest.jsonl"),
               "--vocab-b", str(tmp_path / "yo" / "vocab.txt"), "--pair-by-order", "--out", str(tmp_path / "k")])
    assert rc == 0
    payload = json.loads((tmp_path / "k" / "kappa.json").read_text())
    assert all(abs(payload["matrix"][i][i] - 1.0) < 1e-12 for i in range(len(payload["rows"])))
    assert (tmp_path / "k" / "kappa.png").is_file()


def test_missing_config_exits_1(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 1
    assert "error: [run]" in capsys.readouterr().err


def test_unknown_method_exits_1(config, tmp_path, capsys):
    assert main(["run", "--config", str(config), "--out", str(tmp_path), "--methods", "saliency"]) == 1
    assert "saliency" in capsys.readouterr().err


def test_inapplicable_method_is_stage_tagged(config, tmp_path, capsys):
    rc = main(["run", "--config", str(config), "--out", str(tmp_path), "--methods", "attention",
               "--set", 'model={"architecture": "PSC", "seed": 0}'])
    assert rc == 2
    assert "[localise]" in capsys.readouterr().err


def test_corrupt_feature_is_stage_tagged(run_dir, config, tmp_path, capsys):
    corpus = tmp_path / "c"
    main(["toygen", "--config", str(config), "--out", str(corpus)])
    victim = sorted((corpus / "features").glob("*-train-*.feat"))[0]
    victim.write_bytes(victim.read_bytes()[:20])
    rc = main(["train", "--config", str(config), "--out", str(tmp_path / "t"),
               "--manifest", str(corpus / "manifest.jsonl"), "--vocab", str(corpus / "vocab.txt")])
    err = capsys.readouterr().err
    assert rc != 0 and victim.stem in err
