"""End-to-end experiment pipeline: data, training, localisation, evaluation, reports."""

from __future__ import annotations

import copy
import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import CorpusManifest, load_manifest, load_vocabulary
from .errors import StageError, VGSError
from .localise import METHODS, MaskConfig, applicable_methods, localise_utterance
from .metrics import GroundTruth, ScoreTable, evaluate, upper_bound_violations
from .model import ModelConfig, build_model, forward_batch
from .toygen import ToyConfig, generate_toy_corpus
from .train import TrainConfig, load_record_features, save_checkpoint, train, warm_start

log = logging.getLogger(__name__)


@dataclass
class ExperimentConfig:
    corpus: dict
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    localisation: dict = field(default_factory=lambda: {"methods": ["attention"]})
    eval: dict = field(default_factory=lambda: {"theta": 0.5})
    out: str = "runs/experiment"
    warm_start: dict | None = None
    name: str = ""

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise VGSError(f"unknown experiment config keys: {sorted(unknown)}")
        if "corpus" not in d:
            raise VGSError("experiment config needs a 'corpus' section")
        return cls(**copy.deepcopy(d))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return {k: copy.deepcopy(getattr(self, k)) for k in self.__dataclass_fields__}

    @property
    def methods(self) -> list[str]:
        return list(self.localisation.get("methods", []))

    @property
    def theta(self) -> float:
        return float(self.eval.get("theta", 0.5))

    def validate(self):
        if "toy" not in self.corpus and "manifest" not in self.corpus:
            raise VGSError("corpus section needs either 'toy' or 'manifest'")
        if not self.methods:
            raise VGSError("localisation.methods must be non-empty")
        for m in self.methods:
            if m not in METHODS:
                raise VGSError(f"unknown localisation method {m!r}")
        if not 0.0 < self.theta < 1.0:
            raise VGSError("eval.theta must lie in (0, 1)")
        for key in ("manifest", "vocabulary"):
            if key in self.corpus and not Path(self.corpus[key]).exists():
                raise VGSError(f"corpus.{key} path {self.corpus[key]} does not exist")
        if self.warm_start and not Path(self.warm_start["checkpoint"]).exists():
            raise VGSError(f"warm-start checkpoint {self.warm_start['checkpoint']} does not exist")


def prepare_corpus(cfg: ExperimentConfig, out: Path) -> CorpusManifest:
    if "toy" in cfg.corpus:
        return generate_toy_corpus(ToyConfig.from_dict(cfg.corpus["toy"]), out / "corpus")
    vocab = load_vocabulary(cfg.corpus["vocabulary"], cfg.corpus.get("query_language", "en"))
    return load_manifest(cfg.corpus["manifest"], vocab, require_test_alignments=True,
                         tier_name=cfg.corpus.get("tier", "words"))


def dump_scores(model, manifest: CorpusManifest, methods, path, split: str = "test",
                mcfg: MaskConfig = MaskConfig()):
    """Write one JSON line per (utterance, keyword, method) with the full score track."""
    vocab = manifest.vocabulary
    records = manifest.split(split)
    feats = []
    for rec in records:
        try:
            feats.append(load_record_features(rec))
        except Exception as exc:
            raise StageError("localise", str(exc), rec.id) from exc
    traces = forward_batch(model, feats)
    with open(path, "w", encoding="utf-8") as fh:
        for rec, f, trace in zip(records, feats, traces):
            try:
                _, locs = localise_utterance(model, f, methods, trace, mcfg)
            except VGSError as exc:
                raise StageError("localise", str(exc), rec.id) from exc
            for method in methods:
                for w, loc in enumerate(locs[method]):
                    row = {
                        "utt_id": rec.id,
                        "keyword": vocab.keywords[w],
                        "method": method,
                        "detection_score": float(trace.y_hat[w]),
                        "scores": [float(s) for s in loc.scores],
                        "times_s": [float(t) for t in loc.times],
                        "duration_s": f.duration_s,
                    }
                    fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_score_dump(path, utt_ids=None, keywords=None):
    """Rebuild a ScoreTable (and per-utterance durations) from a score dump."""
    rows = [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
    if utt_ids is None:
        utt_ids = list(dict.fromkeys(r["utt_id"] for r in rows))
    if keywords is None:
        keywords = list(dict.fromkeys(r["keyword"] for r in rows))
    u_idx = {u: i for i, u in enumerate(utt_ids)}
    k_idx = {k: i for i, k in enumerate(keywords)}
    U, V = len(utt_ids), len(keywords)
    det = np.full((U, V), np.nan)
    taus = {}
    durations = np.full(U, np.nan)
    for r in rows:
        u, w = u_idx[r["utt_id"]], k_idx[r["keyword"]]
        det[u, w] = r["detection_score"]
        if "duration_s" in r:
            durations[u] = r["duration_s"]
        t = taus.setdefault(r["method"], np.full((U, V), np.nan))
        scores = np.asarray(r["scores"], dtype=np.float64)
        t[u, w] = r["times_s"][int(np.argmax(scores))]
    return ScoreTable(list(utt_ids), list(keywords), det, taus), durations


def evaluate_dump(scores_path, manifest: CorpusManifest, theta: float = 0.5, split: str = "test") -> dict:
    records = manifest.split(split)
    table, durations = read_score_dump(scores_path, [r.id for r in records], list(manifest.vocabulary.keywords))
    gt = GroundTruth.from_records(records, manifest.vocabulary, None if np.isnan(durations).any() else durations)
    return evaluate(table, gt, theta)


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return None if not np.isfinite(obj) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_report(report: dict, out: Path):
    (out / "report.json").write_text(json.dumps(_clean(report), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    with open(out / "report.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["keyword", "metric", "value", "support"])
        for row in report["detection"]["per_keyword"]:
            for m in ("precision", "recall", "f1"):
                wr.writerow([row["keyword"], f"detection_{m}", _fmt(row[m]), row["support"]])
        for row in report["spotting"]["per_keyword"]:
            for m in ("p_at_10", "p_at_n", "eer"):
                wr.writerow([row["keyword"], f"spotting_{m}", _fmt(row[m]), row["n"]])
        for method, loc in sorted(report["localisation"].items()):
            for row in loc["oracle"]["per_keyword"]:
                wr.writerow([row["keyword"], f"{method}_oracle_accuracy", _fmt(row["accuracy"]), row["support"]])
            for row in loc["actual"]["per_keyword"]:
                for m in ("precision", "recall", "f1"):
                    wr.writerow([row["keyword"], f"{method}_actual_{m}", _fmt(row[m]), row["support"]])
            for row in loc["spotting"]["per_keyword"]:
                wr.writerow([row["keyword"], f"{method}_spotting_p_at_10", _fmt(row["p_at_10"]), row["n"]])


def _fmt(v):
    return "" if v is None else repr(float(v))


def run_manifest(out: Path) -> CorpusManifest:
    """Re-open the corpus an experiment directory was run on."""
    cfg = ExperimentConfig.load(out / "config.json")
    if "toy" in cfg.corpus:
        toy = ToyConfig.from_dict(cfg.corpus["toy"])
        vocab = load_vocabulary(out / "corpus" / "vocab.txt", toy.query_language)
        return load_manifest(out / "corpus" / "manifest.jsonl", vocab)
    vocab = load_vocabulary(cfg.corpus["vocabulary"], cfg.corpus.get("query_language", "en"))
    return load_manifest(cfg.corpus["manifest"], vocab, tier_name=cfg.corpus.get("tier", "words"))


def build_report(out: Path, manifest: CorpusManifest | None = None) -> dict:
    """EvalReport for a run directory, computed from its score dump and checkpoint sidecar only."""
    out = Path(out)
    cfg = ExperimentConfig.load(out / "config.json")
    manifest = manifest or run_manifest(out)
    report = evaluate_dump(out / "scores.jsonl", manifest, cfg.theta)
    meta = json.loads((out / "checkpoint.pt.json").read_text())
    report["model"] = {"architecture": meta["architecture"], "best_epoch": meta["epoch"],
                       "best_dev_f1": meta["dev_f1"], "supervision": cfg.train.get("kind", "bow")}
    report["upper_bound_violations"] = upper_bound_violations(report)
    return _clean(report)


def run_experiment(cfg: ExperimentConfig, *, keep_model: bool = False) -> dict:
    """Run every stage and write all artifacts to ``cfg.out``. Returns the report."""
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")

    try:
        manifest = prepare_corpus(cfg, out)
    except StageError:
        raise
    except Exception as exc:
        raise StageError("corpus", str(exc)) from exc
    (out / "manifest.sha256").write_text(manifest.digest() + "\n")
    vocab = manifest.vocabulary

    try:
        first = next(iter(manifest.split("train")), None) or manifest.records[0]
        F = load_record_features(first).F
        mcfg = ModelConfig.from_dict({**cfg.model, "V": len(vocab), "F": F})
        model = build_model(mcfg)
        if cfg.warm_start:
            warm_start(model, cfg.warm_start["checkpoint"], cfg.warm_start.get("mode", "all"), vocab)
    except Exception as exc:
        raise StageError("model", str(exc)) from exc

    methods = cfg.methods
    bad = [m for m in methods if m not in applicable_methods(mcfg.architecture)]
    if bad:
        raise StageError("localise", f"methods {bad} do not apply to {mcfg.architecture}")

    tcfg = TrainConfig(**cfg.train)
    try:
        result = train(model, manifest, tcfg, log_path=out / "train_log.jsonl")
    except StageError:
        raise
    except Exception as exc:
        raise StageError("train", str(exc)) from exc
    save_checkpoint(out / "checkpoint.pt", result.model, vocab, epoch=result.best_epoch,
                    dev_f1=result.best_dev_f1, train_seed=tcfg.seed)

    mask_cfg = MaskConfig(**cfg.localisation.get("mask", {}))
    dump_scores(result.model, manifest, methods, out / "scores.jsonl", mcfg=mask_cfg)
    try:
        report = build_report(out, manifest)
    except Exception as exc:
        raise StageError("evaluate", str(exc)) from exc
    write_report(report, out)

    try:
        from .plots import plot_per_keyword_f1, plot_score_tracks

        plot_per_keyword_f1(report, out / "plots" / "per_keyword_f1.png")
        plot_score_tracks(out / "scores.jsonl", manifest, out / "plots", n_utterances=3)
    except Exception as exc:
        raise StageError("report", str(exc)) from exc
    if keep_model:
        report = dict(report, _model=result.model, _log=result.log)
    return report
