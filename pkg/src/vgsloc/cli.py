"""Command-line entry point: ``vgsloc <subcommand> ...``.

Every stage can run on its own from files written by an earlier stage, or
all at once with ``run``. Failures exit non-zero with a stage-tagged message.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import StageError, VGSError

log = logging.getLogger("vgsloc")


def _load_manifest(args):
    from .corpus import load_manifest, load_vocabulary

    vocab = load_vocabulary(args.vocab, args.query_language)
    return load_manifest(args.manifest, vocab, tier_name=args.tier)


def _add_manifest_args(p):
    p.add_argument("--manifest", required=True, help="JSON Lines manifest")
    p.add_argument("--vocab", required=True, help="keyword list, one per line")
    p.add_argument("--query-language", default="en")
    p.add_argument("--tier", default="words", help="TextGrid tier holding word alignments")


def cmd_toygen(args):
    from .toygen import ToyConfig, generate_toy_corpus

    d = json.loads(Path(args.config).read_text()) if args.config else {}
    d = d.get("corpus", {}).get("toy", d)
    if args.seed is not None:
        d["seed"] = args.seed
    if args.language:
        d["language"] = args.language
    m = generate_toy_corpus(ToyConfig.from_dict(d), args.out)
    print(json.dumps(m.split_sizes()))


def cmd_featurize(args):
    from .corpus import save_manifest
    from .features import compute_mfcc, read_wav, resample, write_features

    m = _load_manifest(args)
    out = Path(args.out)
    (out / "features").mkdir(parents=True, exist_ok=True)
    for rec in m.records:
        if rec.audio is None:
            continue
        try:
            wav, rate = read_wav(rec.audio)
            f = compute_mfcc(resample(wav, rate))
        except Exception as exc:
            raise StageError("featurize", str(exc), rec.id) from exc
        path = out / "features" / f"{rec.id}.feat"
        write_features(path, f)
        rec.audio, rec.features = None, str(path.resolve())
    save_manifest(m, out / "manifest.jsonl", out / "vocab.txt")


def _experiment_config(args):
    from .experiment import ExperimentConfig

    cfg = ExperimentConfig.load(args.config)
    if getattr(args, "out", None):
        cfg.out = args.out
    if getattr(args, "seed", None) is not None:
        cfg.train["seed"] = args.seed
        cfg.model["seed"] = args.seed
    if getattr(args, "theta", None) is not None:
        cfg.eval["theta"] = args.theta
    if getattr(args, "methods", None):
        cfg.localisation["methods"] = args.methods.split(",")
    if getattr(args, "warm_start", None):
        cfg.warm_start = {"checkpoint": args.warm_start, "mode": args.warm_mode}
    for item in getattr(args, "set", None) or []:
        key, _, value = item.partition("=")
        node = cfg.__dict__
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = json.loads(value)
    return cfg


def cmd_train(args):
    from .experiment import prepare_corpus
    from .model import ModelConfig, build_model
    from .train import TrainConfig, load_record_features, save_checkpoint, train, warm_start

    cfg = _experiment_config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.manifest:
        m = _load_manifest(args)
    else:
        m = prepare_corpus(cfg, out)
    F = load_record_features(m.records[0]).F
    model = build_model(ModelConfig.from_dict({**cfg.model, "V": len(m.vocabulary), "F": F}))
    if cfg.warm_start:
        warm_start(model, cfg.warm_start["checkpoint"], cfg.warm_start.get("mode", "all"), m.vocabulary)
    tcfg = TrainConfig(**cfg.train)
    res = train(model, m, tcfg, log_path=out / "train_log.jsonl")
    save_checkpoint(out / "checkpoint.pt", res.model, m.vocabulary, epoch=res.best_epoch,
                    dev_f1=res.best_dev_f1, train_seed=tcfg.seed)
    print(json.dumps({"best_epoch": res.best_epoch, "best_dev_f1": res.best_dev_f1}))


def cmd_localise(args):
    from .experiment import dump_scores
    from .localise import MaskConfig
    from .train import load_checkpoint

    m = _load_manifest(args)
    model, _ = load_checkpoint(args.checkpoint)
    dump_scores(model, m, args.methods.split(","), args.out, split=args.split, mcfg=MaskConfig())


def cmd_evaluate(args):
    from .experiment import evaluate_dump, write_report

    m = _load_manifest(args)
    report = evaluate_dump(args.scores, m, args.theta, args.split)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report(report, out)
    agg = report["detection"]["aggregate"]
    print(json.dumps({"detection_f1": agg["f1"], "methods": sorted(report["localisation"])}))


def cmd_kappa(args):
    from .corpus import load_manifest, load_vocabulary
    from .kappa import cooccurrence_matrix, presence_table
    from .plots import plot_kappa_matrix

    va = load_vocabulary(args.vocab_a, args.language_a)
    vb = load_vocabulary(args.vocab_b, args.language_b)
    ma = load_manifest(args.manifest_a, va)
    mb = load_manifest(args.manifest_b, vb)
    ra = ma.split(args.split) if args.split else ma.records
    rb = mb.split(args.split) if args.split else mb.records
    ids_a = [r.id for r in ra]
    ids_b = [r.id for r in rb]
    if args.pair_by_order:
        if len(ra) != len(rb):
            raise VGSError("pairing by order needs equally many records")
        ids_b = ids_a
    res = cooccurrence_matrix(presence_table(ra, va), ids_a, presence_table(rb, vb), ids_b)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    K = res["matrix"]
    payload = {
        "rows": list(va.keywords),
        "cols": list(vb.keywords),
        "matrix": [[None if x != x else float(x) for x in row] for row in K],
        "stats": res["stats"],
    }
    (out / "kappa.json").write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    plot_kappa_matrix(K, va.keywords, vb.keywords, out / "kappa.png")
    print(json.dumps(res["stats"]))


def cmd_report(args):
    from .experiment import build_report, run_manifest, write_report
    from .plots import plot_per_keyword_f1, plot_score_tracks

    run_dir = Path(args.run)
    manifest = run_manifest(run_dir)
    report = build_report(run_dir, manifest)
    out = Path(args.out) if args.out else run_dir
    out.mkdir(parents=True, exist_ok=True)
    write_report(report, out)
    plot_per_keyword_f1(report, out / "plots" / "per_keyword_f1.png")
    plot_score_tracks(run_dir / "scores.jsonl", manifest, out / "plots")


def cmd_run(args):
    from .experiment import run_experiment

    report = run_experiment(_experiment_config(args))
    summary = {"detection_f1": report["detection"]["aggregate"]["f1"]}
    for method, loc in report["localisation"].items():
        summary[f"{method}_oracle"] = loc["oracle"]["accuracy"]
        summary[f"{method}_actual_f1"] = loc["actual"]["aggregate"]["f1"]
    print(json.dumps(summary))


def _add_experiment_flags(p):
    p.add_argument("--config", required=True, help="experiment JSON config")
    p.add_argument("--out", help="output directory (overrides config 'out')")
    p.add_argument("--seed", type=int, help="model and training seed")
    p.add_argument("--theta", type=float, help="detection threshold")
    p.add_argument("--methods", help="comma-separated localisation methods")
    p.add_argument("--warm-start", help="checkpoint to initialise from")
    p.add_argument("--warm-mode", default="all", choices=("all", "encoder_only"))
    p.add_argument("--set", action="append", metavar="KEY=JSON", help="override a config key, e.g. train.epochs=10")


def build_parser():
    parser = argparse.ArgumentParser(prog="vgsloc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("toygen", help="generate a synthetic corpus")
    p.add_argument("--config", help="toy config JSON (or an experiment config)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--language")
    p.set_defaults(func=cmd_toygen)

    p = sub.add_parser("featurize", help="compute MFCC feature files for audio records")
    _add_manifest_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train a model")
    _add_experiment_flags(p)
    p.add_argument("--manifest", help="train on this manifest instead of the config corpus")
    p.add_argument("--vocab")
    p.add_argument("--query-language", default="en")
    p.add_argument("--tier", default="words")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("localise", help="dump localisation score tracks")
    _add_manifest_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--methods", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True, help="score dump (JSON Lines)")
    p.set_defaults(func=cmd_localise)

    p = sub.add_parser("evaluate", help="evaluate a score dump")
    _add_manifest_args(p)
    p.add_argument("--scores", required=True)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True, help="directory for report.json / report.csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("kappa", help="cross-lingual keyword co-occurrence (normalised kappa)")
    p.add_argument("--manifest-a", required=True)
    p.add_argument("--vocab-a", required=True)
    p.add_argument("--language-a", default="en")
    p.add_argument("--manifest-b", required=True)
    p.add_argument("--vocab-b", required=True)
    p.add_argument("--language-b", default="yo")
    p.add_argument("--split", default="test")
    p.add_argument("--pair-by-order", action="store_true", help="pair records by position instead of id")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_kappa)

    p = sub.add_parser("report", help="rebuild report and plots from a run directory")
    p.add_argument("--run", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="full pipeline from a config")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (VGSError, OSError, json.JSONDecodeError) as exc:
        print(f"error: [{args.command}] {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
