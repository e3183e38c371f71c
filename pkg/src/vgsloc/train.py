"""Training against visual or bag-of-words targets with dev-set model selection."""

from __future__ import annotations

import copy
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .corpus import CorpusManifest, UtteranceRecord, Vocabulary
from .errors import CheckpointError, SupervisionError, VGSError
from .features import AugmentConfig, FeatureSequence, compute_mfcc, read_features, read_wav, resample, spec_augment
from .metrics import eval_detection
from .model import ModelConfig, VGSModel, build_model, collate, forward_batch
from .supervision import targets_for

log = logging.getLogger(__name__)

EPS = 1e-7


@dataclass
class TrainConfig:
    lr: float = 1e-4
    epochs: int = 100
    batch_size: int = 32
    kind: str = "bow"
    theta: float = 0.5
    seed: int = 0
    augment: AugmentConfig | None = field(default_factory=AugmentConfig)

    def __post_init__(self):
        if not self.lr > 0:
            raise VGSError("learning rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise VGSError("epochs and batch_size must be >= 1")
        if self.kind not in ("bow", "visual"):
            raise VGSError(f"unknown supervision kind {self.kind!r}")
        if isinstance(self.augment, dict):
            self.augment = AugmentConfig(**self.augment)

    def to_dict(self):
        return asdict(self)


def bce_loss(y_hat, y) -> float:
    """Binary cross-entropy averaged over keywords; predictions clamped to [eps, 1 - eps]."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(getattr(y, "probs", y), dtype=np.float64)
    if y_hat.shape != y.shape:
        raise ValueError(f"length mismatch: {y_hat.shape} vs {y.shape}")
    p = np.clip(y_hat, EPS, 1 - EPS)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def load_record_features(rec: UtteranceRecord) -> FeatureSequence:
    if rec.features is not None:
        return read_features(rec.features)
    wav, rate = read_wav(rec.audio)
    return compute_mfcc(resample(wav, rate))


@dataclass
class Example:
    id: str
    features: FeatureSequence
    target: np.ndarray | None
    present: np.ndarray  # V bool


def load_split(manifest: CorpusManifest, split: str, kind: str | None = None) -> list[Example]:
    vocab = manifest.vocabulary
    out = []
    for rec in manifest.split(split):
        target = None if kind is None else targets_for(rec, vocab, kind).probs
        present = np.zeros(len(vocab), dtype=bool)
        present[sorted(rec.present_keywords(vocab))] = True
        out.append(Example(rec.id, load_record_features(rec), target, present))
    return out


def dev_f1(model: VGSModel, examples: list[Example], theta: float) -> float:
    if not examples:
        return float("nan")
    traces = forward_batch(model, [e.features for e in examples])
    scores = np.stack([t.y_hat for t in traces])
    refs = np.stack([e.present for e in examples])
    f1 = eval_detection(scores, refs, theta)["aggregate"]["f1"]
    return 0.0 if f1 is None else float(f1)


@dataclass
class TrainResult:
    model: VGSModel
    best_epoch: int
    best_dev_f1: float
    log: list[dict]


def train(
    model: VGSModel,
    corpus: CorpusManifest,
    cfg: TrainConfig,
    *,
    log_path=None,
    train_examples: list[Example] | None = None,
    dev_examples: list[Example] | None = None,
) -> TrainResult:
    """Adam on the BCE loss for ``cfg.epochs`` epochs; keeps the best dev-F1 epoch.

    Augmentation and batch order come from a generator seeded by
    ``(cfg.seed, epoch)`` so repeated runs produce the same log.
    """
    if train_examples is None:
        try:
            train_examples = load_split(corpus, "train", cfg.kind)
        except SupervisionError as exc:
            raise VGSError(f"target kind {cfg.kind!r} unavailable: {exc}") from None
    if not train_examples:
        raise VGSError("empty training split")
    if dev_examples is None:
        dev_examples = load_split(corpus, "dev")
    dtype = next(model.parameters()).dtype
    torch.manual_seed(cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    best_state, best_f1, best_epoch = None, -1.0, 0
    history = []
    fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            t0 = time.perf_counter()
            rng = np.random.default_rng([cfg.seed, epoch])
            order = rng.permutation(len(train_examples))
            model.train()
            total, count = 0.0, 0
            for start in range(0, len(order), cfg.batch_size):
                batch = [train_examples[i] for i in order[start : start + cfg.batch_size]]
                seqs = []
                for ex in batch:
                    f = ex.features
                    if cfg.augment is not None and f.T >= 4:
                        f = spec_augment(f, cfg.augment, rng)
                    seqs.append(f.values)
                x, mask = collate(seqs, dtype)
                y = torch.as_tensor(np.stack([ex.target for ex in batch]), dtype=dtype)
                logits = model(x, mask)[0]
                loss = F.binary_cross_entropy_with_logits(logits, y)
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += loss.item() * len(batch)
                count += len(batch)
            f1 = dev_f1(model, dev_examples, cfg.theta)
            entry = {"epoch": epoch, "train_loss": total / count, "dev_f1": f1,
                     "wall_s": round(time.perf_counter() - t0, 3)}
            history.append(entry)
            if fh:
                fh.write(json.dumps(entry) + "\n")
                fh.flush()
            log.info("epoch %d loss %.4f dev F1 %.4f", epoch, entry["train_loss"], f1)
            score = f1 if not np.isnan(f1) else -entry["train_loss"]
            if best_state is None or score > best_f1:
                best_state, best_f1, best_epoch = copy.deepcopy(model.state_dict()), score, epoch
    finally:
        if fh:
            fh.close()
    model.load_state_dict(best_state)
    model.eval()
    return TrainResult(model, best_epoch, best_f1, history)


def save_checkpoint(path, model: VGSModel, vocab: Vocabulary, **meta):
    """Write ``<path>`` (state dict) and ``<path>.json`` (architecture sidecar)."""
    path = Path(path)
    torch.save(model.state_dict(), path)
    sidecar = {**model.cfg.to_dict(), "vocabulary_hash": vocab.digest(), "keywords": list(vocab.keywords), **meta}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return path


def read_checkpoint_meta(path) -> dict:
    side = Path(str(path) + ".json")
    if not side.exists():
        raise CheckpointError(f"missing checkpoint sidecar {side}")
    return json.loads(side.read_text())


def load_checkpoint(path) -> tuple[VGSModel, dict]:
    meta = read_checkpoint_meta(path)
    cfg_keys = {"architecture", "V", "F", "r", "clf_hidden", "E", "channels", "seed"}
    cfg = ModelConfig.from_dict({k: meta[k] for k in cfg_keys if k in meta})
    model = build_model(cfg)
    model.load_state_dict(torch.load(path, map_location="cpu", weights_only=True))
    model.eval()
    return model, meta


def warm_start(model: VGSModel, checkpoint, mode: str = "all", vocab: Vocabulary | None = None) -> VGSModel:
    """Initialise ``model`` from a checkpoint before fine-tuning.

    ``all`` copies every parameter and requires the same keyword vocabulary;
    ``encoder_only`` copies only the audio encoder.
    """
    if mode not in ("all", "encoder_only"):
        raise CheckpointError(f"unknown warm-start mode {mode!r}")
    meta = read_checkpoint_meta(checkpoint)
    cfg = model.cfg
    if meta["architecture"] != cfg.architecture or meta["F"] != cfg.F:
        raise CheckpointError(
            f"checkpoint is {meta['architecture']} with F={meta['F']}, model is {cfg.architecture} with F={cfg.F}")
    if mode == "all":
        if meta["V"] != cfg.V:
            raise CheckpointError(f"checkpoint has V={meta['V']}, model has V={cfg.V}")
        if vocab is not None and meta.get("vocabulary_hash") != vocab.digest():
            raise CheckpointError("checkpoint vocabulary differs from the target vocabulary")
    state = torch.load(checkpoint, map_location="cpu", weights_only=True)
    if mode == "encoder_only":
        state = {k: v for k, v in state.items() if k.startswith("encoder.")}
    own = model.state_dict()
    for k, v in state.items():
        if k not in own or own[k].shape != v.shape:
            raise CheckpointError(f"incompatible parameter {k}: {tuple(v.shape)} vs {tuple(own[k].shape) if k in own else None}")
    model.load_state_dict(state, strict=(mode == "all"))
    return model
