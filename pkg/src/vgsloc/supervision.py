"""Training targets: bag-of-words labels from transcripts, soft labels from an image tagger."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Vocabulary
from .errors import SupervisionError

KINDS = ("visual", "bow")


@dataclass
class SupervisionTarget:
    probs: np.ndarray
    kind: str

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.kind not in KINDS:
            raise SupervisionError(f"unknown target kind {self.kind!r}")
        if self.probs.ndim != 1:
            raise SupervisionError("target must be a vector")
        if np.any((self.probs < 0) | (self.probs > 1)) or not np.all(np.isfinite(self.probs)):
            raise SupervisionError("target probabilities must lie in [0, 1]")
        if self.kind == "bow" and not np.all((self.probs == 0) | (self.probs == 1)):
            raise SupervisionError("bag-of-words targets must be binary")

    def __len__(self):
        return len(self.probs)


def bow_targets(transcript: list[str], vocab: Vocabulary) -> SupervisionTarget:
    if transcript is None:
        raise SupervisionError("bag-of-words targets need a transcript")
    y = np.zeros(len(vocab))
    for tok in transcript:
        i = vocab.get(tok)
        if i is not None:
            y[i] = 1.0
    return SupervisionTarget(y, "bow")


def visual_targets_from_mapping(mapping: dict, vocab: Vocabulary) -> SupervisionTarget:
    y = np.zeros(len(vocab))
    for word, p in mapping.items():
        i = vocab.get(word)
        if i is None:
            raise SupervisionError(f"unknown keyword {word!r} in visual tags")
        p = float(p)
        if not 0.0 <= p <= 1.0:
            raise SupervisionError(f"probability {p} for {word!r} outside [0, 1]")
        y[i] = p
    return SupervisionTarget(y, "visual")


def load_visual_targets(path, vocab: Vocabulary) -> SupervisionTarget:
    """Read a ``{keyword: probability}`` JSON file; absent keywords get 0."""
    try:
        mapping = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SupervisionError(f"{path}: malformed JSON ({exc.msg})") from None
    if not isinstance(mapping, dict):
        raise SupervisionError(f"{path}: expected a JSON object")
    return visual_targets_from_mapping(mapping, vocab)


def save_visual_targets(path, target: SupervisionTarget, vocab: Vocabulary):
    mapping = {kw: float(p) for kw, p in zip(vocab.keywords, target.probs)}
    Path(path).write_text(json.dumps(mapping, ensure_ascii=False, indent=0) + "\n", encoding="utf-8")


def targets_for(record, vocab: Vocabulary, kind: str) -> SupervisionTarget:
    if kind == "bow":
        words = record.transcript if record.transcript is not None else record.words()
        if record.transcript is None and record.alignment is None:
            raise SupervisionError(f"record {record.id!r} has no transcript for bag-of-words targets")
        return bow_targets(words, vocab)
    if kind == "visual":
        if record.visual_tags is None:
            raise SupervisionError(f"record {record.id!r} has no visual tags")
        return load_visual_targets(record.visual_tags, vocab)
    raise SupervisionError(f"unknown supervision kind {kind!r}")
