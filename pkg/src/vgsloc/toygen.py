"""Synthetic speech/image corpus with exact word boundaries.

Utterances are sequences of word units rendered directly as feature frames.
Every word type is a fixed sequence of "phones" drawn from an inventory
shared across languages; a phone is a sign pattern over the feature bins.
Languages differ in which phone sequence spells each word, which gives a
cross-lingual setting where acoustic knowledge transfers but word identity
does not.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus import AlignmentSet, CorpusManifest, UtteranceRecord, Vocabulary, save_manifest
from .errors import SupervisionError, VGSError
from .features import FeatureSequence, write_features
from .supervision import SupervisionTarget, save_visual_targets

_SPLIT_CODES = {"train": 0, "dev": 1, "test": 2}


@dataclass(frozen=True)
class ToyConfig:
    V: int = 12
    n_train: int = 400
    n_dev: int = 50
    n_test: int = 50
    words_per_utt: tuple[int, int] = (2, 5)
    word_dur_frames: tuple[int, int] = (20, 35)
    feature_dim: int = 39
    tagger_noise: tuple[float, float] = (0.8, 0.05)  # (hit_mean, false_alarm_rate)
    tagger_std: float = 0.1
    miss_rate: float = 0.1
    keyword_prob: float = 0.5
    n_filler: int = 24
    n_phones: int = 16
    phones_per_word: int = 3
    phone_scale: float = 1.0
    noise_std: float = 0.6
    silence_prob: float = 0.3
    silence_frames: tuple[int, int] = (3, 10)
    silence_std: float = 0.1
    hop_s: float = 0.01
    language: str = "en"
    query_language: str = "en"
    inventory_seed: int = 0
    seed: int = 7

    def __post_init__(self):
        for name in ("words_per_utt", "word_dur_frames", "silence_frames", "tagger_noise"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        for name in ("words_per_utt", "word_dur_frames", "silence_frames"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 1:
                raise VGSError(f"ToyConfig.{name}: need 1 <= min <= max, got {(lo, hi)}")
        hit, fa = self.tagger_noise
        if not (0.0 < hit <= 1.0) or not (0.0 <= fa < 1.0):
            raise VGSError("ToyConfig.tagger_noise needs hit_mean in (0, 1] and false_alarm_rate in [0, 1)")
        if self.V < 1 or self.feature_dim < 1 or min(self.n_train, self.n_dev, self.n_test) < 0:
            raise VGSError("ToyConfig: V, feature_dim must be positive and split sizes non-negative")
        if self.n_phones ** self.phones_per_word < self.V + self.n_filler:
            raise VGSError("ToyConfig: phone inventory too small for the number of word types")
        if not 0.0 <= self.miss_rate < 1.0 or self.tagger_std < 0:
            raise VGSError("ToyConfig: miss_rate must be in [0, 1) and tagger_std >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "ToyConfig":
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def noiseless_tagger(self) -> bool:
        return self.tagger_noise == (1.0, 0.0) and self.tagger_std == 0 and self.miss_rate == 0


def keyword_names(V: int) -> list[str]:
    return [f"kw{i:02d}" for i in range(V)]


def filler_names(n: int, language: str) -> list[str]:
    return [f"{language}_fill{i:02d}" for i in range(n)]


@dataclass
class Lexicon:
    """Acoustic templates for every word type of one language."""

    phones: np.ndarray  # n_phones x F
    spelling: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def render(self, word: str, n_frames: int, rng: np.random.Generator | None = None, noise_std: float = 0.0):
        seq = self.spelling[word]
        bounds = np.linspace(0, n_frames, len(seq) + 1).round().astype(int)
        out = np.empty((n_frames, self.phones.shape[1]))
        for p, a, b in zip(seq, bounds[:-1], bounds[1:]):
            out[a:b] = self.phones[p]
        if rng is not None and noise_std > 0:
            out += rng.normal(0.0, noise_std, size=out.shape)
        return out


def build_lexicon(cfg: ToyConfig) -> Lexicon:
    inv_rng = np.random.default_rng([cfg.inventory_seed, cfg.feature_dim, cfg.n_phones])
    phones = cfg.phone_scale * inv_rng.choice([-1.0, 1.0], size=(cfg.n_phones, cfg.feature_dim))
    lang_seed = int.from_bytes(cfg.language.encode("utf-8"), "little") % (2**32)
    rng = np.random.default_rng([cfg.inventory_seed, lang_seed])
    words = keyword_names(cfg.V) + filler_names(cfg.n_filler, cfg.language)
    used = set()
    spelling = {}
    for w in words:
        while True:
            seq = tuple(int(p) for p in rng.integers(0, cfg.n_phones, size=cfg.phones_per_word))
            if seq not in used:
                break
        used.add(seq)
        spelling[w] = seq
    return Lexicon(phones, spelling)


def synth_visual_tags(present, cfg: ToyConfig, rng: np.random.Generator, vocab: Vocabulary | None = None) -> SupervisionTarget:
    """Soft labels from a simulated image tagger.

    Present keywords score near ``hit_mean`` unless missed (probability
    ``miss_rate``); absent keywords score near zero, except that each fires
    as a false alarm with probability ``false_alarm_rate``.
    """
    V = cfg.V if vocab is None else len(vocab)
    idx = set()
    for p in present:
        if isinstance(p, str):
            if vocab is None or p not in vocab:
                raise SupervisionError(f"unknown keyword {p!r}")
            idx.add(vocab.index(p))
        else:
            if not 0 <= int(p) < V:
                raise SupervisionError(f"unknown keyword index {p}")
            idx.add(int(p))
    hit_mean, fa_rate = cfg.tagger_noise
    is_present = np.zeros(V, dtype=bool)
    is_present[sorted(idx)] = True
    missed = rng.random(V) < cfg.miss_rate
    false_alarm = rng.random(V) < fa_rate
    high = np.clip(rng.normal(hit_mean, cfg.tagger_std, size=V), 0.0, 1.0)
    low = np.clip(np.abs(rng.normal(0.0, cfg.tagger_std, size=V)), 0.0, 0.49)
    fires = (is_present & ~missed) | (~is_present & false_alarm)
    return SupervisionTarget(np.where(fires, high, low), "visual")


@dataclass
class ToyUtterance:
    id: str
    split: str
    features: FeatureSequence
    transcript: list[str]
    alignment: AlignmentSet
    tags: SupervisionTarget


def _sample_utterance(utt_id, split, cfg, lexicon, vocab, rng) -> ToyUtterance:
    kws = keyword_names(cfg.V)
    fillers = filler_names(cfg.n_filler, cfg.language)
    n_words = int(rng.integers(cfg.words_per_utt[0], cfg.words_per_utt[1] + 1))
    blocks, transcript, entries = [], [], []
    t = 0

    def silence():
        nonlocal t
        n = int(rng.integers(cfg.silence_frames[0], cfg.silence_frames[1] + 1))
        blocks.append(rng.normal(0.0, cfg.silence_std, size=(n, cfg.feature_dim)))
        t += n

    for _ in range(n_words):
        if rng.random() < cfg.silence_prob:
            silence()
        if not fillers or rng.random() < cfg.keyword_prob:
            word = kws[int(rng.integers(0, len(kws)))]
        else:
            word = fillers[int(rng.integers(0, len(fillers)))]
        d = int(rng.integers(cfg.word_dur_frames[0], cfg.word_dur_frames[1] + 1))
        blocks.append(lexicon.render(word, d, rng, cfg.noise_std))
        transcript.append(word)
        entries.append((word, round(t * cfg.hop_s, 6), round((t + d) * cfg.hop_s, 6)))
        t += d
    if rng.random() < cfg.silence_prob:
        silence()
    feats = FeatureSequence(np.concatenate(blocks).astype(np.float32), cfg.hop_s, 2.5 * cfg.hop_s)
    present = {vocab.index(w) for w in transcript if w in vocab}
    tags = synth_visual_tags(present, cfg, rng)
    return ToyUtterance(utt_id, split, feats, transcript, AlignmentSet(tuple(entries)), tags)


def iter_toy_utterances(cfg: ToyConfig):
    lexicon = build_lexicon(cfg)
    vocab = Vocabulary(keyword_names(cfg.V), cfg.query_language)
    for split, n in (("train", cfg.n_train), ("dev", cfg.n_dev), ("test", cfg.n_test)):
        for i in range(n):
            rng = np.random.default_rng([cfg.seed, _SPLIT_CODES[split], i])
            yield _sample_utterance(f"{cfg.language}-{split}-{i:05d}", split, cfg, lexicon, vocab, rng)


def generate_toy_corpus(cfg: ToyConfig, out_dir) -> CorpusManifest:
    """Write features, visual tags, vocabulary and a manifest under ``out_dir``."""
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    (out / "tags").mkdir(parents=True, exist_ok=True)
    vocab = Vocabulary(keyword_names(cfg.V), cfg.query_language)
    records = []
    for utt in iter_toy_utterances(cfg):
        feat_path = out / "features" / f"{utt.id}.feat"
        tag_path = out / "tags" / f"{utt.id}.json"
        write_features(feat_path, utt.features)
        save_visual_targets(tag_path, utt.tags, vocab)
        records.append(
            UtteranceRecord(
                id=utt.id,
                split=utt.split,
                language=cfg.language,
                features=str(feat_path.resolve()),
                transcript=utt.transcript,
                alignment=utt.alignment,
                visual_tags=str(tag_path.resolve()),
            )
        )
    manifest = CorpusManifest(records, vocab, audio_language=cfg.language, query_language=cfg.query_language)
    save_manifest(manifest, out / "manifest.jsonl", out / "vocab.txt")
    (out / "toy_config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    return manifest
