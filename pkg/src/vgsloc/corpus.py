"""Corpus manifests: utterance records, vocabularies and word alignments."""

from __future__ import annotations

import hashlib
import json
import os
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

from .errors import CorpusError

SPLITS = ("train", "dev", "test")


def fold(word: str) -> str:
    """Case-fold while keeping diacritics (tone marks carry meaning)."""
    return unicodedata.normalize("NFC", word).casefold()


class Vocabulary:
    def __init__(self, keywords: Iterable[str], language_tag: str = "en"):
        self.keywords = list(keywords)
        self.language_tag = language_tag
        if not self.keywords:
            raise CorpusError("vocabulary must contain at least one keyword")
        self._index = {}
        for i, kw in enumerate(self.keywords):
            key = fold(kw)
            if key in self._index:
                raise CorpusError(f"duplicate keyword {kw!r} in vocabulary")
            self._index[key] = i

    def __len__(self):
        return len(self.keywords)

    def __iter__(self):
        return iter(self.keywords)

    def __contains__(self, word):
        return fold(word) in self._index

    def __eq__(self, other):
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self.keywords == other.keywords and self.language_tag == other.language_tag

    def __repr__(self):
        return f"Vocabulary(V={len(self)}, language_tag={self.language_tag!r})"

    def index(self, word: str) -> int:
        try:
            return self._index[fold(word)]
        except KeyError:
            raise CorpusError(f"unknown keyword {word!r}") from None

    def get(self, word: str):
        return self._index.get(fold(word))

    def digest(self) -> str:
        payload = json.dumps([self.language_tag, self.keywords], ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def save(self, path):
        Path(path).write_text("".join(k + "\n" for k in self.keywords), encoding="utf-8")


def build_vocabulary(words: list[str], language_tag: str = "en") -> Vocabulary:
    return Vocabulary(words, language_tag)


def load_vocabulary(path, language_tag: str = "en") -> Vocabulary:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    words = [ln.strip() for ln in lines if ln.strip()]
    return Vocabulary(words, language_tag)


class AlignmentEntry(NamedTuple):
    word: str
    start_s: float
    end_s: float


@dataclass(frozen=True)
class AlignmentSet:
    entries: tuple[AlignmentEntry, ...] = ()

    def __post_init__(self):
        entries = tuple(AlignmentEntry(str(w), float(s), float(e)) for w, s, e in self.entries)
        for w, s, e in entries:
            if not (0.0 <= s < e):
                raise CorpusError(f"invalid alignment interval for {w!r}: [{s}, {e}]")
        object.__setattr__(self, "entries", tuple(sorted(entries, key=lambda x: (x.start_s, x.end_s))))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def intervals(self, word: str) -> list[tuple[float, float]]:
        key = fold(word)
        return [(s, e) for w, s, e in self.entries if fold(w) == key]

    def check_duration(self, duration_s: float, tol: float = 1e-6):
        for w, s, e in self.entries:
            if e > duration_s + tol:
                raise CorpusError(f"alignment for {w!r} ends at {e}s beyond duration {duration_s}s")

    def to_json(self) -> list[dict]:
        return [{"word": w, "start_s": s, "end_s": e} for w, s, e in self.entries]

    @classmethod
    def from_json(cls, items) -> "AlignmentSet":
        try:
            return cls(tuple((d["word"], d["start_s"], d["end_s"]) for d in items))
        except (KeyError, TypeError) as exc:
            raise CorpusError(f"malformed inline alignment: {exc}") from None


@dataclass
class UtteranceRecord:
    id: str
    split: str
    language: str
    audio: str | None = None
    features: str | None = None
    transcript: list[str] | None = None
    alignment: AlignmentSet | None = None
    visual_tags: str | None = None

    def __post_init__(self):
        if (self.audio is None) == (self.features is None):
            raise CorpusError(f"record {self.id!r}: exactly one of 'audio' or 'features' is required")
        if self.split not in SPLITS:
            raise CorpusError(f"record {self.id!r}: unknown split {self.split!r}")

    def words(self) -> list[str]:
        """Tokens used for keyword presence: transcript if given, else aligned words."""
        if self.transcript is not None:
            return list(self.transcript)
        if self.alignment is not None:
            return [e.word for e in self.alignment]
        return []

    def present_keywords(self, vocab: Vocabulary) -> set[int]:
        out = set()
        for tok in self.words():
            i = vocab.get(tok)
            if i is not None:
                out.add(i)
        return out


@dataclass
class CorpusManifest:
    records: list[UtteranceRecord]
    vocabulary: Vocabulary
    audio_language: str = ""
    query_language: str = ""
    counts: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            if rec.id in seen:
                raise CorpusError(f"duplicate utterance id {rec.id!r}")
            seen.add(rec.id)
        if not self.audio_language and self.records:
            self.audio_language = self.records[0].language
        if not self.query_language:
            self.query_language = self.vocabulary.language_tag
        self.counts = self.occurrence_counts()

    def split(self, name: str) -> list[UtteranceRecord]:
        return [r for r in self.records if r.split == name]

    def by_id(self, utt_id: str) -> UtteranceRecord:
        for r in self.records:
            if r.id == utt_id:
                return r
        raise KeyError(utt_id)

    def occurrence_counts(self) -> dict[str, dict[str, int]]:
        """Number of utterances containing each keyword, per split."""
        counts = {s: dict.fromkeys(self.vocabulary.keywords, 0) for s in SPLITS}
        for rec in self.records:
            c = counts[rec.split]
            for i in rec.present_keywords(self.vocabulary):
                c[self.vocabulary.keywords[i]] += 1
        return counts

    def split_sizes(self) -> dict[str, int]:
        sizes = Counter(r.split for r in self.records)
        return {s: sizes.get(s, 0) for s in SPLITS}

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.vocabulary.digest().encode())
        for rec in self.records:
            h.update(json.dumps(_record_to_json(rec, None), sort_keys=True, ensure_ascii=False).encode())
        return h.hexdigest()


def _resolve(path, base: Path):
    if path is None:
        return None
    p = Path(path)
    if not p.is_absolute():
        p = base / p
    return str(p.resolve())


def _relativise(path, base: Path | None):
    if path is None or base is None:
        return path
    return os.path.relpath(path, base)


def _load_alignment(value, base: Path, tier_name: str):
    if value is None:
        return None
    if isinstance(value, list):
        return AlignmentSet.from_json(value)
    if isinstance(value, str):
        path = Path(_resolve(value, base))
        if path.suffix.lower() == ".json":
            return AlignmentSet.from_json(json.loads(path.read_text(encoding="utf-8")))
        from .textgrid import parse_textgrid

        return parse_textgrid(path, tier_name)
    raise CorpusError(f"unsupported alignment value of type {type(value).__name__}")


def _record_from_json(obj: dict, base: Path, tier_name: str) -> UtteranceRecord:
    if not isinstance(obj, dict):
        raise CorpusError("record is not a JSON object")
    for key in ("id", "split", "language"):
        if key not in obj:
            raise CorpusError(f"missing field {key!r}")
    transcript = obj.get("transcript")
    if transcript is not None and not (isinstance(transcript, list) and all(isinstance(t, str) for t in transcript)):
        raise CorpusError("'transcript' must be a list of strings or null")
    return UtteranceRecord(
        id=str(obj["id"]),
        split=obj["split"],
        language=obj["language"],
        audio=_resolve(obj.get("audio"), base),
        features=_resolve(obj.get("features"), base),
        transcript=transcript,
        alignment=_load_alignment(obj.get("alignment"), base, tier_name),
        visual_tags=_resolve(obj.get("visual_tags"), base),
    )


def _record_to_json(rec: UtteranceRecord, base: Path | None) -> dict:
    obj = {"id": rec.id}
    if rec.audio is not None:
        obj["audio"] = _relativise(rec.audio, base)
    else:
        obj["features"] = _relativise(rec.features, base)
    obj["transcript"] = rec.transcript
    obj["language"] = rec.language
    obj["split"] = rec.split
    obj["alignment"] = rec.alignment.to_json() if rec.alignment is not None else None
    obj["visual_tags"] = _relativise(rec.visual_tags, base)
    return obj


def load_manifest(
    path,
    vocabulary: Vocabulary | str | os.PathLike,
    *,
    require_test_alignments: bool = False,
    tier_name: str = "words",
) -> CorpusManifest:
    """Read a JSON Lines manifest.

    Relative paths inside records are resolved against the manifest's
    directory. Errors carry the 1-based line number of the offending record.
    """
    path = Path(path)
    if not isinstance(vocabulary, Vocabulary):
        vocabulary = load_vocabulary(vocabulary)
    base = path.parent.resolve()
    records = []
    seen = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rec = _record_from_json(obj, base, tier_name)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
            if rec.id in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate id {rec.id!r} (first seen on line {seen[rec.id]})")
            seen[rec.id] = lineno
            if require_test_alignments and rec.split == "test" and rec.alignment is None:
                raise CorpusError(f"{path}:{lineno}: test record {rec.id!r} has no alignment")
            records.append(rec)
    return CorpusManifest(records, vocabulary)


def save_manifest(manifest: CorpusManifest, path, vocab_path=None):
    """Write records as JSON Lines with paths relative to the manifest's directory."""
    path = Path(path)
    base = path.parent.resolve()
    with path.open("w", encoding="utf-8") as fh:
        for rec in manifest.records:
            fh.write(json.dumps(_record_to_json(rec, base), ensure_ascii=False) + "\n")
    if vocab_path is not None:
        manifest.vocabulary.save(vocab_path)
