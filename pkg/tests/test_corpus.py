import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vgsloc.corpus import (
    SPLITS,
    AlignmentSet,
    CorpusManifest,
    UtteranceRecord,
    Vocabulary,
    build_vocabulary,
    load_manifest,
    load_vocabulary,
    save_manifest,
)
from vgsloc.errors import CorpusError, TextGridError
from vgsloc.textgrid import write_textgrid

FIXTURES = Path(__file__).parent / "fixtures"


def write_lines(path, rows):
    path.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows), encoding="utf-8")
    return path


def row(i, split="train", **kw):
    d = {"id": i, "features": f"feats/{i}.feat", "language": "en", "split": split,
         "transcript": ["a", "dog", "on", "the", "beach"]}
    d.update(kw)
    return d


# vocabulary ------------------------------------------------------------------


def test_vocabulary_basics():
    v = build_vocabulary(["beach", "ball"])
    assert len(v) == 2 and v.index("beach") == 0 and v.index("BALL") == 1
    assert "Beach" in v and "sand" not in v


def test_67_keyword_vocabulary_size():
    v = load_vocabulary(FIXTURES / "keywords67.txt")
    assert len(v) == 67


def test_duplicate_keyword():
    with pytest.raises(CorpusError):
        build_vocabulary(["a", "a"])
    with pytest.raises(CorpusError):
        build_vocabulary(["Dog", "dog"])


def test_diacritics_are_kept():
    v = build_vocabulary(["òkun", "okun"], "yo")
    assert v.index("òkun") != v.index("okun")
    # decomposed and precomposed spellings of the same word agree
    assert v.index("òkun") == v.index("òkun")


def test_plurals_are_distinct():
    v = build_vocabulary(["dog", "dogs"])
    assert v.get("dogs") == 1 and v.get("dog") == 0


def test_vocabulary_save_load(tmp_path):
    v = build_vocabulary(["ọkọ", "ilé"], "yo")
    v.save(tmp_path / "v.txt")
    assert load_vocabulary(tmp_path / "v.txt", "yo") == v


# alignments ------------------------------------------------------------------


def test_alignment_validation():
    with pytest.raises(CorpusError):
        AlignmentSet((("a", 0.5, 0.5),))
    with pytest.raises(CorpusError):
        AlignmentSet((("a", -0.1, 0.5),))
    a = AlignmentSet((("b", 0.6, 0.9), ("a", 0.0, 0.5)))
    assert [e.word for e in a] == ["a", "b"]
    with pytest.raises(CorpusError):
        a.check_duration(0.8)


# manifests -------------------------------------------------------------------


def test_three_line_manifest(tmp_path):
    vocab = build_vocabulary(["dog", "beach", "ball"])
    p = write_lines(tmp_path / "m.jsonl", [
        row("s01", "train"),
        row("s02", "dev", transcript=["ball", "ball"]),
        row("s03", "test", transcript=["dog"], alignment=[{"word": "dog", "start_s": 0.1, "end_s": 0.4}]),
    ])
    m = load_manifest(p, vocab)
    assert len(m.records) == 3
    assert m.split_sizes() == {"train": 1, "dev": 1, "test": 1}
    assert m.counts["train"] == {"dog": 1, "beach": 1, "ball": 0}
    assert m.counts["dev"]["ball"] == 1
    assert m.counts["test"]["dog"] == 1
    assert m.by_id("s01").features == str((tmp_path / "feats" / "s01.feat").resolve())


def test_duplicate_id_reports_line(tmp_path):
    p = write_lines(tmp_path / "m.jsonl", [row("s01"), row("s02"), row("s01")])
    with pytest.raises(CorpusError, match=r":3: duplicate id 's01'"):
        load_manifest(p, build_vocabulary(["dog"]))


@pytest.mark.parametrize("bad, msg", [
    ('{"id": "x", "split": "train"}', "missing field"),
    ('{"id": "x", "split": "train", "language": "en"}', "exactly one"),
    ('{"id": "x", "split": "eval", "language": "en", "features": "f"}', "unknown split"),
    ('{"id": "x", "split": "train", "language": "en", "features": "f", "transcript": "a b"}', "list of strings"),
    ('{"id": "x",', "malformed JSON"),
])
def test_malformed_records(tmp_path, bad, msg):
    p = tmp_path / "m.jsonl"
    p.write_text(json.dumps(row("ok")) + "\n" + bad + "\n")
    with pytest.raises(CorpusError, match=":2: .*" + msg):
        load_manifest(p, build_vocabulary(["dog"]))


def test_missing_test_alignment(tmp_path):
    p = write_lines(tmp_path / "m.jsonl", [row("t1", "test")])
    load_manifest(p, build_vocabulary(["dog"]))
    with pytest.raises(CorpusError, match="no alignment"):
        load_manifest(p, build_vocabulary(["dog"]), require_test_alignments=True)


def test_alignment_from_textgrid_and_json(tmp_path):
    align = AlignmentSet((("okun", 0.4, 0.9),))
    write_textgrid(tmp_path / "a.TextGrid", align, 1.2)
    (tmp_path / "b.json").write_text(json.dumps(align.to_json()))
    p = write_lines(tmp_path / "m.jsonl", [row("a", "test", alignment="a.TextGrid"),
                                           row("b", "test", alignment="b.json")])
    m = load_manifest(p, build_vocabulary(["okun"], "yo"), require_test_alignments=True)
    assert m.by_id("a").alignment == align == m.by_id("b").alignment


def test_textgrid_error_is_a_corpus_error(tmp_path):
    (tmp_path / "bad.TextGrid").write_text("not a textgrid")
    p = write_lines(tmp_path / "m.jsonl", [row("a", "test", alignment="bad.TextGrid")])
    with pytest.raises(CorpusError, match=":1:"):
        load_manifest(p, build_vocabulary(["dog"]))
    assert issubclass(TextGridError, CorpusError)


def test_round_trip(tmp_path):
    vocab = build_vocabulary(["ajá", "òkun"], "yo")
    rows = [row(f"u{i}", SPLITS[i % 3], language="yo", transcript=["ajá", "lọ"],
                alignment=[{"word": "ajá", "start_s": 0.1 * i, "end_s": 0.1 * i + 0.3}], visual_tags=f"t/{i}.json")
            for i in range(6)]
    m = load_manifest(write_lines(tmp_path / "m.jsonl", rows), vocab)
    (tmp_path / "out").mkdir()
    save_manifest(m, tmp_path / "out" / "m.jsonl", tmp_path / "out" / "v.txt")
    m2 = load_manifest(tmp_path / "out" / "m.jsonl", load_vocabulary(tmp_path / "out" / "v.txt", "yo"))
    assert m2.records == m.records
    assert m2.vocabulary == m.vocabulary
    assert m2.digest() == m.digest()


def test_large_yoruba_split(tmp_path):
    rows = []
    for i in range(6000):
        split = "train" if i < 5000 else ("dev" if i < 5500 else "test")
        rows.append({"id": f"yo{i:05d}", "audio": f"wav/{i}.wav", "language": "yo", "split": split,
                     "transcript": None})
    m = load_manifest(write_lines(tmp_path / "m.jsonl", rows), build_vocabulary(["ọkọ"], "yo"))
    assert m.split_sizes() == {"train": 5000, "dev": 500, "test": 500}


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from(SPLITS), max_size=40))
def test_split_counts_sum(splits):
    recs = [UtteranceRecord(f"u{i}", s, "en", features="x") for i, s in enumerate(splits)]
    m = CorpusManifest(recs, Vocabulary(["dog"]))
    assert sum(m.split_sizes().values()) == len(recs)
    assert sum(len(m.split(s)) for s in SPLITS) == len(recs)
