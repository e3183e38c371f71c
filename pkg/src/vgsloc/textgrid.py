"""Reader for Praat TextGrid files (long and short text encodings).

Both encodings carry the same value sequence; the long one only adds
``key =`` labels and ``item [n]:`` markers. We therefore tokenise the file
into quoted strings, numbers and ``<exists>`` flags and walk that stream.
"""

from __future__ import annotations

import re
from pathlib import Path

from .corpus import AlignmentSet
from .errors import TextGridError

_TOKEN = re.compile(
    r'"(?P<str>(?:[^"]|"")*)"'
    r"|(?P<bracket>\[[^\]]*\])"
    r"|(?P<flag><exists>|<absent>)"
    r"|(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"
    r"|(?P<word>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<other>\S)"
)


def _read_text(path: Path) -> str:
    raw = path.read_bytes()
    if raw.startswith((b"\xff\xfe", b"\xfe\xff")):
        return raw.decode("utf-16")
    return raw.decode("utf-8-sig")


def _tokens(text: str):
    for m in _TOKEN.finditer(text):
        kind = m.lastgroup
        if kind == "str":
            yield m.group("str").replace('""', '"')
        elif kind == "num":
            yield float(m.group("num"))
        elif kind == "flag":
            yield m.group("flag")
        # labels, brackets and punctuation carry no values


class _Stream:
    def __init__(self, tokens):
        self.tokens = list(tokens)
        self.pos = 0

    def next(self, what: str):
        if self.pos >= len(self.tokens):
            raise TextGridError(f"unexpected end of file while reading {what}")
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def number(self, what: str) -> float:
        tok = self.next(what)
        if not isinstance(tok, float):
            raise TextGridError(f"expected a number for {what}, got {tok!r}")
        return tok

    def string(self, what: str) -> str:
        tok = self.next(what)
        if not isinstance(tok, str) or tok in ("<exists>", "<absent>"):
            raise TextGridError(f"expected a string for {what}, got {tok!r}")
        return tok


def read_tiers(path) -> dict[str, tuple[str, list]]:
    """Return ``{tier_name: (tier_class, items)}`` for every tier in the file.

    Interval items are ``(xmin, xmax, text)``; point items are ``(time, mark)``.
    """
    path = Path(path)
    s = _Stream(_tokens(_read_text(path)))
    try:
        file_type = s.string("file type")
        obj_class = s.string("object class")
    except TextGridError:
        raise TextGridError(f"{path}: unparseable header") from None
    if file_type != "ooTextFile" or obj_class != "TextGrid":
        raise TextGridError(f"{path}: unparseable header ({file_type!r}, {obj_class!r})")
    s.number("xmin")
    s.number("xmax")
    flag = s.next("tiers flag")
    if flag == "<absent>":
        return {}
    if flag != "<exists>":
        raise TextGridError(f"{path}: expected <exists> flag, got {flag!r}")
    n_tiers = int(s.number("tier count"))
    tiers = {}
    for _ in range(n_tiers):
        cls = s.string("tier class")
        name = s.string("tier name")
        s.number("tier xmin")
        s.number("tier xmax")
        n = int(s.number("item count"))
        items = []
        if cls == "IntervalTier":
            for _ in range(n):
                items.append((s.number("interval xmin"), s.number("interval xmax"), s.string("interval text")))
        elif cls == "TextTier":
            for _ in range(n):
                items.append((s.number("point time"), s.string("point mark")))
        else:
            raise TextGridError(f"{path}: unknown tier class {cls!r}")
        tiers[name] = (cls, items)
    return tiers


def parse_textgrid(path, tier_name: str = "words") -> AlignmentSet:
    """Read the named interval tier; empty-label intervals are dropped."""
    tiers = read_tiers(path)
    if tier_name not in tiers:
        raise TextGridError(f"{path}: no tier named {tier_name!r} (found {sorted(tiers)})")
    cls, items = tiers[tier_name]
    if cls != "IntervalTier":
        raise TextGridError(f"{path}: tier {tier_name!r} is a {cls}, only interval tiers are supported")
    entries = []
    for xmin, xmax, text in items:
        if xmin >= xmax:
            raise TextGridError(f"{path}: interval [{xmin}, {xmax}] in tier {tier_name!r} has xmin >= xmax")
        label = text.strip()
        if label:
            entries.append((label, xmin, xmax))
    return AlignmentSet(tuple(entries))


def write_textgrid(path, alignment: AlignmentSet, duration_s: float, tier_name: str = "words", short: bool = False):
    """Write a single interval tier, filling gaps with empty intervals."""
    intervals = []
    t = 0.0
    for w, s, e in alignment:
        if s > t:
            intervals.append((t, s, ""))
        intervals.append((s, e, w))
        t = e
    if t < duration_s:
        intervals.append((t, duration_s, ""))

    def q(text):
        return '"' + text.replace('"', '""') + '"'

    lines = ['File type = "ooTextFile"', 'Object class = "TextGrid"', ""]
    if short:
        lines += [f"{0.0!r}", f"{duration_s!r}", "<exists>", "1", q("IntervalTier"), q(tier_name),
                  f"{0.0!r}", f"{duration_s!r}", str(len(intervals))]
        for s, e, w in intervals:
            lines += [f"{s!r}", f"{e!r}", q(w)]
    else:
        lines += [f"xmin = {0.0!r} ", f"xmax = {duration_s!r} ", "tiers? <exists> ", "size = 1 ", "item []: ",
                  "    item [1]:", '        class = "IntervalTier" ', f"        name = {q(tier_name)} ",
                  f"        xmin = {0.0!r} ", f"        xmax = {duration_s!r} ",
                  f"        intervals: size = {len(intervals)} "]
        for i, (s, e, w) in enumerate(intervals, start=1):
            lines += [f"        intervals [{i}]:", f"            xmin = {s!r} ", f"            xmax = {e!r} ",
                      f"            text = {q(w)} "]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
