"""Detection, spotting and localisation metrics.

Scores are arrays of shape (utterances, keywords). Rates that are undefined
(zero denominator) are reported as ``None`` and excluded from macro averages,
with the number of excluded keywords reported alongside.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricError


def prf(tp: int, fp: int, fn: int):
    p = tp / (tp + fp) if tp + fp else None
    r = tp / (tp + fn) if tp + fn else None
    if p is None or r is None:
        f1 = None
    else:
        f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return p, r, f1


def harmonic(p, r):
    if p is None or r is None:
        return None
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def _mean_defined(values):
    vals = [v for v in values if v is not None]
    return (float(np.mean(vals)) if vals else None), len(values) - len(vals)


def _summarise_counts(tp, fp, fn, keywords, extra=None):
    per_kw = []
    for i, kw in enumerate(keywords):
        p, r, f1 = prf(int(tp[i]), int(fp[i]), int(fn[i]))
        row = {"keyword": kw, "tp": int(tp[i]), "fp": int(fp[i]), "fn": int(fn[i]),
               "support": int(tp[i] + fn[i]), "precision": p, "recall": r, "f1": f1}
        if extra:
            row.update({k: v[i] for k, v in extra.items()})
        per_kw.append(row)
    macro_p, undef_p = _mean_defined([r["precision"] for r in per_kw])
    macro_r, undef_r = _mean_defined([r["recall"] for r in per_kw])
    f1_mean, _ = _mean_defined([r["f1"] for r in per_kw])
    mp, mr, mf = prf(int(np.sum(tp)), int(np.sum(fp)), int(np.sum(fn)))
    aggregate = {
        "precision": macro_p,
        "recall": macro_r,
        "f1": harmonic(macro_p, macro_r),
        "f1_mean": f1_mean,
        "n_undefined_precision": undef_p,
        "n_undefined_recall": undef_r,
        "micro": {"precision": mp, "recall": mr, "f1": mf},
    }
    return {"per_keyword": per_kw, "aggregate": aggregate}


def _check_shapes(scores, refs):
    scores = np.asarray(scores, dtype=np.float64)
    refs = np.asarray(refs, dtype=bool)
    if scores.shape != refs.shape or scores.ndim != 2:
        raise MetricError(f"scores {scores.shape} and references {refs.shape} must be matching 2-D arrays")
    if np.isnan(scores).any():
        raise MetricError("missing detection scores")
    return scores, refs


def eval_detection(scores, refs, theta: float = 0.5, keywords=None) -> dict:
    """Per-keyword precision/recall/F1 of the decisions ``score >= theta``."""
    scores, refs = _check_shapes(scores, refs)
    keywords = keywords or [str(i) for i in range(scores.shape[1])]
    dec = scores >= theta
    tp = (dec & refs).sum(axis=0)
    fp = (dec & ~refs).sum(axis=0)
    fn = (~dec & refs).sum(axis=0)
    return _summarise_counts(tp, fp, fn, keywords)


def ranking(scores, utt_ids) -> list[int]:
    """Indices by descending score; ties broken by ascending utterance id."""
    return sorted(range(len(scores)), key=lambda i: (-float(scores[i]), utt_ids[i]))


def equal_error_rate(scores, labels):
    """EER from a sweep over every observed score as threshold (plus +inf).

    Accept when ``score >= threshold``. The false-acceptance curve falls and
    the false-rejection curve rises as the threshold grows; the EER is read
    off by linear interpolation between the two sweep points where their
    difference changes sign.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos, n_neg = int(labels.sum()), int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    thresholds = np.append(np.unique(scores), np.inf)
    order = np.sort(scores[labels])
    neg = np.sort(scores[~labels])
    far = (n_neg - np.searchsorted(neg, thresholds, side="left")) / n_neg
    frr = np.searchsorted(order, thresholds, side="left") / n_pos
    d = far - frr
    for i in range(len(thresholds)):
        if d[i] == 0:
            return float(far[i])
        if i + 1 < len(thresholds) and d[i] > 0 > d[i + 1]:
            lam = d[i] / (d[i] - d[i + 1])
            return float(far[i] + lam * (far[i + 1] - far[i]))
    raise MetricError("EER sweep found no crossing")  # unreachable: d goes from >= 0 to -1


def eval_spotting(scores, refs, utt_ids) -> dict:
    """P@10, P@N and EER for one keyword's column of scores."""
    scores = np.asarray(scores, dtype=np.float64)
    refs = np.asarray(refs, dtype=bool)
    order = ranking(scores, utt_ids)
    n = int(refs.sum())
    p10 = float(np.mean(refs[order[:10]])) if len(order) >= 10 else None
    pn = float(np.mean(refs[order[:n]])) if n >= 1 else None
    return {"p_at_10": p10, "p_at_n": pn, "eer": equal_error_rate(scores, refs), "n": n}


@dataclass
class GroundTruth:
    """Keyword presence and aligned intervals for a set of test utterances."""

    utt_ids: list[str]
    keywords: list[str]
    refs: np.ndarray  # U x V bool
    intervals: list[dict[int, list[tuple[float, float]]]]
    durations: np.ndarray | None = None

    @classmethod
    def from_records(cls, records, vocab, durations=None):
        refs = np.zeros((len(records), len(vocab)), dtype=bool)
        intervals = []
        for u, rec in enumerate(records):
            for w in rec.present_keywords(vocab):
                refs[u, w] = True
            ivals = {}
            if rec.alignment is not None:
                for word, s, e in rec.alignment:
                    w = vocab.get(word)
                    if w is not None:
                        ivals.setdefault(w, []).append((s, e))
            intervals.append(ivals)
        d = None if durations is None else np.asarray(durations, dtype=np.float64)
        return cls([r.id for r in records], list(vocab.keywords), refs, intervals, d)

    def located(self, u: int, w: int, tau: float) -> bool:
        ivals = self.intervals[u].get(w)
        if not ivals:
            raise MetricError(f"utterance {self.utt_ids[u]!r} has no alignment for keyword {self.keywords[w]!r}")
        return any(s <= tau <= e for s, e in ivals)


def eval_oracle_localisation(taus, gt: GroundTruth) -> dict:
    """Fraction of (utterance, keyword) pairs with the keyword present whose tau lands in it."""
    taus = np.asarray(taus, dtype=np.float64)
    correct = np.zeros(len(gt.keywords), dtype=int)
    total = gt.refs.sum(axis=0).astype(int)
    for u, w in zip(*np.nonzero(gt.refs)):
        if np.isnan(taus[u, w]):
            raise MetricError(f"no location for {gt.utt_ids[u]!r}/{gt.keywords[w]!r}")
        correct[w] += gt.located(u, w, taus[u, w])
    per_kw = [{"keyword": kw, "correct": int(c), "support": int(n), "accuracy": (c / n if n else None)}
              for kw, c, n in zip(gt.keywords, correct, total)]
    n_total = int(total.sum())
    macro, undef = _mean_defined([r["accuracy"] for r in per_kw])
    return {
        "accuracy": (int(correct.sum()) / n_total) if n_total else None,
        "macro_accuracy": macro,
        "n_correct": int(correct.sum()),
        "n_pairs": n_total,
        "per_keyword": per_kw,
    }


def localisation_counts(scores, taus, gt: GroundTruth, theta: float):
    """TP/FP/FN per keyword where a detection only counts if it is also located."""
    scores = np.asarray(scores, dtype=np.float64)
    taus = np.asarray(taus, dtype=np.float64)
    V = len(gt.keywords)
    tp, fp, fn = np.zeros(V, int), np.zeros(V, int), np.zeros(V, int)
    for u in range(scores.shape[0]):
        for w in range(V):
            present = bool(gt.refs[u, w])
            if scores[u, w] >= theta:
                if present and gt.located(u, w, taus[u, w]):
                    tp[w] += 1
                else:
                    fp[w] += 1
            elif present:
                fn[w] += 1
    return tp, fp, fn


def eval_actual_localisation(scores, taus, gt: GroundTruth, theta: float = 0.5) -> dict:
    scores, _ = _check_shapes(scores, gt.refs)
    tp, fp, fn = localisation_counts(scores, taus, gt, theta)
    return _summarise_counts(tp, fp, fn, gt.keywords)


def eval_spotting_localisation(scores, taus, gt: GroundTruth, w: int) -> dict:
    """Top-ranked utterances count only if they contain the keyword and tau lands in it."""
    scores = np.asarray(scores, dtype=np.float64)
    taus = np.asarray(taus, dtype=np.float64)
    order = ranking(scores, gt.utt_ids)
    ok = np.array([bool(gt.refs[u, w]) and gt.located(u, w, taus[u]) for u in order], dtype=float)
    n = int(gt.refs[:, w].sum())
    return {
        "p_at_10": float(ok[:10].mean()) if len(order) >= 10 else None,
        "p_at_n": float(ok[:n].mean()) if n >= 1 else None,
        "n": n,
    }


def _coverage(ivals, duration):
    """Length of the union of intervals clipped to [0, duration]."""
    total, end = 0.0, 0.0
    for s, e in sorted(ivals):
        s, e = max(s, end, 0.0), min(e, duration)
        if e > s:
            total += e - s
            end = e
    return total


def random_localisation_baseline(gt: GroundTruth) -> float:
    """Expected oracle accuracy of a location drawn uniformly over each utterance."""
    if gt.durations is None:
        raise MetricError("durations are required for the random localisation baseline")
    fracs = [_coverage(gt.intervals[u][w], gt.durations[u]) / gt.durations[u] for u, w in zip(*np.nonzero(gt.refs))]
    return float(np.mean(fracs)) if fracs else 0.0


def random_detection_baseline(refs, theta: float = 0.5) -> float:
    """Expected detection F1 (harmonic mean of macro P and macro R) for uniform random scores."""
    refs = np.asarray(refs, dtype=bool)
    prevalence = refs.mean(axis=0)
    p = float(prevalence.mean())
    r = 1.0 - theta
    return harmonic(p, r)


@dataclass
class ScoreTable:
    """Detection scores and per-method predicted locations for a test set."""

    utt_ids: list[str]
    keywords: list[str]
    detection: np.ndarray  # U x V
    taus: dict  # method -> U x V seconds


def evaluate(table: ScoreTable, gt: GroundTruth, theta: float = 0.5) -> dict:
    if table.utt_ids != gt.utt_ids or table.keywords != gt.keywords:
        raise MetricError("score table and ground truth disagree on utterances or keywords")
    det = eval_detection(table.detection, gt.refs, theta, gt.keywords)
    spot_rows = []
    for w, kw in enumerate(gt.keywords):
        row = eval_spotting(table.detection[:, w], gt.refs[:, w], gt.utt_ids)
        spot_rows.append({"keyword": kw, **row})
    spotting = {"per_keyword": spot_rows, "aggregate": {}}
    for key in ("p_at_10", "p_at_n", "eer"):
        m, undef = _mean_defined([r[key] for r in spot_rows])
        spotting["aggregate"][key] = m
        spotting["aggregate"][f"n_undefined_{key}"] = undef
    localisation = {}
    for method in sorted(table.taus):
        taus = table.taus[method]
        oracle = eval_oracle_localisation(taus, gt)
        actual = eval_actual_localisation(table.detection, taus, gt, theta)
        sl_rows = []
        for w, kw in enumerate(gt.keywords):
            sl_rows.append({"keyword": kw, **eval_spotting_localisation(table.detection[:, w], taus[:, w], gt, w)})
        p10, undef10 = _mean_defined([r["p_at_10"] for r in sl_rows])
        pn, undefn = _mean_defined([r["p_at_n"] for r in sl_rows])
        localisation[method] = {
            "oracle": oracle,
            "actual": actual,
            "spotting": {"per_keyword": sl_rows, "aggregate": {"p_at_10": p10, "p_at_n": pn,
                                                               "n_undefined_p_at_10": undef10,
                                                               "n_undefined_p_at_n": undefn}},
        }
    report = {
        "theta": theta,
        "n_utterances": len(gt.utt_ids),
        "keywords": list(gt.keywords),
        "detection": det,
        "spotting": spotting,
        "localisation": localisation,
    }
    if gt.durations is not None:
        report["baselines"] = {
            "random_localisation": random_localisation_baseline(gt),
            "random_detection_f1": random_detection_baseline(gt.refs, theta),
        }
    return report


def upper_bound_violations(report: dict, tol: float = 1e-12) -> list[str]:
    """Localisation scores may never exceed the matching detection or spotting scores."""
    out = []
    det = report["detection"]["aggregate"]
    spot = report["spotting"]["per_keyword"]
    for method, loc in report["localisation"].items():
        a = loc["actual"]["aggregate"]
        for key in ("precision", "recall", "f1"):
            if a[key] is not None and det[key] is not None and a[key] > det[key] + tol:
                out.append(f"{method}: actual localisation {key} {a[key]:.4f} > detection {det[key]:.4f}")
        for row_l, row_s in zip(loc["spotting"]["per_keyword"], spot):
            for key in ("p_at_10", "p_at_n"):
                if row_l[key] is not None and row_l[key] > row_s[key] + tol:
                    out.append(f"{method}/{row_l['keyword']}: spotting localisation {key} > spotting {key}")
    return out
