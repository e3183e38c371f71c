"""Normalised Cohen's kappa for keyword co-occurrence across languages."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricError


@dataclass(frozen=True)
class KappaResult:
    p_o: float
    p_e: float
    p_max: float
    kappa: float | None
    kappa_max: float | None
    kappa_norm: float | None
    degenerate: bool


def normalised_kappa(a, b) -> KappaResult:
    """Kappa divided by the largest kappa the two marginals allow.

    Degenerate inputs (chance agreement of 1, or a zero maximum) yield
    ``None`` for the undefined quantities and ``degenerate=True``.
    """
    a = np.asarray(a).astype(bool)
    b = np.asarray(b).astype(bool)
    if a.shape != b.shape or a.ndim != 1:
        raise MetricError(f"kappa needs two 1-D vectors of equal length, got {a.shape} and {b.shape}")
    if a.size == 0:
        raise MetricError("kappa needs non-empty vectors")
    p_o = float(np.mean(a == b))
    pa1, pb1 = float(a.mean()), float(b.mean())
    pa0, pb0 = 1.0 - pa1, 1.0 - pb1
    p_e = pa1 * pb1 + pa0 * pb0
    p_max = min(pa1, pb1) + min(pa0, pb0)
    if p_e == 1.0:
        return KappaResult(p_o, p_e, p_max, None, None, None, True)
    kappa = (p_o - p_e) / (1.0 - p_e)
    kappa_max = (p_max - p_e) / (1.0 - p_e)
    if kappa_max == 0.0:
        return KappaResult(p_o, p_e, p_max, kappa, kappa_max, None, True)
    return KappaResult(p_o, p_e, p_max, kappa, kappa_max, kappa / kappa_max, False)


def presence_table(records, vocab) -> np.ndarray:
    table = np.zeros((len(records), len(vocab)), dtype=bool)
    for u, rec in enumerate(records):
        for w in rec.present_keywords(vocab):
            table[u, w] = True
    return table


def cooccurrence_matrix(table_a, ids_a, table_b, ids_b) -> dict:
    """Normalised kappa between every column of ``table_a`` and every column of ``table_b``.

    Rows of ``table_b`` are re-ordered to follow ``ids_a``; the id sets must match.
    Undefined entries are NaN.
    """
    if sorted(ids_a) != sorted(ids_b) or len(set(ids_a)) != len(ids_a):
        raise MetricError("co-occurrence tables must cover the same sample ids")
    pos = {sid: i for i, sid in enumerate(ids_b)}
    table_b = np.asarray(table_b)[[pos[s] for s in ids_a]]
    table_a = np.asarray(table_a)
    n_a, n_b = table_a.shape[1], table_b.shape[1]
    K = np.full((n_a, n_b), np.nan)
    for i in range(n_a):
        for j in range(n_b):
            k = normalised_kappa(table_a[:, i], table_b[:, j]).kappa_norm
            if k is not None:
                K[i, j] = k
    stats = {}
    if n_a == n_b:
        diag = np.diag(K)
        off = K[~np.eye(n_a, dtype=bool)]
        stats = {
            "diagonal_mean": _nanmean(diag),
            "off_diagonal_mean": _nanmean(off),
            "row_argmax_on_diagonal": float(np.mean([
                not np.all(np.isnan(row)) and int(np.nanargmax(row)) == i for i, row in enumerate(K)
            ])),
        }
    return {"matrix": K, "stats": stats}


def _nanmean(x):
    x = np.asarray(x, dtype=np.float64)
    return float(np.nanmean(x)) if np.any(~np.isnan(x)) else None
