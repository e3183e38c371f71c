"""Static figures: per-keyword F1 bars and localisation score tracks."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_per_keyword_f1(report: dict, path, method: str | None = None):
    """Detection F1 per keyword, with actual-localisation F1 overlaid when available.

    Keywords with undefined F1 (nothing detected) are left out, and their
    count is given in the title.
    """
    rows = report["detection"]["per_keyword"]
    if method is None and report.get("localisation"):
        method = sorted(report["localisation"])[0]
    loc_rows = report["localisation"][method]["actual"]["per_keyword"] if method else None
    keep = [i for i, r in enumerate(rows) if r["f1"] is not None]
    order = sorted(keep, key=lambda i: -rows[i]["f1"])
    x = np.arange(len(order))
    fig, ax = plt.subplots(figsize=(max(6, 0.3 * len(order) + 2), 4))
    ax.bar(x, [rows[i]["f1"] for i in order], color="tab:blue", label="detection")
    if loc_rows is not None:
        ax.bar(x, [loc_rows[i]["f1"] or 0.0 for i in order], width=0.5, color="tab:orange",
               label=f"actual localisation ({method})")
    ax.set_xticks(x)
    ax.set_xticklabels([rows[i]["keyword"] for i in order], rotation=90, fontsize=7)
    ax.set_ylim(0, 1)
    ax.set_ylabel("F1")
    ax.set_title(f"Per-keyword F1 ({len(rows) - len(keep)} keywords never detected)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_score_tracks(scores_path, manifest, out_dir, n_utterances: int = 3):
    """For the first few test utterances, the score track of each keyword present, with its aligned span."""
    rows = [json.loads(ln) for ln in Path(scores_path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    vocab = manifest.vocabulary
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for rec in manifest.split("test")[:n_utterances]:
        present = sorted(rec.present_keywords(vocab))
        mine = [r for r in rows if r["utt_id"] == rec.id and vocab.index(r["keyword"]) in present]
        if not mine:
            continue
        methods = sorted({r["method"] for r in mine})
        fig, axes = plt.subplots(len(methods), 1, figsize=(8, 2.2 * len(methods)), squeeze=False)
        for ax, method in zip(axes[:, 0], methods):
            for r in (r for r in mine if r["method"] == method):
                line = ax.plot(r["times_s"], r["scores"], marker=".", ms=3, label=r["keyword"])[0]
                for s, e in rec.alignment.intervals(r["keyword"]) if rec.alignment else []:
                    ax.axvspan(s, e, color=line.get_color(), alpha=0.15)
            ax.set_ylabel(method, fontsize=8)
            ax.legend(fontsize=7, loc="upper right")
        axes[-1, 0].set_xlabel("time (s)")
        fig.suptitle(rec.id, fontsize=9)
        fig.tight_layout()
        path = out_dir / f"tracks_{rec.id}.png"
        fig.savefig(path, dpi=100)
        plt.close(fig)
        written.append(path)
    return written


def plot_kappa_matrix(K, row_labels, col_labels, path):
    fig, ax = plt.subplots(figsize=(0.25 * len(col_labels) + 3, 0.25 * len(row_labels) + 2))
    im = ax.imshow(np.ma.masked_invalid(K), cmap="viridis", vmin=-1, vmax=1)
    ax.set_xticks(range(len(col_labels)))
    ax.set_xticklabels(col_labels, rotation=90, fontsize=6)
    ax.set_yticks(range(len(row_labels)))
    ax.set_yticklabels(row_labels, fontsize=6)
    fig.colorbar(im, ax=ax, label="normalised kappa")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
