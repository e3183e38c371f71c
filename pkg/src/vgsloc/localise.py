"""Keyword localisation scores from a trained detector.

Every method yields a score per position (an encoder step, or a segment for
the masking methods) together with the time in seconds of each position.
The predicted location is the earliest position with the highest score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import LocalisationError
from .features import FeatureSequence
from .model import ForwardTrace, VGSModel, collate, forward_batch

METHODS = ("gradcam", "score_agg", "attention", "masked_in", "masked_out")


@dataclass
class LocalisationScores:
    method: str
    keyword: int
    scores: np.ndarray
    times: np.ndarray  # seconds, one per score
    spans: np.ndarray | None = None  # segment (start_s, end_s) rows for the masking methods

    def time_of(self, index: int) -> float:
        return float(self.times[index])


def argmax_location(loc: LocalisationScores) -> float:
    if len(loc.scores) == 0:
        raise LocalisationError("cannot locate a keyword from empty scores")
    return loc.time_of(int(np.argmax(loc.scores)))  # np.argmax returns the first maximum


def step_times(n_steps: int, downsample: int, hop_s: float, n_frames: int | None = None) -> np.ndarray:
    """Centre of each encoder step's block of input frames.

    With ``n_frames`` given, a final block cut short by the end of the
    utterance is centred on the frames it actually covers.
    """
    start = np.arange(n_steps) * downsample
    end = start + downsample
    if n_frames:
        end = np.minimum(end, n_frames)
    return (start + end) / 2 * hop_s


def locate_attention(trace: ForwardTrace, w: int) -> LocalisationScores:
    if trace.attention is None:
        raise LocalisationError("attention localisation needs an attention architecture")
    scores = trace.attention[w]
    times = step_times(len(scores), trace.downsample_factor, trace.frame_hop_s, trace.n_frames)
    return LocalisationScores("attention", w, scores, times)


def locate_score_agg(trace: ForwardTrace, w: int, architecture: str = "PSC") -> LocalisationScores:
    if architecture != "PSC" or trace.H.shape[0] <= w:
        raise LocalisationError("score aggregation needs the PSC architecture")
    scores = trace.H[w]
    times = step_times(len(scores), trace.downsample_factor, trace.frame_hop_s, trace.n_frames)
    return LocalisationScores("score_agg", w, scores, times)


def gradcam_maps(model: VGSModel, f: FeatureSequence, keywords=None):
    """Grad-CAM for the given keywords (all by default).

    Returns ``(maps, gammas, H)`` with ``maps[i]`` of length T' and
    ``gammas[i]`` the per-filter mean gradient of the detection probability.
    Gradients are taken with respect to the encoder output only, so the
    model's parameters and their ``.grad`` fields are untouched.
    """
    dtype = next(model.parameters()).dtype
    keywords = range(model.cfg.V) if keywords is None else list(keywords)
    was_training = model.training
    model.eval()
    try:
        x, mask = collate([f.values], dtype)
        with torch.no_grad():
            H0, hmask = model.encode(x, mask)
        H = H0.detach().requires_grad_(True)
        y = torch.sigmoid(model.head(H, hmask)[0])[0]
        maps, gammas = [], []
        for w in keywords:
            (g,) = torch.autograd.grad(y[w], H, retain_graph=True)
            gamma = g[0].mean(dim=1)  # E
            maps.append(torch.relu(gamma @ H[0]).detach().double().numpy())
            gammas.append(gamma.double().numpy())
    finally:
        model.train(was_training)
    return maps, gammas, H0[0].double().numpy()


def locate_gradcam(model: VGSModel, f: FeatureSequence, w: int) -> LocalisationScores:
    maps, _, _ = gradcam_maps(model, f, [w])
    times = step_times(len(maps[0]), model.cfg.downsample_factor, f.frame_hop_s, f.T)
    return LocalisationScores("gradcam", w, maps[0], times)


@dataclass(frozen=True)
class MaskConfig:
    min_s: float = 0.2
    max_s: float = 0.6
    step_s: float = 0.1
    overlap_s: float = 0.03


def segments(n_frames: int, hop_s: float, mcfg: MaskConfig = MaskConfig()) -> list[tuple[int, int]]:
    """Frame spans [a, b) of every width on the grid, consecutive ones overlapping.

    For each width the stride is ``width - overlap``. A final partial segment
    is kept when it is at least the minimum width long; otherwise a
    full-width segment aligned to the utterance end is used instead, so the
    segments always cover the whole utterance. Spans are ordered by midpoint.
    """
    min_f = int(round(mcfg.min_s / hop_s))
    if n_frames < min_f:
        raise LocalisationError(f"utterance of {n_frames * hop_s:.3f}s is shorter than the minimum segment {mcfg.min_s}s")
    overlap = int(round(mcfg.overlap_s / hop_s))
    n_widths = int(round((mcfg.max_s - mcfg.min_s) / mcfg.step_s)) + 1
    widths = sorted({int(round((mcfg.min_s + i * mcfg.step_s) / hop_s)) for i in range(n_widths)})
    out = []
    for width in widths:
        stride = max(1, width - overlap)
        a = 0
        while True:
            b = a + width
            if b >= n_frames:
                if n_frames - a >= min_f:
                    out.append((a, n_frames))
                else:
                    out.append((max(0, n_frames - width), n_frames))
                break
            out.append((a, b))
            a += stride
    return sorted(set(out), key=lambda ab: (ab[0] + ab[1], ab[1] - ab[0]))


def _masked_scores(model, f, spans, mode, keywords, batch_size):
    mask = np.zeros((len(spans), f.T, 1), dtype=np.float32)
    for i, (a, b) in enumerate(spans):
        mask[i, a:b] = 1.0
    if mode == "out":
        mask = 1.0 - mask
    inputs = [FeatureSequence(f.values * m, f.frame_hop_s, f.frame_window_s) for m in mask]
    y = np.stack([t.y_hat for t in forward_batch(model, inputs, batch_size)])  # n_seg x V
    y = y[:, keywords]
    return y if mode == "in" else 1.0 - y


def locate_masked(model: VGSModel, f: FeatureSequence, w, mode: str = "in", mcfg: MaskConfig = MaskConfig(),
                  batch_size: int = 64):
    """Score zero-padded segments (``in``) or the utterance with a segment zeroed (``out``).

    ``w`` may be a single keyword index or a list; a list returns one
    LocalisationScores per keyword from the same forward passes.
    """
    if mode not in ("in", "out"):
        raise LocalisationError(f"unknown masking mode {mode!r}")
    single = np.isscalar(w)
    keywords = [int(w)] if single else [int(k) for k in w]
    spans = segments(f.T, f.frame_hop_s, mcfg)
    scores = _masked_scores(model, f, spans, mode, keywords, batch_size)
    span_s = np.asarray(spans, dtype=np.float64) * f.frame_hop_s
    mids = span_s.mean(axis=1)
    out = [LocalisationScores(f"masked_{mode}", k, scores[:, i], mids, span_s) for i, k in enumerate(keywords)]
    return out[0] if single else out


def applicable_methods(architecture: str) -> list[str]:
    methods = ["gradcam", "masked_in", "masked_out"]
    if architecture == "PSC":
        methods.append("score_agg")
    if architecture in ("CNN-Attend", "CNN-PoolAttend"):
        methods.append("attention")
    return sorted(methods, key=METHODS.index)


def localise_utterance(model: VGSModel, f: FeatureSequence, methods, trace: ForwardTrace | None = None,
                       mcfg: MaskConfig = MaskConfig()) -> tuple[ForwardTrace, dict]:
    """All requested methods for all keywords: ``{method: [LocalisationScores per keyword]}``."""
    trace = trace or forward_batch(model, [f])[0]
    V = model.cfg.V
    out = {}
    for method in methods:
        if method == "attention":
            out[method] = [locate_attention(trace, w) for w in range(V)]
        elif method == "score_agg":
            out[method] = [locate_score_agg(trace, w, model.cfg.architecture) for w in range(V)]
        elif method == "gradcam":
            maps, _, _ = gradcam_maps(model, f)
            times = step_times(len(maps[0]), model.cfg.downsample_factor, f.frame_hop_s, f.T)
            out[method] = [LocalisationScores("gradcam", w, m, times) for w, m in enumerate(maps)]
        elif method in ("masked_in", "masked_out"):
            out[method] = locate_masked(model, f, list(range(V)), method.split("_")[1], mcfg)
        else:
            raise LocalisationError(f"unknown localisation method {method!r}")
    return trace, out
