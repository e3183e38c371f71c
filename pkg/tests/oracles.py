"""Independent reference implementations used only by the tests.

Everything here is written with plain loops over Python lists, deliberately
sharing no code with the package.
"""

import math

import numpy as np


def detection_counts(scores, refs, theta):
    U, V = len(scores), len(scores[0])
    out = []
    for w in range(V):
        tp = fp = fn = 0
        for u in range(U):
            said = scores[u][w] >= theta
            truth = bool(refs[u][w])
            if said and truth:
                tp += 1
            elif said:
                fp += 1
            elif truth:
                fn += 1
        out.append((tp, fp, fn))
    return out


def rates(tp, fp, fn):
    p = tp / (tp + fp) if tp + fp > 0 else None
    r = tp / (tp + fn) if tp + fn > 0 else None
    if p is None or r is None:
        return p, r, None
    return p, r, (2 * p * r / (p + r) if p + r > 0 else 0.0)


def macro(values):
    vals = [v for v in values if v is not None]
    return sum(vals) / len(vals) if vals else None


def ranked(scores, ids):
    idx = list(range(len(scores)))
    # bubble-free: repeated selection of the best remaining entry
    out = []
    while idx:
        best = idx[0]
        for i in idx[1:]:
            if scores[i] > scores[best] or (scores[i] == scores[best] and ids[i] < ids[best]):
                best = i
        out.append(best)
        idx.remove(best)
    return out


def precision_at(scores, refs, ids, k):
    order = ranked(scores, ids)[:k]
    return sum(1 for i in order if refs[i]) / k


def eer_bruteforce(scores, labels):
    """Evaluate FAR/FRR at every candidate threshold by counting, then interpolate."""
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    if not pos or not neg:
        return None
    cands = sorted(set(scores)) + [math.inf]
    pts = []
    for th in cands:
        far = sum(1 for s in neg if s >= th) / len(neg)
        frr = sum(1 for s in pos if s < th) / len(pos)
        pts.append((far, frr))
    for i, (far, frr) in enumerate(pts):
        if far == frr:
            return far
        if i + 1 < len(pts):
            far2, frr2 = pts[i + 1]
            if far > frr and far2 < frr2:
                # intersect the two line segments parameterised on [0, 1]
                a = far - frr
                b = far2 - frr2
                lam = a / (a - b)
                return far + lam * (far2 - far)
    raise AssertionError("no crossing")


def inside(tau, spans):
    for s, e in spans:
        if s <= tau and tau <= e:
            return True
    return False


def oracle_accuracy(taus, refs, spans):
    hits = total = 0
    for u in range(len(refs)):
        for w in range(len(refs[u])):
            if refs[u][w]:
                total += 1
                if inside(taus[u][w], spans[u][w]):
                    hits += 1
    return hits / total if total else None


def actual_counts(scores, taus, refs, spans, theta):
    out = []
    for w in range(len(refs[0])):
        tp = fp = fn = 0
        for u in range(len(refs)):
            if scores[u][w] >= theta:
                if refs[u][w] and inside(taus[u][w], spans[u][w]):
                    tp += 1
                else:
                    fp += 1
            elif refs[u][w]:
                fn += 1
        out.append((tp, fp, fn))
    return out


def spotting_localisation(scores, taus, refs, spans, ids, w, k):
    col = [scores[u][w] for u in range(len(scores))]
    order = ranked(col, ids)[:k]
    good = 0
    for u in order:
        if refs[u][w] and inside(taus[u][w], spans[u][w]):
            good += 1
    return good / k


def cohen_kappa_textbook(a, b):
    """Kappa from the 2x2 contingency table."""
    n = len(a)
    n11 = sum(1 for x, y in zip(a, b) if x and y)
    n00 = sum(1 for x, y in zip(a, b) if not x and not y)
    n10 = sum(1 for x, y in zip(a, b) if x and not y)
    n01 = sum(1 for x, y in zip(a, b) if not x and y)
    po = (n11 + n00) / n
    row1, col1 = (n11 + n10) / n, (n11 + n01) / n
    pe = row1 * col1 + (1 - row1) * (1 - col1)
    return (po - pe) / (1 - pe)


def mfcc_reference(x, rate=16000, n_mels=40, n_ceps=13, nfft=512):
    """Frame-by-frame MFCC with explicit loops, the same conventions as the package."""
    x = [float(v) for v in x]
    y = [x[0]] + [x[i] - 0.97 * x[i - 1] for i in range(1, len(x))]
    win, hop = 400, 160
    if len(y) < win:
        y = y + [0.0] * (win - len(y))
    n_frames = 1 + (len(y) - win) // hop
    ham = [0.54 - 0.46 * math.cos(2 * math.pi * n / (win - 1)) for n in range(win)]

    def mel(f):
        return 2595.0 * math.log10(1 + f / 700.0)

    def hz(m):
        return 700.0 * (10 ** (m / 2595.0) - 1)

    top = mel(rate / 2)
    centres = [hz(top * i / (n_mels + 1)) for i in range(n_mels + 2)]
    bins = [k * rate / nfft for k in range(nfft // 2 + 1)]
    fb = []
    for m in range(1, n_mels + 1):
        lo, c, hi = centres[m - 1], centres[m], centres[m + 1]
        row = []
        for f in bins:
            if lo <= f <= c:
                row.append((f - lo) / (c - lo))
            elif c < f <= hi:
                row.append((hi - f) / (hi - c))
            else:
                row.append(0.0)
        fb.append(row)
    fb = np.array(fb)
    ceps = []
    for t in range(n_frames):
        frame = np.array([y[t * hop + n] * ham[n] for n in range(win)] + [0.0] * (nfft - win))
        spec = np.fft.fft(frame)[: nfft // 2 + 1]
        power = spec.real ** 2 + spec.imag ** 2
        logmel = np.log(np.maximum(fb @ power, 1e-10))
        row = []
        for k in range(n_ceps):
            scale = math.sqrt(1.0 / n_mels) if k == 0 else math.sqrt(2.0 / n_mels)
            row.append(scale * sum(logmel[m] * math.cos(math.pi * k * (2 * m + 1) / (2 * n_mels)) for m in range(n_mels)))
        ceps.append(row)
    ceps = np.array(ceps)

    def delta(c):
        T = len(c)
        out = np.zeros_like(c)
        for t in range(T):
            acc = 0.0
            for n in (1, 2):
                acc = acc + n * (c[min(t + n, T - 1)] - c[max(t - n, 0)])
            out[t] = acc / 10.0
        return out

    d1 = delta(ceps)
    d2 = delta(d1)
    feats = np.hstack([ceps, d1, d2])
    mu = feats.mean(axis=0)
    sd = feats.std(axis=0)
    sd[sd <= 1e-8] = 1.0
    return (feats - mu) / sd
