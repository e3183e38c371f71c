"""MFCC extraction, SpecAugment-style masking and the binary feature file format."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fft import dct

from .errors import FeatureError

SAMPLE_RATE = 16000
MAGIC = b"VGSF"
VERSION = 1
_HEADER = struct.Struct("<4sIIIdd")


@dataclass
class FeatureSequence:
    values: np.ndarray  # T x F
    frame_hop_s: float = 0.01
    frame_window_s: float = 0.025

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise FeatureError(f"feature matrix must be T x F with T >= 1, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise FeatureError("feature matrix contains non-finite values")

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def F(self) -> int:
        return self.values.shape[1]

    @property
    def duration_s(self) -> float:
        return self.T * self.frame_hop_s


@dataclass(frozen=True)
class MFCCConfig:
    sample_rate: int = SAMPLE_RATE
    window_s: float = 0.025
    hop_s: float = 0.010
    n_fft: int = 512
    n_mels: int = 40
    n_ceps: int = 13
    preemphasis: float = 0.97
    f_min: float = 0.0
    f_max: float | None = None
    delta_window: int = 2
    floor: float = 1e-10
    normalise: bool = True


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: MFCCConfig) -> np.ndarray:
    f_max = cfg.f_max if cfg.f_max is not None else cfg.sample_rate / 2
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(f_max), cfg.n_mels + 2))
    freqs = np.arange(cfg.n_fft // 2 + 1) * cfg.sample_rate / cfg.n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lo) / (mid - lo)
    falling = (hi - freqs[None, :]) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


def deltas(x: np.ndarray, N: int = 2) -> np.ndarray:
    """Regression deltas along time with edge replication."""
    T = x.shape[0]
    padded = np.pad(x, ((N, N), (0, 0)), mode="edge")
    num = np.zeros_like(x)
    for n in range(1, N + 1):
        num += n * (padded[N + n : N + n + T] - padded[N - n : N - n + T])
    return num / (2 * sum(n * n for n in range(1, N + 1)))


def compute_mfcc(waveform, sample_rate: int = SAMPLE_RATE, cfg: MFCCConfig | None = None) -> FeatureSequence:
    """13 cepstra plus deltas and delta-deltas, normalised per utterance."""
    cfg = cfg or MFCCConfig()
    x = np.asarray(waveform, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise FeatureError("waveform must be a non-empty 1-D array")
    if not np.all(np.isfinite(x)):
        raise FeatureError("waveform contains non-finite samples")
    if sample_rate != cfg.sample_rate:
        raise FeatureError(f"expected {cfg.sample_rate} Hz audio, got {sample_rate} Hz; resample first")

    win = int(round(cfg.window_s * cfg.sample_rate))
    hop = int(round(cfg.hop_s * cfg.sample_rate))
    x = np.append(x[0], x[1:] - cfg.preemphasis * x[:-1])
    if x.size < win:
        x = np.pad(x, (0, win - x.size))
    n_frames = 1 + (x.size - win) // hop
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx] * np.hamming(win)[None, :]
    power = np.abs(np.fft.rfft(frames, n=cfg.n_fft, axis=1)) ** 2
    mel = np.log(np.maximum(power @ mel_filterbank(cfg).T, cfg.floor))
    ceps = dct(mel, type=2, axis=1, norm="ortho")[:, : cfg.n_ceps]
    d1 = deltas(ceps, cfg.delta_window)
    d2 = deltas(d1, cfg.delta_window)
    feats = np.concatenate([ceps, d1, d2], axis=1)
    if cfg.normalise:
        feats = feats - feats.mean(axis=0, keepdims=True)
        std = feats.std(axis=0, keepdims=True)
        feats = feats / np.where(std > 1e-8, std, 1.0)
    return FeatureSequence(feats.astype(np.float32), cfg.hop_s, cfg.window_s)


@dataclass(frozen=True)
class AugmentConfig:
    n_freq_masks: int = 2
    max_freq_width: int = 8
    n_time_masks: int = 2
    max_time_frac: float = 0.1
    time_warp: bool = False  # accepted for config compatibility; warping is not implemented


def spec_augment(f: FeatureSequence, acfg: AugmentConfig, rng: np.random.Generator, return_mask: bool = False):
    """Replace random frequency and time blocks by the per-coefficient mean.

    Widths are drawn uniformly from ``0..max`` and start positions uniformly
    over the valid range, so a mask may be empty.
    """
    if acfg.time_warp:
        raise FeatureError("time warping is not supported")
    values = f.values.copy()
    T, F = values.shape
    mask = np.zeros((T, F), dtype=bool)
    for _ in range(acfg.n_freq_masks):
        w = int(rng.integers(0, min(acfg.max_freq_width, F) + 1))
        s = int(rng.integers(0, F - w + 1))
        mask[:, s : s + w] = True
    max_t = int(np.floor(acfg.max_time_frac * T))
    for _ in range(acfg.n_time_masks):
        w = int(rng.integers(0, max_t + 1))
        s = int(rng.integers(0, T - w + 1))
        mask[s : s + w, :] = True
    if mask.any():
        mean = np.broadcast_to(values.mean(axis=0, keepdims=True), values.shape)
        values[mask] = mean[mask]
    out = FeatureSequence(values, f.frame_hop_s, f.frame_window_s)
    return (out, mask) if return_mask else out


def write_features(path, f: FeatureSequence):
    header = _HEADER.pack(MAGIC, VERSION, f.T, f.F, f.frame_hop_s, f.frame_window_s)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f.values, dtype="<f4").tobytes())


def read_features(path) -> FeatureSequence:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FeatureError(f"{path}: truncated header")
    magic, version, T, F, hop, window = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FeatureError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FeatureError(f"{path}: unsupported version {version}")
    body = data[_HEADER.size :]
    if len(body) != 4 * T * F:
        raise FeatureError(f"{path}: expected {T}x{F} floats, found {len(body) // 4}")
    values = np.frombuffer(body, dtype="<f4").reshape(T, F).astype(np.float32)
    return FeatureSequence(values, hop, window)


def read_wav(path) -> tuple[np.ndarray, int]:
    """Load a mono waveform as float64 in [-1, 1]; multi-channel audio is averaged."""
    from scipy.io import wavfile

    rate, data = wavfile.read(path)
    if np.issubdtype(data.dtype, np.integer):
        data = data.astype(np.float64) / np.iinfo(data.dtype).max
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 2:
        data = data.mean(axis=1)
    return data, int(rate)


def resample(waveform: np.ndarray, rate: int, target: int = SAMPLE_RATE) -> np.ndarray:
    if rate == target:
        return waveform
    from math import gcd

    from scipy.signal import resample_poly

    g = gcd(rate, target)
    return resample_poly(waveform, target // g, rate // g)
