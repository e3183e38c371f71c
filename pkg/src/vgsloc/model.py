"""Audio networks built as classifier . pooling . encoder.

Padded batches carry a boolean frame mask (True = real frame). Encoders zero
out padded positions after every layer, and every pooling operator ignores
them, so padding never changes an utterance's outputs.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ModelConfigError

ARCHITECTURES = ("PSC", "CNN-Pool", "CNN-Attend", "CNN-PoolAttend")

CNN_KERNELS = (9, 11, 11, 11, 11, 11)
CNN_PADDING = (4, 5, 5, 5, 5, 5)
CNN_CHANNELS = (96, 96, 96, 96, 96, 1000)
CNN_POOL_KERNELS = (9, 11, 11)
CNN_POOL_CHANNELS = (64, 256, 1024)


@dataclass
class ModelConfig:
    architecture: str = "CNN-Attend"
    V: int = 67
    F: int = 39
    r: float = 1.0
    clf_hidden: int = 4096
    E: int | None = None
    channels: tuple[int, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ModelConfigError(f"unknown architecture {self.architecture!r}; choose from {ARCHITECTURES}")
        if self.V < 1 or self.F < 1 or self.clf_hidden < 1:
            raise ModelConfigError("V, F and clf_hidden must be positive")
        if self.architecture == "PSC" and not self.r > 0:
            raise ModelConfigError("log-mean-exp temperature r must be positive")
        if self.channels is None:
            if self.encoder_type == "CNN":
                chans = list(CNN_CHANNELS)
                if self.architecture == "PSC":
                    chans[-1] = self.V
            else:
                chans = list(CNN_POOL_CHANNELS)
            self.channels = tuple(chans)
        self.channels = tuple(int(c) for c in self.channels)
        n_layers = len(CNN_KERNELS) if self.encoder_type == "CNN" else len(CNN_POOL_KERNELS)
        if len(self.channels) != n_layers:
            raise ModelConfigError(f"{self.encoder_type} encoder needs {n_layers} channel counts, got {len(self.channels)}")
        if self.architecture == "PSC" and self.channels[-1] != self.V:
            raise ModelConfigError(f"PSC needs final encoder channels == V ({self.channels[-1]} != {self.V})")
        if self.uses_attention:
            if self.E is None:
                self.E = self.channels[-1]
            elif self.E != self.channels[-1]:
                raise ModelConfigError(f"query embedding size E={self.E} must equal encoder output channels {self.channels[-1]}")
        else:
            self.E = self.channels[-1]

    @property
    def encoder_type(self) -> str:
        return "CNN-Pool" if self.architecture in ("CNN-Pool", "CNN-PoolAttend") else "CNN"

    @property
    def uses_attention(self) -> bool:
        return self.architecture in ("CNN-Attend", "CNN-PoolAttend")

    @property
    def downsample_factor(self) -> int:
        return 9 if self.encoder_type == "CNN-Pool" else 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if d.get("channels") is not None:
            d["channels"] = tuple(d["channels"])
        return cls(**d)


def output_length(T: int, encoder_type: str) -> int:
    """Number of encoder steps for T input frames."""
    if encoder_type == "CNN-Pool":
        return math.ceil(math.ceil(T / 3) / 3)
    return T


def _pool_mask(mask: torch.Tensor) -> torch.Tensor:
    return F.max_pool1d(mask.float().unsqueeze(1), 3, 3, ceil_mode=True).squeeze(1) > 0


class CNNEncoder(nn.Module):
    """Six stride-1 conv layers; ``linear_last`` leaves the final layer without ReLU."""

    def __init__(self, F_in, channels, linear_last=False):
        super().__init__()
        ins = (F_in,) + tuple(channels[:-1])
        self.convs = nn.ModuleList(
            nn.Conv1d(i, o, k, padding=p) for i, o, k, p in zip(ins, channels, CNN_KERNELS, CNN_PADDING)
        )
        self.linear_last = linear_last

    def forward(self, x, mask):
        m = mask.unsqueeze(1).to(x.dtype)
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if not (self.linear_last and i == len(self.convs) - 1):
                x = F.relu(x)
            x = x * m
        return x, mask


class CNNPoolEncoder(nn.Module):
    """Three conv layers with max-pooling over 3 steps after the first two."""

    def __init__(self, F_in, channels):
        super().__init__()
        ins = (F_in,) + tuple(channels[:-1])
        self.convs = nn.ModuleList(
            nn.Conv1d(i, o, k, padding=k // 2) for i, o, k in zip(ins, channels, CNN_POOL_KERNELS)
        )

    def forward(self, x, mask):
        for i, conv in enumerate(self.convs):
            x = F.relu(conv(x)) * mask.unsqueeze(1).to(x.dtype)
            if i < 2:
                # ReLU output is >= 0 and padding is 0, so padding never wins the max
                x = F.max_pool1d(x, 3, 3, ceil_mode=True)
                mask = _pool_mask(mask)
        return x, mask


def masked_log_mean_exp(H, mask, r):
    """(1/r) log mean_t exp(r H) over valid steps. H: B x E x T, mask: B x T."""
    z = (r * H).masked_fill(~mask.unsqueeze(1), float("-inf"))
    n = mask.sum(dim=1, keepdim=True).to(H.dtype)
    return (torch.logsumexp(z, dim=2) - torch.log(n)) / r


def masked_max(H, mask):
    return H.masked_fill(~mask.unsqueeze(1), float("-inf")).amax(dim=2)


def attention(H, mask, queries):
    """Softmax over time of q_w . h_t for every keyword. Returns weights B x V x T."""
    e = torch.einsum("ve,bet->bvt", queries, H)
    e = e.masked_fill(~mask.unsqueeze(1), float("-inf"))
    return torch.softmax(e, dim=2)


class VGSModel(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        if cfg.encoder_type == "CNN":
            self.encoder = CNNEncoder(cfg.F, cfg.channels, linear_last=cfg.architecture == "PSC")
        else:
            self.encoder = CNNPoolEncoder(cfg.F, cfg.channels)
        E = cfg.channels[-1]
        if cfg.uses_attention:
            self.queries = nn.Embedding(cfg.V, E)
            self.classifier = nn.Sequential(nn.Linear(E, cfg.clf_hidden), nn.ReLU(), nn.Linear(cfg.clf_hidden, 1))
        elif cfg.architecture == "CNN-Pool":
            self.classifier = nn.Sequential(nn.Linear(E, cfg.clf_hidden), nn.ReLU(), nn.Linear(cfg.clf_hidden, cfg.V))

    def encode(self, x, mask):
        """x: B x F x T features, mask: B x T. Returns H (B x E x T') and its mask."""
        return self.encoder(x, mask)

    def head(self, H, mask):
        """Pooling and classifier. Returns pre-sigmoid scores B x V and attention (or None)."""
        arch = self.cfg.architecture
        if arch == "PSC":
            return masked_log_mean_exp(H, mask, self.cfg.r), None
        if arch == "CNN-Pool":
            return self.classifier(masked_max(H, mask)), None
        alpha = attention(H, mask, self.queries.weight)
        context = torch.einsum("bvt,bet->bve", alpha, H)
        return self.classifier(context).squeeze(-1), alpha

    def forward(self, x, mask=None):
        if mask is None:
            mask = torch.ones(x.shape[0], x.shape[2], dtype=torch.bool, device=x.device)
        H, hmask = self.encode(x, mask)
        logits, alpha = self.head(H, hmask)
        return logits, H, hmask, alpha


def build_model(cfg: ModelConfig) -> VGSModel:
    """Construct a model with seeded (PyTorch default fan-in uniform) initialisation."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.seed)
        model = VGSModel(cfg)
    return model


def collate(seqs, dtype=torch.float32):
    """Pad T_i x F arrays into a B x F x T tensor plus a B x T validity mask."""
    T = max(s.shape[0] for s in seqs)
    Fdim = seqs[0].shape[1]
    x = torch.zeros(len(seqs), Fdim, T, dtype=dtype)
    mask = torch.zeros(len(seqs), T, dtype=torch.bool)
    for i, s in enumerate(seqs):
        x[i, :, : s.shape[0]] = torch.as_tensor(np.asarray(s).T, dtype=dtype)
        mask[i, : s.shape[0]] = True
    return x, mask


@dataclass
class ForwardTrace:
    y_hat: np.ndarray  # V
    H: np.ndarray  # E x T'
    attention: np.ndarray | None  # V x T'
    downsample_factor: int
    frame_hop_s: float
    logits: np.ndarray = field(repr=False, default=None)
    n_frames: int = 0

    def time_of(self, index):
        d = self.downsample_factor
        start = np.asarray(index) * d
        end = np.minimum(start + d, self.n_frames) if self.n_frames else start + d
        return (start + end) / 2 * self.frame_hop_s


def _check_features(model, f):
    from .errors import FeatureError

    if f.T < 1:
        raise FeatureError("empty feature sequence")
    if f.F != model.cfg.F:
        raise FeatureError(f"feature dimension {f.F} does not match model F={model.cfg.F}")


def forward_batch(model: VGSModel, feats, batch_size: int = 64) -> list[ForwardTrace]:
    """Run inference on FeatureSequences in padded batches."""
    dtype = next(model.parameters()).dtype
    traces = []
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            for start in range(0, len(feats), batch_size):
                chunk = feats[start : start + batch_size]
                for f in chunk:
                    _check_features(model, f)
                x, mask = collate([f.values for f in chunk], dtype)
                logits, H, hmask, alpha = model(x, mask)
                y = torch.sigmoid(logits)
                for i, f in enumerate(chunk):
                    n = int(hmask[i].sum())
                    traces.append(
                        ForwardTrace(
                            y_hat=y[i].double().numpy(),
                            H=H[i, :, :n].double().numpy(),
                            attention=None if alpha is None else alpha[i, :, :n].double().numpy(),
                            downsample_factor=model.cfg.downsample_factor,
                            frame_hop_s=f.frame_hop_s,
                            logits=logits[i].double().numpy(),
                            n_frames=f.T,
                        )
                    )
    finally:
        model.train(was_training)
    return traces


def forward(model: VGSModel, f) -> ForwardTrace:
    return forward_batch(model, [f])[0]


def pool_log_mean_exp(H, r: float) -> np.ndarray:
    """Row-wise (1/r) log mean_t exp(r H_t), stabilised by subtracting the row max."""
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    if H.shape[1] < 1:
        raise ValueError("need at least one time step")
    if not r > 0:
        raise ValueError("r must be positive")
    m = H.max(axis=1, keepdims=True)
    return (m + np.log(np.mean(np.exp(r * (H - m)), axis=1, keepdims=True)) / r)[:, 0]


def attention_weights(H, q) -> np.ndarray:
    """Softmax over time of the dot product between the query and each column of H."""
    H = np.asarray(H, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if H.shape[0] != q.shape[0]:
        raise ValueError(f"query size {q.shape[0]} does not match embedding size {H.shape[0]}")
    e = q @ H
    e = np.exp(e - e.max())
    return e / e.sum()


def parameter_digest(model: nn.Module) -> str:
    import hashlib

    h = hashlib.sha256()
    for name, p in sorted(model.state_dict().items()):
        h.update(name.encode())
        h.update(p.detach().cpu().numpy().tobytes())
    return h.hexdigest()
