import json
import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from vgsloc.corpus import Vocabulary
from vgsloc.errors import CheckpointError, VGSError
from vgsloc.model import ModelConfig, build_model, collate, forward_batch, parameter_digest
from vgsloc.toygen import ToyConfig, generate_toy_corpus
from vgsloc.train import (
    TrainConfig,
    bce_loss,
    load_checkpoint,
    load_split,
    read_checkpoint_meta,
    save_checkpoint,
    train,
    warm_start,
)

TINY = (8, 8, 8, 8, 8, 16)


@pytest.fixture(scope="module")
def toy(tmp_path_factory):
    return generate_toy_corpus(ToyConfig(V=4, n_train=24, n_dev=8, n_test=8, seed=1), tmp_path_factory.mktemp("toy"))


def tiny_model(V=4, seed=0, arch="CNN-Attend"):
    chans = (8, 8, 16) if "Pool" in arch else TINY
    return build_model(ModelConfig(arch, V=V, F=39, channels=chans, clf_hidden=16, seed=seed))


def test_bce_closed_forms():
    assert bce_loss([1.0, 0.0], [1.0, 0.0]) == pytest.approx(0.0, abs=1e-6)
    assert bce_loss([0.5, 0.5], [1.0, 0.0]) == pytest.approx(math.log(2))
    assert bce_loss([0.9], [0.9]) == pytest.approx(-(0.9 * math.log(0.9) + 0.1 * math.log(0.1)))
    assert bce_loss([0.9], [0.9]) == pytest.approx(0.3251, abs=1e-4)


def test_bce_finite_at_extremes():
    assert np.isfinite(bce_loss([0.0, 1.0], [1.0, 0.0]))


def test_bce_length_mismatch():
    with pytest.raises(ValueError):
        bce_loss([0.5], [1.0, 0.0])


def test_bce_matches_training_loss():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=6)
    y = rng.random(6)
    torch_loss = F.binary_cross_entropy_with_logits(torch.as_tensor(logits), torch.as_tensor(y)).item()
    assert bce_loss(1 / (1 + np.exp(-logits)), y) == pytest.approx(torch_loss, abs=1e-9)


@pytest.mark.parametrize("kw", [dict(lr=0), dict(epochs=0), dict(kind="text")])
def test_bad_train_config(kw):
    with pytest.raises(VGSError):
        TrainConfig(**kw)


def test_loss_decreases_on_fixed_batch(toy):
    model = tiny_model()
    ex = load_split(toy, "train", "bow")[:16]
    x, mask = collate([e.features.values for e in ex])
    y = torch.as_tensor(np.stack([e.target for e in ex]), dtype=torch.float32)
    opt = torch.optim.Adam(model.parameters(), lr=1e-4)
    losses = []
    for _ in range(6):
        loss = F.binary_cross_entropy_with_logits(model(x, mask)[0], y)
        losses.append(loss.item())
        opt.zero_grad()
        loss.backward()
        opt.step()
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_same_seed_same_log(toy, tmp_path):
    cfg = TrainConfig(epochs=3, batch_size=8, seed=5)
    a = train(tiny_model(), toy, cfg, log_path=tmp_path / "a.jsonl")
    b = train(tiny_model(), toy, cfg, log_path=tmp_path / "b.jsonl")

    def strip(path):
        return [{k: v for k, v in json.loads(l).items() if k != "wall_s"} for l in path.read_text().splitlines()]

    assert strip(tmp_path / "a.jsonl") == strip(tmp_path / "b.jsonl")
    assert len(a.log) == 3
    assert parameter_digest(a.model) == parameter_digest(b.model)


def test_best_epoch_is_kept(toy):
    res = train(tiny_model(), toy, TrainConfig(epochs=4, batch_size=8, lr=1e-3))
    f1s = [e["dev_f1"] for e in res.log]
    assert res.best_epoch == 1 + int(np.argmax(f1s))
    assert res.best_dev_f1 == max(f1s)


def test_visual_kind_needs_tags(toy):
    from vgsloc.corpus import CorpusManifest, UtteranceRecord

    recs = [UtteranceRecord(r.id, r.split, r.language, features=r.features, transcript=r.transcript)
            for r in toy.records]
    with pytest.raises(VGSError, match="visual"):
        train(tiny_model(), CorpusManifest(recs, toy.vocabulary), TrainConfig(epochs=1, kind="visual"))


def test_checkpoint_round_trip(toy, tmp_path):
    model = tiny_model(seed=3)
    feats = [e.features for e in load_split(toy, "test")]
    before = np.stack([t.y_hat for t in forward_batch(model, feats)])
    save_checkpoint(tmp_path / "m.pt", model, toy.vocabulary, epoch=7)
    loaded, meta = load_checkpoint(tmp_path / "m.pt")
    after = np.stack([t.y_hat for t in forward_batch(loaded, feats)])
    assert np.array_equal(before, after)
    assert meta["epoch"] == 7 and meta["vocabulary_hash"] == toy.vocabulary.digest()


def test_missing_sidecar(tmp_path):
    torch.save({}, tmp_path / "m.pt")
    with pytest.raises(CheckpointError):
        read_checkpoint_meta(tmp_path / "m.pt")


def test_warm_start_copies_parameters(toy, tmp_path):
    src = tiny_model(seed=1)
    save_checkpoint(tmp_path / "m.pt", src, toy.vocabulary)
    dst = warm_start(tiny_model(seed=2), tmp_path / "m.pt", "all", toy.vocabulary)
    assert parameter_digest(dst) == parameter_digest(src)


def test_warm_start_encoder_only(toy, tmp_path):
    src = tiny_model(seed=1)
    save_checkpoint(tmp_path / "m.pt", src, toy.vocabulary)
    dst = warm_start(tiny_model(V=7, seed=2), tmp_path / "m.pt", "encoder_only")
    for k, v in src.state_dict().items():
        if k.startswith("encoder."):
            assert torch.equal(dst.state_dict()[k], v)
    assert not torch.equal(dst.queries.weight[:4], src.queries.weight)


def test_warm_start_errors(toy, tmp_path):
    save_checkpoint(tmp_path / "m.pt", tiny_model(), toy.vocabulary)
    with pytest.raises(CheckpointError, match="V="):
        warm_start(tiny_model(V=5), tmp_path / "m.pt", "all")
    with pytest.raises(CheckpointError, match="vocabulary"):
        warm_start(tiny_model(), tmp_path / "m.pt", "all", Vocabulary(["a", "b", "c", "d"]))
    with pytest.raises(CheckpointError, match="CNN-Attend"):
        warm_start(tiny_model(arch="CNN-PoolAttend"), tmp_path / "m.pt", "encoder_only")
    with pytest.raises(CheckpointError, match="mode"):
        warm_start(tiny_model(), tmp_path / "m.pt", "half")
    wide = build_model(ModelConfig("CNN-Attend", V=4, F=39, channels=(8, 8, 8, 8, 8, 32), clf_hidden=16))
    with pytest.raises(CheckpointError, match="incompatible"):
        warm_start(wide, tmp_path / "m.pt", "all")


def test_noiseless_visual_run_equals_bow_run(tmp_path):
    cfg = ToyConfig(V=4, n_train=24, n_dev=8, n_test=0, seed=2, tagger_noise=(1.0, 0.0), tagger_std=0.0, miss_rate=0.0)
    m = generate_toy_corpus(cfg, tmp_path)
    runs = [train(tiny_model(), m, TrainConfig(epochs=2, batch_size=8, kind=kind)) for kind in ("bow", "visual")]
    strip = [[{k: v for k, v in e.items() if k != "wall_s"} for e in r.log] for r in runs]
    assert strip[0] == strip[1]
