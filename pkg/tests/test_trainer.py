import json

import numpy as np
import pytest
import torch

from topdown.checkpoint import CheckpointError, read_tensor, write_tensor
from topdown.config import ConfigError, profile_config
from topdown.losses import TrainingFault
from topdown.metrics import evaluate_split
from topdown.obsmodel import episode_windows
from topdown.trainer import ArraySource, EpisodeSource, Trainer, read_log, run_training, to_image, to_target


def tiny(**kw):
    base = dict(encoder="conv3d", batch_size=2, iterations_per_scale=3, fade_iterations=2,
                final_scale=16, checkpoint_every=2, seed=5)
    base.update(kw)
    return profile_config("desk", **base)


@pytest.fixture(scope="module")
def source(episodes):
    return EpisodeSource(episodes[:2])


def test_target_image_roundtrip(rng):
    img = rng.random((2, 64, 64, 3)).astype(np.float32)
    back = to_image(to_target(img))
    assert np.allclose(back, img, atol=1e-6)
    assert float(to_target(img).min()) >= -1.0


def test_tensor_file_roundtrip(tmp_path):
    t = torch.randn(3, 4, 5)
    write_tensor(tmp_path / "w.tensor", "layer.weight", t)
    name, back = read_tensor(tmp_path / "w.tensor")
    assert name == "layer.weight" and torch.equal(back, t)
    (tmp_path / "bad.tensor").write_bytes(b"XXXX")
    with pytest.raises(CheckpointError):
        read_tensor(tmp_path / "bad.tensor")


def test_run_grows_and_checkpoints(source, tmp_path):
    trainer = Trainer(tiny(total_iterations=7), source)
    written = trainer.run(out_dir=tmp_path)
    names = [p.name for p in written]
    # cadence 2, growth boundaries 3 and 6, final 7
    assert names == ["ckpt_0000002", "ckpt_0000003", "ckpt_0000004", "ckpt_0000006", "ckpt_0000007"]
    assert trainer.scale == 16
    rows = read_log(tmp_path / "train_log.csv")
    assert [r["iteration"] for r in rows] == list(range(7))
    assert [r["scale"] for r in rows] == [4, 4, 4, 8, 8, 8, 16]
    # fade-in while growing to 8; the final scale starts at full weight
    assert [r["alpha"] for r in rows][3:] == [0.0, 0.5, 1.0, 1.0]
    state = json.loads((tmp_path / "ckpt_0000003" / "state.json").read_text())
    assert state["scale"] == 4 and state["schedule_scale"] == 8


def test_determinism_and_resume(source, tmp_path):
    a = Trainer(tiny(total_iterations=6), source)
    a.run(out_dir=tmp_path / "a")
    b = Trainer(tiny(total_iterations=6), source)
    b.run(out_dir=tmp_path / "b")
    log_a = (tmp_path / "a" / "train_log.csv").read_text()
    assert log_a == (tmp_path / "b" / "train_log.csv").read_text()
    r = Trainer.from_checkpoint(tmp_path / "a" / "ckpt_0000004", source)
    assert r.iteration == 4 and r.scale == 8
    r.run(out_dir=tmp_path / "a")  # same directory: the log is truncated and continued
    assert (tmp_path / "a" / "train_log.csv").read_text() == log_a
    for pa, pr in zip(a.generator.parameters(), r.generator.parameters()):
        assert torch.equal(pa, pr)


def test_different_seeds_differ(source):
    a = Trainer(tiny(total_iterations=2), source)
    b = Trainer(tiny(total_iterations=2, seed=6), source)
    a.run()
    b.run()
    assert a.history[-1]["d_loss"] != b.history[-1]["d_loss"]


def test_checkpoint_encoder_mismatch(source, tmp_path):
    t = Trainer(tiny(total_iterations=1), source)
    t.run(out_dir=tmp_path)
    with pytest.raises(CheckpointError):
        Trainer.from_checkpoint(tmp_path / "ckpt_0000001", source, tiny(encoder="baseline"))
    with pytest.raises(CheckpointError):
        Trainer.from_checkpoint(tmp_path / "nothing", source)


def test_non_finite_loss_faults(episodes, tmp_path):
    windows = episode_windows(episodes[0])[:4]
    targets = np.full((4, 64, 64, 3), np.nan, np.float32)
    t = Trainer(tiny(total_iterations=3), ArraySource(windows, targets))
    with pytest.raises(TrainingFault):
        t.run(out_dir=tmp_path)
    assert (tmp_path / "fault_0000000" / "state.json").is_file()


def test_empty_data_rejected():
    with pytest.raises(ConfigError):
        run_training(tiny(total_iterations=1), source=EpisodeSource([]))


def test_predict_and_evaluate(source, episodes):
    t = Trainer(tiny(total_iterations=4), source)
    t.run()
    out = t.predict(episode_windows(episodes[0])[:3])
    assert out.shape == (3, 8, 8, 3)
    assert out.min() >= 0 and out.max() <= 1
    psnrs, ssims = evaluate_split(t, episodes[:1], n_samples=4)
    assert len(psnrs) == 4 and all(np.isfinite(ssims))


@pytest.mark.parametrize("encoder", ["baseline", "conv2d1d", "capsule"])
def test_every_encoder_trains(encoder, source):
    t = Trainer(tiny(encoder=encoder, total_iterations=1, batch_size=2), source)
    rep = t.step()
    assert np.isfinite(rep.d_loss) and np.isfinite(rep.g_loss)


def test_critic_steps_and_drift(source):
    t = Trainer(tiny(total_iterations=1, n_critic=2, use_drift=True), source)
    before = [p.detach().clone() for p in t.discriminator.parameters()]
    t.step()
    assert any(not torch.equal(a, b) for a, b in zip(before, t.discriminator.parameters()))


def test_zero_learning_rate_keeps_parameters(source):
    t = Trainer(tiny(total_iterations=2, lr_g=0.0, lr_d=0.0), source)
    before = [p.detach().clone() for m in (t.encoder, t.generator, t.discriminator) for p in m.parameters()]
    t.run()
    after = [p for m in (t.encoder, t.generator, t.discriminator) for p in m.parameters()]
    assert all(torch.equal(a, b) for a, b in zip(before, after))
