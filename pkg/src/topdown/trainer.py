"""Progressive WGAN-GP training loop."""
from __future__ import annotations

import json
import logging
import math
from pathlib import Path

import numpy as np
import torch

from .checkpoint import (
    CheckpointError, load_state_dict, optimizer_from_files, optimizer_to_files,
    save_state_dict, write_json_atomic,
)
from .config import ConfigError, TrainConfig
from .encoders import KNOWN_NONLEARNING, build_encoder
from .gan.layers import area_downsample
from .gan.networks import Discriminator, Generator, ScaleState, SCALES
from .losses import (
    LossReport, TrainingFault, interpolate_pairs, total_d_loss, wgan_g_loss,
)
from .obsmodel import window_frames
from .schedule import schedule_state

logger = logging.getLogger(__name__)

LOG_COLUMNS = ("iteration", "scale", "alpha", "d_loss", "g_loss", "gp", "wdist")

# sub-stream ids for per-consumer seeding
_STREAM_INIT, _STREAM_BATCH, _STREAM_EPS, _STREAM_GROW = 1, 2, 3, 4


def _seed_for(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1, np.uint64)[0] >> 1)


def stacked_nchw(windows: np.ndarray) -> np.ndarray:
    """``(B, 21, H, W, 3)`` windows -> ``(B, 63, H, W)`` with channel ``3j+k``."""
    b, t, h, w, c = windows.shape
    return np.ascontiguousarray(windows.transpose(0, 1, 4, 2, 3).reshape(b, t * c, h, w))


def images_nchw(images: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(images).transpose(0, 3, 1, 2))


class EpisodeSource:
    """Training pairs (window at step i, target at step i) drawn from episodes."""

    def __init__(self, episodes):
        self.episodes = list(episodes)
        self.index = [(e, i) for e, ep in enumerate(self.episodes) for i in range(len(ep.frames))]

    def __len__(self):
        return len(self.index)

    def windows(self, indices) -> np.ndarray:
        return np.stack([window_frames(self.episodes[e].frames, i)
                         for e, i in (self.index[k] for k in indices)])

    def targets(self, indices) -> np.ndarray:
        return np.stack([self.episodes[e].targets[i] for e, i in (self.index[k] for k in indices)])


class ArraySource:
    """Training pairs from in-memory arrays of windows and targets."""

    def __init__(self, windows: np.ndarray, targets: np.ndarray):
        if len(windows) != len(targets):
            raise ValueError("windows and targets differ in length")
        self._windows = windows
        self._targets = targets

    def __len__(self):
        return len(self._windows)

    def windows(self, indices):
        return np.asarray(self._windows[np.asarray(indices)], dtype=np.float32)

    def targets(self, indices):
        return np.asarray(self._targets[np.asarray(indices)], dtype=np.float32)


def to_condition(windows: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(stacked_nchw(np.asarray(windows, dtype=np.float32)))


def to_target(images: np.ndarray) -> torch.Tensor:
    # generator works in [-1, 1]
    return torch.from_numpy(images_nchw(np.asarray(images, dtype=np.float32))) * 2.0 - 1.0


def to_image(output: torch.Tensor) -> np.ndarray:
    """Generator output ``(B, 3, s, s)`` in [-1, 1] -> ``(B, s, s, 3)`` float image in [0, 1]."""
    img = ((output.detach() + 1.0) / 2.0).clamp(0.0, 1.0)
    return img.permute(0, 2, 3, 1).cpu().numpy()


class Trainer:
    """Owns the encoder, generator, critic, both optimizers and the iteration counter."""

    def __init__(self, config: TrainConfig, source=None):
        config.validate()
        self.config = config
        self.source = source
        self.schedule = config.schedule
        if config.deterministic:
            torch.use_deterministic_algorithms(True, warn_only=True)
        with torch.random.fork_rng():
            torch.manual_seed(_seed_for(config.seed, _STREAM_INIT))
            self.encoder = build_encoder(config.encoder)
            self.generator = Generator()
            self.discriminator = Discriminator()
        betas = (config.beta1, config.beta2)
        self.opt_g = torch.optim.Adam(
            list(self.encoder.parameters()) + list(self.generator.parameters()),
            lr=config.lr_g, betas=betas, eps=config.adam_eps)
        self.opt_d = torch.optim.Adam(self.discriminator.parameters(), lr=config.lr_d, betas=betas,
                                      eps=config.adam_eps)
        self.iteration = 0
        self.history: list[dict] = []
        if config.encoder in KNOWN_NONLEARNING:
            logger.warning("encoder %r is known-nonlearning on this task", config.encoder)

    # -- structure ---------------------------------------------------------

    @property
    def scale(self) -> int:
        return self.generator.scale

    def grow_to(self, scale: int) -> None:
        while self.generator.scale < scale:
            new = 2 * self.generator.scale
            g_before = set(map(id, self.generator.parameters()))
            d_before = set(map(id, self.discriminator.parameters()))
            with torch.random.fork_rng():
                torch.manual_seed(_seed_for(self.config.seed, _STREAM_GROW, new))
                self.generator.grow(new)
                self.discriminator.grow(new)
            self.opt_g.add_param_group(
                {"params": [p for p in self.generator.parameters() if id(p) not in g_before]})
            self.opt_d.add_param_group(
                {"params": [p for p in self.discriminator.parameters() if id(p) not in d_before]})
            logger.info("grew networks to %dx%d at iteration %d", new, new, self.iteration)

    # -- randomness --------------------------------------------------------

    def batch_indices(self, iteration: int) -> np.ndarray:
        rng = np.random.default_rng(_seed_for(self.config.seed, _STREAM_BATCH, iteration))
        return rng.integers(0, len(self.source), size=self.config.batch_size)

    def epsilon(self, iteration: int, critic_step: int, n: int) -> torch.Tensor:
        g = torch.Generator().manual_seed(_seed_for(self.config.seed, _STREAM_EPS, iteration, critic_step))
        return torch.rand(n, generator=g)

    # -- one update --------------------------------------------------------

    def generate(self, condition: torch.Tensor, state: ScaleState) -> torch.Tensor:
        return self.generator(self.encoder(condition), state)

    def train_step(self, condition: torch.Tensor, target: torch.Tensor, state: ScaleState,
                   iteration: int | None = None) -> LossReport:
        """Critic update(s), then one generator+encoder update, on one aligned batch.

        ``target`` is the full-resolution ground truth in [-1, 1]; it is
        area-downsampled to the active scale here.
        """
        iteration = self.iteration if iteration is None else iteration
        cfg = self.config
        real = area_downsample(target, state.scale)
        D = self.discriminator

        def critic(x, c):
            return D(x, c, state)

        # G and the encoder are untouched during the critic phase, so this
        # graph is still valid for the generator update afterwards.
        fake = self.generate(condition, state)
        drift = cfg.drift_epsilon if cfg.use_drift else 0.0
        for k in range(cfg.n_critic):
            fake_d = fake.detach()
            x_hat = interpolate_pairs(real, fake_d, self.epsilon(iteration, k, real.shape[0]))
            d_loss, report = total_d_loss(critic, real, fake_d, x_hat, condition, cfg.lambda_gp, drift)
            if not math.isfinite(report.d_loss):
                raise TrainingFault(f"non-finite critic loss at iteration {iteration}")
            self.opt_d.zero_grad(set_to_none=True)
            d_loss.backward()
            self.opt_d.step()

        for p in D.parameters():
            p.requires_grad_(False)
        try:
            g_loss = wgan_g_loss(critic(fake, condition))
            self.opt_g.zero_grad(set_to_none=True)
            g_loss.backward()
            self.opt_g.step()
        finally:
            for p in D.parameters():
                p.requires_grad_(True)
        report.g_loss = float(g_loss.detach())
        if not math.isfinite(report.g_loss):
            raise TrainingFault(f"non-finite generator loss at iteration {iteration}")
        return report

    def step(self) -> LossReport:
        state = schedule_state(self.iteration, self.schedule)
        self.grow_to(state.scale)
        idx = self.batch_indices(self.iteration)
        condition = to_condition(self.source.windows(idx))
        target = to_target(self.source.targets(idx))
        report = self.train_step(condition, target, state)
        row = {"iteration": self.iteration, "scale": state.scale, "alpha": state.alpha,
               "d_loss": report.d_loss, "g_loss": report.g_loss,
               "gp": report.gradient_penalty_term, "wdist": report.wasserstein_estimate}
        self.history.append(row)
        self.iteration += 1
        return report

    def run(self, until: int | None = None, out_dir=None) -> list[Path]:
        """Train up to iteration ``until``; checkpoint at cadence and scale boundaries.

        Returns the checkpoint directories written during this call.
        """
        if self.source is None or len(self.source) == 0:
            raise ConfigError("training data is empty")
        until = self.config.iterations if until is None else until
        out = Path(out_dir) if out_dir else None
        log = None
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            log = TrainingLog(out / "train_log.csv", truncate_after=self.iteration)
        boundaries = set(self.schedule.growth_iterations())
        written = []
        try:
            while self.iteration < until:
                it = self.iteration
                if out is not None and it > 0 and (it % self.config.checkpoint_every == 0 or it in boundaries):
                    written.append(self.save_checkpoint(out / f"ckpt_{it:07d}"))
                try:
                    self.step()
                except TrainingFault:
                    if out is not None:
                        self.save_checkpoint(out / f"fault_{self.iteration:07d}")
                    raise
                if log is not None:
                    log.append(self.history[-1])
            if out is not None:
                written.append(self.save_checkpoint(out / f"ckpt_{self.iteration:07d}"))
        except OSError:
            if out is not None:
                try:
                    self.save_checkpoint(out / f"final_{self.iteration:07d}")
                except OSError:
                    logger.exception("could not flush a final checkpoint")
            raise
        finally:
            if log is not None:
                log.close()
        return written

    # -- inference ---------------------------------------------------------

    @torch.no_grad()
    def predict(self, windows: np.ndarray, state: ScaleState | None = None, batch_size: int = 32) -> np.ndarray:
        if state is None:
            state = schedule_state(self.iteration, self.schedule)
            if state.scale != self.scale:  # checkpoint taken just before a growth step
                state = ScaleState(self.scale, 1.0)
        was_training = self.encoder.training
        self.encoder.eval()
        self.generator.eval()
        out = []
        for lo in range(0, len(windows), batch_size):
            cond = to_condition(windows[lo:lo + batch_size])
            out.append(to_image(self.generate(cond, state)))
        self.encoder.train(was_training)
        self.generator.train(was_training)
        return np.concatenate(out) if out else np.zeros((0, state.scale, state.scale, 3), np.float32)

    # -- checkpoints -------------------------------------------------------

    def save_checkpoint(self, path) -> Path:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        files = []
        files += save_state_dict(path, "encoder", self.encoder.state_dict())
        files += save_state_dict(path, "generator", self.generator.state_dict())
        files += save_state_dict(path, "discriminator", self.discriminator.state_dict())
        state = schedule_state(self.iteration, self.schedule)
        payload = {
            "iteration": self.iteration,
            "scale": self.scale,
            "alpha": state.alpha if state.scale == self.scale else 1.0,
            "schedule_scale": state.scale,
            "encoder": self.config.encoder,
            "config": self.config.to_dict(),
            "parameter_files": files,
            "optimizers": {
                "g": optimizer_to_files(path, "opt_g", self.opt_g),
                "d": optimizer_to_files(path, "opt_d", self.opt_d),
            },
        }
        write_json_atomic(path / "state.json", payload)
        return path

    @classmethod
    def from_checkpoint(cls, path, source=None, config: TrainConfig | None = None) -> "Trainer":
        path = Path(path)
        state_file = path / "state.json"
        if not state_file.is_file():
            raise CheckpointError(f"no state.json in {path}")
        meta = json.loads(state_file.read_text())
        if config is None:
            config = TrainConfig(**meta["config"])
        if config.encoder != meta["encoder"]:
            raise CheckpointError(f"checkpoint was trained with encoder {meta['encoder']!r}")
        trainer = cls(config, source)
        if meta["scale"] not in SCALES:
            raise CheckpointError(f"bad scale {meta['scale']}")
        trainer.grow_to(meta["scale"])
        for prefix, module in (("encoder", trainer.encoder), ("generator", trainer.generator),
                               ("discriminator", trainer.discriminator)):
            names = list(module.state_dict().keys())
            module.load_state_dict(load_state_dict(path, prefix, names))
        trainer.opt_g.load_state_dict(optimizer_from_files(path, meta["optimizers"]["g"]))
        trainer.opt_d.load_state_dict(optimizer_from_files(path, meta["optimizers"]["d"]))
        trainer.iteration = int(meta["iteration"])
        return trainer


class TrainingLog:
    """Append-only CSV of per-iteration losses.

    Floats are written with ``repr`` so logs from identical runs compare
    byte for byte.
    """

    def __init__(self, path, truncate_after: int | None = None):
        self.path = Path(path)
        lines = []
        if self.path.exists() and truncate_after is not None:
            # resuming: drop rows past the checkpoint
            for line in self.path.read_text().splitlines()[1:]:
                if line and int(line.split(",", 1)[0]) < truncate_after:
                    lines.append(line)
        self._fh = self.path.open("w")
        self._fh.write(",".join(LOG_COLUMNS) + "\n")
        for line in lines:
            self._fh.write(line + "\n")
        self._fh.flush()

    def append(self, row: dict) -> None:
        self._fh.write(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c])
                                for c in LOG_COLUMNS) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def read_log(path) -> list[dict]:
    rows = []
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    for line in lines[1:]:
        values = line.split(",")
        row = dict(zip(header, values))
        rows.append({k: (int(v) if k in ("iteration", "scale") else float(v)) for k, v in row.items()})
    return rows


def run_training(config: TrainConfig, source=None, resume=None) -> list[Path]:
    """Train from ``config`` (optionally resuming) and return written checkpoints."""
    config.validate()
    if source is None:
        if not config.data:
            raise ConfigError("no dataset given")
        from .envgen.io import read_dataset
        source = EpisodeSource(read_dataset(config.data, splits=("train",))["train"])
    if len(source) == 0:
        raise ConfigError("training data is empty")
    trainer = Trainer.from_checkpoint(resume, source, config) if resume else Trainer(config, source)
    return trainer.run(out_dir=config.out or None)


__all__ = [
    "Trainer", "EpisodeSource", "ArraySource", "TrainingLog", "read_log", "run_training",
    "stacked_nchw", "to_condition", "to_target", "to_image", "LOG_COLUMNS",
]
