"""scikit-learn compatible wrappers.

``TopDownViewGAN`` fits observation windows ``(n, 21, 64, 64, 3)`` to
top-down targets ``(n, 64, 64, 3)`` and predicts top-down images at the
scale the networks have grown to.
"""
from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from .config import profile_config
from .encoders import KNOWN_NONLEARNING
from .metrics import evaluate_split, ssim
from .obsmodel import episode_windows, window_frames
from .trainer import ArraySource, Trainer, to_condition
from .validation import check_frames, check_targets, check_windows


class ObservationWindower(TransformerMixin, BaseEstimator):
    """Turn frame sequences (or episodes) into padded observation windows.

    ``transform`` returns one window per step, concatenated over sequences.
    """

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        out = []
        for seq in X:
            frames = seq.frames if hasattr(seq, "frames") else seq
            frames = check_frames(frames)
            out.extend(window_frames(frames, i) for i in range(len(frames)))
        return np.stack(out)


class ChannelStacker(TransformerMixin, BaseEstimator):
    """``(n, 21, H, W, 3)`` windows -> ``(n, H, W, 63)`` stacked images."""

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        from .obsmodel import stack_channels
        return stack_channels(check_windows(X))


class TopDownViewGAN(RegressorMixin, BaseEstimator):
    """Conditional progressive WGAN-GP from observation windows to top-down views.

    Parameters left as ``None`` take the value of the chosen ``profile``
    (``"desk"`` or ``"paper"``).
    """

    def __init__(self, encoder="baseline", profile="desk", batch_size=None, iterations_per_scale=None,
                 fade_iterations=None, final_scale=None, max_iter=None, learning_rate=1e-3,
                 beta1=0.0, beta2=0.99, lambda_gp=10.0, n_critic=1, use_drift=False,
                 random_state=0, deterministic=True, checkpoint_dir=None, checkpoint_every=None):
        self.encoder = encoder
        self.profile = profile
        self.batch_size = batch_size
        self.iterations_per_scale = iterations_per_scale
        self.fade_iterations = fade_iterations
        self.final_scale = final_scale
        self.max_iter = max_iter
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.lambda_gp = lambda_gp
        self.n_critic = n_critic
        self.use_drift = use_drift
        self.random_state = random_state
        self.deterministic = deterministic
        self.checkpoint_dir = checkpoint_dir
        self.checkpoint_every = checkpoint_every

    def _train_config(self):
        overrides = {k: v for k, v in dict(
            batch_size=self.batch_size, iterations_per_scale=self.iterations_per_scale,
            fade_iterations=self.fade_iterations, final_scale=self.final_scale,
            total_iterations=self.max_iter, checkpoint_every=self.checkpoint_every,
        ).items() if v is not None}
        return profile_config(
            self.profile, encoder=self.encoder, lr_g=self.learning_rate, lr_d=self.learning_rate,
            beta1=self.beta1, beta2=self.beta2, lambda_gp=self.lambda_gp, n_critic=self.n_critic,
            use_drift=self.use_drift, seed=int(self.random_state or 0),
            deterministic=self.deterministic, **overrides)

    def fit(self, X, y):
        X = check_windows(X)
        y = check_targets(y, len(X))
        if y.shape[1] != 64:
            raise ValueError("targets must be 64x64")
        config = self._train_config()
        self.trainer_ = Trainer(config, ArraySource(X, y))
        self.checkpoints_ = self.trainer_.run(out_dir=self.checkpoint_dir)
        self.history_ = self.trainer_.history
        self.known_nonlearning_ = self.encoder in KNOWN_NONLEARNING
        return self

    def fit_episodes(self, episodes):
        """Convenience: fit on every (window, target) pair of ``episodes``."""
        X = np.concatenate([episode_windows(ep) for ep in episodes])
        y = np.concatenate([ep.targets for ep in episodes])
        return self.fit(X, y)

    @property
    def scale(self) -> int:
        check_is_fitted(self, "trainer_")
        return self.trainer_.scale

    def predict(self, X):
        check_is_fitted(self, "trainer_")
        return self.trainer_.predict(check_windows(X))

    @torch.no_grad()
    def transform(self, X):
        """Encoder state features, ``(n, 4096)``."""
        check_is_fitted(self, "trainer_")
        X = check_windows(X)
        enc = self.trainer_.encoder
        was = enc.training
        enc.eval()
        feats = [enc(to_condition(X[lo:lo + 32])).numpy() for lo in range(0, len(X), 32)]
        enc.train(was)
        return np.concatenate(feats)

    def score(self, X, y, sample_weight=None):
        """Mean SSIM of predictions against targets downsampled to the model scale."""
        pred = self.predict(X)
        y = check_targets(y, len(pred))
        s = pred.shape[1]
        if y.shape[1] != s:
            f = y.shape[1] // s
            y = y.reshape(len(y), s, f, s, f, 3).mean(axis=(2, 4))
        scores = np.array([ssim(p, t, window_size=min(11, s)) for p, t in zip(pred, y)])
        return float(np.average(scores, weights=sample_weight))

    def evaluate(self, episodes, n_samples=512, seed=0):
        check_is_fitted(self, "trainer_")
        return evaluate_split(self.trainer_, episodes, n_samples, seed)

    @classmethod
    def from_checkpoint(cls, path):
        trainer = Trainer.from_checkpoint(path)
        cfg = trainer.config
        est = cls(encoder=cfg.encoder, profile=cfg.profile, batch_size=cfg.batch_size,
                  iterations_per_scale=cfg.iterations_per_scale, fade_iterations=cfg.fade_iterations,
                  final_scale=cfg.final_scale, random_state=cfg.seed, deterministic=cfg.deterministic)
        est.trainer_ = trainer
        est.history_ = []
        est.checkpoints_ = [path]
        est.known_nonlearning_ = cfg.encoder in KNOWN_NONLEARNING
        return est


__all__ = ["TopDownViewGAN", "ObservationWindower", "ChannelStacker", "NotFittedError"]
