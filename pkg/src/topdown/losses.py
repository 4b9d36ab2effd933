"""Wasserstein critic/generator objectives with gradient penalty.

Both networks minimize: the critic minimizes ``E[D(fake)] - E[D(real)]``
plus the penalty, the generator minimizes ``-E[D(fake)]``.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict

import torch


class TrainingFault(RuntimeError):
    """Non-finite values appeared during a training step."""


@dataclass
class LossReport:
    d_loss: float
    g_loss: float
    wasserstein_estimate: float
    gradient_penalty_term: float
    grad_norm_mean: float

    def as_dict(self) -> dict:
        return asdict(self)


def _nonempty(scores: torch.Tensor, name: str) -> torch.Tensor:
    if scores.numel() == 0:
        raise ValueError(f"{name} is empty")
    return scores


def wgan_d_loss(real_scores: torch.Tensor, fake_scores: torch.Tensor) -> torch.Tensor:
    return _nonempty(fake_scores, "fake_scores").mean() - _nonempty(real_scores, "real_scores").mean()


def wgan_g_loss(fake_scores: torch.Tensor) -> torch.Tensor:
    return -_nonempty(fake_scores, "fake_scores").mean()


def interpolate_pairs(real: torch.Tensor, fake: torch.Tensor, epsilon: torch.Tensor | None = None,
                      generator: torch.Generator | None = None) -> torch.Tensor:
    """``eps * real + (1 - eps) * fake`` with one ``eps ~ U[0, 1]`` per pair."""
    if real.shape != fake.shape:
        raise ValueError(f"shape mismatch: {tuple(real.shape)} vs {tuple(fake.shape)}")
    if epsilon is None:
        epsilon = torch.rand(real.shape[0], generator=generator, dtype=real.dtype, device=real.device)
    eps = epsilon.reshape(-1, *([1] * (real.ndim - 1))).to(real.dtype)
    return eps * real + (1 - eps) * fake


def critic_gradient_norms(critic, x_hat: torch.Tensor, condition=None) -> torch.Tensor:
    """Per-sample L2 norm of the critic's gradient with respect to its image input.

    The graph is kept so the norms stay differentiable in the critic's
    parameters.
    """
    x_hat = x_hat.detach().requires_grad_(True)
    scores = critic(x_hat) if condition is None else critic(x_hat, condition)
    if not scores.requires_grad:  # critic ignores its input entirely
        return x_hat.new_zeros(x_hat.shape[0])
    grad, = torch.autograd.grad(scores.sum(), x_hat, create_graph=True, allow_unused=True)
    if grad is None:
        return x_hat.new_zeros(x_hat.shape[0])
    return grad.flatten(1).norm(2, dim=1)


def gradient_penalty(critic, x_hat: torch.Tensor, condition=None, lam: float = 10.0,
                     return_norms: bool = False):
    norms = critic_gradient_norms(critic, x_hat, condition)
    if not torch.isfinite(norms).all():
        raise TrainingFault("non-finite critic gradient in the penalty")
    penalty = lam * ((norms - 1.0) ** 2).mean()
    return (penalty, norms) if return_norms else penalty


def total_d_loss(critic, real: torch.Tensor, fake: torch.Tensor, x_hat: torch.Tensor,
                 condition=None, lam: float = 10.0, drift: float = 0.0,
                 real_scores: torch.Tensor | None = None, fake_scores: torch.Tensor | None = None):
    """Full critic objective. Returns ``(loss_tensor, LossReport)``.

    ``drift`` adds ``drift * E[D(real)^2]`` to keep critic outputs near zero.
    """
    def score(x):
        return critic(x) if condition is None else critic(x, condition)

    if real_scores is None:
        real_scores = score(real)
    if fake_scores is None:
        fake_scores = score(fake)
    w_loss = wgan_d_loss(real_scores, fake_scores)
    if lam:
        gp, norms = gradient_penalty(critic, x_hat, condition, lam, return_norms=True)
    else:
        gp = w_loss.new_zeros(())
        norms = critic_gradient_norms(critic, x_hat, condition).detach()
    loss = w_loss + gp
    if drift:
        loss = loss + drift * (real_scores ** 2).mean()
    report = LossReport(
        d_loss=float(loss.detach()),
        g_loss=float(wgan_g_loss(fake_scores).detach()),
        wasserstein_estimate=float(-w_loss.detach()),
        gradient_penalty_term=float(gp.detach()),
        grad_norm_mean=float(norms.detach().mean()),
    )
    return loss, report
