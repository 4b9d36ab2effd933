import math

import pytest
import torch
from torch import nn

from topdown.losses import (
    TrainingFault, critic_gradient_norms, gradient_penalty, interpolate_pairs, total_d_loss,
    wgan_d_loss, wgan_g_loss,
)


def two_layer_critic(seed=0, dim=8, hidden=16):
    torch.manual_seed(seed)
    return nn.Sequential(nn.Linear(dim, hidden), nn.Tanh(), nn.Linear(hidden, 1)).double()


def fd_grad_norm(f, x, h=1e-6):
    g = torch.zeros_like(x)
    for i in range(x.numel()):
        e = torch.zeros_like(x).view(-1)
        e[i] = h
        e = e.view_as(x)
        g.view(-1)[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g.norm().item()


def test_gradient_norm_matches_finite_differences():
    critic = two_layer_critic()
    x = torch.randn(5, 8, dtype=torch.float64)
    norms = critic_gradient_norms(critic, x)
    for k in range(5):
        ref = fd_grad_norm(lambda v: critic(v[None]).sum().item(), x[k])
        assert abs(norms[k].item() - ref) / ref < 1e-4


def test_constant_critic_penalty_is_lambda():
    critic = lambda x: torch.zeros(x.shape[0])  # noqa: E731
    gp = gradient_penalty(critic, torch.randn(6, 8), lam=10.0)
    assert gp.item() == 10.0
    # constant but still wired to the input
    gp = gradient_penalty(lambda x: 0.0 * x.sum(1), torch.randn(6, 8), lam=10.0)
    assert gp.item() == 10.0


def test_unit_gradient_linear_critic_has_no_penalty():
    w = torch.randn(8, dtype=torch.float64)
    w = w / w.norm()
    critic = lambda x: x @ w  # noqa: E731
    gp = gradient_penalty(critic, torch.randn(6, 8, dtype=torch.float64), lam=10.0)
    assert gp.item() < 1e-10


def test_penalty_scales_with_lambda():
    critic = two_layer_critic()
    x = torch.randn(4, 8, dtype=torch.float64)
    assert gradient_penalty(critic, x, lam=5.0).item() == pytest.approx(
        gradient_penalty(critic, x, lam=10.0).item() / 2, rel=1e-12)


def test_penalty_differentiable_in_parameters():
    critic = two_layer_critic()
    gp = gradient_penalty(critic, torch.randn(4, 8, dtype=torch.float64))
    gp.backward()
    # the output bias does not affect input gradients; every weight does
    assert critic[0].weight.grad is not None and critic[2].weight.grad is not None
    assert critic[0].weight.grad.abs().sum() > 0


def test_interpolation_convex():
    real, fake = torch.randn(16, 3, 4, 4), torch.randn(16, 3, 4, 4)
    g = torch.Generator().manual_seed(0)
    x = interpolate_pairs(real, fake, generator=g)
    lo, hi = torch.minimum(real, fake), torch.maximum(real, fake)
    assert ((x >= lo - 1e-6) & (x <= hi + 1e-6)).all()


def test_interpolation_one_epsilon_per_pair():
    real, fake = torch.ones(3, 2, 2, 2), torch.zeros(3, 2, 2, 2)
    eps = torch.tensor([0.0, 0.25, 1.0])
    x = interpolate_pairs(real, fake, epsilon=eps)
    for k in range(3):
        assert torch.all(x[k] == eps[k])


def test_interpolation_shape_mismatch():
    with pytest.raises(ValueError):
        interpolate_pairs(torch.zeros(2, 3), torch.zeros(3, 3))


def test_loss_signs():
    real, fake = torch.tensor([2.0, 4.0]), torch.tensor([1.0, 1.0])
    assert wgan_d_loss(real, fake).item() == -2.0
    assert wgan_g_loss(fake).item() == -1.0
    with pytest.raises(ValueError):
        wgan_d_loss(torch.zeros(0), fake)


def test_total_d_loss_report():
    critic = two_layer_critic()
    real = torch.randn(4, 8, dtype=torch.float64)
    fake = torch.randn(4, 8, dtype=torch.float64)
    x_hat = interpolate_pairs(real, fake, epsilon=torch.full((4,), 0.5, dtype=torch.float64))
    loss, rep = total_d_loss(critic, real, fake, x_hat, lam=10.0)
    w = critic(fake).mean() - critic(real).mean()
    gp = gradient_penalty(critic, x_hat)
    assert loss.item() == pytest.approx((w + gp).item(), rel=1e-12)
    assert rep.wasserstein_estimate == pytest.approx(-w.item())
    loss_drift, _ = total_d_loss(critic, real, fake, x_hat, lam=10.0, drift=1e-3)
    assert loss_drift.item() == pytest.approx(loss.item() + 1e-3 * (critic(real) ** 2).mean().item())


def test_conditioned_critic_gets_condition():
    seen = {}

    def critic(x, c):
        seen["c"] = c
        return (x * c).flatten(1).sum(1)

    x = torch.randn(3, 4)
    c = torch.full((3, 4), 2.0)
    norms = critic_gradient_norms(critic, x, c)
    assert torch.allclose(norms, torch.full((3,), 4.0))
    assert seen["c"] is c


def test_non_finite_gradient_raises():
    critic = lambda x: (x * math.inf).sum(1)  # noqa: E731
    with pytest.raises(TrainingFault):
        gradient_penalty(critic, torch.ones(2, 3))
