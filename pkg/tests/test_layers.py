import math

import pytest
import torch

from topdown.gan.layers import (
    EqualizedConv2d, EqualizedLinear, area_downsample, equalized_scale, minibatch_stddev,
    pixelwise_norm, upsample2x,
)
from topdown.gan.networks import Discriminator, Generator, ScaleState, grow


def test_equalized_scale_values():
    assert equalized_scale(9) == pytest.approx(math.sqrt(2) / 3)
    assert equalized_scale(4, gain=1.0) == 0.5
    with pytest.raises(ValueError):
        equalized_scale(0)


def test_equalized_conv_matches_plain_conv():
    torch.manual_seed(0)
    layer = EqualizedConv2d(3, 5, 3, padding=1)
    x = torch.randn(2, 3, 6, 6)
    ref = torch.nn.functional.conv2d(x, layer.weight * (math.sqrt(2) / math.sqrt(27)), layer.bias, padding=1)
    assert torch.allclose(layer(x), ref)
    assert abs(layer.weight.std().item() - 1.0) < 0.3  # stored weights are unit variance


def test_equalized_gradient_finite_differences():
    torch.manual_seed(0)
    layer = EqualizedLinear(6, 2).double()
    x = torch.randn(4, 6, dtype=torch.float64)
    loss = lambda: (layer(x) ** 2).sum()  # noqa: E731
    loss().backward()
    grad = layer.weight.grad.clone()
    h = 1e-6
    with torch.no_grad():
        for idx in [(0, 0), (1, 3), (0, 5)]:
            w0 = layer.weight[idx].item()
            layer.weight[idx] = w0 + h
            up = loss().item()
            layer.weight[idx] = w0 - h
            down = loss().item()
            layer.weight[idx] = w0
            assert grad[idx].item() == pytest.approx((up - down) / (2 * h), rel=1e-6)


def test_pixelnorm_unit_rms():
    torch.manual_seed(0)
    for scale in (1e-2, 1.0, 100.0):
        x = torch.randn(4, 32, 5, 5) * scale
        x = x / x.pow(2).mean(1, keepdim=True).sqrt() * scale  # RMS exactly `scale`
        rms = pixelwise_norm(x).pow(2).mean(1).sqrt()
        assert torch.allclose(rms, torch.ones_like(rms), atol=1e-3)


def test_pixelnorm_zero_is_finite():
    assert torch.equal(pixelwise_norm(torch.zeros(1, 4, 2, 2)), torch.zeros(1, 4, 2, 2))


def test_minibatch_stddev_identical_batch_is_zero():
    x = torch.randn(1, 8, 4, 4).repeat(6, 1, 1, 1).requires_grad_(True)
    out = minibatch_stddev(x)
    assert out.shape == (6, 9, 4, 4)
    assert torch.all(out[:, -1] == 0)
    out.sum().backward()
    assert torch.isfinite(x.grad).all()


def test_minibatch_stddev_population_value():
    x = torch.zeros(2, 1, 1, 1)
    x[1] = 2.0
    assert minibatch_stddev(x)[0, -1, 0, 0].item() == 1.0  # population std of {0, 2}


def test_resampling():
    x = torch.arange(16.0).view(1, 1, 4, 4)
    up = upsample2x(x)
    assert up.shape == (1, 1, 8, 8) and torch.equal(up[0, 0, :2, :2], torch.zeros(2, 2))
    assert torch.equal(area_downsample(up, 4), x)
    assert area_downsample(x, 2)[0, 0, 0, 0].item() == (0 + 1 + 4 + 5) / 4
    with pytest.raises(ValueError):
        area_downsample(x, 3)


def test_fade_in_continuity_generator():
    torch.manual_seed(0)
    g = Generator()
    feats = torch.randn(3, 4096)
    for old_scale in (4, 8, 16, 32):
        with torch.no_grad():
            before = g(feats, ScaleState(old_scale, 1.0))
            g.grow(old_scale * 2)
            after = g(feats, ScaleState(old_scale * 2, 0.0))
        assert torch.equal(after, upsample2x(before))


def test_fade_in_continuity_discriminator():
    torch.manual_seed(0)
    d = Discriminator()
    cond = torch.rand(2, 63, 64, 64)
    img = torch.rand(2, 3, 8, 8)
    with torch.no_grad():
        before = d(area_downsample(img, 4), cond, ScaleState(4, 1.0))
        d.grow(8)
        after = d(img, cond, ScaleState(8, 0.0))
    # the condition is pooled in a different order on the two paths
    assert torch.allclose(before, after, atol=1e-5)


def test_growth_rules():
    g, d = Generator(), Discriminator()
    with pytest.raises(ValueError):
        g.grow(16)
    grow(g, d, 8)
    assert g.scale == d.scale == 8
    with pytest.raises(ValueError):
        g(torch.randn(1, 4096), ScaleState(16, 1.0))
