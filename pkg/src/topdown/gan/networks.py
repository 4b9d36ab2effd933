"""Progressive-growing conditional generator and critic."""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .layers import (
    LEAK, EqualizedConv2d, EqualizedLinear, PixelNorm, area_downsample, minibatch_stddev,
    upsample2x,
)

FEATURE_DIM = 4096
BASE_CHANNELS = 256
CONDITION_CHANNELS = 63
IMAGE_CHANNELS = 3
SCALES = (4, 8, 16, 32, 64)
CHANNELS = {4: 256, 8: 256, 16: 128, 32: 64, 64: 32}


@dataclass(frozen=True)
class ScaleState:
    scale: int
    alpha: float = 1.0

    def __post_init__(self):
        if self.scale not in SCALES:
            raise ValueError(f"scale must be one of {SCALES}, got {self.scale}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.scale == SCALES[0] and self.alpha != 1.0:
            raise ValueError("the first scale has no fade-in; alpha must be 1")


def _check_growth(current: int, new_scale: int) -> None:
    if new_scale != 2 * current:
        raise ValueError(f"can only grow {current} -> {2 * current}, not -> {new_scale}")
    if new_scale > SCALES[-1]:
        raise ValueError(f"cannot grow past {SCALES[-1]}")


def _blend(old: torch.Tensor, new: torch.Tensor, alpha: float) -> torch.Tensor:
    # exact endpoints, so a freshly grown network reproduces the old path bit for bit
    if alpha == 0.0:
        return old
    if alpha == 1.0:
        return new
    return alpha * new + (1.0 - alpha) * old


class GeneratorBlock(nn.Module):
    def __init__(self, in_channels, out_channels, upsample: bool):
        super().__init__()
        self.upsample = upsample
        self.conv1 = EqualizedConv2d(in_channels, out_channels, 3, padding=1)
        self.conv2 = EqualizedConv2d(out_channels, out_channels, 3, padding=1)
        self.norm = PixelNorm()

    def forward(self, x):
        if self.upsample:
            x = upsample2x(x)
        x = self.norm(F.leaky_relu(self.conv1(x), LEAK))
        return self.norm(F.leaky_relu(self.conv2(x), LEAK))


class Generator(nn.Module):
    """Maps 4096-dim state features to an RGB image at the active scale.

    The features are reshaped to a ``256 x 4 x 4`` base; each grown block
    doubles the resolution.
    """

    def __init__(self):
        super().__init__()
        self.blocks = nn.ModuleList([GeneratorBlock(BASE_CHANNELS, CHANNELS[4], upsample=False)])
        self.to_rgb = nn.ModuleList([EqualizedConv2d(CHANNELS[4], IMAGE_CHANNELS, 1, gain=1.0)])
        self.norm = PixelNorm()

    @property
    def scale(self) -> int:
        return SCALES[len(self.blocks) - 1]

    def grow(self, new_scale: int) -> None:
        _check_growth(self.scale, new_scale)
        c_in, c_out = CHANNELS[self.scale], CHANNELS[new_scale]
        self.blocks.append(GeneratorBlock(c_in, c_out, upsample=True))
        self.to_rgb.append(EqualizedConv2d(c_out, IMAGE_CHANNELS, 1, gain=1.0))

    def forward(self, features: torch.Tensor, state: ScaleState | None = None) -> torch.Tensor:
        state = state or ScaleState(self.scale, 1.0)
        if features.ndim != 2 or features.shape[1] != FEATURE_DIM:
            raise ValueError(f"expected (batch, {FEATURE_DIM}) features, got {tuple(features.shape)}")
        if state.scale > self.scale:
            raise ValueError(f"generator has only grown to {self.scale}, asked for {state.scale}")
        n = SCALES.index(state.scale)
        x = self.norm(features.view(-1, BASE_CHANNELS, 4, 4))
        for k in range(n):
            x = self.blocks[k](x)
        new = self.to_rgb[n](self.blocks[n](x))
        if n == 0 or state.alpha == 1.0:
            return new
        old = upsample2x(self.to_rgb[n - 1](x))
        return _blend(old, new, state.alpha)


class DiscriminatorBlock(nn.Module):
    def __init__(self, in_channels, out_channels):
        super().__init__()
        self.conv1 = EqualizedConv2d(in_channels, in_channels, 3, padding=1)
        self.conv2 = EqualizedConv2d(in_channels, out_channels, 3, padding=1)

    def forward(self, x):
        x = F.leaky_relu(self.conv1(x), LEAK)
        x = F.leaky_relu(self.conv2(x), LEAK)
        return F.avg_pool2d(x, 2)


class DiscriminatorHead(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.conv = EqualizedConv2d(channels + 1, channels, 3, padding=1)
        self.dense = EqualizedConv2d(channels, channels, 4)
        self.out = EqualizedLinear(channels, 1, gain=1.0)

    def forward(self, x):
        x = minibatch_stddev(x)
        x = F.leaky_relu(self.conv(x), LEAK)
        x = F.leaky_relu(self.dense(x), LEAK)
        return self.out(x.flatten(1)).squeeze(1)


class Discriminator(nn.Module):
    """Wasserstein critic on (image, resized 63-channel condition) pairs."""

    in_channels = IMAGE_CHANNELS + CONDITION_CHANNELS

    def __init__(self):
        super().__init__()
        self.head = DiscriminatorHead(CHANNELS[4])
        self.blocks = nn.ModuleList()  # blocks[k] maps scale 8 * 2**k down to 4 * 2**k
        self.from_rgb = nn.ModuleList([EqualizedConv2d(self.in_channels, CHANNELS[4], 1)])

    @property
    def scale(self) -> int:
        return SCALES[len(self.from_rgb) - 1]

    def grow(self, new_scale: int) -> None:
        _check_growth(self.scale, new_scale)
        self.blocks.append(DiscriminatorBlock(CHANNELS[new_scale], CHANNELS[self.scale]))
        self.from_rgb.append(EqualizedConv2d(self.in_channels, CHANNELS[new_scale], 1))

    def conditioned_input(self, image: torch.Tensor, condition: torch.Tensor) -> torch.Tensor:
        size = image.shape[-1]
        if image.shape[1] != IMAGE_CHANNELS or image.shape[-2] != size:
            raise ValueError(f"expected (batch, 3, s, s) images, got {tuple(image.shape)}")
        if condition.shape[1:] != (CONDITION_CHANNELS, 64, 64):
            raise ValueError(f"expected (batch, 63, 64, 64) condition, got {tuple(condition.shape)}")
        return torch.cat([image, area_downsample(condition, size)], dim=1)

    def forward(self, image: torch.Tensor, condition: torch.Tensor,
                state: ScaleState | None = None) -> torch.Tensor:
        state = state or ScaleState(self.scale, 1.0)
        if image.shape[-1] != state.scale:
            raise ValueError(f"image size {image.shape[-1]} does not match scale {state.scale}")
        if state.scale > self.scale:
            raise ValueError(f"discriminator has only grown to {self.scale}, asked for {state.scale}")
        x_in = self.conditioned_input(image, condition)
        n = SCALES.index(state.scale)
        x = F.leaky_relu(self.from_rgb[n](x_in), LEAK)
        if n > 0:
            x = self.blocks[n - 1](x)
            if state.alpha < 1.0:
                old = F.leaky_relu(self.from_rgb[n - 1](F.avg_pool2d(x_in, 2)), LEAK)
                x = _blend(old, x, state.alpha)
            for k in range(n - 2, -1, -1):
                x = self.blocks[k](x)
        return self.head(x)


def grow(generator: Generator, discriminator: Discriminator, new_scale: int) -> None:
    """Add the next resolution block to both networks."""
    if generator.scale != discriminator.scale:
        raise ValueError("generator and discriminator are at different scales")
    _check_growth(generator.scale, new_scale)
    generator.grow(new_scale)
    discriminator.grow(new_scale)
