import math

import torch
import torch.nn.functional as F
from torch import nn

LEAK = 0.2


def equalized_scale(fan_in: int, gain: float = math.sqrt(2)) -> float:
    """Runtime multiplier for unit-variance stored weights."""
    if fan_in < 1:
        raise ValueError(f"fan_in must be >= 1, got {fan_in}")
    return gain / math.sqrt(fan_in)


class EqualizedConv2d(nn.Module):
    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0,
                 gain=math.sqrt(2), groups=1):
        super().__init__()
        fan_in = (in_channels // groups) * kernel_size * kernel_size
        self.weight = nn.Parameter(torch.randn(out_channels, in_channels // groups, kernel_size, kernel_size))
        self.bias = nn.Parameter(torch.zeros(out_channels))
        self.scale = equalized_scale(fan_in, gain)
        self.stride = stride
        self.padding = padding
        self.groups = groups

    def forward(self, x):
        return F.conv2d(x, self.weight * self.scale, self.bias, self.stride, self.padding, 1, self.groups)


class EqualizedConv1d(nn.Module):
    def __init__(self, in_channels, out_channels, kernel_size, gain=math.sqrt(2)):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(out_channels, in_channels, kernel_size))
        self.bias = nn.Parameter(torch.zeros(out_channels))
        self.scale = equalized_scale(in_channels * kernel_size, gain)

    def forward(self, x):
        return F.conv1d(x, self.weight * self.scale, self.bias)


class EqualizedConv3d(nn.Module):
    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0, gain=math.sqrt(2)):
        super().__init__()
        kernel_size = tuple(kernel_size)
        self.weight = nn.Parameter(torch.randn(out_channels, in_channels, *kernel_size))
        self.bias = nn.Parameter(torch.zeros(out_channels))
        self.scale = equalized_scale(in_channels * math.prod(kernel_size), gain)
        self.stride = stride
        self.padding = padding

    def forward(self, x):
        return F.conv3d(x, self.weight * self.scale, self.bias, self.stride, self.padding)


class EqualizedLinear(nn.Module):
    def __init__(self, in_features, out_features, gain=math.sqrt(2)):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(out_features, in_features))
        self.bias = nn.Parameter(torch.zeros(out_features))
        self.scale = equalized_scale(in_features, gain)

    def forward(self, x):
        return F.linear(x, self.weight * self.scale, self.bias)


def pixelwise_norm(x: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    """Normalize each spatial position's channel vector to unit RMS."""
    return x * torch.rsqrt(torch.mean(x * x, dim=1, keepdim=True) + eps)


class PixelNorm(nn.Module):
    def __init__(self, eps: float = 1e-8):
        super().__init__()
        self.eps = eps

    def forward(self, x):
        return pixelwise_norm(x, self.eps)


def minibatch_stddev(x: torch.Tensor) -> torch.Tensor:
    """Append the batch-averaged per-feature standard deviation as one channel.

    Population statistics over the whole batch. The square root is guarded so
    a zero-variance batch yields exact zeros and a finite gradient.
    """
    # shift by the first sample so identical samples give exactly zero deviations
    d = x - x[:1]
    var = torch.mean((d - d.mean(dim=0, keepdim=True)) ** 2, dim=0)
    positive = var > 0
    std = torch.where(positive, torch.sqrt(torch.where(positive, var, torch.ones_like(var))),
                      torch.zeros_like(var))
    stat = std.mean()
    extra = stat.expand(x.shape[0], 1, *x.shape[2:])
    return torch.cat([x, extra], dim=1)


class MinibatchStdDev(nn.Module):
    def forward(self, x):
        return minibatch_stddev(x)


def area_downsample(x: torch.Tensor, size: int) -> torch.Tensor:
    """Average-pool an NCHW tensor down to ``size x size``."""
    if x.shape[-1] == size:
        return x
    factor = x.shape[-1] // size
    if factor * size != x.shape[-1]:
        raise ValueError(f"cannot area-downsample {x.shape[-1]} to {size}")
    return F.avg_pool2d(x, factor)


def upsample2x(x: torch.Tensor) -> torch.Tensor:
    return F.interpolate(x, scale_factor=2, mode="nearest")
