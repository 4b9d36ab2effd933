"""Observation encoders.

Every encoder takes the channel-stacked window ``(batch, 63, 64, 64)`` and
returns ``(batch, 4096)`` state features, so the generator never needs to
know which one produced them. The volumetric encoders also expose
``forward_volume`` for ``(batch, 21, 3, 64, 64)`` input.
"""
from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .gan.layers import LEAK, EqualizedConv1d, EqualizedConv2d, EqualizedConv3d
from .gan.networks import FEATURE_DIM
from .obsmodel import STACKED_CHANNELS, WINDOW

ENCODERS = ("baseline", "conv3d", "conv2d1d", "capsule")
KNOWN_NONLEARNING = frozenset({"conv2d1d"})


def _check_stacked(x: torch.Tensor) -> None:
    if x.ndim != 4 or x.shape[1:] != (STACKED_CHANNELS, 64, 64):
        raise ValueError(f"expected (batch, {STACKED_CHANNELS}, 64, 64) input, got {tuple(x.shape)}")


def volume_from_stacked(x: torch.Tensor) -> torch.Tensor:
    """``(B, 63, H, W)`` -> ``(B, 21, 3, H, W)``; exact, channel ``3j+k`` is frame ``j`` channel ``k``."""
    return x.view(x.shape[0], WINDOW, 3, *x.shape[2:])


def stacked_from_volume(v: torch.Tensor) -> torch.Tensor:
    return v.reshape(v.shape[0], WINDOW * 3, *v.shape[3:])


def _check_volume(v: torch.Tensor) -> None:
    if v.ndim != 5 or v.shape[1:] != (WINDOW, 3, 64, 64):
        raise ValueError(f"expected (batch, {WINDOW}, 3, 64, 64) volume, got {tuple(v.shape)}")


class BaselineEncoder(nn.Module):
    """Nine 2D conv layers over the stacked window, flattened to 4096."""

    widths = (64, 64, 128, 128, 256, 256, 512, 512)

    def __init__(self):
        super().__init__()
        layers = []
        c_in = STACKED_CHANNELS
        for i, c_out in enumerate(self.widths):
            stride = 2 if i % 2 == 1 else 1
            layers.append(EqualizedConv2d(c_in, c_out, 3, stride=stride, padding=1))
            c_in = c_out
        self.convs = nn.ModuleList(layers)
        self.out = EqualizedConv2d(c_in, 256, 3, padding=1)

    def forward(self, x):
        _check_stacked(x)
        for conv in self.convs:
            x = F.leaky_relu(conv(x), LEAK)
        return self.out(x).flatten(1)


class Conv3dEncoder(nn.Module):
    """3D convolutions with short temporal kernels and no temporal padding.

    Each strided layer trims the depth by 2 (21 -> 19 -> 17 -> 15 -> 13) and
    halves the image; a final full-depth layer collapses time to 1.
    """

    widths = (16, 32, 64, 128)
    temporal_kernel = 3
    spatial_kernel = 4

    def __init__(self):
        super().__init__()
        layers = []
        c_in = 3
        for c_out in self.widths:
            layers.append(EqualizedConv3d(
                c_in, c_out, (self.temporal_kernel, self.spatial_kernel, self.spatial_kernel),
                stride=(1, 2, 2), padding=(0, 1, 1)))
            c_in = c_out
        self.convs = nn.ModuleList(layers)
        depth = WINDOW - len(self.widths) * (self.temporal_kernel - 1)
        self.collapse = EqualizedConv3d(c_in, 256, (depth, 1, 1))

    def depth_trace(self) -> list[int]:
        d = WINDOW
        trace = [d]
        for _ in self.convs:
            d -= self.temporal_kernel - 1
            trace.append(d)
        trace.append(d - self.collapse.weight.shape[2] + 1)
        return trace

    def forward_volume(self, v):
        _check_volume(v)
        x = v.permute(0, 2, 1, 3, 4)  # (B, 3, T, H, W)
        for conv in self.convs:
            x = F.leaky_relu(conv(x), LEAK)
        x = self.collapse(x)
        if x.shape[2] != 1:
            raise RuntimeError(f"temporal depth did not collapse to 1 (got {x.shape[2]})")
        return x.flatten(1)

    def forward(self, x):
        _check_stacked(x)
        return self.forward_volume(volume_from_stacked(x))


class Conv2d1dEncoder(nn.Module):
    """Per-frame 2D CNN (shared weights) to 21 x 4096, then a 1D temporal CNN.

    This variant is known not to learn the task; it is kept for comparison.
    """

    widths = (32, 64, 128, 256)

    def __init__(self):
        super().__init__()
        layers = []
        c_in = 3
        for c_out in self.widths:
            layers.append(EqualizedConv2d(c_in, c_out, 3, stride=2, padding=1))
            c_in = c_out
        self.spatial = nn.ModuleList(layers)
        self.temporal1 = EqualizedConv1d(FEATURE_DIM, 1024, 3)
        self.temporal2 = EqualizedConv1d(1024, FEATURE_DIM, 3)

    def frame_features(self, v):
        _check_volume(v)
        b = v.shape[0]
        x = v.reshape(b * WINDOW, 3, 64, 64)
        for i, conv in enumerate(self.spatial):
            x = conv(x)
            if i < len(self.spatial) - 1:
                x = F.leaky_relu(x, LEAK)
        return x.reshape(b, WINDOW, FEATURE_DIM)

    def forward_volume(self, v):
        feats = self.frame_features(v).transpose(1, 2)  # (B, 4096, 21)
        x = F.leaky_relu(self.temporal1(feats), LEAK)
        return self.temporal2(x).mean(dim=2)

    def forward(self, x):
        _check_stacked(x)
        return self.forward_volume(volume_from_stacked(x))


# -- capsules --------------------------------------------------------------

def squash(s: torch.Tensor, dim: int = -1, eps: float = 1e-12) -> torch.Tensor:
    """Capsule nonlinearity ``|s|^2 / (1 + |s|^2) * s / |s|``; zero maps to zero."""
    norm2 = (s * s).sum(dim=dim, keepdim=True)
    tiny = norm2 < eps * eps
    norm = torch.sqrt(torch.where(tiny, torch.ones_like(norm2), norm2))
    factor = torch.where(tiny, torch.zeros_like(norm2), norm / (1.0 + norm2))
    return s * factor


def dynamic_routing(u_hat: torch.Tensor, iterations: int = 3, shared_dims: tuple[int, ...] = (),
                    return_couplings: bool = False):
    """Routing by agreement.

    ``u_hat`` has shape ``(..., children, parents, dim)``. Routing logits start
    at zero and are shared across the leading axes listed in ``shared_dims``
    (agreement is averaged over them). Returns the parent capsules
    ``(..., parents, dim)`` and, if asked, the coupling coefficients of every
    iteration.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if u_hat.shape[-2] < 1:
        raise ValueError("routing needs at least one parent capsule")
    logit_shape = list(u_hat.shape[:-1])
    for d in shared_dims:
        logit_shape[d] = 1
    b = u_hat.new_zeros(logit_shape)
    couplings = []
    for it in range(iterations):
        c = torch.softmax(b, dim=-1)
        couplings.append(c)
        s = (c.unsqueeze(-1) * u_hat).sum(dim=-3)
        v = squash(s, dim=-1)
        if it < iterations - 1:
            agreement = (u_hat * v.unsqueeze(-3)).sum(dim=-1)
            if shared_dims:
                agreement = agreement.mean(dim=shared_dims, keepdim=True)
            b = b + agreement
    if return_couplings:
        return v, couplings
    return v


class ConvCapsule(nn.Module):
    """Convolutional capsule layer with locally routed predictions.

    Each child capsule type gets its own transform (a grouped convolution
    over its receptive field) predicting every parent type at every output
    position. Routing logits are per (child type, parent type), shared across
    positions.
    """

    def __init__(self, in_caps, in_dim, out_caps, out_dim, kernel_size=3, stride=1, iterations=3):
        super().__init__()
        self.in_caps, self.in_dim = in_caps, in_dim
        self.out_caps, self.out_dim = out_caps, out_dim
        self.iterations = iterations
        self.predict = EqualizedConv2d(in_caps * in_dim, in_caps * out_caps * out_dim, kernel_size,
                                       stride=stride, padding=kernel_size // 2, gain=1.0,
                                       groups=in_caps)

    def forward(self, caps):
        # caps: (B, in_caps, in_dim, H, W)
        b, _, _, h, w = caps.shape
        u = self.predict(caps.reshape(b, self.in_caps * self.in_dim, h, w))
        h2, w2 = u.shape[-2:]
        u = u.view(b, self.in_caps, self.out_caps, self.out_dim, h2, w2)
        u = u.permute(0, 4, 5, 1, 2, 3)  # (B, H', W', in, out, dim)
        v = dynamic_routing(u, self.iterations, shared_dims=(1, 2))
        return v.permute(0, 3, 4, 1, 2).contiguous()  # (B, out, dim, H', W')


class CapsuleEncoder(nn.Module):
    """3x3 conv + LeakyReLU, then three convolutional capsule layers.

    Caps1: 32 x 8-dim at 32x32, Caps2: 16 x 8-dim at 16x16 (routed),
    Caps3: 1 x 16-dim at 16x16 (routed) = 4096 features.
    """

    def __init__(self, conv_channels=64, iterations=3):
        super().__init__()
        self.conv = EqualizedConv2d(STACKED_CHANNELS, conv_channels, 3, padding=1)
        self.primary = EqualizedConv2d(conv_channels, 32 * 8, 3, stride=2, padding=1)
        self.caps2 = ConvCapsule(32, 8, 16, 8, kernel_size=3, stride=2, iterations=iterations)
        self.caps3 = ConvCapsule(16, 8, 1, 16, kernel_size=3, stride=1, iterations=iterations)

    def capsules(self, x):
        """Intermediate capsule tensors ``(B, caps, dim, H, W)`` of all three layers."""
        _check_stacked(x)
        x = F.leaky_relu(self.conv(x), LEAK)
        p = self.primary(x)
        caps1 = squash(p.view(p.shape[0], 32, 8, *p.shape[-2:]), dim=2)
        caps2 = self.caps2(caps1)
        caps3 = self.caps3(caps2)
        return caps1, caps2, caps3

    def forward(self, x):
        return self.capsules(x)[-1].flatten(1)


def build_encoder(name: str) -> nn.Module:
    classes = {
        "baseline": BaselineEncoder,
        "conv3d": Conv3dEncoder,
        "conv2d1d": Conv2d1dEncoder,
        "capsule": CapsuleEncoder,
    }
    if name not in classes:
        raise ValueError(f"unknown encoder {name!r}; choose from {', '.join(ENCODERS)}")
    return classes[name]()
