from .layers import (
    EqualizedConv1d, EqualizedConv2d, EqualizedConv3d, EqualizedLinear, MinibatchStdDev, PixelNorm,
    area_downsample, equalized_scale, minibatch_stddev, pixelwise_norm, upsample2x,
)
from .networks import (
    CHANNELS, FEATURE_DIM, SCALES, Discriminator, Generator, ScaleState, grow,
)

__all__ = [
    "EqualizedConv1d", "EqualizedConv2d", "EqualizedConv3d", "EqualizedLinear", "MinibatchStdDev",
    "PixelNorm", "area_downsample", "equalized_scale", "minibatch_stddev", "pixelwise_norm",
    "upsample2x", "CHANNELS", "FEATURE_DIM", "SCALES", "Discriminator", "Generator", "ScaleState",
    "grow",
]
