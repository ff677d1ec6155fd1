"""Pluggable feature extractors for the perceptual and style losses.

Each extractor maps a B x C x H x W tensor to an ordered list of feature
tensors tapped *before* the nonlinearity of each stage.  The default for
real training is a pretrained VGG-19 classifier when its weights are
available; hermetic tests use a seeded fixed-random convolutional stack
instead, which exercises the identical loss code path without downloads.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

# VGG-19 conv outputs immediately before the ReLU that ends each stage.
VGG19_TAP_INDICES = (2, 7, 16, 25, 34)


class IdentityExtractor(nn.Module):
    """Single tap returning the input unchanged (reduces perceptual to L1)."""

    def forward(self, x) -> list[torch.Tensor]:
        return [x]


class RandomConvExtractor(nn.Module):
    """Frozen random convolutional stack with pre-activation taps."""

    def __init__(self, in_channels: int = 3, widths=(16, 32, 64), seed: int = 0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        convs = []
        c = in_channels
        for w in widths:
            conv = nn.Conv2d(c, w, 3, stride=2, padding=1)
            with torch.no_grad():
                conv.weight.normal_(0.0, 0.2, generator=gen)
                conv.bias.zero_()
            convs.append(conv)
            c = w
        self.convs = nn.ModuleList(convs)
        self.in_channels = in_channels
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x) -> list[torch.Tensor]:
        if x.shape[1] == 1 and self.in_channels == 3:
            x = x.repeat(1, 3, 1, 1)
        taps = []
        for conv in self.convs:
            pre = conv(x)
            taps.append(pre)
            x = F.leaky_relu(pre, 0.2)
        return taps


class Vgg19Extractor(nn.Module):
    """Pretrained VGG-19 taps before the activation closing each stage.

    Expects signed-range input; converts to the ImageNet normalization the
    classifier was trained with.
    """

    MEAN = (0.485, 0.456, 0.406)
    STD = (0.229, 0.224, 0.225)

    def __init__(self):
        super().__init__()
        try:
            from torchvision import models
            vgg = models.vgg19(weights=models.VGG19_Weights.IMAGENET1K_V1)
        except Exception as exc:  # no torchvision or weights not downloadable
            raise RuntimeError(f"pretrained VGG-19 unavailable: {exc}") from exc
        self.features = vgg.features[: VGG19_TAP_INDICES[-1] + 1].eval()
        for p in self.parameters():
            p.requires_grad_(False)
        self.register_buffer("mean", torch.tensor(self.MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(self.STD).view(1, 3, 1, 1))

    def forward(self, x) -> list[torch.Tensor]:
        if x.shape[1] == 1:
            x = x.repeat(1, 3, 1, 1)
        x = ((x + 1.0) / 2.0 - self.mean) / self.std
        taps = []
        for i, layer in enumerate(self.features):
            x = layer(x)
            if i in VGG19_TAP_INDICES:
                taps.append(x)
        return taps


def make_extractor(kind: str = "auto", in_channels: int = 3, seed: int = 0) -> nn.Module:
    """``auto`` prefers pretrained VGG-19 and falls back to the random stack."""
    if kind == "identity":
        return IdentityExtractor()
    if kind == "random":
        return RandomConvExtractor(in_channels=in_channels, seed=seed)
    if kind == "vgg19":
        return Vgg19Extractor()
    if kind == "auto":
        try:
            return Vgg19Extractor()
        except RuntimeError:
            return RandomConvExtractor(in_channels=in_channels, seed=seed)
    raise ValueError(f"unknown extractor kind {kind!r}")
