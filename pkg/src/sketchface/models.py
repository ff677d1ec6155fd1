"""Network construction: calibration/synthesis generators and patch discriminators.

Generators follow the encoder / residual / decoder pattern: two stride-2
encode layers, eight dilated residual blocks (dilation 2), two upsampling
decode layers with skip concatenation at matching resolutions, and a tanh
head squashing to the signed range.  Discriminators are stacks of
spectral-normalized stride-2 convolutions scoring overlapping patches on a
spatial grid; their per-layer activations feed the feature-matching
calibration loss.

Everything is seeded and deterministic: building twice with the same spec
and seed yields bitwise-identical weights.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import nn

from .buffers import ContractViolation, EdgeMap, ImageBuffer

CHECKPOINT_VERSION = 1

_INIT_STD = 0.02
_LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class GeneratorSpec:
    in_channels: int
    out_channels: int
    base_width: int = 64
    n_down: int = 2
    n_res: int = 8
    dilation: int = 2
    skip_connections: bool = True

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ContractViolation("channel counts must be positive")
        if self.n_down < 1 or self.n_res < 0 or self.dilation < 1 or self.base_width < 1:
            raise ContractViolation("invalid generator spec")


@dataclass(frozen=True)
class DiscriminatorSpec:
    in_channels: int
    n_layers: int = 4
    base_width: int = 64
    spectral_norm: bool = True

    def __post_init__(self):
        if self.in_channels < 1 or self.n_layers < 1 or self.base_width < 1:
            raise ContractViolation("invalid discriminator spec")


def scn_generator_spec(base_width: int = 64) -> GeneratorSpec:
    """Stage-1 preset: 1-channel sketch in, 1-channel refined sketch out."""
    return GeneratorSpec(in_channels=1, out_channels=1, base_width=base_width)


def isn_generator_spec(base_width: int = 64) -> GeneratorSpec:
    """Stage-2 preset: 1-channel refined sketch in, 3-channel photo out."""
    return GeneratorSpec(in_channels=1, out_channels=3, base_width=base_width)


class SpectralNormConv2d(nn.Module):
    """Conv2d whose weight is divided by its largest singular value.

    The singular value is estimated by power iteration with persistent
    u/v vectors (one iteration per training-mode forward).  ``power_iterate``
    refreshes the estimate in place for any number of extra steps.
    """

    def __init__(self, in_channels, out_channels, kernel_size, stride, padding,
                 generator: torch.Generator, n_power_iterations: int = 1):
        super().__init__()
        weight = torch.empty(out_channels, in_channels, kernel_size, kernel_size)
        weight.normal_(0.0, _INIT_STD, generator=generator)
        self.weight = nn.Parameter(weight)
        self.bias = nn.Parameter(torch.zeros(out_channels))
        self.stride = stride
        self.padding = padding
        self.n_power_iterations = n_power_iterations

        # Start u/v at the exact top singular pair; power iteration then only
        # has to track weight drift during training.
        flat = weight.reshape(out_channels, -1)
        svd_u, _, svd_vh = torch.linalg.svd(flat, full_matrices=False)
        self.register_buffer("u", svd_u[:, 0].contiguous())
        self.register_buffer("v", svd_vh[0, :].contiguous())

    @torch.no_grad()
    def power_iterate(self, n_iterations: int) -> None:
        flat = self.weight.reshape(self.weight.shape[0], -1)
        u, v = self.u, self.v
        for _ in range(n_iterations):
            v = F.normalize(flat.t() @ u, dim=0, eps=1e-12)
            u = F.normalize(flat @ v, dim=0, eps=1e-12)
        self.u.copy_(u)
        self.v.copy_(v)

    @torch.no_grad()
    def power_iterate_until_stable(self, rel_tol: float = 1e-10, max_iterations: int = 2000) -> None:
        prev = self.sigma().item()
        for _ in range(max_iterations):
            self.power_iterate(1)
            cur = self.sigma().item()
            if abs(cur - prev) <= rel_tol * max(abs(cur), 1e-12):
                return
            prev = cur

    def sigma(self) -> torch.Tensor:
        # Clone the persistent vectors so later power iterations cannot
        # invalidate autograd graphs that already reference them.
        flat = self.weight.reshape(self.weight.shape[0], -1)
        return torch.dot(self.u.clone(), flat @ self.v.clone())

    def normalized_weight(self) -> torch.Tensor:
        return self.weight / self.sigma()

    def forward(self, x):
        if self.training:
            self.power_iterate(self.n_power_iterations)
        return F.conv2d(x, self.normalized_weight(), self.bias,
                        stride=self.stride, padding=self.padding)


class _ResidualBlock(nn.Module):
    def __init__(self, channels: int, dilation: int, generator: torch.Generator):
        super().__init__()
        pad = dilation
        self.block = nn.Sequential(
            nn.ReflectionPad2d(pad),
            _conv(channels, channels, 3, 1, 0, generator, dilation=dilation),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(pad),
            _conv(channels, channels, 3, 1, 0, generator, dilation=dilation),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x):
        return x + self.block(x)


def _conv(in_c, out_c, k, stride, padding, generator, dilation=1):
    conv = nn.Conv2d(in_c, out_c, k, stride=stride, padding=padding, dilation=dilation)
    with torch.no_grad():
        conv.weight.normal_(0.0, _INIT_STD, generator=generator)
        conv.bias.zero_()
    return conv


class Generator(nn.Module):
    def __init__(self, spec: GeneratorSpec, seed: int):
        super().__init__()
        self.spec = spec
        self.seed = seed
        gen = torch.Generator().manual_seed(seed)
        w = spec.base_width

        self.stem = nn.Sequential(
            nn.ReflectionPad2d(3),
            _conv(spec.in_channels, w, 7, 1, 0, gen),
            nn.InstanceNorm2d(w),
            nn.ReLU(inplace=True),
        )
        downs = []
        c = w
        for _ in range(spec.n_down):
            downs.append(nn.Sequential(
                _conv(c, c * 2, 3, 2, 1, gen),
                nn.InstanceNorm2d(c * 2),
                nn.ReLU(inplace=True),
            ))
            c *= 2
        self.downs = nn.ModuleList(downs)

        self.res = nn.Sequential(*[
            _ResidualBlock(c, spec.dilation, gen) for _ in range(spec.n_res)
        ])

        ups = []
        for _ in range(spec.n_down):
            skip_c = c // 2 if spec.skip_connections else 0
            ups.append(nn.Sequential(
                _conv(c + skip_c, c // 2, 3, 1, 1, gen),
                nn.InstanceNorm2d(c // 2),
                nn.ReLU(inplace=True),
            ))
            c //= 2
        self.ups = nn.ModuleList(ups)

        head_in = c + (c if spec.skip_connections else 0)
        self.head = nn.Sequential(
            nn.ReflectionPad2d(3),
            _conv(head_in, spec.out_channels, 7, 1, 0, gen),
            nn.Tanh(),
        )

    def forward(self, x):
        feats = [self.stem(x)]
        for down in self.downs:
            feats.append(down(feats[-1]))
        h = self.res(feats[-1])
        for i, up in enumerate(self.ups):
            h = F.interpolate(h, scale_factor=2, mode="nearest")
            if self.spec.skip_connections:
                h = torch.cat([h, feats[-(i + 2)]], dim=1)
            h = up(h)
        if self.spec.skip_connections:
            h = torch.cat([h, feats[0]], dim=1)
        return self.head(h)


class Discriminator(nn.Module):
    """Patch scorer; ``features`` exposes each layer's activations."""

    def __init__(self, spec: DiscriminatorSpec, seed: int):
        super().__init__()
        self.spec = spec
        self.seed = seed
        gen = torch.Generator().manual_seed(seed)
        w = spec.base_width

        layers = []
        c_in = spec.in_channels
        for i in range(spec.n_layers):
            c_out = w * min(2 ** i, 8)
            if spec.spectral_norm:
                conv = SpectralNormConv2d(c_in, c_out, 5, 2, 2, gen)
            else:
                conv = _conv(c_in, c_out, 5, 2, 2, gen)
            layers.append(nn.Sequential(conv, nn.LeakyReLU(_LEAKY_SLOPE, inplace=True)))
            c_in = c_out
        self.layers = nn.ModuleList(layers)
        if spec.spectral_norm:
            self.score = SpectralNormConv2d(c_in, 1, 5, 1, 2, gen)
        else:
            self.score = _conv(c_in, 1, 5, 1, 2, gen)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return self.score(x)

    def features(self, x) -> list[torch.Tensor]:
        """Per-layer activations, shallow to deep (one per stride-2 layer)."""
        if x.shape[1] != self.spec.in_channels:
            raise ContractViolation(
                f"expected {self.spec.in_channels} input channels, got {x.shape[1]}"
            )
        out = []
        for layer in self.layers:
            x = layer(x)
            out.append(x)
        return out

    def spectral_conv_layers(self) -> list[SpectralNormConv2d]:
        return [m for m in self.modules() if isinstance(m, SpectralNormConv2d)]

    def refresh_spectral_norm(self, n_iterations: int = 5, until_stable: bool = False) -> None:
        for m in self.spectral_conv_layers():
            if until_stable:
                m.power_iterate_until_stable()
            else:
                m.power_iterate(n_iterations)


def build_generator(spec: GeneratorSpec, seed: int) -> Generator:
    return Generator(spec, seed)


def build_discriminator(spec: DiscriminatorSpec, seed: int) -> Discriminator:
    return Discriminator(spec, seed)


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def _pad_to_multiple(x: torch.Tensor, multiple: int) -> tuple[torch.Tensor, int, int]:
    h, w = x.shape[-2], x.shape[-1]
    pad_h = (-h) % multiple
    pad_w = (-w) % multiple
    if pad_h or pad_w:
        x = F.pad(x, (0, pad_w, 0, pad_h), mode="reflect")
    return x, h, w


def edge_map_to_tensor(m: EdgeMap) -> torch.Tensor:
    """EdgeMap (unit) -> 1x1xHxW signed tensor."""
    t = torch.from_numpy(m.data.copy()).float()
    return (t * 2.0 - 1.0).unsqueeze(0).unsqueeze(0)


def forward_scn(g1: Generator, sketch: EdgeMap) -> EdgeMap:
    """Inference pass of the stroke calibration stage.

    Consumes the poorly-drawn sketch only; returns the refined sketch in the
    unit range at the input resolution (inputs whose sides are not multiples
    of 4 are reflect-padded and cropped back).
    """
    g1.eval()
    with torch.no_grad():
        x, h, w = _pad_to_multiple(edge_map_to_tensor(sketch), 4)
        y = g1(x)[:, :, :h, :w]
    out = ((y[0, 0] + 1.0) / 2.0).clamp(0.0, 1.0).numpy()
    return EdgeMap.from_array(out, "composed")


def forward_isn(g2: Generator, refined: EdgeMap) -> ImageBuffer:
    """Inference pass of the image synthesis stage; 3-channel signed output."""
    g2.eval()
    with torch.no_grad():
        x, h, w = _pad_to_multiple(edge_map_to_tensor(refined), 4)
        y = g2(x)[:, :, :h, :w]
    out = y[0].clamp(-1.0, 1.0).permute(1, 2, 0).numpy()
    return ImageBuffer(out, "signed")


def save_checkpoint(module: nn.Module, path: "str | Path") -> None:
    """Versioned archive: spec + seed + named weights (incl. power-iteration state)."""
    if isinstance(module, Generator):
        kind = "generator"
    elif isinstance(module, Discriminator):
        kind = "discriminator"
    else:
        raise ContractViolation(f"cannot checkpoint {type(module).__name__}")
    payload = {
        "version": CHECKPOINT_VERSION,
        "kind": kind,
        "spec": asdict(module.spec),
        "seed": module.seed,
        "state": module.state_dict(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)


def load_checkpoint(path: "str | Path") -> nn.Module:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    version = payload.get("version")
    if version != CHECKPOINT_VERSION:
        raise ContractViolation(f"unsupported checkpoint version {version}")
    if payload["kind"] == "generator":
        module = Generator(GeneratorSpec(**payload["spec"]), payload["seed"])
    else:
        module = Discriminator(DiscriminatorSpec(**payload["spec"]), payload["seed"])
    module.load_state_dict(payload["state"])
    module.eval()
    return module


def checkpoint_digest(path: "str | Path") -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]
