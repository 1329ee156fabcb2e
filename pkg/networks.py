"""
networks.py — Layers and the three trainable networks of the translator.

    Generator       ResNet encoder/decoder; encoder layers double as NCE feature taps
    Discriminator   PatchGAN scoring overlapping patches
    ProjectionHead  two-layer MLP mapping tapped features into the NCE embedding space

Parameters are plain Tensors found by walking instance attributes in
definition order, so parameter names (and checkpoint layouts) are stable.
"""

from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

import tensor as T
from tensor import ShapeError, Tensor

log = logging.getLogger(__name__)

INIT_STD = 0.02


# ── Specs ────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class GeneratorSpec:
    base_channels: int = 32
    n_downsamples: int = 2
    n_resblocks: int = 4
    nce_layers: tuple[int, ...] = (0, 2, 4)

    @property
    def n_encoder_layers(self) -> int:
        return 1 + self.n_downsamples + self.n_resblocks

    def validate(self) -> list[str]:
        problems = []
        if self.base_channels < 1:
            problems.append(f"base_channels must be >= 1 (got {self.base_channels})")
        if self.n_downsamples < 0:
            problems.append(f"n_downsamples must be >= 0 (got {self.n_downsamples})")
        if self.n_resblocks < 0:
            problems.append(f"n_resblocks must be >= 0 (got {self.n_resblocks})")
        if not self.nce_layers:
            problems.append("nce_layers must name at least one encoder layer")
        for layer in self.nce_layers:
            if not 0 <= layer < self.n_encoder_layers:
                problems.append(f"nce layer {layer} outside encoder range [0, {self.n_encoder_layers})")
        if len(set(self.nce_layers)) != len(self.nce_layers):
            problems.append("nce_layers contains duplicates")
        return problems

    def layer_channels(self, layer: int) -> int:
        return self.base_channels * 2 ** min(layer, self.n_downsamples)

    def to_dict(self) -> dict:
        return {
            "base_channels": self.base_channels,
            "n_downsamples": self.n_downsamples,
            "n_resblocks": self.n_resblocks,
            "nce_layers": list(self.nce_layers),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorSpec":
        return cls(
            base_channels=int(data["base_channels"]),
            n_downsamples=int(data["n_downsamples"]),
            n_resblocks=int(data["n_resblocks"]),
            nce_layers=tuple(int(x) for x in data["nce_layers"]),
        )


@dataclass(frozen=True)
class DiscriminatorSpec:
    base_channels: int = 32
    n_layers: int = 3

    def validate(self) -> list[str]:
        problems = []
        if self.base_channels < 1:
            problems.append(f"base_channels must be >= 1 (got {self.base_channels})")
        if self.n_layers < 1:
            problems.append(f"n_layers must be >= 1 (got {self.n_layers})")
        return problems

    def to_dict(self) -> dict:
        return {"base_channels": self.base_channels, "n_layers": self.n_layers}

    @classmethod
    def from_dict(cls, data: dict) -> "DiscriminatorSpec":
        return cls(base_channels=int(data["base_channels"]), n_layers=int(data["n_layers"]))


# ── Module base ──────────────────────────────────────────────────────────────

class Module:
    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor):
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def zero_grad(self) -> None:
        for _, p in self.named_parameters():
            p.grad = None

    @contextmanager
    def frozen(self):
        """Parameters stop requiring grad for the duration of the block."""
        params = list(self.named_parameters())
        for _, p in params:
            p.requires_grad = False
        try:
            yield self
        finally:
            for _, p in params:
                p.requires_grad = True

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = sorted(set(params) - set(state))
        extra = sorted(set(state) - set(params))
        if missing or extra:
            raise ShapeError(f"state mismatch: missing {missing[:3]}, unexpected {extra[:3]}")
        for name, p in params.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ShapeError(f"{name}: checkpoint shape {arr.shape} != parameter shape {p.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)

    def n_parameters(self) -> int:
        return sum(p.size for _, p in self.named_parameters())


def _init(rng: np.random.Generator, shape: tuple[int, ...]) -> Tensor:
    return Tensor(rng.normal(0.0, INIT_STD, shape), requires_grad=True)


class Conv2d(Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, rng: np.random.Generator, stride: int = 1, pad: int = 0):
        self.weight = _init(rng, (out_ch, in_ch, kernel, kernel))
        self.bias = Tensor(np.zeros(out_ch), requires_grad=True)
        self.stride = stride
        self.pad = pad

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, self.stride, self.pad)


class InstanceNorm2d(Module):
    def __init__(self, channels: int, eps: float = 1e-5):
        self.weight = Tensor(np.ones(channels), requires_grad=True)
        self.bias = Tensor(np.zeros(channels), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.instance_norm(x, self.weight, self.bias, self.eps)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        self.weight = _init(rng, (in_features, out_features))
        self.bias = Tensor(np.zeros(out_features), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias


class ConvBlock(Module):
    """conv → instance norm → activation."""

    def __init__(self, in_ch, out_ch, kernel, rng, stride=1, pad=0, act: str = "relu", upsample: int = 1):
        self.conv = Conv2d(in_ch, out_ch, kernel, rng, stride, pad)
        self.norm = InstanceNorm2d(out_ch)
        self.act = act
        self.upsample = upsample

    def __call__(self, x: Tensor) -> Tensor:
        if self.upsample > 1:
            x = T.upsample_nearest(x, self.upsample)
        y = self.norm(self.conv(x))
        return T.leaky_relu(y, 0.2) if self.act == "leaky" else T.relu(y)


class ResnetBlock(Module):
    def __init__(self, channels: int, rng: np.random.Generator):
        self.conv1 = Conv2d(channels, channels, 3, rng, pad=1)
        self.norm1 = InstanceNorm2d(channels)
        self.conv2 = Conv2d(channels, channels, 3, rng, pad=1)
        self.norm2 = InstanceNorm2d(channels)

    def __call__(self, x: Tensor) -> Tensor:
        y = T.relu(self.norm1(self.conv1(x)))
        return x + self.norm2(self.conv2(y))


def _pad_to_multiple(x: Tensor, multiple: int) -> tuple[Tensor, int, int]:
    h, w = x.shape[-2:]
    ph, pw = (-h) % multiple, (-w) % multiple
    if ph or pw:
        x = T.pad2d(x, 0, ph, 0, pw)
    return x, h, w


# ── Generator ────────────────────────────────────────────────────────────────

class Generator(Module):
    """Stem, strided downsamples and residual blocks form the encoder.

    Encoder layer i is the output of the i-th of those blocks; the decoder
    upsamples back and ends in a 7x7 conv squashed to [0, 1] by a sigmoid.
    Inputs are zero-padded on the bottom/right to a multiple of 2**n_downsamples
    and the output is cropped back to the input extent.
    """

    def __init__(self, spec: GeneratorSpec, rng: np.random.Generator):
        problems = spec.validate()
        if problems:
            raise ValueError("; ".join(problems))
        self.spec = spec
        c = spec.base_channels
        encoder: list[Module] = [ConvBlock(1, c, 7, rng, pad=3)]
        for i in range(spec.n_downsamples):
            encoder.append(ConvBlock(c * 2 ** i, c * 2 ** (i + 1), 4, rng, stride=2, pad=1))
        width = c * 2 ** spec.n_downsamples
        encoder.extend(ResnetBlock(width, rng) for _ in range(spec.n_resblocks))
        self.encoder = encoder
        self.decoder: list[Module] = [
            ConvBlock(c * 2 ** (i + 1), c * 2 ** i, 3, rng, pad=1, upsample=2)
            for i in reversed(range(spec.n_downsamples))
        ]
        self.head = Conv2d(c, 1, 7, rng, pad=3)

    @property
    def multiple(self) -> int:
        return 2 ** self.spec.n_downsamples

    def encode(self, x: Tensor, layers: tuple[int, ...] | None = None) -> list[Tensor]:
        """Features at the requested encoder layers, in request order."""
        layers = self.spec.nce_layers if layers is None else tuple(layers)
        x, _, _ = _pad_to_multiple(x, self.multiple)
        deepest = max(layers)
        taps: dict[int, Tensor] = {}
        for i, block in enumerate(self.encoder[:deepest + 1]):
            x = block(x)
            if i in layers:
                taps[i] = x
        return [taps[i] for i in layers]

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != 1:
            raise ShapeError(f"generator expects [N, 1, H, W], got {x.shape}")
        x, h, w = _pad_to_multiple(x, self.multiple)
        for block in self.encoder:
            x = block(x)
        for block in self.decoder:
            x = block(x)
        out = T.sigmoid(self.head(x))
        if out.shape[-2:] != (h, w):
            out = T.crop2d(out, 0, 0, h, w)
        return out


# ── Discriminator ────────────────────────────────────────────────────────────

class Discriminator(Module):
    """PatchGAN: strided 4x4 convs, then two stride-1 4x4 convs to one channel."""

    def __init__(self, spec: DiscriminatorSpec, rng: np.random.Generator):
        problems = spec.validate()
        if problems:
            raise ValueError("; ".join(problems))
        self.spec = spec
        c = spec.base_channels
        self.stem = Conv2d(1, c, 4, rng, stride=2, pad=1)
        mult = 1
        body: list[Module] = []
        for n in range(1, spec.n_layers):
            prev, mult = mult, min(2 ** n, 8)
            body.append(ConvBlock(c * prev, c * mult, 4, rng, stride=2, pad=1, act="leaky"))
        prev, mult = mult, min(2 ** spec.n_layers, 8)
        body.append(ConvBlock(c * prev, c * mult, 4, rng, stride=1, pad=1, act="leaky"))
        self.body = body
        self.out = Conv2d(c * mult, 1, 4, rng, stride=1, pad=1)

    def __call__(self, x: Tensor) -> Tensor:
        x, _, _ = _pad_to_multiple(x, 2 ** self.spec.n_layers)
        x = T.leaky_relu(self.stem(x), 0.2)
        for block in self.body:
            x = block(x)
        return self.out(x)


# ── Projection head ──────────────────────────────────────────────────────────

class ProjectionHead(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        self.fc1 = Linear(in_features, out_features, rng)
        self.fc2 = Linear(out_features, out_features, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return T.l2_normalize(self.fc2(T.relu(self.fc1(x))), axis=-1)


@dataclass
class HeadSet(Module):
    """One projection head per tapped encoder layer."""

    layers: tuple[int, ...]
    heads: list[ProjectionHead] = field(default_factory=list)

    def __getitem__(self, layer: int) -> ProjectionHead:
        return self.heads[self.layers.index(layer)]

    @classmethod
    def build(cls, spec: GeneratorSpec, dim: int, rng: np.random.Generator) -> "HeadSet":
        return cls(spec.nce_layers, [ProjectionHead(spec.layer_channels(l), dim, rng) for l in spec.nce_layers])
