"""Generator and discriminator architectures.

Building blocks follow the residual U-Net family: ``ResConv`` (two conv/norm/act
layers plus a 1x1 conv skip), ``Down`` (2x max-pool then ResConv), ``Up``
(bilinear 2x upsample, concat with the encoder feature, ResConv) and
``OutConv`` (1x1 projection).  ``CasUNet3Head`` chains plain U-Nets that
refine their input residually and finishes with a U-Net whose decoder ends in
three heads: the mean image, 1/alpha and beta.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterator

import numpy as np

from . import tensor as T
from .errors import DimensionError
from .tensor import Tensor

ALPHA_EPS = 1e-3
BETA_FLOOR = 1e-2
BETA_MAX = 10.0
LEAK = 0.2
HEAD_ACTIVATIONS = {"softplus": T.softplus, "relu": T.relu}


@dataclass
class RunContext:
    """Per-forward settings: whether dropout is live and the rng feeding it."""

    dropout: bool = False
    rng: np.random.Generator | None = None


EVAL = RunContext()


class Module:
    """Container that discovers parameters and sub-modules from its attributes."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + key, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{key}.")
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = arr.copy()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Conv(Module):
    def __init__(self, cin: int, cout: int, k: int = 3, stride: int = 1, pad: int | None = None):
        self.weight = Tensor(np.zeros((cout, cin, k, k)), requires_grad=True)
        self.bias = Tensor(np.zeros(cout), requires_grad=True)
        self.stride = stride
        self.pad = k // 2 if pad is None else pad

    def forward(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)


class Norm(Module):
    def __init__(self, ch: int):
        self.gain = Tensor(np.ones(ch), requires_grad=True)
        self.bias = Tensor(np.zeros(ch), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return T.instance_norm(x, self.gain, self.bias)


class ResConv(Module):
    """Two (conv3x3, instance norm, leaky ReLU) layers plus an additive 1x1-conv skip."""

    def __init__(self, cin: int, cout: int, dropout_p: float = 0.0):
        self.conv1 = Conv(cin, cout, 3)
        self.norm1 = Norm(cout)
        self.conv2 = Conv(cout, cout, 3)
        self.norm2 = Norm(cout)
        self.skip = Conv(cin, cout, 1)
        self.dropout_p = dropout_p

    def forward(self, x: Tensor, ctx: RunContext = EVAL) -> Tensor:
        h = T.leaky_relu(self.norm1(self.conv1(x)), LEAK)
        h = T.leaky_relu(self.norm2(self.conv2(h)), LEAK)
        out = h + self.skip(x)
        if self.dropout_p > 0:
            out = T.dropout(out, self.dropout_p, ctx.dropout, ctx.rng)
        return out


class Down(Module):
    def __init__(self, cin: int, cout: int, dropout_p: float = 0.0):
        self.block = ResConv(cin, cout, dropout_p)

    def forward(self, x: Tensor, ctx: RunContext = EVAL) -> Tensor:
        return self.block(T.maxpool2d(x, 2), ctx)


class Up(Module):
    def __init__(self, cin: int, cskip: int, cout: int, dropout_p: float = 0.0):
        self.block = ResConv(cin + cskip, cout, dropout_p)

    def forward(self, x: Tensor, skip: Tensor, ctx: RunContext = EVAL) -> Tensor:
        return self.block(T.concat([T.upsample_bilinear2x(x), skip], axis=1), ctx)


class OutConv(Module):
    def __init__(self, cin: int, cout: int):
        self.conv = Conv(cin, cout, 1)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv(x)


@dataclass
class GeneratorConfig:
    in_channels: int = 1
    out_channels: int = 1
    base_width: int = 16
    depth: int = 3
    cascade_len: int = 2
    dropout_p: float = 0.2
    # mean head adds the cascade input; only meaningful when in_channels == out_channels
    residual_output: bool = False
    # positivity map on the 1/alpha and beta heads
    head_activation: str = "softplus"

    def __post_init__(self):
        if self.head_activation not in HEAD_ACTIVATIONS:
            raise ValueError(f"head_activation must be one of {HEAD_ACTIVATIONS}")
        if self.depth < 1 or self.cascade_len < 1 or self.base_width < 4:
            raise ValueError("need depth >= 1, cascade_len >= 1, base_width >= 4")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")
        if self.residual_output and self.in_channels != self.out_channels:
            raise ValueError("residual_output needs in_channels == out_channels")


@dataclass
class DiscriminatorConfig:
    in_channels: int = 1
    base_width: int = 16
    n_layers: int = 3

    def __post_init__(self):
        if self.n_layers < 1 or self.base_width < 1:
            raise ValueError("need n_layers >= 1 and base_width >= 1")


class _Trunk(Module):
    """U-Net trunk: encoder and decoder, without the output projection."""

    def __init__(self, cin: int, width: int, depth: int, dropout_p: float):
        self.depth = depth
        self.inc = ResConv(cin, width)
        chans = [width * 2 ** i for i in range(depth + 1)]
        self.downs = [Down(chans[i], chans[i + 1], dropout_p if i == depth - 1 else 0.0)
                      for i in range(depth)]
        # ups[0] is the deepest decoder block
        self.ups = [Up(chans[i + 1], chans[i], chans[i], dropout_p if i == depth - 1 else 0.0)
                    for i in reversed(range(depth))]

    def forward(self, x: Tensor, ctx: RunContext) -> Tensor:
        h, w = x.shape[-2:]
        if h % 2 ** self.depth or w % 2 ** self.depth:
            raise DimensionError(f"spatial size {(h, w)} not divisible by 2**depth = {2 ** self.depth}")
        feats = [self.inc(x, ctx)]
        for down in self.downs:
            feats.append(down(feats[-1], ctx))
            assert feats[-1].shape[-1] * 2 == feats[-2].shape[-1]
        y = feats.pop()
        for up in self.ups:
            y = up(y, feats.pop(), ctx)
        return y


class UNet(Module):
    def __init__(self, cin: int, cout: int, width: int, depth: int, dropout_p: float = 0.0):
        self.trunk = _Trunk(cin, width, depth, dropout_p)
        self.out = OutConv(width, cout)

    def forward(self, x: Tensor, ctx: RunContext = EVAL) -> Tensor:
        y = self.trunk(x, ctx)
        return self.out(y)


@dataclass
class ThreeHeadOutput:
    """Mean image, 1/alpha map and beta map; the last two are nonnegative head outputs."""

    mean: Tensor
    inv_alpha: Tensor
    beta: Tensor


class _Head(Module):
    def __init__(self, cin: int, width: int, cout: int):
        self.conv = Conv(cin, width, 3)
        self.out = OutConv(width, cout)

    def forward(self, x: Tensor) -> Tensor:
        return self.out(T.leaky_relu(self.conv(x), LEAK))


class UNet3Head(Module):
    """U-Net whose decoder output feeds three separate conv heads."""

    def __init__(self, cin: int, cout: int, width: int, depth: int, dropout_p: float = 0.0,
                 residual_output: bool = False, head_activation: str = "softplus"):
        self.head_activation = head_activation
        self.trunk = _Trunk(cin, width, depth, dropout_p)
        self.mean_head = _Head(width, width, cout)
        self.alpha_head = _Head(width, width, cout)
        self.beta_head = _Head(width, width, cout)
        self.residual_output = residual_output

    def forward(self, x: Tensor, ctx: RunContext = EVAL) -> ThreeHeadOutput:
        y = self.trunk(x, ctx)
        mean = self.mean_head(y)
        if self.residual_output:
            mean = mean + x
        act = HEAD_ACTIVATIONS[self.head_activation]
        return ThreeHeadOutput(mean, act(self.alpha_head(y)), act(self.beta_head(y)))


class CasUNet3Head(Module):
    """Cascade of ``cascade_len - 1`` residual U-Nets followed by a three-headed U-Net."""

    def __init__(self, cfg: GeneratorConfig):
        self.cfg = cfg
        self.stages = [UNet(cfg.in_channels, cfg.in_channels, cfg.base_width, cfg.depth, cfg.dropout_p)
                       for _ in range(cfg.cascade_len - 1)]
        self.final = UNet3Head(cfg.in_channels, cfg.out_channels, cfg.base_width, cfg.depth,
                               cfg.dropout_p, cfg.residual_output, cfg.head_activation)

    def forward(self, x: Tensor, ctx: RunContext = EVAL) -> ThreeHeadOutput:
        x = T.as_tensor(x)
        for stage in self.stages:
            x = x + stage(x, ctx)
        return self.final(x, ctx)


def to_ggd_params(out: ThreeHeadOutput) -> tuple[Tensor, Tensor, Tensor]:
    """Turn raw heads into (mean, alpha, beta) maps.

    alpha = 1 / (inv_alpha + 1e-3), so a silent 1/alpha head gives the ceiling
    alpha = 1000; beta = clamp(beta + 1e-2, 1e-2, 10).
    """
    alpha = 1.0 / (out.inv_alpha + ALPHA_EPS)
    beta = T.clamp(out.beta + BETA_FLOOR, BETA_FLOOR, BETA_MAX)
    return out.mean, alpha, beta


class NLayerDiscriminator(Module):
    """PatchGAN: stride-2 4x4 convs, then two stride-1 4x4 convs emitting one score per patch.

    No sigmoid at the end; scores feed a least-squares loss.
    """

    def __init__(self, cfg: DiscriminatorConfig):
        self.cfg = cfg
        w = cfg.base_width
        self.first = Conv(cfg.in_channels, w, 4, stride=2, pad=1)
        chans = [w * min(2 ** i, 8) for i in range(cfg.n_layers + 1)]
        self.mids = [Conv(chans[i - 1], chans[i], 4, stride=2, pad=1) for i in range(1, cfg.n_layers)]
        self.mid_norms = [Norm(chans[i]) for i in range(1, cfg.n_layers)]
        self.penult = Conv(chans[cfg.n_layers - 1], chans[cfg.n_layers], 4, stride=1, pad=1)
        self.penult_norm = Norm(chans[cfg.n_layers])
        self.last = Conv(chans[cfg.n_layers], 1, 4, stride=1, pad=1)

    def receptive_field(self) -> int:
        rf = 4 + 3  # the two stride-1 k4 layers
        for _ in range(self.cfg.n_layers):
            rf = (rf - 1) * 2 + 4
        return rf

    def forward(self, x: Tensor, ctx: RunContext = EVAL) -> Tensor:
        x = T.as_tensor(x)
        h, w = x.shape[-2:]
        min_size = 2 ** self.cfg.n_layers * 4
        if h < min_size or w < min_size:
            raise ValueError(f"input {(h, w)} smaller than the discriminator minimum {min_size}")
        y = T.leaky_relu(self.first(x), LEAK)
        for conv, norm in zip(self.mids, self.mid_norms):
            y = T.leaky_relu(norm(conv(y)), LEAK)
        y = T.leaky_relu(self.penult_norm(self.penult(y)), LEAK)
        return self.last(y)


def _modules(net: Module) -> Iterator[Module]:
    yield net
    for value in vars(net).values():
        if isinstance(value, Module):
            yield from _modules(value)
        elif isinstance(value, list):
            for item in value:
                if isinstance(item, Module):
                    yield from _modules(item)


def init_weights(net: Module, rng: np.random.Generator, std: float = 0.02) -> None:
    """Conv weights ~ N(0, std), conv biases 0, norm gain 1 / bias 0."""
    for m in _modules(net):
        if isinstance(m, Conv):
            m.weight.data = rng.normal(0.0, std, size=m.weight.shape)
            m.bias.data = np.zeros(m.bias.shape)
        elif isinstance(m, Norm):
            m.gain.data = np.ones(m.gain.shape)
            m.bias.data = np.zeros(m.bias.shape)


def identity_init(gen: CasUNet3Head) -> None:
    """Zero every stage's output projection and the mean head so the generator starts as x -> x.

    Requires ``residual_output``.
    """
    if not gen.cfg.residual_output:
        raise ValueError("identity_init needs residual_output=True")
    for stage in gen.stages:
        stage.out.conv.weight.data[...] = 0.0
        stage.out.conv.bias.data[...] = 0.0
    head = gen.final.mean_head.out.conv
    head.weight.data[...] = 0.0
    head.bias.data[...] = 0.0


def unit_scale_init(gen: CasUNet3Head) -> None:
    """Set the 1/alpha and beta head biases so an untrained generator emits alpha = beta = 1.

    With the heads' weights near zero the cycle term then starts out as plain L1.
    Zero biases would start at alpha = 1000, beta = 0.01 under ReLU heads.
    """
    inverse = (lambda v: np.log(np.expm1(v))) if gen.cfg.head_activation == "softplus" else (lambda v: v)
    gen.final.alpha_head.out.conv.bias.data[...] = inverse(1.0 - ALPHA_EPS)
    gen.final.beta_head.out.conv.bias.data[...] = inverse(1.0 - BETA_FLOOR)


def build_generator(cfg: GeneratorConfig, rng: np.random.Generator) -> CasUNet3Head:
    net = CasUNet3Head(cfg)
    init_weights(net, rng)
    return net


def build_discriminator(cfg: DiscriminatorConfig, rng: np.random.Generator) -> NLayerDiscriminator:
    net = NLayerDiscriminator(cfg)
    init_weights(net, rng)
    return net


def config_dict(cfg) -> dict:
    return asdict(cfg)
