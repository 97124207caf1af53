"""Adversarial training with the GGD cycle objective.

Two generators map A->B and B->A; two PatchGAN discriminators judge domain-A
and domain-B images.  Each step updates the generators on
``lambda1 * cycle + lambda2 * adversarial`` and then the discriminators on a
least-squares real/fake loss fed from per-domain replay buffers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import checkpoint as ckpt_io
from . import tensor as T
from .data import UnpairedDataset, augment_flip
from .errors import DimensionError, NumericalError
from .losses import (
    CycleSide,
    LossWeights,
    adv_discriminator_loss,
    adv_generator_loss,
    loss_ucyc,
    total_generator_loss,
)
from .nets import (
    CasUNet3Head,
    DiscriminatorConfig,
    GeneratorConfig,
    NLayerDiscriminator,
    RunContext,
    build_discriminator,
    build_generator,
    identity_init,
    to_ggd_params,
    unit_scale_init,
)
from .tensor import Tensor

CYCLE_MODES = ("ucyc", "l1")
HEAD_INITS = ("unit", "zero")
LOG_HEADER = ["epoch", "loss_g", "loss_d", "loss_ucyc", "loss_adv_g", "lr"]


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 2
    lr0: float = 2e-4
    adam_betas: tuple[float, float] = (0.9, 0.99)
    adam_eps: float = 1e-8
    weights: LossWeights = field(default_factory=LossWeights)
    buffer_capacity: int = 20
    seed: int = 0
    # "l1" forces every alpha/beta map to 1, turning the cycle term into plain L1
    cycle_loss: str = "ucyc"
    augment: bool = True
    # start generators as the identity map (requires residual_output)
    identity_init: bool = False
    # "unit" starts the alpha/beta maps at 1; "zero" keeps plain zero head biases
    head_init: str = "unit"
    checkpoint_every: int = 0

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        self.adam_betas = tuple(float(b) for b in self.adam_betas)
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not self.lr0 > 0 or not self.adam_eps > 0:
            raise ValueError("lr0 and adam_eps must be positive")
        if len(self.adam_betas) != 2 or not all(0.0 <= b < 1.0 for b in self.adam_betas):
            raise ValueError("adam_betas must be two values in [0, 1)")
        if self.buffer_capacity < 0 or self.checkpoint_every < 0:
            raise ValueError("buffer_capacity and checkpoint_every must be >= 0")
        if self.head_init not in HEAD_INITS:
            raise ValueError(f"head_init must be one of {HEAD_INITS}")
        if self.cycle_loss not in CYCLE_MODES:
            raise ValueError(f"cycle_loss must be one of {CYCLE_MODES}")


@dataclass
class RunConfig:
    """Everything that determines a run: training, generator and discriminator settings."""

    train: TrainConfig = field(default_factory=TrainConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)

    def to_dict(self) -> dict:
        return {"train": asdict(self.train), "generator": asdict(self.generator),
                "discriminator": asdict(self.discriminator)}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - {"train", "generator", "discriminator"}
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        parts = {}
        for key, typ in (("train", TrainConfig), ("generator", GeneratorConfig),
                         ("discriminator", DiscriminatorConfig)):
            section = dict(d.get(key, {}))
            allowed = {f.name for f in fields(typ)}
            bad = set(section) - allowed
            if bad:
                raise ValueError(f"unknown keys in [{key}]: {sorted(bad)}")
            parts[key] = typ(**section)
        return cls(**parts)


# -- optimisation ---------------------------------------------------------

def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    """lr0 * (1 + cos(pi * step / total)) / 2, held at 0 past the horizon."""
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    frac = min(max(step, 0), total_steps) / total_steps
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * frac))


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray | None], state: AdamState,
              lr: float, betas: tuple[float, float] = (0.9, 0.99), eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``.

    A ``None`` gradient counts as zero.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionError("params, grads and state disagree in length")
    b1, b2 = betas
    state.t += 1
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape or m.shape != p.shape:
            raise DimensionError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


class Adam:
    """Adam over a fixed list of parameter tensors."""

    def __init__(self, params: Sequence[Tensor], betas=(0.9, 0.99), eps: float = 1e-8):
        self.params = list(params)
        self.betas = tuple(betas)
        self.eps = eps
        self.state = AdamState.zeros_like([p.data for p in self.params])

    def step(self, lr: float) -> None:
        adam_step([p.data for p in self.params], [p.grad for p in self.params], self.state,
                  lr, self.betas, self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


class ReplayBuffer:
    """History of generated images for discriminator updates.

    Until full, every pushed image is stored and returned.  Once full, each
    push returns, with probability 1/2, a random stored image (which the new
    image replaces), otherwise the new image itself.
    """

    def __init__(self, capacity: int = 20):
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity = capacity
        self.slots: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self.slots)

    def push_sample(self, image: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        image = np.array(image, dtype=np.float64, copy=True)
        if self.capacity == 0:
            return image
        if len(self.slots) < self.capacity:
            self.slots.append(image)
            return image.copy()
        if rng.random() < 0.5:
            idx = int(rng.integers(len(self.slots)))
            old = self.slots[idx]
            self.slots[idx] = image
            return old
        return image.copy()

    def push_batch(self, batch: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return np.stack([self.push_sample(img, rng) for img in batch])


# -- the step -------------------------------------------------------------

@dataclass
class Nets:
    g_ab: CasUNet3Head
    g_ba: CasUNet3Head
    d_a: NLayerDiscriminator  # judges domain-A images
    d_b: NLayerDiscriminator  # judges domain-B images

    def generator_params(self) -> list[Tensor]:
        return self.g_ab.parameters() + self.g_ba.parameters()

    def discriminator_params(self) -> list[Tensor]:
        return self.d_a.parameters() + self.d_b.parameters()

    def modules(self) -> dict:
        return {"g_ab": self.g_ab, "g_ba": self.g_ba, "d_a": self.d_a, "d_b": self.d_b}


@dataclass
class Optimizers:
    gen: Adam
    disc: Adam


@dataclass
class Buffers:
    fake_a: ReplayBuffer
    fake_b: ReplayBuffer


@dataclass
class StepMetrics:
    loss_g: float
    loss_d: float
    loss_ucyc: float
    loss_adv_g: float
    lr: float
    # mean |recon - input| over both domains, whatever the cycle mode
    cycle_l1: float


def build_nets(cfg: RunConfig, rng: np.random.Generator) -> Nets:
    nets = Nets(build_generator(cfg.generator, rng), build_generator(cfg.generator, rng),
                build_discriminator(cfg.discriminator, rng), build_discriminator(cfg.discriminator, rng))
    if cfg.train.identity_init:
        identity_init(nets.g_ab)
        identity_init(nets.g_ba)
    if cfg.train.head_init == "unit":
        unit_scale_init(nets.g_ab)
        unit_scale_init(nets.g_ba)
    return nets


def build_optimizers(nets: Nets, cfg: TrainConfig) -> Optimizers:
    return Optimizers(Adam(nets.generator_params(), cfg.adam_betas, cfg.adam_eps),
                      Adam(nets.discriminator_params(), cfg.adam_betas, cfg.adam_eps))


def _cycle_side(recon_out, original: Tensor, mode: str) -> CycleSide:
    mean, alpha, beta = to_ggd_params(recon_out)
    if mode == "l1":
        ones = Tensor(np.ones(mean.shape))
        return CycleSide(mean, ones, ones, original)
    return CycleSide(mean, alpha, beta, original)


def _require_finite(name: str, value: Tensor, step_info: str) -> float:
    v = value.item()
    if not math.isfinite(v):
        raise NumericalError(f"non-finite {name} ({v}) at {step_info}")
    return v


@dataclass
class GeneratorObjective:
    loss_g: Tensor
    ucyc: Tensor
    adv_g: Tensor
    fake_a: Tensor
    fake_b: Tensor
    side_a: CycleSide
    side_b: CycleSide


def generator_objective(a: Tensor, b: Tensor, nets: Nets, cfg: TrainConfig, ctx: RunContext) -> GeneratorObjective:
    """Both cycles (a -> fake_b -> recon_a, b -> fake_a -> recon_b) and the weighted generator loss."""
    fake_b = nets.g_ab(a, ctx).mean
    side_a = _cycle_side(nets.g_ba(fake_b, ctx), a, cfg.cycle_loss)
    fake_a = nets.g_ba(b, ctx).mean
    side_b = _cycle_side(nets.g_ab(fake_a, ctx), b, cfg.cycle_loss)
    ucyc = loss_ucyc(side_a, side_b)
    adv_g = adv_generator_loss(nets.d_b(fake_b), nets.d_a(fake_a))
    return GeneratorObjective(total_generator_loss(ucyc, adv_g, cfg.weights), ucyc, adv_g,
                              fake_a, fake_b, side_a, side_b)


def train_step(batch_a: np.ndarray, batch_b: np.ndarray, nets: Nets, opts: Optimizers,
               buffers: Buffers, cfg: TrainConfig, lr: float, rng: np.random.Generator,
               step_info: str = "step") -> StepMetrics:
    """One generator update followed by one discriminator update."""
    a, b = Tensor(batch_a), Tensor(batch_b)
    obj = generator_objective(a, b, nets, cfg, RunContext(dropout=True, rng=rng))
    loss_g, ucyc, adv_g = obj.loss_g, obj.ucyc, obj.adv_g
    fake_a, fake_b = obj.fake_a, obj.fake_b
    side_a, side_b = obj.side_a, obj.side_b
    loss_g_v = _require_finite("generator loss", loss_g, step_info)
    opts.gen.zero_grad()
    loss_g.backward()
    opts.gen.step(lr)

    # discriminators on real images and buffered (detached) fakes
    opts.disc.zero_grad()
    hist_b = Tensor(buffers.fake_b.push_batch(fake_b.data, rng))
    hist_a = Tensor(buffers.fake_a.push_batch(fake_a.data, rng))
    loss_d = adv_discriminator_loss(nets.d_b(b), nets.d_b(hist_b), nets.d_a(a), nets.d_a(hist_a))
    loss_d_v = _require_finite("discriminator loss", loss_d, step_info)
    loss_d.backward()
    opts.disc.step(lr)

    cycle_l1 = 0.5 * (np.abs(side_a.recon.data - batch_a).mean() + np.abs(side_b.recon.data - batch_b).mean())
    return StepMetrics(loss_g_v, loss_d_v, ucyc.item(), adv_g.item(), lr, float(cycle_l1))


# -- the loop -------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    loss_g: float
    loss_d: float
    loss_ucyc: float
    loss_adv_g: float
    lr: float
    cycle_l1: float

    def log_row(self) -> list:
        return [self.epoch, repr(self.loss_g), repr(self.loss_d), repr(self.loss_ucyc),
                repr(self.loss_adv_g), repr(self.lr)]


@dataclass
class TrainState:
    """Everything needed to continue a run exactly where it stopped."""

    config: RunConfig
    nets: Nets
    opts: Optimizers
    buffers: Buffers
    rng: np.random.Generator
    epoch: int = 0
    step: int = 0
    history: list[EpochRecord] = field(default_factory=list)


def init_state(cfg: RunConfig) -> TrainState:
    rng = np.random.default_rng(cfg.train.seed)
    nets = build_nets(cfg, rng)
    opts = build_optimizers(nets, cfg.train)
    cap = cfg.train.buffer_capacity
    return TrainState(cfg, nets, opts, Buffers(ReplayBuffer(cap), ReplayBuffer(cap)), rng)


def steps_per_epoch(data: UnpairedDataset, batch_size: int) -> int:
    n = max(len(data.domain_a), len(data.domain_b)) // batch_size
    if n < 1:
        raise ValueError(f"dataset smaller than one batch of {batch_size}")
    return n


def _epoch_order(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` indices covering a shuffled pass (repeated passes if the domain is short)."""
    reps = -(-count // n)
    return np.concatenate([rng.permutation(n) for _ in range(reps)])[:count]


def _make_batch(images: np.ndarray, idx: np.ndarray, augment: bool, rng: np.random.Generator) -> np.ndarray:
    batch = images[idx]
    if augment:
        batch = np.stack([augment_flip(img, rng) for img in batch])
    return batch


def run_epoch(state: TrainState, data: UnpairedDataset,
              on_step: Callable[[int, StepMetrics], None] | None = None) -> EpochRecord:
    tc = state.config.train
    n_steps = steps_per_epoch(data, tc.batch_size)
    total = n_steps * tc.epochs
    need = n_steps * tc.batch_size
    rng = state.rng
    order_a = _epoch_order(len(data.domain_a), need, rng)
    order_b = _epoch_order(len(data.domain_b), need, rng)
    sums = np.zeros(5)
    lr = tc.lr0
    for i in range(n_steps):
        sl = slice(i * tc.batch_size, (i + 1) * tc.batch_size)
        batch_a = _make_batch(data.domain_a, order_a[sl], tc.augment, rng)
        batch_b = _make_batch(data.domain_b, order_b[sl], tc.augment, rng)
        lr = cosine_lr(state.step, total, tc.lr0)
        m = train_step(batch_a, batch_b, state.nets, state.opts, state.buffers, tc, lr, rng,
                       step_info=f"epoch {state.epoch + 1} step {state.step}")
        sums += (m.loss_g, m.loss_d, m.loss_ucyc, m.loss_adv_g, m.cycle_l1)
        state.step += 1
        if on_step is not None:
            on_step(state.step, m)
    state.epoch += 1
    mean = sums / n_steps
    rec = EpochRecord(state.epoch, *map(float, mean[:4]), lr=lr, cycle_l1=float(mean[4]))
    state.history.append(rec)
    return rec


def write_log(path: Path, history: Sequence[EpochRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_HEADER)
        for rec in history:
            w.writerow(rec.log_row())


def fit(data: UnpairedDataset, cfg: RunConfig | None = None, out_dir: str | Path | None = None,
        resume: TrainState | None = None,
        on_epoch: Callable[[EpochRecord], None] | None = None) -> TrainState:
    """Train until ``cfg.train.epochs`` epochs are done, optionally resuming a saved state.

    With ``out_dir`` the metric log ``metrics.csv`` is rewritten after every epoch,
    ``last.ckpt`` is written at the end and ``epoch_XXXX.ckpt`` every
    ``checkpoint_every`` epochs.
    """
    if resume is None:
        if cfg is None:
            raise ValueError("need a config or a state to resume")
        state = init_state(cfg)
    else:
        state = resume
    tc = state.config.train
    data.check_compatible(state.config.generator.in_channels)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    while state.epoch < tc.epochs:
        rec = run_epoch(state, data)
        if on_epoch is not None:
            on_epoch(rec)
        if out is not None:
            write_log(out / "metrics.csv", state.history)
            if tc.checkpoint_every and state.epoch % tc.checkpoint_every == 0:
                save_state(out / f"epoch_{state.epoch:04d}.ckpt", state)
    if out is not None:
        write_log(out / "metrics.csv", state.history)
        save_state(out / "last.ckpt", state)
    return state


# -- persistence ----------------------------------------------------------

def save_state(path: str | Path, state: TrainState) -> None:
    arrays: dict[str, np.ndarray] = {}
    for name, module in state.nets.modules().items():
        for key, value in module.state_dict().items():
            arrays[f"net/{name}/{key}"] = value
    for name, opt in (("gen", state.opts.gen), ("disc", state.opts.disc)):
        for i, (m, v) in enumerate(zip(opt.state.m, opt.state.v)):
            arrays[f"opt/{name}/m/{i}"] = m
            arrays[f"opt/{name}/v/{i}"] = v
    for name, buf in (("fake_a", state.buffers.fake_a), ("fake_b", state.buffers.fake_b)):
        if buf.slots:
            arrays[f"buffer/{name}"] = np.stack(buf.slots)
    meta = {
        "config": state.config.to_dict(),
        "epoch": state.epoch,
        "step": state.step,
        "adam_t": {"gen": state.opts.gen.state.t, "disc": state.opts.disc.state.t},
        "rng_state": state.rng.bit_generator.state,
        "history": [asdict(r) for r in state.history],
    }
    ckpt_io.save(path, meta, arrays)


def load_state(path: str | Path) -> TrainState:
    meta, arrays = ckpt_io.load(path)
    cfg = RunConfig.from_dict(meta["config"])
    state = init_state(cfg)
    for name, module in state.nets.modules().items():
        prefix = f"net/{name}/"
        module.load_state_dict({k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)})
    for name, opt in (("gen", state.opts.gen), ("disc", state.opts.disc)):
        n = len(opt.params)
        opt.state.m = [arrays[f"opt/{name}/m/{i}"].copy() for i in range(n)]
        opt.state.v = [arrays[f"opt/{name}/v/{i}"].copy() for i in range(n)]
        opt.state.t = int(meta["adam_t"][name])
    for name, buf in (("fake_a", state.buffers.fake_a), ("fake_b", state.buffers.fake_b)):
        stored = arrays.get(f"buffer/{name}")
        buf.slots = [] if stored is None else [img.copy() for img in stored]
    state.rng.bit_generator.state = meta["rng_state"]
    state.epoch = int(meta["epoch"])
    state.step = int(meta["step"])
    state.history = [EpochRecord(**r) for r in meta["history"]]
    return state


def load_generators(path: str | Path) -> tuple[CasUNet3Head, CasUNet3Head, RunConfig]:
    """(A->B generator, B->A generator, run config) from a training checkpoint."""
    meta, arrays = ckpt_io.load(path)
    cfg = RunConfig.from_dict(meta["config"])
    rng = np.random.default_rng(0)
    gens = []
    for name in ("g_ab", "g_ba"):
        g = build_generator(cfg.generator, rng)
        prefix = f"net/{name}/"
        g.load_state_dict({k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)})
        gens.append(g)
    return gens[0], gens[1], cfg
