"""Joint generator/discriminator optimization with ADAM and a step schedule."""

from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import model as M
from .autodiff import AdamState, DivergenceError, adam_step
from .blur_synth import BlurPair
from .losses import LossBreakdown, adversarial_d_loss, adversarial_g_loss, content_loss, total_loss
from .metrics import psnr
from .pyramid import AugmentConfig, PyramidPair, augment, stack_pyramids

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 4
    lr: float = 5e-5
    lr_decay_step: int = 150_000
    lr_decay_factor: float = 0.1
    iterations: int = 450_000
    lam: float = 1e-4
    non_saturating: bool = False
    patch_size: int = 256
    augment: bool = True
    seed: int = 0
    dtype: str = "float64"
    checkpoint_every: int = 0  # 0: only at the end
    log_every: int = 1

    def __post_init__(self):
        for name in ("batch_size", "lr_decay_step", "patch_size", "log_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.iterations < 0 or self.checkpoint_every < 0:
            raise ValueError("iterations and checkpoint_every must be >= 0")
        if not 0 < self.lr_decay_factor < 1:
            raise ValueError(f"lr_decay_factor must be in (0, 1), got {self.lr_decay_factor}")
        if self.lr <= 0 or self.lam < 0:
            raise ValueError("lr must be > 0 and lam >= 0")
        if self.dtype not in ("float64", "float32"):
            raise ValueError(f"dtype must be float64 or float32, got {self.dtype}")

    @classmethod
    def paper(cls) -> "TrainConfig":
        return cls()

    @classmethod
    def desk(cls) -> "TrainConfig":
        return cls(iterations=500, lr_decay_step=10_000, patch_size=64)


def learning_rate(cfg: TrainConfig, iteration: int) -> float:
    return cfg.lr * cfg.lr_decay_factor ** (iteration // cfg.lr_decay_step)


@dataclass
class TrainState:
    gen: dict[str, np.ndarray]
    disc: dict[str, np.ndarray]
    gen_opt: AdamState
    disc_opt: AdamState
    rng: np.random.Generator
    iteration: int = 0
    lr: float = 0.0

    @classmethod
    def create(cls, gspec: M.GeneratorSpec, dspec: M.DiscriminatorSpec, cfg: TrainConfig) -> "TrainState":
        rng = np.random.default_rng(cfg.seed)
        dtype = np.dtype(cfg.dtype)
        gen = M.init_generator(gspec, rng, dtype)
        disc = M.init_discriminator(dspec, rng, dtype)
        return cls(gen, disc, AdamState.zeros_like(gen), AdamState.zeros_like(disc), rng, 0, cfg.lr)

    def copy(self) -> "TrainState":
        return copy.deepcopy(self)


# ---------------------------------------------------------------------------
# batches


def random_crop(pair: BlurPair, size: int, rng: np.random.Generator) -> BlurPair:
    """Same crop window for blurry and sharp."""
    _, h, w = pair.blurry.shape
    if h < size or w < size:
        raise ValueError(f"image {h}x{w} smaller than patch {size}")
    y = int(rng.integers(h - size + 1))
    x = int(rng.integers(w - size + 1))
    return replace(pair, blurry=pair.blurry[:, y : y + size, x : x + size],
                   sharp=pair.sharp[:, y : y + size, x : x + size])


def sample_batch(pairs: list[BlurPair], cfg: TrainConfig, scales: int,
                 rng: np.random.Generator, aug: AugmentConfig | None = None) -> PyramidPair:
    idx = rng.choice(len(pairs), size=cfg.batch_size, replace=len(pairs) < cfg.batch_size)
    items = []
    for i in idx:
        p = random_crop(pairs[int(i)], cfg.patch_size, rng)
        if cfg.augment:
            p = augment(p, aug or AugmentConfig(seed=cfg.seed), rng)
        items.append(PyramidPair.from_images(p.blurry, p.sharp, scales))
    batch = stack_pyramids(items)
    dtype = np.dtype(cfg.dtype)
    return PyramidPair([b.astype(dtype) for b in batch.blurry_levels],
                       [s.astype(dtype) for s in batch.sharp_levels])


# ---------------------------------------------------------------------------
# one iteration


def discriminator_update(state: TrainState, real: np.ndarray, fake: np.ndarray,
                         dspec: M.DiscriminatorSpec, lr: float) -> float:
    """One ADAM step on the discriminator loss; returns the loss before the step."""
    p_real, pb_real = M.discriminator_vjp(real, state.disc, dspec)
    p_fake, pb_fake = M.discriminator_vjp(fake, state.disc, dspec)
    adv_d, g_real, g_fake = adversarial_d_loss(p_real, p_fake)
    if not np.isfinite(adv_d):
        raise DivergenceError(f"non-finite discriminator loss at iteration {state.iteration}")
    d_grads = pb_real(g_real)[0]
    for k, g in pb_fake(g_fake)[0].items():
        d_grads[k] = d_grads[k] + g
    adam_step(state.disc, d_grads, state.disc_opt, lr)
    return adv_d


def train_step(state: TrainState, batch: PyramidPair, cfg: TrainConfig,
               gspec: M.GeneratorSpec, dspec: M.DiscriminatorSpec) -> LossBreakdown:
    """One discriminator update then one generator update, in place.

    With ``cfg.lam == 0`` the discriminator is left untouched.
    """
    lr = learning_rate(cfg, state.iteration)
    latents, g_pullback = M.generator_vjp(batch.blurry_levels, state.gen, gspec)
    content, per_level, g_latents = content_loss(latents, batch.sharp_levels)

    adv_d = adv_g = 0.0
    if cfg.lam > 0:
        fake = latents[0]
        adv_d = discriminator_update(state, batch.sharp_levels[0], fake, dspec, lr)
        p_fake, pb_fake = M.discriminator_vjp(fake, state.disc, dspec)
        adv_g, g_pfake = adversarial_g_loss(p_fake, cfg.non_saturating)
        g_latents[0] = g_latents[0] + cfg.lam * pb_fake(g_pfake)[1]

    losses = LossBreakdown(content, adv_g, adv_d, total_loss(content, adv_g, cfg.lam), per_level)
    losses.check_finite()
    g_grads, _ = g_pullback(g_latents)
    adam_step(state.gen, g_grads, state.gen_opt, lr)
    state.iteration += 1
    state.lr = learning_rate(cfg, state.iteration)
    return losses


def train(state: TrainState, pairs: list[BlurPair], cfg: TrainConfig, gspec: M.GeneratorSpec,
          dspec: M.DiscriminatorSpec, iterations: int | None = None, log_file=None,
          on_checkpoint=None, aug: AugmentConfig | None = None) -> list[LossBreakdown]:
    """Run ``iterations`` steps (default: up to ``cfg.iterations``).

    ``log_file`` receives one line per logged iteration; ``on_checkpoint(state)``
    is called every ``cfg.checkpoint_every`` iterations. A ``DivergenceError``
    propagates with ``state`` holding the last finished iteration's values
    for the generator.
    """
    n = cfg.iterations - state.iteration if iterations is None else iterations
    history = []
    for _ in range(max(n, 0)):
        batch = sample_batch(pairs, cfg, gspec.scales, state.rng, aug)
        lr = learning_rate(cfg, state.iteration)
        losses = train_step(state, batch, cfg, gspec, dspec)
        history.append(losses)
        if log_file is not None and state.iteration % cfg.log_every == 0:
            log_file.write(losses.log_line(state.iteration, lr) + "\n")
        if on_checkpoint is not None and cfg.checkpoint_every and state.iteration % cfg.checkpoint_every == 0:
            on_checkpoint(state)
        if state.iteration % 100 == 0:
            log.info("iter %d content %.6g adv_d %.4g", state.iteration, losses.content, losses.adversarial_d)
    return history


# ---------------------------------------------------------------------------
# desk-scale verification runs


@dataclass
class OverfitReport:
    iterations: int
    initial_content: float
    final_content: float
    blurry_psnr: float
    initial_psnr: float
    final_psnr: float
    losses: list[float] = field(default_factory=list)

    @property
    def loss_ratio(self) -> float:
        return self.final_content / self.initial_content

    @property
    def psnr_gain(self) -> float:
        return self.final_psnr - self.blurry_psnr


def dataset_content_loss(params, pairs: list[BlurPair], gspec: M.GeneratorSpec,
                         dtype=np.float64) -> tuple[float, float, float]:
    """Content loss, output PSNR and blurry-input PSNR over a whole fixed set."""
    items = stack_pyramids([PyramidPair.from_images(p.blurry, p.sharp, gspec.scales) for p in pairs])
    blurry = [b.astype(dtype) for b in items.blurry_levels]
    latents = M.generator_forward(blurry, params, gspec)
    loss, _, _ = content_loss(latents, items.sharp_levels)
    out = np.clip(latents[0], 0.0, 1.0)
    out_psnr = float(np.mean([psnr(o, s) for o, s in zip(out, items.sharp_levels[0])]))
    in_psnr = float(np.mean([psnr(b, s) for b, s in zip(items.blurry_levels[0], items.sharp_levels[0])]))
    return loss, out_psnr, in_psnr


def overfit_smoke(pairs: list[BlurPair], gspec: M.GeneratorSpec, cfg: TrainConfig,
                  iterations: int, dspec: M.DiscriminatorSpec | None = None) -> OverfitReport:
    """Content-only training on a fixed tiny set; the report compares before and after."""
    cfg = replace(cfg, lam=0.0, augment=False, iterations=iterations)
    dspec = dspec or M.DiscriminatorSpec.desk()
    state = TrainState.create(gspec, dspec, cfg)
    init_loss, init_psnr, blurry_psnr = dataset_content_loss(state.gen, pairs, gspec)
    history = train(state, pairs, cfg, gspec, dspec, iterations)
    final_loss, final_psnr, _ = dataset_content_loss(state.gen, pairs, gspec)
    return OverfitReport(iterations, init_loss, final_loss, blurry_psnr, init_psnr, final_psnr,
                         [h.content for h in history])


def frozen_generator_d_losses(pairs: list[BlurPair], gspec: M.GeneratorSpec, dspec: M.DiscriminatorSpec,
                              cfg: TrainConfig, steps: int) -> list[float]:
    """Train only the discriminator against a fixed random generator.

    Returns the discriminator loss seen at each step, so a learning
    discriminator shows a falling sequence.
    """
    cfg = replace(cfg, augment=False)
    state = TrainState.create(gspec, dspec, cfg)
    history = []
    for _ in range(steps):
        batch = sample_batch(pairs, cfg, gspec.scales, state.rng)
        fake = M.generator_forward(batch.blurry_levels, state.gen, gspec)[0]
        history.append(discriminator_update(state, batch.sharp_levels[0], fake, dspec, cfg.lr))
        state.iteration += 1
    return history


def config_fields(cls) -> list[str]:
    return [f.name for f in fields(cls)]


def config_to_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
