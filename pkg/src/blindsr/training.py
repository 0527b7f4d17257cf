"""Two-phase training loop.

Phase one pretrains the generator on content (L1) loss alone; phase two
adds the multi-scale discriminators and the dual perceptual loss.
Exponential-moving-average shadow weights track the generator through
both phases. At reference scale training uses 256-pixel HR patches,
batch 32, 2000K/1000K iterations at learning rates 2e-4/1e-4; the
defaults here are desk-scale and every quantity is configurable.

Determinism: given a seed and a single data worker, full runs and
checkpoint-resumed runs reproduce loss traces bit-exactly.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .degradation import DegradationSpace, default_space, degrade
from .discriminator import DiscriminatorConfig, MultiScaleDiscriminator, build_discriminator
from .generator import GeneratorConfig, build_generator
from .losses import (LossWeights, build_resnet_extractor, build_tiny_extractor,
                     build_vgg_extractor, content_loss, discriminator_loss,
                     dual_perceptual_loss, generator_adversarial_loss,
                     perceptual_loss, total_discriminator_loss, total_generator_loss)

CHECKPOINT_SCHEMA = 1


class TrainingDiverged(RuntimeError):
    """A loss term became non-finite; the message names the term."""


class CheckpointError(RuntimeError):
    """Checkpoint missing, corrupt, or incompatible with the requested config."""


@dataclass
class TrainConfig:
    hr_patch_size: int = 128
    batch_size: int = 4
    pretrain_iters: int = 2000
    gan_iters: int = 1000
    pretrain_lr: float = 2e-4
    gan_lr: float = 1e-4
    ema_decay: float = 0.999
    adam_beta1: float = 0.9
    adam_beta2: float = 0.99
    adam_eps: float = 1e-8
    seed: int = 0
    perceptual_backbone: str = "tiny"  # tiny | torchvision
    perceptual_pretrained: bool = False
    loss_weights: LossWeights = field(default_factory=LossWeights)
    degradation: DegradationSpace = field(default_factory=default_space)

    def __post_init__(self):
        if self.hr_patch_size <= 0 or self.hr_patch_size % 4:
            raise ValueError("hr_patch_size must be positive and divisible by 4")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        for name in ("pretrain_iters", "gan_iters"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.pretrain_lr < 0 or self.gan_lr < 0:
            raise ValueError("learning rates must be non-negative")
        if not 0.0 <= self.ema_decay <= 1.0:
            raise ValueError("ema_decay must be in [0, 1]")
        if self.perceptual_backbone not in ("tiny", "torchvision"):
            raise ValueError(f"unknown perceptual_backbone {self.perceptual_backbone!r}")


def ema_update(shadow: dict, current: dict, decay: float) -> dict:
    """Elementwise ``decay * shadow + (1 - decay) * current``.

    Both arguments must carry identical parameter names and shapes.
    """
    if set(shadow) != set(current):
        raise ValueError("parameter trees do not match")
    out = {}
    for name, s in shadow.items():
        c = current[name]
        if s.shape != c.shape:
            raise ValueError(f"parameter {name!r} shape mismatch: {s.shape} vs {c.shape}")
        out[name] = decay * s + (1.0 - decay) * c
    return out


class Ema:
    """Shadow copy of a model's parameters, updated after every step."""

    def __init__(self, model: torch.nn.Module, decay: float):
        self.decay = decay
        self.shadow = {k: v.detach().clone() for k, v in model.named_parameters()}

    def update(self, model: torch.nn.Module):
        current = {k: v.detach() for k, v in model.named_parameters()}
        self.shadow = ema_update(self.shadow, current, self.decay)

    def copy_to(self, model: torch.nn.Module):
        with torch.no_grad():
            for name, param in model.named_parameters():
                param.copy_(self.shadow[name])

    def state_dict(self):
        return {k: v.clone() for k, v in self.shadow.items()}

    def load_state_dict(self, state):
        if set(state) != set(self.shadow):
            raise CheckpointError("EMA state does not match the generator's parameters")
        self.shadow = {k: v.clone() for k, v in state.items()}


def load_hr_pool(hr_dir) -> list[np.ndarray]:
    """Load every image in a directory as a CHW float array."""
    from .imgio import list_images, load_image
    paths = list_images(hr_dir)
    if not paths:
        raise ValueError(f"no images found in {hr_dir}")
    return [load_image(p) for p in paths]


def make_batch(hr_pool, space: DegradationSpace, cfg: TrainConfig,
               rng: np.random.Generator):
    """Assemble one (lr, hr) training batch.

    HR patches are random crops with random horizontal flip and 90-degree
    rotation; each is paired with its degraded quarter-size LR image.
    Images smaller than the patch size are skipped with a warning; an
    empty effective pool is fatal.
    """
    patch = cfg.hr_patch_size
    usable = [im for im in hr_pool
              if im.shape[1] >= patch and im.shape[2] >= patch]
    if len(usable) < len(hr_pool):
        warnings.warn(f"skipping {len(hr_pool) - len(usable)} image(s) smaller "
                      f"than the {patch}px patch size")
    if not usable:
        raise ValueError(f"no HR image is at least {patch}x{patch}")
    lrs, hrs = [], []
    for _ in range(cfg.batch_size):
        img = usable[int(rng.integers(len(usable)))]
        top = int(rng.integers(img.shape[1] - patch + 1))
        left = int(rng.integers(img.shape[2] - patch + 1))
        crop = img[:, top:top + patch, left:left + patch]
        if rng.random() < 0.5:
            crop = crop[:, :, ::-1]
        crop = np.rot90(crop, k=int(rng.integers(4)), axes=(1, 2))
        crop = np.ascontiguousarray(crop, dtype=np.float32)
        lr, _ = degrade(crop, space, rng)
        hrs.append(crop)
        lrs.append(lr.astype(np.float32))
    return (torch.from_numpy(np.stack(lrs)), torch.from_numpy(np.stack(hrs)))


def _check_finite(name: str, value: torch.Tensor):
    if not torch.isfinite(value).all():
        raise TrainingDiverged(f"non-finite loss term: {name} = {value}")


class Trainer:
    """Owns all mutable training state: models, EMA, optimizers, RNGs."""

    def __init__(self, cfg: TrainConfig, gen_cfg: GeneratorConfig,
                 disc_cfg: DiscriminatorConfig | None = None, hr_pool=None):
        self.cfg = cfg
        self.gen_cfg = gen_cfg
        self.disc_cfg = disc_cfg or DiscriminatorConfig()
        self.hr_pool = hr_pool
        torch.manual_seed(cfg.seed)
        self.rng = np.random.default_rng(cfg.seed)
        self.generator = build_generator(gen_cfg, seed=cfg.seed)
        self.ema = Ema(self.generator, cfg.ema_decay)
        self.optimizer_g = self._adam(self.generator.parameters(), cfg.pretrain_lr)
        self.discriminator: MultiScaleDiscriminator | None = None
        self.optimizer_d = None
        self._vgg_extractor = None
        self._resnet_extractor = None
        self.phase = "pretrain"
        self.iteration = 0

    def _adam(self, params, lr):
        return torch.optim.Adam(params, lr=lr,
                                betas=(self.cfg.adam_beta1, self.cfg.adam_beta2),
                                eps=self.cfg.adam_eps)

    def _build_extractors(self):
        if self._vgg_extractor is None:
            if self.cfg.perceptual_backbone == "torchvision":
                self._vgg_extractor = build_vgg_extractor(self.cfg.perceptual_pretrained)
                self._resnet_extractor = build_resnet_extractor(self.cfg.perceptual_pretrained)
            else:
                self._vgg_extractor = build_tiny_extractor("vgg-style", seed=self.cfg.seed)
                self._resnet_extractor = build_tiny_extractor("resnet-style", seed=self.cfg.seed + 1)

    def enter_gan_phase(self):
        """Switch to adversarial training: build discriminators, perceptual
        extractors, and fresh optimizers at the GAN learning rate."""
        if self.phase == "gan":
            return
        self.phase = "gan"
        self.discriminator = build_discriminator(self.disc_cfg, seed=self.cfg.seed + 1)
        self.optimizer_d = self._adam(self.discriminator.parameters(), self.cfg.gan_lr)
        self.optimizer_g = self._adam(self.generator.parameters(), self.cfg.gan_lr)
        self._build_extractors()

    def next_batch(self):
        if self.hr_pool is None:
            raise ValueError("trainer has no HR pool; pass hr_pool or use make_batch directly")
        return make_batch(self.hr_pool, self.cfg.degradation, self.cfg, self.rng)

    def pretrain_step(self, batch) -> dict:
        """One content-loss optimizer step (no discriminator, no perceptual)."""
        if self.phase != "pretrain":
            raise RuntimeError("pretrain_step called outside the pretrain phase")
        lr_imgs, hr_imgs = batch
        self.generator.train()
        sr = self.generator(lr_imgs)
        loss = content_loss(sr, hr_imgs)
        _check_finite("content", loss)
        self.optimizer_g.zero_grad()
        loss.backward()
        self.optimizer_g.step()
        self.ema.update(self.generator)
        self.iteration += 1
        return {"iteration": self.iteration, "phase": "pretrain",
                "loss_content": float(loss.detach()), "lr": self.cfg.pretrain_lr}

    def gan_step(self, batch) -> dict:
        """One alternating update: discriminators first, then the generator."""
        if self.phase != "gan":
            raise RuntimeError("gan_step called before enter_gan_phase()")
        lr_imgs, hr_imgs = batch
        self.generator.train()
        self.discriminator.train()
        w = self.cfg.loss_weights

        sr = self.generator(lr_imgs)

        real_n, real_s = self.discriminator(hr_imgs)
        fake_n, fake_s = self.discriminator(sr.detach())
        d_normal = discriminator_loss(real_n, fake_n)
        d_sampled = discriminator_loss(real_s, fake_s)
        d_total = total_discriminator_loss(d_normal, d_sampled, w)
        _check_finite("discriminator_total", d_total)
        self.optimizer_d.zero_grad()
        d_total.backward()
        self.optimizer_d.step()

        gen_fake_n, gen_fake_s = self.discriminator(sr)
        adv = generator_adversarial_loss(gen_fake_n, gen_fake_s, w)
        cont = content_loss(sr, hr_imgs)
        l_vgg = perceptual_loss(sr, hr_imgs, self._vgg_extractor)
        l_res = perceptual_loss(sr, hr_imgs, self._resnet_extractor)
        dual = dual_perceptual_loss(l_vgg, l_res, w)
        for name, value in (("content", cont), ("adversarial", adv),
                            ("dual_perceptual", dual)):
            _check_finite(name, value)
        g_total = total_generator_loss(cont, adv, dual, w)
        _check_finite("generator_total", g_total)
        self.optimizer_g.zero_grad()
        g_total.backward()
        self.optimizer_g.step()
        self.ema.update(self.generator)
        self.iteration += 1
        return {"iteration": self.iteration, "phase": "gan",
                "loss_content": float(cont.detach()),
                "loss_adversarial": float(adv.detach()),
                "loss_perceptual": float(dual.detach()),
                "loss_generator_total": float(g_total.detach()),
                "loss_discriminator_total": float(d_total.detach()),
                "lr": self.cfg.gan_lr}

    def step(self) -> dict:
        batch = self.next_batch()
        if self.phase == "pretrain":
            return self.pretrain_step(batch)
        return self.gan_step(batch)

    def run(self, out_dir=None, log_every: int = 50, checkpoint_every: int = 500,
            log_fn=None) -> list[dict]:
        """Run the remaining pretrain and GAN iterations, emitting periodic
        log records and checkpoints. Returns all step records."""
        out_dir = Path(out_dir) if out_dir is not None else None
        records = []
        started = time.perf_counter()

        def emit(record):
            record = {**record, "wallclock_s": round(time.perf_counter() - started, 3)}
            records.append(record)
            if log_fn is not None and (record["iteration"] % log_every == 0
                                       or record["iteration"] == 1):
                log_fn(record)

        while self.phase == "pretrain" and self.iteration < self.cfg.pretrain_iters:
            emit(self.step())
            self._maybe_checkpoint(out_dir, checkpoint_every)
        if self.phase == "pretrain":
            self.enter_gan_phase()
        gan_target = self.cfg.pretrain_iters + self.cfg.gan_iters
        while self.iteration < gan_target:
            emit(self.step())
            self._maybe_checkpoint(out_dir, checkpoint_every)
        if out_dir is not None:
            self.save_checkpoint(out_dir / "checkpoint_final.pt")
        return records

    def _maybe_checkpoint(self, out_dir, every):
        if out_dir is not None and every > 0 and self.iteration % every == 0:
            self.save_checkpoint(out_dir / f"checkpoint_{self.iteration:08d}.pt")

    def save_checkpoint(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "schema_version": CHECKPOINT_SCHEMA,
            "iteration": self.iteration,
            "phase": self.phase,
            "variant": self.gen_cfg.variant,
            "train_cfg": self.cfg,
            "generator_cfg": self.gen_cfg,
            "discriminator_cfg": self.disc_cfg,
            "generator_state": self.generator.state_dict(),
            "ema_state": self.ema.state_dict(),
            "discriminator_state": (self.discriminator.state_dict()
                                    if self.discriminator is not None else None),
            "optimizer_g_state": self.optimizer_g.state_dict(),
            "optimizer_d_state": (self.optimizer_d.state_dict()
                                  if self.optimizer_d is not None else None),
            "numpy_rng_state": self.rng.bit_generator.state,
            "torch_rng_state": torch.get_rng_state(),
        }
        torch.save(payload, path)

    @classmethod
    def from_checkpoint(cls, path, hr_pool=None) -> "Trainer":
        payload = read_checkpoint(path)
        trainer = cls(payload["train_cfg"], payload["generator_cfg"],
                      payload["discriminator_cfg"], hr_pool=hr_pool)
        trainer.iteration = payload["iteration"]
        trainer.generator.load_state_dict(payload["generator_state"])
        trainer.ema.load_state_dict(payload["ema_state"])
        if payload["phase"] == "gan":
            trainer.enter_gan_phase()
            trainer.discriminator.load_state_dict(payload["discriminator_state"])
            trainer.optimizer_d.load_state_dict(payload["optimizer_d_state"])
        trainer.optimizer_g.load_state_dict(payload["optimizer_g_state"])
        trainer.rng.bit_generator.state = payload["numpy_rng_state"]
        torch.set_rng_state(payload["torch_rng_state"])
        return trainer


def read_checkpoint(path) -> dict:
    """Load and validate a checkpoint archive."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise CheckpointError(f"corrupt checkpoint {path}: not an archive")
    if payload.get("schema_version") != CHECKPOINT_SCHEMA:
        raise CheckpointError(
            f"checkpoint schema_version {payload.get('schema_version')!r} "
            f"does not match supported version {CHECKPOINT_SCHEMA}")
    for key in ("iteration", "phase", "variant", "generator_cfg",
                "generator_state", "ema_state"):
        if key not in payload:
            raise CheckpointError(f"corrupt checkpoint {path}: missing field {key!r}")
    return payload


def load_generator_from_checkpoint(path, variant: str | None = None,
                                   use_ema: bool = False) -> torch.nn.Module:
    """Rebuild the generator stored in a checkpoint for inference.

    ``variant`` cross-checks the stored architecture; a mismatch raises
    before any weights are touched. ``use_ema`` loads the EMA shadow
    weights instead of the live ones.
    """
    payload = read_checkpoint(path)
    if variant is not None and payload["variant"] != variant:
        raise CheckpointError(
            f"checkpoint holds a {payload['variant']!r} generator, not {variant!r}")
    gen = build_generator(payload["generator_cfg"])
    gen.load_state_dict(payload["generator_state"])
    if use_ema:
        with torch.no_grad():
            for name, param in gen.named_parameters():
                param.copy_(payload["ema_state"][name])
    gen.eval()
    return gen
