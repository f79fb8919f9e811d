"""Training loop: alternating discriminator / generator updates with a frozen-decoder route."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .imageio import list_images, load_image, load_mask
from .losses import AblationFlags, LossWeights, discriminator_loss_from_pass, generator_loss_from_pass, translation_pass
from .model import Discriminator, Generator, GeneratorConfig

log = logging.getLogger(__name__)

LOG_FIELDS = ["iteration", "L_rec", "L_adv_d", "L_adv_g", "L_ctr", "L_cyc", "total", "lr"]


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    total_iters: int = 10000
    const_lr_iters: int = 5000
    lr: float = 1e-4
    weight_decay: float = 1e-4
    adam_betas: tuple[float, float] = (0.5, 0.999)
    batch_size: int = 16
    crop: int = 256
    checkpoint_every: int = 1000
    gan_mode: str = "bce"
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    flags: AblationFlags = field(default_factory=AblationFlags)

    def __post_init__(self):
        self.adam_betas = tuple(float(b) for b in self.adam_betas)
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        if isinstance(self.flags, dict):
            self.flags = AblationFlags(**self.flags)
        if not 0 <= self.const_lr_iters <= self.total_iters:
            raise ValueError("need 0 <= const_lr_iters <= total_iters")
        if self.lr < 0 or self.weight_decay < 0:
            raise ValueError("rates must be non-negative")
        if self.gan_mode not in ("bce", "lsgan"):
            raise ValueError(f"unknown gan_mode {self.gan_mode!r}")
        if self.crop % 8:
            raise ValueError("crop must be a multiple of 8")


def lr_at(iteration: int, cfg: TrainConfig) -> float:
    """Constant for ``const_lr_iters`` iterations, then linear decay to zero at ``total_iters``."""
    if not 0 <= iteration <= cfg.total_iters:
        raise ValueError(f"iteration {iteration} outside [0, {cfg.total_iters}]")
    if iteration <= cfg.const_lr_iters:
        return cfg.lr if iteration < cfg.total_iters else 0.0
    return cfg.lr * (cfg.total_iters - iteration) / (cfg.total_iters - cfg.const_lr_iters)


def augment(image: np.ndarray, rng, crop: int) -> np.ndarray:
    """Random flips, rotation by a multiple of 90 degrees, then a random crop."""
    h, w = image.shape
    if min(h, w) < crop:
        raise ValueError(f"image {h}x{w} is smaller than crop {crop}")
    if rng.integers(0, 2):
        image = image[:, ::-1]
    if rng.integers(0, 2):
        image = image[::-1, :]
    image = np.rot90(image, int(rng.integers(0, 4)))
    h, w = image.shape
    y = int(rng.integers(0, h - crop + 1))
    x = int(rng.integers(0, w - crop + 1))
    return np.ascontiguousarray(image[y:y + crop, x:x + crop])


def default_device() -> torch.device:
    return torch.device(os.environ.get("ADGAN_DEVICE", "cpu"))


class TrainState:
    """Networks, optimizers, iteration counter and data RNG for one training run."""

    def __init__(self, gen_cfg: GeneratorConfig, cfg: TrainConfig, device=None):
        self.cfg = cfg
        self.device = torch.device(device) if device is not None else default_device()
        gen_cfg.adain_in_encoder = cfg.flags.adain_in_encoder
        self.gen_cfg = gen_cfg
        torch.manual_seed(cfg.seed)
        self.G = Generator(gen_cfg).to(self.device)
        self.D = Discriminator(gen_cfg).to(self.device)
        kw = dict(lr=cfg.lr, betas=cfg.adam_betas, weight_decay=cfg.weight_decay)
        self.opt_g = torch.optim.AdamW(self.G.parameters(), **kw)
        self.opt_d = torch.optim.AdamW(self.D.parameters(), **kw)
        self.iteration = 0
        self.rng = np.random.default_rng(cfg.seed)

    def set_lr(self, lr: float):
        for opt in (self.opt_g, self.opt_d):
            for group in opt.param_groups:
                group["lr"] = lr

    def state_dict(self) -> dict:
        return {
            "generator": self.G.state_dict(),
            "discriminator": self.D.state_dict(),
            "opt_g": self.opt_g.state_dict(),
            "opt_d": self.opt_d.state_dict(),
            "iteration": self.iteration,
            "generator_config": asdict(self.gen_cfg),
            "train_config": asdict(self.cfg),
            "numpy_rng": self.rng.bit_generator.state,
            "torch_rng": torch.get_rng_state(),
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(self.state_dict(), path)
        return path

    @classmethod
    def load(cls, path, device=None) -> "TrainState":
        ckpt = torch.load(path, map_location="cpu", weights_only=False)
        state = cls(GeneratorConfig(**ckpt["generator_config"]), TrainConfig(**ckpt["train_config"]), device)
        state.G.load_state_dict(ckpt["generator"])
        state.D.load_state_dict(ckpt["discriminator"])
        state.opt_g.load_state_dict(ckpt["opt_g"])
        state.opt_d.load_state_dict(ckpt["opt_d"])
        state.iteration = ckpt["iteration"]
        state.rng.bit_generator.state = ckpt["numpy_rng"]
        torch.set_rng_state(ckpt["torch_rng"])
        return state


def _grad_norms(module: torch.nn.Module) -> dict:
    return {name: float(p.grad.norm()) for name, p in module.named_parameters() if p.grad is not None}


def train_step(x1: torch.Tensor, x2: torch.Tensor, state: TrainState) -> dict:
    """One discriminator update followed by one generator update.

    With aligned training the decoder only receives gradient from the
    reconstruction term; all other terms reach encoder and MLP only.
    """
    if x1.shape != x2.shape:
        raise ValueError(f"batch shapes differ: {tuple(x1.shape)} vs {tuple(x2.shape)}")
    cfg = state.cfg
    lr = lr_at(state.iteration, cfg)
    state.set_lr(lr)

    # one generator forward pass serves both updates; D sees it detached
    outs = translation_pass(state.G, x1, x2, cfg.flags)
    state.opt_d.zero_grad(set_to_none=True)
    loss_d = discriminator_loss_from_pass(state.D, outs, cfg.flags, cfg.gan_mode)
    loss_d.backward()
    state.opt_d.step()

    state.opt_g.zero_grad(set_to_none=True)
    state.D.requires_grad_(False)
    try:
        total, parts = generator_loss_from_pass(state.D, outs, cfg.weights, cfg.flags, cfg.gan_mode)
    finally:
        state.D.requires_grad_(True)
    row = {
        "iteration": state.iteration + 1, "L_rec": parts["rec"], "L_adv_d": float(loss_d.detach()),
        "L_adv_g": parts["adv_g"], "L_ctr": parts["ctr"], "L_cyc": parts["cyc"],
        "total": parts["total"], "lr": lr,
    }
    if not all(math.isfinite(v) for v in row.values()):
        total.backward()
        dump = {"row": row, "grad_norms": _grad_norms(state.G) | _grad_norms(state.D)}
        raise TrainingDiverged(f"non-finite loss at iteration {state.iteration + 1}: {json.dumps(dump)}")
    total.backward()
    state.opt_g.step()
    state.iteration += 1
    return row


def sample_batch(images: list[np.ndarray], state: TrainState) -> torch.Tensor:
    cfg = state.cfg
    idx = state.rng.choice(len(images), size=cfg.batch_size, replace=len(images) < cfg.batch_size)
    crops = [augment(images[i], state.rng, cfg.crop) for i in idx]
    return torch.from_numpy(np.stack(crops)[:, None]).float().to(state.device)


def load_domain(directory, masks: bool = False) -> list[np.ndarray]:
    paths = list_images(directory)
    if not paths:
        raise ValueError(f"no images found in {directory}")
    return [load_mask(p) if masks else load_image(p) for p in paths]


def fit(images_dir, masks_dir, gen_cfg: GeneratorConfig, cfg: TrainConfig, out_dir,
        resume=None, progress: bool = False) -> tuple[Path, Path]:
    """Train on unpaired image and mask directories. Returns (final checkpoint, log CSV)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    x1_data = load_domain(images_dir)
    x2_data = load_domain(masks_dir, masks=True)
    state = TrainState.load(resume) if resume else TrainState(gen_cfg, cfg)
    cfg = state.cfg
    log_path = out / "train_log.csv"
    new_log = not log_path.exists() or resume is None
    ckpt_path = None
    with open(log_path, "w" if new_log else "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        if new_log:
            writer.writeheader()
        while state.iteration < cfg.total_iters:
            x1 = sample_batch(x1_data, state)
            x2 = sample_batch(x2_data, state)
            row = train_step(x1, x2, state)
            writer.writerow(row)
            if progress and state.iteration % 50 == 0:
                log.info("iter %d rec %.4f adv_d %.4f adv_g %.4f", state.iteration, row["L_rec"], row["L_adv_d"], row["L_adv_g"])
            if state.iteration % cfg.checkpoint_every == 0 or state.iteration == cfg.total_iters:
                fh.flush()
                ckpt_path = state.save(out / "checkpoints" / f"ckpt_{state.iteration:06d}.pt")
    if ckpt_path is None:
        ckpt_path = state.save(out / "checkpoints" / f"ckpt_{state.iteration:06d}.pt")
    return ckpt_path, log_path
