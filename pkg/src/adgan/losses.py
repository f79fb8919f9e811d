"""Loss terms for aligned disentangling training.

Every cross-domain term decodes through the frozen decoder when aligned
training is on, so the decoder only ever learns from same-domain
reconstruction. Each term is computed for both translation directions.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .model import Discriminator, Generator, domain_label

LOG_EPS = 1e-7


@dataclass
class LossWeights:
    lambda_rec: float = 20.0
    lambda_cyc: float = 20.0
    lambda_ctr: float = 1.0

    def __post_init__(self):
        if min(self.lambda_rec, self.lambda_cyc, self.lambda_ctr) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class AblationFlags:
    use_rec: bool = True
    use_ctr: bool = True
    use_cyc: bool = True
    adain_in_encoder: bool = True
    aligned_training: bool = True


def l1(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return (a - b).abs().mean()


def bce_real(logits: torch.Tensor, gan_mode: str = "bce") -> torch.Tensor:
    if gan_mode == "lsgan":
        return ((logits - 1.0) ** 2).mean()
    return -torch.log(torch.sigmoid(logits) + LOG_EPS).mean()


def bce_fake(logits: torch.Tensor, gan_mode: str = "bce") -> torch.Tensor:
    if gan_mode == "lsgan":
        return (logits ** 2).mean()
    return -torch.log(1.0 - torch.sigmoid(logits) + LOG_EPS).mean()


def _labels(x):
    n = x.shape[0]
    return domain_label(0, n, x.device).to(x.dtype), domain_label(1, n, x.device).to(x.dtype)


def loss_rec(G: Generator, x, d) -> torch.Tensor:
    """Same-domain auto-encoding L1; trains encoder, decoder and MLP."""
    return l1(G.decode(G.encode(x, d), d), x)


def loss_ctr(G: Generator, x_i, d_i, d_j, frozen: bool = True) -> torch.Tensor:
    c_i = G.encode(x_i, d_i)
    c_ij = G.encode(G.decode(c_i, d_j, frozen=frozen), d_j)
    return l1(c_ij, c_i)


def loss_cyc(G: Generator, x_i, d_i, d_j, frozen: bool = True) -> torch.Tensor:
    x_ij = G.decode(G.encode(x_i, d_i), d_j, frozen=frozen)
    x_iji = G.decode(G.encode(x_ij, d_j), d_i, frozen=frozen)
    return l1(x_iji, x_i)


def discriminator_real_fake(G: Generator, x_i, x_j, d_i, d_j, aligned: bool = True):
    """Real and fake samples for branch ``d_i``.

    Aligned training uses the frozen-decoder reconstruction of ``x_i`` as the
    real class; otherwise the raw ``x_i`` is real.
    """
    real = G.decode(G.encode(x_i, d_i), d_i, frozen=True) if aligned else x_i
    fake = G.decode(G.encode(x_j, d_j), d_i, frozen=aligned)
    return real, fake


def loss_adv_d(G: Generator, D: Discriminator, x_i, x_j, d_i, d_j, branch: int,
               aligned: bool = True, gan_mode: str = "bce") -> torch.Tensor:
    with torch.no_grad():
        real, fake = discriminator_real_fake(G, x_i, x_j, d_i, d_j, aligned)
    return bce_real(D(real.detach(), branch), gan_mode) + bce_fake(D(fake.detach(), branch), gan_mode)


def loss_adv_g(G: Generator, D: Discriminator, x_j, d_i, d_j, branch: int,
               aligned: bool = True, gan_mode: str = "bce") -> torch.Tensor:
    """Non-saturating generator loss on cross-domain fakes judged by branch ``d_i``."""
    fake = G.decode(G.encode(x_j, d_j), d_i, frozen=aligned)
    return bce_real(D(fake, branch), gan_mode)


def combine(components: dict, weights: LossWeights, flags: AblationFlags) -> torch.Tensor:
    """Weighted objective; disabled terms contribute exactly zero."""
    total = components["adv_g"]
    if flags.use_cyc:
        total = total + weights.lambda_cyc * components["cyc"]
    if flags.use_rec:
        total = total + weights.lambda_rec * components["rec"]
    if flags.use_ctr:
        total = total + weights.lambda_ctr * components["ctr"]
    return total


def translation_pass(G: Generator, x1, x2, flags: AblationFlags) -> list[dict]:
    """All generator outputs needed by one training step, for both directions.

    Entry ``i`` holds, for source domain ``i``: content ``c``, reconstruction
    ``rec``, cross-domain fake ``fake`` (rendered in the other domain), its
    re-encoded content ``c_cross`` and the cycle output ``cyc``. Cross-domain
    decodes use the frozen decoder when aligned training is on.
    """
    d1, d2 = _labels(x1)
    frozen = flags.aligned_training
    outs = []
    for x_i, d_i, d_j in ((x1, d1, d2), (x2, d2, d1)):
        o = {"x": x_i, "c": G.encode(x_i, d_i)}
        o["rec"] = G.decode(o["c"], d_i)
        o["fake"] = G.decode(o["c"], d_j, frozen=frozen)
        if flags.use_ctr or flags.use_cyc:
            o["c_cross"] = G.encode(o["fake"], d_j)
            if flags.use_cyc:
                o["cyc"] = G.decode(o["c_cross"], d_i, frozen=frozen)
        outs.append(o)
    return outs


def discriminator_loss_from_pass(D: Discriminator, outs: list[dict], flags: AblationFlags,
                                 gan_mode: str = "bce") -> torch.Tensor:
    """Branch ``i`` sees domain-``i`` reconstructions (or raw images without aligned training) as real
    and fakes translated from the other domain as fake."""
    loss = 0.0
    for i, j in ((0, 1), (1, 0)):
        real = outs[i]["rec"] if flags.aligned_training else outs[i]["x"]
        loss = loss + bce_real(D(real.detach(), i), gan_mode) + bce_fake(D(outs[j]["fake"].detach(), i), gan_mode)
    return loss


def generator_loss_from_pass(D: Discriminator, outs: list[dict], weights: LossWeights, flags: AblationFlags,
                             gan_mode: str = "bce") -> tuple[torch.Tensor, dict]:
    zero = outs[0]["x"].new_zeros(())
    comps = {"rec": zero, "ctr": zero, "cyc": zero, "adv_g": zero}
    for i, j in ((0, 1), (1, 0)):
        o = outs[i]
        comps["adv_g"] = comps["adv_g"] + bce_real(D(outs[j]["fake"], i), gan_mode)
        if flags.use_rec:
            comps["rec"] = comps["rec"] + l1(o["rec"], o["x"])
        if flags.use_ctr:
            comps["ctr"] = comps["ctr"] + l1(o["c_cross"], o["c"])
        if flags.use_cyc:
            comps["cyc"] = comps["cyc"] + l1(o["cyc"], o["x"])
    total = combine(comps, weights, flags)
    breakdown = {k: float(v.detach()) for k, v in comps.items()}
    breakdown["total"] = float(total.detach())
    return total, breakdown


def total_generator_loss(G: Generator, D: Discriminator, x1, x2, weights: LossWeights,
                         flags: AblationFlags, gan_mode: str = "bce") -> tuple[torch.Tensor, dict]:
    """Full generator objective summed over both directions, plus a float breakdown.

    Matches the sum of the individual ``loss_*`` functions over both directions;
    forward passes are shared between terms.
    """
    return generator_loss_from_pass(D, translation_pass(G, x1, x2, flags), weights, flags, gan_mode)


def total_discriminator_loss(G: Generator, D: Discriminator, x1, x2, flags: AblationFlags,
                             gan_mode: str = "bce") -> torch.Tensor:
    d1, d2 = _labels(x1)
    a = flags.aligned_training
    return (loss_adv_d(G, D, x1, x2, d1, d2, 0, a, gan_mode)
            + loss_adv_d(G, D, x2, x1, d2, d1, 1, a, gan_mode))
