"""Unified generator (content encoder, decoder, style MLP) and two-branch patch discriminator.

Both domains share one encoder and one decoder. The domain label is mapped by a
single MLP to the affine parameters of every AdaIN layer, so each domain has
exactly one learned style.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.func import functional_call

IMAGE_DOMAIN = 0
MASK_DOMAIN = 1
ADAIN_EPS = 1e-5


@dataclass
class GeneratorConfig:
    base_channels: int = 64
    content_channels: int = 256
    n_res_blocks_enc: int = 4
    n_res_blocks_dec: int = 4
    image_channels: int = 1
    mlp_hidden: int = 256
    disc_channels: int = 64
    scale_preset: str = "full"
    adain_in_encoder: bool = True

    def __post_init__(self):
        if self.scale_preset not in ("full", "desk"):
            raise ValueError(f"unknown scale_preset {self.scale_preset!r}")

    @property
    def divisor(self) -> int:
        return 4 if self.scale_preset == "desk" else 1

    @property
    def widths(self) -> tuple[int, int, int]:
        """(stem, mid, content) channel widths after applying the preset."""
        d = self.divisor
        return self.base_channels // d, 2 * self.base_channels // d, self.content_channels // d

    @property
    def disc_widths(self) -> tuple[int, int, int, int]:
        c = self.disc_channels // self.divisor
        return c, 2 * c, 4 * c, 8 * c


def domain_label(index: int | float, batch: int = 1, device=None) -> torch.Tensor:
    """One-hot (or interpolated) domain label; ``index`` 0 is the image domain, 1 the mask domain.

    A float in [0, 1] gives the label ``(1 - index, index)``.
    """
    alpha = float(index)
    d = torch.tensor([1.0 - alpha, alpha], device=device)
    return d.expand(batch, 2).clone()


def adain(x: torch.Tensor, scale: torch.Tensor, shift: torch.Tensor, eps: float = ADAIN_EPS) -> torch.Tensor:
    """Per-instance, per-channel normalization followed by an external affine map.

    ``scale`` and ``shift`` have shape (N, C) or (C,).
    """
    if x.shape[-1] * x.shape[-2] == 0:
        raise ValueError("adain needs a non-empty spatial extent")
    if scale.shape[-1] != x.shape[1] or shift.shape[-1] != x.shape[1]:
        raise ValueError(f"style width {scale.shape[-1]} does not match {x.shape[1]} channels")
    mu = x.mean(dim=(2, 3), keepdim=True)
    var = x.var(dim=(2, 3), keepdim=True, unbiased=False)
    normed = (x - mu) / torch.sqrt(var + eps)
    if scale.dim() == 1:
        scale, shift = scale.unsqueeze(0), shift.unsqueeze(0)
    return scale[:, :, None, None] * normed + shift[:, :, None, None]


class StyleNorm(nn.Module):
    """AdaIN slot. Receives its (scale, shift) from the style MLP at call time.

    With ``adaptive=False`` it degrades to a plain, non-affine instance norm
    and consumes no style parameters.
    """

    def __init__(self, channels: int, adaptive: bool = True):
        super().__init__()
        self.channels = channels
        self.adaptive = adaptive

    @property
    def n_params(self) -> int:
        return 2 * self.channels if self.adaptive else 0

    def forward(self, x, style=None):
        if not self.adaptive:
            return F.instance_norm(x, eps=ADAIN_EPS)
        scale, shift = style
        return adain(x, scale, shift)


class ConvNormAct(nn.Module):
    def __init__(self, cin, cout, k, stride, pad, adaptive=True):
        super().__init__()
        self.pad = nn.ReflectionPad2d(pad)
        self.conv = nn.Conv2d(cin, cout, k, stride, bias=False)
        self.norm = StyleNorm(cout, adaptive)

    def forward(self, x, styles):
        return F.relu(self.norm(self.conv(self.pad(x)), next(styles) if self.norm.adaptive else None))


class UpConvNormAct(nn.Module):
    """3x3 stride-2 transposed conv that exactly doubles the spatial size.

    Borders are reflect-padded before the transposed conv and the result is
    cropped back, so interior outputs match a zero-padded ``padding=1,
    output_padding=1`` deconv. Reflection keeps an even-length period-2 input
    periodic, so a uniform image decodes to the same periodic pattern whether
    or not it is tiled.
    """

    def __init__(self, cin, cout, adaptive=True):
        super().__init__()
        self.conv = nn.ConvTranspose2d(cin, cout, 3, stride=2, padding=0, bias=False)
        self.norm = StyleNorm(cout, adaptive)

    def forward(self, x, styles):
        h, w = x.shape[-2:]
        y = self.conv(F.pad(x, (1, 1, 1, 1), mode="reflect"))
        y = y[..., 3:3 + 2 * h, 3:3 + 2 * w]
        return F.relu(self.norm(y, next(styles) if self.norm.adaptive else None))


class ResBlock(nn.Module):
    def __init__(self, channels, adaptive=True):
        super().__init__()
        self.body = ConvNormAct(channels, channels, 3, 1, 1, adaptive)

    def forward(self, x, styles):
        return x + self.body(x, styles)


class Encoder(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        c1, c2, c3 = cfg.widths
        a = cfg.adain_in_encoder
        self.layers = nn.ModuleList([
            ConvNormAct(cfg.image_channels, c1, 7, 1, 3, a),
            ConvNormAct(c1, c2, 3, 2, 1, a),
            ConvNormAct(c2, c3, 3, 2, 1, a),
            *[ResBlock(c3, a) for _ in range(cfg.n_res_blocks_enc)],
        ])

    def forward(self, x, styles):
        for layer in self.layers:
            x = layer(x, styles)
        return x


class Decoder(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        c1, c2, c3 = cfg.widths
        self.layers = nn.ModuleList([
            *[ResBlock(c3) for _ in range(cfg.n_res_blocks_dec)],
            UpConvNormAct(c3, c2),
            UpConvNormAct(c2, c1),
        ])
        self.out_pad = nn.ReflectionPad2d(3)
        self.out_conv = nn.Conv2d(c1, cfg.image_channels, 7)

    def forward(self, c, styles):
        for layer in self.layers:
            c = layer(c, styles)
        return torch.tanh(self.out_conv(self.out_pad(c)))


def _style_slots(module: nn.Module) -> list[StyleNorm]:
    return [m for m in module.modules() if isinstance(m, StyleNorm) and m.adaptive]


class StyleMLP(nn.Module):
    """Domain label -> concatenated (scale, shift) vectors for every AdaIN slot."""

    def __init__(self, n_style: int, hidden: int = 256):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(2, hidden), nn.ReLU(True),
            nn.Linear(hidden, hidden), nn.ReLU(True),
            nn.Linear(hidden, n_style),
        )

    def forward(self, d):
        return self.net(d)


class Generator(nn.Module):
    def __init__(self, cfg: GeneratorConfig | None = None):
        super().__init__()
        self.cfg = cfg or GeneratorConfig()
        self.encoder = Encoder(self.cfg)
        self.decoder = Decoder(self.cfg)
        self.enc_slots = [s.channels for s in _style_slots(self.encoder)]
        self.dec_slots = [s.channels for s in _style_slots(self.decoder)]
        self.n_style = 2 * (sum(self.enc_slots) + sum(self.dec_slots))
        self.mlp = StyleMLP(self.n_style, self.cfg.mlp_hidden)
        init_weights(self)
        self._init_style_bias()

    def _init_style_bias(self):
        # scales start at 1 and shifts at 0 so the untrained net is a plain instance-norm net
        bias = self.mlp.net[-1].bias
        with torch.no_grad():
            bias.zero_()
            offset = 0
            for ch in self.enc_slots + self.dec_slots:
                bias[offset:offset + ch] = 1.0
                offset += 2 * ch

    def style(self, d: torch.Tensor) -> tuple[list, list]:
        """Slice the MLP output into per-slot (scale, shift) pairs for encoder and decoder."""
        raw = self.mlp(d)
        if raw.shape[-1] != self.n_style:
            raise ValueError("style MLP width does not match the AdaIN inventory")
        pairs, offset = [], 0
        for ch in self.enc_slots + self.dec_slots:
            pairs.append((raw[:, offset:offset + ch], raw[:, offset + ch:offset + 2 * ch]))
            offset += 2 * ch
        n_enc = len(self.enc_slots)
        return pairs[:n_enc], pairs[n_enc:]

    def encode(self, x, d):
        if x.shape[-1] % 4 or x.shape[-2] % 4:
            raise ValueError(f"spatial dims {tuple(x.shape[-2:])} must be divisible by 4")
        enc_style, _ = self.style(d)
        return self.encoder(x, iter(enc_style))

    def decode(self, c, d, frozen: bool = False):
        """Decode content under domain label ``d``.

        ``frozen=True`` runs the decoder with detached parameters: gradients
        still reach the content and the style MLP, never the decoder weights.
        """
        _, dec_style = self.style(d)
        if not frozen:
            return self.decoder(c, iter(dec_style))
        params = {k: v.detach() for k, v in self.decoder.named_parameters()}
        return functional_call(self.decoder, params, (c, iter(dec_style)))

    def forward(self, x, d_src, d_dst=None):
        return self.decode(self.encode(x, d_src), d_src if d_dst is None else d_dst)


class Discriminator(nn.Module):
    """Shared convolutional body with one 4x4 conv head per domain.

    Stride-1 layers pad asymmetrically (1, 2) so that the logit grid is exactly
    H/8 x W/8.
    """

    def __init__(self, cfg: GeneratorConfig | None = None):
        super().__init__()
        cfg = cfg or GeneratorConfig()
        c1, c2, c3, c4 = cfg.disc_widths
        ch = cfg.image_channels
        self.body = nn.Sequential(
            nn.Conv2d(ch, c1, 4, 2, 1), nn.LeakyReLU(0.2, True),
            nn.Conv2d(c1, c2, 4, 2, 1), nn.InstanceNorm2d(c2), nn.LeakyReLU(0.2, True),
            nn.Conv2d(c2, c3, 4, 2, 1), nn.InstanceNorm2d(c3), nn.LeakyReLU(0.2, True),
            nn.ZeroPad2d((1, 2, 1, 2)), nn.Conv2d(c3, c4, 4, 1), nn.InstanceNorm2d(c4), nn.LeakyReLU(0.2, True),
        )
        self.heads = nn.ModuleList([
            nn.Sequential(nn.ZeroPad2d((1, 2, 1, 2)), nn.Conv2d(c4, 1, 4, 1)) for _ in range(2)
        ])
        init_weights(self)

    def features(self, x):
        return self.body(x)

    def head(self, feats, branch: int):
        if branch not in (0, 1):
            raise ValueError(f"invalid discriminator branch {branch}")
        return self.heads[branch](feats)

    def forward(self, x, branch: int):
        return self.head(self.features(x), branch)


def init_weights(module: nn.Module, std: float = 0.02):
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.normal_(m.weight, 0.0, std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
