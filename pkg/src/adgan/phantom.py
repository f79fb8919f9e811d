"""Pseudo-microscopy phantoms rendered from mask specs, plus on-disk dataset generation.

The renderer exists so that training and evaluation can run without any
external data. Ground truth is written next to the images but in its own
directory; the trainer only ever reads ``images/`` and ``unpaired_masks/``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .imageio import minmax_normalize, save_image, save_labels
from .masksynth import MaskSpec, MaskSynthConfig, ellipse_footprint, generate_mask_spec, rasterize_instance_mask, rasterize_labels, rasterize_mask


@dataclass
class PhantomParams:
    peak_intensity_range: tuple[float, float] = (0.6, 1.0)
    radial_falloff: float = 0.5
    blur_sigma: float = 1.0
    noise_sigma: float = 0.03
    background_level: float = 0.05

    def __post_init__(self):
        self.peak_intensity_range = tuple(float(v) for v in self.peak_intensity_range)
        lo, hi = self.peak_intensity_range
        if not (0 < lo <= hi <= 1):
            raise ValueError(f"peak_intensity_range must satisfy 0 < lo <= hi <= 1, got {self.peak_intensity_range}")
        for name in ("radial_falloff", "blur_sigma", "noise_sigma", "background_level"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {v}")
        if self.background_level >= 0.3:
            raise ValueError("background_level must be < 0.3")


def _object_intensity(spec: MaskSpec, params: PhantomParams, rng) -> np.ndarray:
    canvas = np.zeros((spec.canvas_h, spec.canvas_w), dtype=np.float64)
    for e in spec.ellipses:
        peak = rng.uniform(*params.peak_intensity_range)
        sy, sx, fp = ellipse_footprint(e, canvas.shape)
        yy, xx = np.mgrid[sy, sx]
        dx, dy = xx + 0.5 - e.center_x, yy + 0.5 - e.center_y
        c, s = math.cos(e.theta), math.sin(e.theta)
        r = np.sqrt(((dx * c + dy * s) / e.major_a) ** 2 + ((-dx * s + dy * c) / e.minor_b) ** 2)
        value = peak * np.clip(1.0 - r, 0.0, 1.0) ** params.radial_falloff
        canvas[sy, sx] = np.where(fp, value, canvas[sy, sx])
    return canvas


def render_phantom(spec: MaskSpec, params: PhantomParams, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Render an image in [-1, 1] and its binary ground-truth mask (+1 / -1)."""
    rng = np.random.default_rng(seed)
    img = _object_intensity(spec, params, rng)
    if params.blur_sigma > 0:
        img = ndimage.gaussian_filter(img, params.blur_sigma)
    gt = rasterize_mask(spec)
    img = img + params.background_level * (gt < 0)
    if params.noise_sigma > 0:
        img = img + rng.normal(0.0, params.noise_sigma, img.shape)
    return minmax_normalize(img).astype(np.float32), gt


def _spec_json(spec: MaskSpec, path: Path):
    path.write_text(json.dumps(spec.to_dict(), indent=1))


def make_dataset(n_images: int, mask_config: MaskSynthConfig, phantom_params: PhantomParams,
                 seed: int, out_dir, instance: bool = False, bit_depth: int = 16) -> dict:
    """Write a paired-for-evaluation / unpaired-for-training phantom dataset.

    Layout under ``out_dir``: ``images/`` (phantoms), ``gt_masks/`` (binary
    ground truth) and ``gt_labels/`` (instance ids), both for evaluation only,
    and ``unpaired_masks/`` with independently sampled masks. With ``instance``
    the unpaired masks use the ternary edge encoding.
    """
    if n_images < 1:
        raise ValueError("n_images must be >= 1")
    out = Path(out_dir)
    dirs = {k: out / k for k in ("images", "gt_masks", "gt_labels", "unpaired_masks")}
    for d in dirs.values():
        d.mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(seed).generate_state(3 * n_images).reshape(n_images, 3)
    records = []
    for i, (mask_seed, render_seed, unpaired_seed) in enumerate(seeds.tolist()):
        name = f"{i:05d}"
        spec = generate_mask_spec(mask_config, mask_seed)
        img, gt = render_phantom(spec, phantom_params, render_seed)
        save_image(img, dirs["images"] / f"{name}.png", bit_depth)
        save_image(gt, dirs["gt_masks"] / f"{name}.png", 8)
        save_labels(rasterize_labels(spec), dirs["gt_labels"] / f"{name}.png")
        _spec_json(spec, dirs["gt_masks"] / f"{name}.json")

        uspec = generate_mask_spec(mask_config, unpaired_seed)
        umask = rasterize_instance_mask(uspec) if instance else rasterize_mask(uspec)
        save_image(umask, dirs["unpaired_masks"] / f"u{name}.png", 8)
        _spec_json(uspec, dirs["unpaired_masks"] / f"u{name}.json")
        records.append({
            "image": f"images/{name}.png", "gt_mask": f"gt_masks/{name}.png",
            "gt_labels": f"gt_labels/{name}.png", "unpaired_mask": f"unpaired_masks/u{name}.png",
            "mask_seed": mask_seed, "render_seed": render_seed, "unpaired_seed": unpaired_seed,
            "n_objects": len(spec.ellipses), "n_unpaired_objects": len(uspec.ellipses),
        })
    manifest = {
        "seed": seed, "n_images": n_images, "instance": instance,
        "mask_config": asdict(mask_config), "phantom_params": asdict(phantom_params),
        "files": records,
    }
    manifest["hash"] = hashlib.sha256(json.dumps(manifest, sort_keys=True).encode()).hexdigest()
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return manifest
