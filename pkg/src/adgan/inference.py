"""Translation, segmentation and synthesis from a trained generator."""

from __future__ import annotations

import numpy as np
import torch
from scipy import ndimage
from skimage.morphology import disk
from skimage.segmentation import watershed

from .model import Generator, domain_label

DEFAULT_T_LO = -0.33
DEFAULT_T_HI = 0.33
# tiles span several training crops: a crop-sized tile of pure background
# has its noise stretched to unit variance by the instance norms
TILE_CROPS = 4


def default_tile(crop: int) -> int:
    return TILE_CROPS * crop


def _positions(size: int, tile: int, stride: int) -> list[int]:
    if size <= tile:
        return [0]
    pos = list(range(0, size - tile, stride))
    pos.append(size - tile)
    return pos


@torch.no_grad()
def translate(G: Generator, x: np.ndarray, d_src, d_dst, tile: int | None = None, overlap: int = 16) -> np.ndarray:
    """Decode ``x`` from domain ``d_src`` into domain ``d_dst`` (0 image, 1 mask, or a float blend).

    Images larger than ``tile`` are processed as overlapping tiles; each output
    pixel is taken from the tile in which it lies furthest from the tile edge.
    """
    h, w = x.shape
    if h % 4 or w % 4:
        raise ValueError(f"image dims {x.shape} must be divisible by 4")
    param = next(G.parameters())
    ds = domain_label(d_src, 1, param.device).to(param.dtype)
    dd = domain_label(d_dst, 1, param.device).to(param.dtype)

    def run(patch):
        t = torch.as_tensor(np.ascontiguousarray(patch), dtype=param.dtype, device=param.device)[None, None]
        return G.decode(G.encode(t, ds), dd)[0, 0].cpu().numpy()

    if tile is None or (h <= tile and w <= tile):
        return run(x)
    if tile % 4 or overlap < 16 or overlap >= tile:
        raise ValueError("tile must be a multiple of 4 and overlap in [16, tile)")
    stride = (tile - overlap) // 4 * 4
    ys, xs = _positions(h, tile, stride), _positions(w, tile, stride)
    out = np.zeros((h, w), dtype=np.float64)
    best = np.full((h, w), -1.0)
    iy, ix = np.mgrid[0:min(tile, h), 0:min(tile, w)]
    for y0 in ys:
        for x0 in xs:
            patch = x[y0:y0 + tile, x0:x0 + tile]
            pred = run(patch)
            th, tw = patch.shape
            # distance to the nearest tile edge that is interior to the image
            dy = np.minimum(iy[:th, :tw] + (y0 == 0) * h, th - 1 - iy[:th, :tw] + (y0 + th == h) * h)
            dx = np.minimum(ix[:th, :tw] + (x0 == 0) * w, tw - 1 - ix[:th, :tw] + (x0 + tw == w) * w)
            score = np.minimum(dy, dx).astype(np.float64)
            region = (slice(y0, y0 + th), slice(x0, x0 + tw))
            take = score > best[region]
            out[region][take] = pred[take]
            best[region][take] = score[take]
    return out.astype(np.float32)


def binarize(y: np.ndarray, threshold: float = 0.0) -> np.ndarray:
    return np.asarray(y) > threshold


def _relabel(labels: np.ndarray) -> np.ndarray:
    ids = np.unique(labels)
    ids = ids[ids > 0]
    lut = np.zeros(labels.max() + 1 if labels.size else 1, dtype=np.int32)
    lut[ids] = np.arange(1, len(ids) + 1)
    return lut[labels]


def semantic_postprocess(mask: np.ndarray, erosion_radius: int = 2) -> np.ndarray:
    """Split touching blobs: erode to get markers, then watershed on the distance transform."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return np.zeros(mask.shape, dtype=np.int32)
    eroded = ndimage.binary_erosion(mask, disk(erosion_radius)) if erosion_radius > 0 else mask
    markers, _ = ndimage.label(eroded, structure=np.ones((3, 3)))
    dist = ndimage.distance_transform_edt(mask)
    labels = watershed(-dist, markers, mask=mask).astype(np.int32)
    # components too small to leave a marker keep their own id instead of vanishing
    rest, n_rest = ndimage.label(mask & (labels == 0), structure=np.ones((3, 3)))
    labels[rest > 0] = rest[rest > 0] + labels.max()
    return _relabel(labels)


def ternarize(y: np.ndarray, t_lo: float = DEFAULT_T_LO, t_hi: float = DEFAULT_T_HI) -> np.ndarray:
    """0 background, 1 edge, 2 interior."""
    y = np.asarray(y)
    return np.where(y > t_hi, 2, np.where(y > t_lo, 1, 0)).astype(np.uint8)


def instance_from_ternary(y: np.ndarray, t_lo: float = DEFAULT_T_LO, t_hi: float = DEFAULT_T_HI) -> np.ndarray:
    """Marker watershed: interior components seed instances, edge pixels are assigned to them."""
    tern = ternarize(y, t_lo, t_hi)
    interior = tern == 2
    if not interior.any():
        return np.zeros(tern.shape, dtype=np.int32)
    markers, _ = ndimage.label(interior)
    relief = -ndimage.distance_transform_edt(interior)
    labels = watershed(relief, markers, mask=tern > 0)
    return _relabel(labels.astype(np.int32))


def instance_segment(G: Generator, x: np.ndarray, t_lo: float = DEFAULT_T_LO, t_hi: float = DEFAULT_T_HI,
                     tile: int | None = None) -> np.ndarray:
    return instance_from_ternary(translate(G, x, 0, 1, tile), t_lo, t_hi)


def segment(G: Generator, x: np.ndarray, threshold: float = 0.0, erosion_radius: int = 2,
            tile: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Semantic segmentation. Returns (binary mask, post-processed label map)."""
    mask = binarize(translate(G, x, 0, 1, tile), threshold)
    return mask, semantic_postprocess(mask, erosion_radius)


def synthesize(G: Generator, mask: np.ndarray, tile: int | None = None) -> np.ndarray:
    """Mask -> image direction."""
    return translate(G, mask, 1, 0, tile)


@torch.no_grad()
def interpolate_domains(G: Generator, x: np.ndarray, steps: int, d_src: int = 0, d_dst: int = 1) -> list[np.ndarray]:
    """Decode one content map under labels blended linearly from ``d_src`` to ``d_dst``."""
    if steps < 2:
        raise ValueError("steps must be >= 2")
    param = next(G.parameters())
    src = domain_label(d_src, 1, param.device).to(param.dtype)
    dst = domain_label(d_dst, 1, param.device).to(param.dtype)
    t = torch.as_tensor(x, dtype=param.dtype, device=param.device)[None, None]
    c = G.encode(t, src)
    frames = []
    for alpha in np.linspace(0.0, 1.0, steps):
        d = (1.0 - alpha) * src + alpha * dst
        frames.append(G.decode(c, d)[0, 0].cpu().numpy())
    return frames
