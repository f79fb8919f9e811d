"""Synthetic mask domain: randomly rotated, non-overlapping ellipses."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage


class PlacementExhausted(RuntimeError):
    pass


@dataclass
class EllipseSpec:
    center_x: float
    center_y: float
    major_a: float
    minor_b: float
    theta: float

    def __post_init__(self):
        if not 0 < self.minor_b <= self.major_a:
            raise ValueError(f"need 0 < minor_b <= major_a, got b={self.minor_b}, a={self.major_a}")


@dataclass
class MaskSpec:
    canvas_h: int
    canvas_w: int
    ellipses: list[EllipseSpec] = field(default_factory=list)
    seed: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MaskSpec":
        ellipses = [EllipseSpec(**e) for e in data.get("ellipses", [])]
        return cls(data["canvas_h"], data["canvas_w"], ellipses, data.get("seed"))


@dataclass
class MaskSynthConfig:
    """Mask domain parameters. ``a_range`` bounds the semi-major axis in pixels."""

    n_max: int = 15
    a_range: tuple[float, float] = (20.0, 30.0)
    e_range: tuple[float, float] = (0.25, 0.75)
    canvas: tuple[int, int] = (256, 256)
    max_attempts_per_object: int = 100
    max_geometry_resamples: int = 10

    def __post_init__(self):
        self.a_range = tuple(float(v) for v in self.a_range)
        self.e_range = tuple(float(v) for v in self.e_range)
        self.canvas = tuple(int(v) for v in self.canvas)
        e_min, e_max = self.e_range
        if not 0 <= e_min <= e_max < 1:
            raise ValueError(f"e_range must satisfy 0 <= e_min <= e_max < 1, got {self.e_range}")
        if not 0 < self.a_range[0] <= self.a_range[1]:
            raise ValueError(f"a_range must be positive and ordered, got {self.a_range}")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")

    @property
    def n_min(self) -> int:
        return math.ceil(self.n_max / 2)


def minor_axis(a: float, e: float) -> float:
    return math.sqrt(1.0 - e * e) * a


def sample_ellipse(rng: np.random.Generator, config: MaskSynthConfig) -> EllipseSpec:
    """Draw axis lengths and orientation. The centre is left at (nan, nan) until placement."""
    a = rng.uniform(*config.a_range)
    e = rng.uniform(*config.e_range)
    theta = rng.uniform(0.0, math.pi)
    return EllipseSpec(math.nan, math.nan, a, minor_axis(a, e), theta)


def _bbox_half_extent(e: EllipseSpec) -> tuple[float, float]:
    c, s = math.cos(e.theta), math.sin(e.theta)
    half_w = math.hypot(e.major_a * c, e.minor_b * s)
    half_h = math.hypot(e.major_a * s, e.minor_b * c)
    return half_h, half_w


def ellipse_footprint(e: EllipseSpec, shape: tuple[int, int]) -> tuple[slice, slice, np.ndarray]:
    """Boolean footprint of one ellipse, tested at pixel centres, inside its bounding box."""
    h, w = shape
    half_h, half_w = _bbox_half_extent(e)
    y0 = max(int(math.floor(e.center_y - half_h)) - 1, 0)
    y1 = min(int(math.ceil(e.center_y + half_h)) + 2, h)
    x0 = max(int(math.floor(e.center_x - half_w)) - 1, 0)
    x1 = min(int(math.ceil(e.center_x + half_w)) + 2, w)
    yy, xx = np.mgrid[y0:y1, x0:x1]
    dx = xx + 0.5 - e.center_x
    dy = yy + 0.5 - e.center_y
    c, s = math.cos(e.theta), math.sin(e.theta)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    inside = (u / e.major_a) ** 2 + (v / e.minor_b) ** 2 <= 1.0
    return slice(y0, y1), slice(x0, x1), inside


def _try_place(rng, e: EllipseSpec, occupied: np.ndarray, attempts: int) -> EllipseSpec | None:
    h, w = occupied.shape
    half_h, half_w = _bbox_half_extent(e)
    if 2 * half_h > h or 2 * half_w > w:
        return None
    for _ in range(attempts):
        cand = EllipseSpec(
            rng.uniform(half_w, w - half_w), rng.uniform(half_h, h - half_h),
            e.major_a, e.minor_b, e.theta,
        )
        sy, sx, fp = ellipse_footprint(cand, (h, w))
        if not np.any(occupied[sy, sx] & fp):
            occupied[sy, sx] |= fp
            return cand
    return None


def place_nonoverlapping(rng: np.random.Generator, config: MaskSynthConfig, seed: int | None = None) -> MaskSpec:
    """Rejection-sample a target number of ellipses onto the canvas without footprint overlap."""
    h, w = config.canvas
    target = int(rng.integers(config.n_min, config.n_max + 1))
    occupied = np.zeros((h, w), dtype=bool)
    placed: list[EllipseSpec] = []
    for _ in range(target):
        for _ in range(config.max_geometry_resamples):
            e = _try_place(rng, sample_ellipse(rng, config), occupied, config.max_attempts_per_object)
            if e is not None:
                placed.append(e)
                break
        else:
            if len(placed) >= config.n_min:
                break
            raise PlacementExhausted(
                f"placed {len(placed)} ellipses, need at least {config.n_min} on a {h}x{w} canvas"
            )
    return MaskSpec(h, w, placed, seed)


def generate_mask_spec(config: MaskSynthConfig, seed: int) -> MaskSpec:
    return place_nonoverlapping(np.random.default_rng(seed), config, seed=seed)


def rasterize_labels(spec: MaskSpec) -> np.ndarray:
    """Instance label map: ellipse k (0-based) gets id k + 1."""
    labels = np.zeros((spec.canvas_h, spec.canvas_w), dtype=np.int32)
    for k, e in enumerate(spec.ellipses, start=1):
        sy, sx, fp = ellipse_footprint(e, labels.shape)
        labels[sy, sx][fp] = k
    return labels


def rasterize_mask(spec: MaskSpec) -> np.ndarray:
    """Binary mask in the [-1, 1] encoding: foreground +1, background -1."""
    return np.where(rasterize_labels(spec) > 0, 1.0, -1.0).astype(np.float32)


def rasterize_instance_mask(spec: MaskSpec, edge_width: int = 2) -> np.ndarray:
    """Ternary mask: interior +1, boundary ring 0, background -1.

    A pixel is on the ring when its centre lies within ``edge_width`` of the
    object boundary (half a pixel short of the nearest outside pixel centre).
    Objects are treated separately, so touching objects never share interior pixels.
    """
    if edge_width < 1:
        raise ValueError("edge_width must be >= 1")
    labels = rasterize_labels(spec)
    out = np.full(labels.shape, -1.0, dtype=np.float32)
    for k in range(1, len(spec.ellipses) + 1):
        obj = labels == k
        interior = ndimage.distance_transform_edt(np.pad(obj, 1))[1:-1, 1:-1] > edge_width + 0.5
        out[obj] = 0.0
        out[interior] = 1.0
    return out
