"""Lossy-transformation measurements and content-feature export."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from scipy import ndimage

from .metrics import greedy_match, iou_matrix
from .model import Generator, domain_label

DIAGNOSTIC_IOU = 0.1


@dataclass
class LossyReport:
    count_delta: int
    matched_centroid_offsets: list[float] = field(default_factory=list)
    mean_offset: float = 0.0
    per_object_iou: list[float] = field(default_factory=list)
    unmatched_reference: int = 0
    unmatched_pred: int = 0

    def to_dict(self):
        return asdict(self)


def lossy_report(pred: np.ndarray, reference: np.ndarray, iou_threshold: float = DIAGNOSTIC_IOU) -> LossyReport:
    """Object deletion/addition counts and, for matched objects, centroid offset and IoU."""
    ref_ids, pred_ids, iou = iou_matrix(pred, reference)
    pairs = greedy_match(iou, iou_threshold)
    ref_c = ndimage.center_of_mass(np.ones(reference.shape), reference, ref_ids) if len(ref_ids) else []
    pred_c = ndimage.center_of_mass(np.ones(pred.shape), pred, pred_ids) if len(pred_ids) else []
    offsets = [float(np.hypot(*np.subtract(ref_c[g], pred_c[p]))) for g, p in pairs]
    ious = [float(iou[g, p]) for g, p in pairs]
    return LossyReport(
        count_delta=len(pred_ids) - len(ref_ids),
        matched_centroid_offsets=offsets,
        mean_offset=float(np.mean(offsets)) if offsets else 0.0,
        per_object_iou=ious,
        unmatched_reference=len(ref_ids) - len(pairs),
        unmatched_pred=len(pred_ids) - len(pairs),
    )


@torch.no_grad()
def content_features(G: Generator, images, domain: int) -> np.ndarray:
    """Spatially average-pooled content map per image, shape (n_images, content_channels)."""
    param = next(G.parameters())
    d = domain_label(domain, 1, param.device).to(param.dtype)
    rows = []
    for x in images:
        t = torch.as_tensor(np.asarray(x), dtype=param.dtype, device=param.device)[None, None]
        rows.append(G.encode(t, d).mean(dim=(2, 3))[0].cpu().numpy())
    return np.stack(rows) if rows else np.zeros((0, G.cfg.widths[2]))


def export_content_features(G: Generator, images: dict, domain: int, out) -> Path:
    """Write one CSV row per image: image id, domain, then the pooled content vector."""
    feats = content_features(G, list(images.values()), domain)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "domain"] + [f"c{k}" for k in range(feats.shape[1])])
        for name, row in zip(images, feats):
            writer.writerow([name, domain] + [repr(float(v)) for v in row])
    return out
