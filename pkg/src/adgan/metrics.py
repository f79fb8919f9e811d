"""Pixel- and object-level segmentation scores."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage


@dataclass
class PixelReport:
    n_tp: int
    n_fp: int
    n_fn: int
    precision: float
    recall: float
    dice: float

    def to_dict(self):
        return asdict(self)


@dataclass
class ObjectReport:
    n_gt: int
    n_pred: int
    matches: int
    f1: float
    seg_score: float
    op_csb: float | None = None

    def to_dict(self):
        return asdict(self)


def _ratio(num: float, den: float) -> float:
    # empty denominators only occur when both masks are empty; that counts as agreement
    return 1.0 if den == 0 else num / den


def pixel_metrics(pred: np.ndarray, gt: np.ndarray) -> PixelReport:
    pred, gt = np.asarray(pred, dtype=bool), np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    if tp + fp == 0 and tp + fn > 0:
        precision = 0.0
    else:
        precision = _ratio(tp, tp + fp)
    if tp + fn == 0 and tp + fp > 0:
        recall = 0.0
    else:
        recall = _ratio(tp, tp + fn)
    return PixelReport(tp, fp, fn, precision, recall, _ratio(2 * tp, 2 * tp + fp + fn))


def connected_components(mask: np.ndarray) -> np.ndarray:
    """8-connected labelling with ids 1..k."""
    labels, _ = ndimage.label(np.asarray(mask, dtype=bool), structure=np.ones((3, 3), dtype=bool))
    return labels.astype(np.int32)


def overlap_table(pred: np.ndarray, gt: np.ndarray):
    """Intersection counts between every (gt id, pred id) pair plus per-object areas.

    Returns (gt_ids, pred_ids, inter[len(gt_ids), len(pred_ids)], gt_area, pred_area).
    """
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    gt_ids = np.unique(gt)
    gt_ids = gt_ids[gt_ids > 0]
    pred_ids = np.unique(pred)
    pred_ids = pred_ids[pred_ids > 0]
    gi = np.searchsorted(gt_ids, gt)
    pi = np.searchsorted(pred_ids, pred)
    both = (gt > 0) & (pred > 0)
    inter = np.zeros((len(gt_ids), len(pred_ids)), dtype=np.int64)
    np.add.at(inter, (gi[both], pi[both]), 1)
    gt_area = np.array([np.count_nonzero(gt == i) for i in gt_ids], dtype=np.int64)
    pred_area = np.array([np.count_nonzero(pred == i) for i in pred_ids], dtype=np.int64)
    return gt_ids, pred_ids, inter, gt_area, pred_area


def iou_matrix(pred: np.ndarray, gt: np.ndarray):
    gt_ids, pred_ids, inter, ga, pa = overlap_table(pred, gt)
    union = ga[:, None] + pa[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(union > 0, inter / np.maximum(union, 1), 0.0)
    return gt_ids, pred_ids, iou


def greedy_match(iou: np.ndarray, threshold: float) -> list[tuple[int, int]]:
    """One-to-one matching taking pairs in descending IoU order while IoU >= threshold."""
    pairs = [(iou[g, p], g, p) for g, p in zip(*np.nonzero(iou >= threshold))]
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_g, used_p, out = set(), set(), []
    for _, g, p in pairs:
        if g not in used_g and p not in used_p:
            used_g.add(g)
            used_p.add(p)
            out.append((int(g), int(p)))
    return out


def seg_score(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean Jaccard over ground-truth objects, matched by majority overlap (> half of the GT object)."""
    gt_ids, pred_ids, inter, ga, pa = overlap_table(pred, gt)
    if len(gt_ids) == 0:
        return 1.0 if len(pred_ids) == 0 else 0.0
    total = 0.0
    for g in range(len(gt_ids)):
        hits = np.nonzero(2 * inter[g] > ga[g])[0]
        assert len(hits) <= 1, "majority overlap must be unique"
        if len(hits):
            p = hits[0]
            total += inter[g, p] / (ga[g] + pa[p] - inter[g, p])
    return total / len(gt_ids)


def op_csb(seg: float, det: float) -> float:
    for v in (seg, det):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"score {v} outside [0, 1]")
    return 0.5 * (seg + det)


def object_f1(pred: np.ndarray, gt: np.ndarray, iou_threshold: float = 0.5, det: float | None = None) -> ObjectReport:
    gt_ids, pred_ids, iou = iou_matrix(pred, gt)
    n_gt, n_pred = len(gt_ids), len(pred_ids)
    matches = len(greedy_match(iou, iou_threshold))
    f1 = 1.0 if n_gt + n_pred == 0 else 2 * matches / (n_gt + n_pred)
    seg = seg_score(pred, gt)
    return ObjectReport(n_gt, n_pred, matches, f1, seg, None if det is None else op_csb(seg, det))


def summarize(values) -> dict:
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        return {"mean": float("nan"), "std": float("nan"), "n": 0}
    return {"mean": float(arr.mean()), "std": float(arr.std()), "n": int(arr.size)}
