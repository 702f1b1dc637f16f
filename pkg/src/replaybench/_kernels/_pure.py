"""Pure-Python kernel backend.

Reference implementation of the hot loops (pairwise IoU, greedy
matching, NMS suppression). The compiled backend in ``_fast.pyx``
mirrors this arithmetic operation-for-operation so both produce
bit-identical results; keep the two in sync when touching either.
"""

from __future__ import annotations

import numpy as np


def _iou_scalar(ax1, ay1, ax2, ay2, area_a, bx1, by1, bx2, by2, area_b):
    iw = min(ax2, bx2) - max(ax1, bx1)
    if iw <= 0.0:
        return 0.0
    ih = min(ay2, by2) - max(ay1, by1)
    if ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (area_a + area_b - inter)


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of (n,4) and (m,4) xyxy boxes -> (n,m)."""
    a = np.ascontiguousarray(boxes_a, dtype=np.float64)
    b = np.ascontiguousarray(boxes_b, dtype=np.float64)
    n, m = a.shape[0], b.shape[0]
    out = np.zeros((n, m), dtype=np.float64)
    al = a.tolist()
    bl = b.tolist()
    areas_b = [(r[2] - r[0]) * (r[3] - r[1]) for r in bl]
    for i in range(n):
        ax1, ay1, ax2, ay2 = al[i]
        area_a = (ax2 - ax1) * (ay2 - ay1)
        row = out[i]
        for j in range(m):
            bx1, by1, bx2, by2 = bl[j]
            row[j] = _iou_scalar(ax1, ay1, ax2, ay2, area_a, bx1, by1, bx2, by2, areas_b[j])
    return out


def greedy_assign(
    det_boxes: np.ndarray,
    det_classes: np.ndarray,
    order: np.ndarray,
    gt_boxes: np.ndarray,
    gt_classes: np.ndarray,
    iou_threshold: float,
    class_aware: bool,
) -> tuple[np.ndarray, np.ndarray]:
    """Greedy one-to-one assignment of detections to ground truths.

    Detections are visited in ``order`` (caller sorts by descending
    confidence, ties by ascending index). Each takes the still-unmatched
    ground truth with the highest IoU >= iou_threshold, ties broken by
    ascending gt index. Returns (match_gt, match_iou) indexed by
    detection; match_gt is -1 for unmatched detections.
    """
    n = det_boxes.shape[0]
    m = gt_boxes.shape[0]
    match_gt = np.full(n, -1, dtype=np.int64)
    match_iou = np.zeros(n, dtype=np.float64)
    if n == 0 or m == 0:
        return match_gt, match_iou
    dl = np.ascontiguousarray(det_boxes, dtype=np.float64).tolist()
    gl = np.ascontiguousarray(gt_boxes, dtype=np.float64).tolist()
    dcls = det_classes.tolist()
    gcls = gt_classes.tolist()
    gt_taken = [False] * m
    gt_areas = [(r[2] - r[0]) * (r[3] - r[1]) for r in gl]
    thr = float(iou_threshold)
    for d in order.tolist():
        ax1, ay1, ax2, ay2 = dl[d]
        area_a = (ax2 - ax1) * (ay2 - ay1)
        best_j = -1
        best_iou = 0.0
        for j in range(m):
            if gt_taken[j]:
                continue
            if class_aware and dcls[d] != gcls[j]:
                continue
            bx1, by1, bx2, by2 = gl[j]
            v = _iou_scalar(ax1, ay1, ax2, ay2, area_a, bx1, by1, bx2, by2, gt_areas[j])
            if v >= thr and v > best_iou:
                best_iou = v
                best_j = j
        if best_j >= 0:
            gt_taken[best_j] = True
            match_gt[d] = best_j
            match_iou[d] = best_iou
    return match_gt, match_iou


def nms_keep(
    boxes: np.ndarray,
    classes: np.ndarray,
    order: np.ndarray,
    iou_threshold: float,
) -> np.ndarray:
    """Per-class greedy suppression; returns a boolean keep mask.

    Boxes are visited in ``order``; a box is dropped when its IoU with an
    already-kept box of the same class exceeds iou_threshold (strict >).
    """
    n = boxes.shape[0]
    keep = np.zeros(n, dtype=bool)
    if n == 0:
        return keep
    bl = np.ascontiguousarray(boxes, dtype=np.float64).tolist()
    cls = classes.tolist()
    areas = [(r[2] - r[0]) * (r[3] - r[1]) for r in bl]
    thr = float(iou_threshold)
    kept: list[int] = []
    for i in order.tolist():
        ax1, ay1, ax2, ay2 = bl[i]
        suppressed = False
        for k in kept:
            if cls[k] != cls[i]:
                continue
            bx1, by1, bx2, by2 = bl[k]
            v = _iou_scalar(ax1, ay1, ax2, ay2, areas[i], bx1, by1, bx2, by2, areas[k])
            if v > thr:
                suppressed = True
                break
        if not suppressed:
            kept.append(i)
            keep[i] = True
    return keep
