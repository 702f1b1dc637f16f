"""Detection metric kernels and continual-learning metrics.

Matching and suppression follow one fixed discipline everywhere:
detections are processed in descending confidence with ties broken by
ascending input index, IoU threshold comparisons are inclusive (>=),
and NMS suppression is strict (>). AP uses 101-point interpolation on
the 0.00..1.00 recall grid; mAP50-95 averages the ten IoU thresholds
0.50, 0.55, ..., 0.95 over classes present in the ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .boxes import BBox, Detection, GroundTruthInstance, iou  # noqa: F401  (iou re-exported)

IOU_THRESHOLDS_50_95: Tuple[float, ...] = tuple(t / 100 for t in range(50, 100, 5))
RECALL_GRID: Tuple[float, ...] = tuple(r / 100 for r in range(101))


class NoEvaluableClassesError(ValueError):
    """Raised when mAP is requested but no class has ground truth."""


@dataclass(frozen=True)
class InferenceConfig:
    """Post-processing applied to raw detector output before any metric."""

    conf_threshold: float = 0.25
    nms_iou: float = 0.7
    match_iou: float = 0.5
    # Whether recall@0.5 matching restricts pairs to equal classes.
    class_aware_recall: bool = True
    max_dets: int = 100

    def __post_init__(self) -> None:
        for name in ("conf_threshold", "nms_iou", "match_iou"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ValueError(f"{name} must be in (0,1), got {v}")


@dataclass(frozen=True)
class MatchResult:
    """Outcome of greedy matching: one-to-one pairs plus leftovers."""

    matched_pairs: Tuple[Tuple[int, int, float], ...]
    unmatched_detections: Tuple[int, ...]
    unmatched_gts: Tuple[int, ...]


def _det_arrays(dets: Sequence[Detection]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    boxes = np.array([d.bbox.as_tuple() for d in dets], dtype=np.float64).reshape(len(dets), 4)
    classes = np.array([d.class_id for d in dets], dtype=np.int64)
    conf = np.array([d.confidence for d in dets], dtype=np.float64)
    return boxes, classes, conf


def _gt_arrays(gts: Sequence[GroundTruthInstance]) -> Tuple[np.ndarray, np.ndarray]:
    boxes = np.array([g.bbox.as_tuple() for g in gts], dtype=np.float64).reshape(len(gts), 4)
    classes = np.array([g.class_id for g in gts], dtype=np.int64)
    return boxes, classes


def _confidence_order(conf: np.ndarray) -> np.ndarray:
    # Stable sort on -conf: descending confidence, ties by ascending index.
    return np.argsort(-conf, kind="stable").astype(np.int64)


def greedy_match(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthInstance],
    iou_threshold: float,
    class_aware: bool = True,
) -> MatchResult:
    """Greedily pair detections with ground truths at IoU >= threshold."""
    if not (0.0 < iou_threshold < 1.0):
        raise ValueError(f"iou_threshold must be in (0,1), got {iou_threshold}")
    if not dets or not gts:
        return MatchResult((), tuple(range(len(dets))), tuple(range(len(gts))))
    det_boxes, det_classes, conf = _det_arrays(dets)
    gt_boxes, gt_classes = _gt_arrays(gts)
    order = _confidence_order(conf)
    match_gt, match_iou = _kernels.greedy_assign(
        det_boxes, det_classes, order, gt_boxes, gt_classes, iou_threshold, class_aware
    )
    pairs = []
    for d in order.tolist():
        if match_gt[d] >= 0:
            pairs.append((d, int(match_gt[d]), float(match_iou[d])))
    matched_gts = {g for _, g, _ in pairs}
    matched_dets = {d for d, _, _ in pairs}
    return MatchResult(
        matched_pairs=tuple(pairs),
        unmatched_detections=tuple(i for i in range(len(dets)) if i not in matched_dets),
        unmatched_gts=tuple(j for j in range(len(gts)) if j not in matched_gts),
    )


def image_recall(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthInstance],
    iou_threshold: float = 0.5,
    class_aware: bool = True,
) -> float:
    """Fraction of ground truths matched; 1.0 when there is nothing to miss."""
    if not gts:
        return 1.0
    result = greedy_match(dets, gts, iou_threshold, class_aware)
    return len(result.matched_pairs) / len(gts)


def nms(dets: Sequence[Detection], iou_threshold: float) -> List[Detection]:
    """Per-class greedy suppression; survivors sorted by descending confidence."""
    if not dets:
        return []
    boxes, classes, conf = _det_arrays(dets)
    order = _confidence_order(conf)
    keep = _kernels.nms_keep(boxes, classes, order, iou_threshold)
    return [dets[i] for i in order.tolist() if keep[i]]


def postprocess(dets: Sequence[Detection], cfg: InferenceConfig) -> List[Detection]:
    """Standard inference pipeline: confidence filter, NMS, detection cap."""
    filtered = [d for d in dets if d.confidence >= cfg.conf_threshold]
    return nms(filtered, cfg.nms_iou)[: cfg.max_dets]


def _class_tp_scores(
    image_dets: Sequence[Sequence[Detection]],
    image_gts: Sequence[Sequence[GroundTruthInstance]],
    class_id: int,
    iou_threshold: float,
) -> Tuple[np.ndarray, np.ndarray, int]:
    """Pooled (confidence, is_tp) rows for one class plus its gt count.

    TP/FP labels come from per-image greedy matching, which agrees with
    the pooled global-confidence pass because matching never crosses
    image boundaries.
    """
    confs: List[float] = []
    tps: List[bool] = []
    keys: List[Tuple[int, int]] = []
    npos = 0
    for img_idx, (dets, gts) in enumerate(zip(image_dets, image_gts)):
        dets_c = [(i, d) for i, d in enumerate(dets) if d.class_id == class_id]
        gts_c = [g for g in gts if g.class_id == class_id]
        npos += len(gts_c)
        if not dets_c:
            continue
        result = greedy_match([d for _, d in dets_c], gts_c, iou_threshold, class_aware=False)
        matched = {d for d, _, _ in result.matched_pairs}
        for local_idx, (orig_idx, det) in enumerate(dets_c):
            confs.append(det.confidence)
            tps.append(local_idx in matched)
            keys.append((img_idx, orig_idx))
    if not confs:
        return np.zeros(0), np.zeros(0, dtype=bool), npos
    conf_arr = np.array(confs, dtype=np.float64)
    tp_arr = np.array(tps, dtype=bool)
    img_arr = np.array([k[0] for k in keys], dtype=np.int64)
    det_arr = np.array([k[1] for k in keys], dtype=np.int64)
    # Descending confidence, ties by (image index, detection index).
    order = np.lexsort((det_arr, img_arr, -conf_arr))
    return conf_arr[order], tp_arr[order], npos


def _interpolated_ap(tp_sorted: np.ndarray, npos: int) -> float:
    """101-point interpolated AP from TP flags in ranked order."""
    cum_tp = np.cumsum(tp_sorted.astype(np.float64))
    cum_fp = np.cumsum((~tp_sorted).astype(np.float64))
    recall = cum_tp / npos
    precision = cum_tp / (cum_tp + cum_fp)
    # Precision envelope: running maximum from the right.
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    grid = np.array(RECALL_GRID, dtype=np.float64)
    idx = np.searchsorted(recall, grid, side="left")
    valid = idx < len(recall)
    interp = np.where(valid, envelope[np.minimum(idx, len(recall) - 1)], 0.0)
    return float(np.sum(interp) / len(grid))


def average_precision(
    image_dets: Sequence[Sequence[Detection]],
    image_gts: Sequence[Sequence[GroundTruthInstance]],
    class_id: int,
    iou_threshold: float,
) -> Optional[float]:
    """AP for one class at one IoU threshold; None when the class has no gt."""
    if len(image_dets) != len(image_gts):
        raise ValueError("image_dets and image_gts must be parallel per-image lists")
    _, tp_sorted, npos = _class_tp_scores(image_dets, image_gts, class_id, iou_threshold)
    if npos == 0:
        return None
    if tp_sorted.size == 0:
        return 0.0
    return _interpolated_ap(tp_sorted, npos)


def map_50_95(
    image_dets: Sequence[Sequence[Detection]],
    image_gts: Sequence[Sequence[GroundTruthInstance]],
    classes: Sequence[int],
) -> float:
    """Mean AP over IoU thresholds 0.50..0.95 and classes present in the gt."""
    present = sorted(
        c for c in set(classes) if any(g.class_id == c for gts in image_gts for g in gts)
    )
    if not present:
        raise NoEvaluableClassesError(
            f"none of the requested classes {sorted(set(classes))} has ground truth"
        )
    total = 0.0
    count = 0
    for c in present:
        for thr in IOU_THRESHOLDS_50_95:
            ap = average_precision(image_dets, image_gts, c, thr)
            assert ap is not None  # class presence checked above
            total += ap
            count += 1
    return total / count


@dataclass
class EvalMatrix:
    """Lower-triangular per-task score matrix.

    ``rows[j][i]`` is the score on task i's test split after training
    task j (i <= j); row j has exactly j+1 entries.
    """

    T: int
    rows: List[List[float]] = field(default_factory=list)

    def append_row(self, row: Sequence[float]) -> None:
        j = len(self.rows)
        if j >= self.T:
            raise ValueError(f"matrix already complete for T={self.T}")
        if len(row) != j + 1:
            raise ValueError(f"row {j} must have {j + 1} entries, got {len(row)}")
        for v in row:
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"matrix entries must lie in [0,1], got {v}")
        self.rows.append(list(row))

    @property
    def complete(self) -> bool:
        return len(self.rows) == self.T

    def value(self, trained_task: int, eval_task: int) -> float:
        if eval_task > trained_task:
            raise ValueError("matrix is lower-triangular: eval task must be <= trained task")
        return self.rows[trained_task][eval_task]


def acc(matrix: EvalMatrix) -> float:
    """Final average performance: mean of the last row."""
    if not matrix.complete:
        raise ValueError(f"matrix incomplete: {len(matrix.rows)}/{matrix.T} rows")
    final = matrix.rows[matrix.T - 1]
    return sum(final) / matrix.T


def bwt(matrix: EvalMatrix) -> float:
    """Backward transfer: mean final-minus-diagonal change on earlier tasks."""
    if not matrix.complete:
        raise ValueError(f"matrix incomplete: {len(matrix.rows)}/{matrix.T} rows")
    if matrix.T < 2:
        raise ValueError("backward transfer is undefined for a single task")
    final = matrix.rows[matrix.T - 1]
    deltas = [final[i] - matrix.rows[i][i] for i in range(matrix.T - 1)]
    return sum(deltas) / (matrix.T - 1)
