# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend.

Mirrors ``_pure.py`` operation-for-operation (same expressions, same
evaluation order) so both backends produce bit-identical results.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline double _dmin(double a, double b) nogil:
    return a if a < b else b


cdef inline double _dmax(double a, double b) nogil:
    return a if a > b else b


cdef inline double _iou_scalar(double ax1, double ay1, double ax2, double ay2,
                               double area_a,
                               double bx1, double by1, double bx2, double by2,
                               double area_b) nogil:
    cdef double iw = _dmin(ax2, bx2) - _dmax(ax1, bx1)
    if iw <= 0.0:
        return 0.0
    cdef double ih = _dmin(ay2, by2) - _dmax(ay1, by1)
    if ih <= 0.0:
        return 0.0
    cdef double inter = iw * ih
    return inter / (area_a + area_b - inter)


def iou_matrix(boxes_a, boxes_b):
    """Pairwise IoU of (n,4) and (m,4) xyxy boxes -> (n,m)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = np.ascontiguousarray(boxes_a, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] b = np.ascontiguousarray(boxes_b, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n, m), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] areas_b = np.empty(m, dtype=np.float64)
    cdef Py_ssize_t i, j
    cdef double ax1, ay1, ax2, ay2, area_a
    for j in range(m):
        areas_b[j] = (b[j, 2] - b[j, 0]) * (b[j, 3] - b[j, 1])
    for i in range(n):
        ax1 = a[i, 0]; ay1 = a[i, 1]; ax2 = a[i, 2]; ay2 = a[i, 3]
        area_a = (ax2 - ax1) * (ay2 - ay1)
        for j in range(m):
            out[i, j] = _iou_scalar(ax1, ay1, ax2, ay2, area_a,
                                    b[j, 0], b[j, 1], b[j, 2], b[j, 3], areas_b[j])
    return out


def greedy_assign(det_boxes, det_classes, order, gt_boxes, gt_classes,
                  double iou_threshold, bint class_aware):
    """Greedy one-to-one assignment; see the pure backend for the contract."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dets = np.ascontiguousarray(det_boxes, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] gts = np.ascontiguousarray(gt_boxes, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] dcls = np.ascontiguousarray(det_classes, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] gcls = np.ascontiguousarray(gt_classes, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ord_ = np.ascontiguousarray(order, dtype=np.int64)
    cdef Py_ssize_t n = dets.shape[0]
    cdef Py_ssize_t m = gts.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] match_gt = np.full(n, -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] match_iou = np.zeros(n, dtype=np.float64)
    if n == 0 or m == 0:
        return match_gt, match_iou
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] gt_taken = np.zeros(m, dtype=np.uint8)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] gt_areas = np.empty(m, dtype=np.float64)
    cdef Py_ssize_t oi, d, j, best_j
    cdef double ax1, ay1, ax2, ay2, area_a, v, best_iou
    for j in range(m):
        gt_areas[j] = (gts[j, 2] - gts[j, 0]) * (gts[j, 3] - gts[j, 1])
    for oi in range(ord_.shape[0]):
        d = ord_[oi]
        ax1 = dets[d, 0]; ay1 = dets[d, 1]; ax2 = dets[d, 2]; ay2 = dets[d, 3]
        area_a = (ax2 - ax1) * (ay2 - ay1)
        best_j = -1
        best_iou = 0.0
        for j in range(m):
            if gt_taken[j]:
                continue
            if class_aware and dcls[d] != gcls[j]:
                continue
            v = _iou_scalar(ax1, ay1, ax2, ay2, area_a,
                            gts[j, 0], gts[j, 1], gts[j, 2], gts[j, 3], gt_areas[j])
            if v >= iou_threshold and v > best_iou:
                best_iou = v
                best_j = j
        if best_j >= 0:
            gt_taken[best_j] = 1
            match_gt[d] = best_j
            match_iou[d] = best_iou
    return match_gt, match_iou


def nms_keep(boxes, classes, order, double iou_threshold):
    """Per-class greedy suppression; see the pure backend for the contract."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] bx = np.ascontiguousarray(boxes, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cls = np.ascontiguousarray(classes, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ord_ = np.ascontiguousarray(order, dtype=np.int64)
    cdef Py_ssize_t n = bx.shape[0]
    cdef cnp.ndarray keep = np.zeros(n, dtype=bool)
    cdef cnp.uint8_t[:] keep_v = keep.view(np.uint8)
    if n == 0:
        return keep
    cdef cnp.ndarray[cnp.float64_t, ndim=1] areas = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] kept = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t n_kept = 0
    cdef Py_ssize_t oi, i, ki, k
    cdef double v
    cdef bint suppressed
    for i in range(n):
        areas[i] = (bx[i, 2] - bx[i, 0]) * (bx[i, 3] - bx[i, 1])
    for oi in range(ord_.shape[0]):
        i = ord_[oi]
        suppressed = False
        for ki in range(n_kept):
            k = kept[ki]
            if cls[k] != cls[i]:
                continue
            v = _iou_scalar(bx[i, 0], bx[i, 1], bx[i, 2], bx[i, 3], areas[i],
                            bx[k, 0], bx[k, 1], bx[k, 2], bx[k, 3], areas[k])
            if v > iou_threshold:
                suppressed = True
                break
        if not suppressed:
            kept[n_kept] = i
            n_kept += 1
            keep_v[i] = 1
    return keep
