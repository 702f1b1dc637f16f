"""Benchmark the compiled kernel backend against the pure-Python twin.

Runs the three hot kernels (pairwise IoU, greedy matching, NMS) on
random boxed scenes at several sizes and prints per-call timings plus
the speedup. Both backends are imported directly, so one process
measures both regardless of which one the package selected.

Usage: python benchmarks/bench_kernels.py [--sizes 50,200,800] [--repeat 20]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from replaybench._kernels import _fast, _pure, backend_name


def _random_boxes(rng: np.random.Generator, n: int) -> np.ndarray:
    x = rng.uniform(0, 600, size=(n, 1))
    y = rng.uniform(0, 440, size=(n, 1))
    w = rng.uniform(2, 200, size=(n, 1))
    h = rng.uniform(2, 200, size=(n, 1))
    return np.hstack([x, y, x + w, y + h])


def _workload(rng: np.random.Generator, n: int):
    det_boxes = _random_boxes(rng, n)
    gt_boxes = _random_boxes(rng, max(n // 2, 1))
    det_classes = rng.integers(0, 5, size=n)
    gt_classes = rng.integers(0, 5, size=gt_boxes.shape[0])
    conf = rng.uniform(0, 1, size=n)
    order = np.argsort(-conf, kind="stable").astype(np.int64)
    return det_boxes, det_classes, order, gt_boxes, gt_classes


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        started = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - started)
    return best


def bench(sizes, repeat):
    rng = np.random.default_rng(0)
    rows = []
    for n in sizes:
        det_boxes, det_classes, order, gt_boxes, gt_classes = _workload(rng, n)
        cases = {
            "iou_matrix": lambda impl: impl.iou_matrix(det_boxes, gt_boxes),
            "greedy_assign": lambda impl: impl.greedy_assign(
                det_boxes, det_classes, order, gt_boxes, gt_classes, 0.5, True
            ),
            "nms_keep": lambda impl: impl.nms_keep(det_boxes, det_classes, order, 0.7),
        }
        for name, call in cases.items():
            t_pure = _time(lambda: call(_pure), repeat)
            t_fast = _time(lambda: call(_fast), repeat)
            rows.append((name, n, t_pure, t_fast))
    return rows


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="50,200,800", help="comma-separated box counts")
    parser.add_argument("--repeat", type=int, default=20, help="timing repetitions (best-of)")
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",") if s]

    print(f"active package backend: {backend_name()}")
    print(f"{'kernel':<14} {'n':>5} {'pure':>12} {'compiled':>12} {'speedup':>8}")
    for name, n, t_pure, t_fast in bench(sizes, args.repeat):
        speedup = t_pure / t_fast if t_fast > 0 else float("inf")
        print(f"{name:<14} {n:>5} {t_pure * 1e3:>10.3f}ms {t_fast * 1e3:>10.3f}ms {speedup:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
