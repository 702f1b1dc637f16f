"""Shared builders for the test suite."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

# Make the sibling _oracles module importable from any test module.
sys.path.insert(0, str(Path(__file__).parent))

from replaybench import (
    BBox,
    DatasetIndex,
    Detection,
    GroundTruthInstance,
    ImageRecord,
    TaskSpec,
)


def det(x1, y1, x2, y2, cls=0, conf=0.9) -> Detection:
    return Detection(BBox(x1, y1, x2, y2), cls, conf)


def gt(x1, y1, x2, y2, cls=0, mask=None) -> GroundTruthInstance:
    return GroundTruthInstance(BBox(x1, y1, x2, y2), cls, mask)


def random_box(rng: np.random.Generator, width=640.0, height=480.0) -> BBox:
    w = rng.uniform(5.0, width / 2)
    h = rng.uniform(5.0, height / 2)
    x = rng.uniform(0.0, width - w)
    y = rng.uniform(0.0, height - h)
    return BBox(x, y, x + w, y + h)


def random_scene(rng: np.random.Generator, n_classes=3, max_gt=6, max_det=10):
    """One image worth of (dets, gts) with overlapping clutter.

    Detections are biased to sit near a ground truth so every IoU
    threshold regime (clear hit, borderline, miss) actually occurs.
    """
    gts = []
    for _ in range(int(rng.integers(0, max_gt + 1))):
        b = random_box(rng)
        gts.append(GroundTruthInstance(b, int(rng.integers(0, n_classes))))
    dets = []
    for _ in range(int(rng.integers(0, max_det + 1))):
        if gts and rng.random() < 0.7:
            base = gts[int(rng.integers(0, len(gts)))].bbox
            dx = rng.uniform(-0.4, 0.4) * base.width
            dy = rng.uniform(-0.4, 0.4) * base.height
            sx = rng.uniform(0.7, 1.3)
            sy = rng.uniform(0.7, 1.3)
            w, h = base.width * sx, base.height * sy
            x1 = min(max(base.x_min + dx, 0.0), 639.0)
            y1 = min(max(base.y_min + dy, 0.0), 479.0)
            box = BBox(x1, y1, x1 + max(w, 1.0), y1 + max(h, 1.0))
        else:
            box = random_box(rng)
        cls = int(rng.integers(0, n_classes))
        dets.append(Detection(box, cls, float(rng.uniform(0.05, 1.0))))
    return dets, gts


def tiny_dataset(num_tasks=3, train_per_task=4, test_per_task=2) -> DatasetIndex:
    """Handmade dataset small enough to reason about in full."""
    images = {}
    tasks = []
    for j in range(num_tasks):
        train_ids = []
        for k in range(train_per_task):
            image_id = f"t{j}_tr{k}"
            x = 10.0 + 30.0 * k
            images[image_id] = ImageRecord(
                image_id, 320, 240, (gt(x, 10.0, x + 25.0, 40.0, cls=j),), j
            )
            train_ids.append(image_id)
        test_ids = []
        for k in range(test_per_task):
            image_id = f"t{j}_te{k}"
            x = 15.0 + 40.0 * k
            images[image_id] = ImageRecord(
                image_id, 320, 240, (gt(x, 50.0, x + 30.0, 85.0, cls=j),), j
            )
            test_ids.append(image_id)
        tasks.append(TaskSpec(j, j, tuple(train_ids), tuple(test_ids)))
    classes = [f"c{j}" for j in range(num_tasks)]
    return DatasetIndex(classes=classes, tasks=tasks, images=images)


@pytest.fixture
def dataset3() -> DatasetIndex:
    return tiny_dataset()
