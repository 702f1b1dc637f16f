"""Synthetic class-incremental detection scenario generator.

Builds a deterministic dataset shaped like an indoor patrol stream: each
task introduces one class, its train images feature that class plus
occasional instances of earlier classes (environments persist across
flights), and each task's test split contains only its own class so
per-task mAP isolates retention.
"""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np

from .boxes import BBox, GroundTruthInstance
from .dataset import DatasetIndex, ImageRecord, TaskSpec

DEFAULT_CLASSES: Tuple[str, ...] = ("car", "truck", "van", "drone", "person")
DEFAULT_IMAGE_SIZE: Tuple[int, int] = (640, 480)

# Fraction of task j's train images that still contain an earlier class
# c: co_occur * co_decay ** (j - c - 1), realized as an exact image
# count so class exposure follows the intended ladder rather than a
# lucky draw. Environments persist, so recently introduced objects keep
# appearing in the next flights while older ones fade geometrically;
# forgotten classes then hover near the confidence floor where replay
# decides whether they stay detectable.
DEFAULT_CO_OCCUR = 0.145
DEFAULT_CO_DECAY = 0.95
DEFAULT_SEED = 8


def _sample_box(
    rng: np.random.Generator,
    width: int,
    height: int,
    placed: Sequence[BBox],
    max_overlap: float = 0.4,
    tries: int = 50,
) -> Optional[BBox]:
    for _ in range(tries):
        w = rng.uniform(60.0, 160.0)
        h = rng.uniform(60.0, 160.0)
        x = rng.uniform(0.0, width - w)
        y = rng.uniform(0.0, height - h)
        box = BBox(x, y, x + w, y + h)
        if all(_iou(box, other) <= max_overlap for other in placed):
            return box
    return None


def _iou(a: BBox, b: BBox) -> float:
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def _make_image(
    rng: np.random.Generator,
    image_id: str,
    primary_class: int,
    co_classes: Sequence[int],
    primary_count: int,
    width: int,
    height: int,
    source_task: int,
) -> ImageRecord:
    placed: List[BBox] = []
    gt: List[GroundTruthInstance] = []
    for _ in range(primary_count):
        box = _sample_box(rng, width, height, placed)
        if box is None:
            break
        placed.append(box)
        gt.append(GroundTruthInstance(box, primary_class))
    for c in co_classes:
        box = _sample_box(rng, width, height, placed)
        if box is None:
            continue
        placed.append(box)
        gt.append(GroundTruthInstance(box, c))
    return ImageRecord(image_id, width, height, tuple(gt), source_task)


def make_default_scenario(
    num_tasks: int = 5,
    train_per_task: int = 40,
    test_per_task: int = 10,
    seed: int = DEFAULT_SEED,
    co_occur: float = DEFAULT_CO_OCCUR,
    co_decay: float = DEFAULT_CO_DECAY,
    classes: Optional[Sequence[str]] = None,
    image_size: Tuple[int, int] = DEFAULT_IMAGE_SIZE,
    train_instances: Tuple[int, int] = (4, 5),
    test_instances: Tuple[int, int] = (2, 3),
) -> DatasetIndex:
    """One-class-per-task stream with persistent-environment co-occurrence.

    Task j's train images always contain class j; an exact
    ``round(train_per_task * co_occur * co_decay ** (j - c - 1))`` of
    them also carry one instance of each earlier class c, with the
    carrier images chosen at random. Exact counts keep every class's
    exposure schedule on the designed decay ladder instead of leaving it
    to binomial luck. Test images contain only the task's own class,
    keeping per-task evaluation single-class. Train images carry several
    primary instances so per-image recall is a fine-grained retention
    signal for the scored replay strategies.
    """
    if num_tasks < 1:
        raise ValueError("num_tasks must be >= 1")
    if not (0.0 <= co_occur < 1.0):
        raise ValueError(f"co_occur must be in [0,1), got {co_occur}")
    if classes is None:
        names = list(DEFAULT_CLASSES[:num_tasks])
        names += [f"class_{i}" for i in range(len(names), num_tasks)]
    else:
        names = list(classes)
        if len(names) < num_tasks:
            raise ValueError(f"{num_tasks} tasks need {num_tasks} classes, got {len(names)}")
        names = names[:num_tasks]
    width, height = image_size
    rng = np.random.Generator(np.random.PCG64(seed))
    images = {}
    tasks = []
    for j in range(num_tasks):
        carriers: List[List[int]] = [[] for _ in range(train_per_task)]
        for c in range(j):
            share = co_occur * co_decay ** (j - c - 1)
            n_co = min(train_per_task, round(train_per_task * share))
            for k in rng.choice(train_per_task, size=n_co, replace=False):
                carriers[k].append(c)
        train_ids = []
        for k in range(train_per_task):
            image_id = f"t{j}_train_{k:03d}"
            primary = int(rng.integers(train_instances[0], train_instances[1] + 1))
            images[image_id] = _make_image(
                rng, image_id, j, carriers[k], primary, width, height, j
            )
            train_ids.append(image_id)
        test_ids = []
        for k in range(test_per_task):
            image_id = f"t{j}_test_{k:03d}"
            primary = int(rng.integers(test_instances[0], test_instances[1] + 1))
            images[image_id] = _make_image(rng, image_id, j, (), primary, width, height, j)
            test_ids.append(image_id)
        tasks.append(TaskSpec(j, j, tuple(train_ids), tuple(test_ids)))
    return DatasetIndex(classes=names, tasks=tasks, images=images)
