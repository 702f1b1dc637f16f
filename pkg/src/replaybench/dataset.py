"""Class-incremental dataset model and its on-disk JSON form.

A dataset root is a directory holding ``dataset.json``:

    {
      "classes": ["sedan", ...],
      "tasks": [{"task_index": 0, "introduced_class": 0,
                 "train_ids": [...], "test_ids": [...]}, ...],
      "images": {"<image_id>": {"width": W, "height": H, "source_task": j,
                                "gt": [{"bbox": [x1, y1, x2, y2], "class": c,
                                        "mask": [[x, y], ...]?}, ...]}, ...}
    }

External detector backends resolve image ids against the same file, so
the schema is shared and stable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence

from .boxes import BBox, GroundTruthInstance

DATASET_FILENAME = "dataset.json"


@dataclass(frozen=True)
class ImageRecord:
    """One annotated frame."""

    image_id: str
    width: int
    height: int
    gt: tuple
    source_task: int

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"{self.image_id}: non-positive image size {self.width}x{self.height}")
        object.__setattr__(self, "gt", tuple(self.gt))
        for inst in self.gt:
            b = inst.bbox
            if b.x_min < 0 or b.y_min < 0 or b.x_max > self.width or b.y_max > self.height:
                raise ValueError(
                    f"{self.image_id}: gt box {b.as_tuple()} outside image "
                    f"bounds {self.width}x{self.height}"
                )


@dataclass(frozen=True)
class TaskSpec:
    """One increment of the task stream; introduces exactly one class."""

    task_index: int
    introduced_class: int
    train_ids: tuple
    test_ids: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "train_ids", tuple(self.train_ids))
        object.__setattr__(self, "test_ids", tuple(self.test_ids))
        overlap = set(self.train_ids) & set(self.test_ids)
        if overlap:
            raise ValueError(f"task {self.task_index}: train/test ids overlap: {sorted(overlap)[:5]}")


@dataclass
class DatasetIndex:
    """The full class-incremental dataset: class names, tasks, images."""

    classes: List[str]
    tasks: List[TaskSpec]
    images: Dict[str, ImageRecord] = field(default_factory=dict)

    def __post_init__(self) -> None:
        introduced = [t.introduced_class for t in self.tasks]
        if len(set(introduced)) != len(introduced):
            raise ValueError("each task must introduce a distinct new class")
        for c in introduced:
            if not (0 <= c < len(self.classes)):
                raise ValueError(f"introduced class {c} outside class list of size {len(self.classes)}")
        for image_id, rec in self.images.items():
            if rec.image_id != image_id:
                raise ValueError(f"image map key {image_id!r} != record id {rec.image_id!r}")
        known = set(self.images)
        for t in self.tasks:
            missing = (set(t.train_ids) | set(t.test_ids)) - known
            if missing:
                raise ValueError(f"task {t.task_index} references unknown images: {sorted(missing)[:5]}")

    @property
    def num_tasks(self) -> int:
        return len(self.tasks)

    def records(self, image_ids: Sequence[str]) -> List[ImageRecord]:
        return [self.images[i] for i in image_ids]

    def prior_train_ids(self, task_index: int) -> List[str]:
        """Union of train ids of all tasks strictly before ``task_index``."""
        ids: List[str] = []
        for t in self.tasks[:task_index]:
            ids.extend(t.train_ids)
        return ids


def _instance_to_dict(inst: GroundTruthInstance) -> dict:
    d: dict = {"bbox": list(inst.bbox.as_tuple()), "class": inst.class_id}
    if inst.mask is not None:
        d["mask"] = [list(v) for v in inst.mask]
    return d


def _instance_from_dict(d: dict) -> GroundTruthInstance:
    x1, y1, x2, y2 = d["bbox"]
    mask = d.get("mask")
    return GroundTruthInstance(
        bbox=BBox(x1, y1, x2, y2),
        class_id=int(d["class"]),
        mask=tuple((float(x), float(y)) for x, y in mask) if mask else None,
    )


def dataset_to_dict(index: DatasetIndex) -> dict:
    return {
        "classes": list(index.classes),
        "tasks": [
            {
                "task_index": t.task_index,
                "introduced_class": t.introduced_class,
                "train_ids": list(t.train_ids),
                "test_ids": list(t.test_ids),
            }
            for t in index.tasks
        ],
        "images": {
            image_id: {
                "width": rec.width,
                "height": rec.height,
                "source_task": rec.source_task,
                "gt": [_instance_to_dict(g) for g in rec.gt],
            }
            for image_id, rec in sorted(index.images.items())
        },
    }


def dataset_from_dict(doc: dict) -> DatasetIndex:
    images = {}
    for image_id, rec in doc["images"].items():
        images[image_id] = ImageRecord(
            image_id=image_id,
            width=int(rec["width"]),
            height=int(rec["height"]),
            gt=tuple(_instance_from_dict(g) for g in rec["gt"]),
            source_task=int(rec["source_task"]),
        )
    tasks = [
        TaskSpec(
            task_index=int(t["task_index"]),
            introduced_class=int(t["introduced_class"]),
            train_ids=tuple(t["train_ids"]),
            test_ids=tuple(t["test_ids"]),
        )
        for t in doc["tasks"]
    ]
    return DatasetIndex(classes=list(doc["classes"]), tasks=tasks, images=images)


def save_dataset(index: DatasetIndex, root: Path) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    path = root / DATASET_FILENAME
    path.write_text(json.dumps(dataset_to_dict(index), sort_keys=True), encoding="utf-8")
    return path

def load_dataset(root: Path) -> DatasetIndex:
    path = Path(root)
    if path.is_dir():
        path = path / DATASET_FILENAME
    if not path.exists():
        raise FileNotFoundError(f"no dataset at {path}")
    return dataset_from_dict(json.loads(path.read_text(encoding="utf-8")))
