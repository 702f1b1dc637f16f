"""Semi-automatic annotation post-processing.

Teacher predictions (mask + box + confidence) are gated on confidence
and mask/box self-consistency, review agreement is computed against
human-corrected labels, and label sets convert between the YOLO text
format and a COCO-style JSON document.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .boxes import BBox, GroundTruthInstance, Polygon, iou, mask_bounds
from .dataset import DatasetIndex, ImageRecord, TaskSpec

REASON_LOW_CONFIDENCE = "low_confidence"
REASON_MASK_BOX_INCONSISTENT = "mask_box_inconsistent"
REASON_DEGENERATE_MASK = "degenerate_mask"

EDIT_TOLERANCE_PX = 1.0


@dataclass(frozen=True)
class TeacherPrediction:
    """One raw teacher output: instance mask, box, confidence, class."""

    image_id: str
    mask: Polygon
    box: BBox
    confidence: float
    class_name: str
    # Free-form prompt metadata; carried through, never interpreted.
    prompt: Optional[str] = None

    def __post_init__(self) -> None:
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence outside [0,1]: {self.confidence}")
        object.__setattr__(self, "mask", tuple(tuple(v) for v in self.mask))


@dataclass(frozen=True)
class AnnotationConfig:
    conf_threshold: float = 0.75
    mask_box_iou: float = 0.5

    def __post_init__(self) -> None:
        for name in ("conf_threshold", "mask_box_iou"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ValueError(f"{name} must be in (0,1), got {v}")


@dataclass(frozen=True)
class Rejection:
    prediction: TeacherPrediction
    reason: str


@dataclass(frozen=True)
class ReviewReport:
    total_frames: int
    edited_frames: int
    flagged: Tuple[Tuple[str, str], ...]

    @property
    def agreement(self) -> float:
        if self.total_frames == 0:
            return 1.0
        return 1.0 - self.edited_frames / self.total_frames

    def to_dict(self) -> dict:
        return {
            "total_frames": self.total_frames,
            "edited_frames": self.edited_frames,
            "agreement": self.agreement,
            "flagged": [{"image_id": i, "reason": r} for i, r in self.flagged],
        }


def filter_teacher(
    preds: Sequence[TeacherPrediction], cfg: AnnotationConfig
) -> Tuple[List[TeacherPrediction], List[Rejection]]:
    """Gate teacher outputs on confidence and mask/box agreement.

    A prediction passes when its confidence reaches the threshold AND
    the IoU between its mask's tight bounds and its reported box reaches
    the consistency gate. Degenerate masks are rejected, never fatal.
    """
    accepted: List[TeacherPrediction] = []
    rejected: List[Rejection] = []
    for p in preds:
        if p.confidence < cfg.conf_threshold:
            rejected.append(Rejection(p, REASON_LOW_CONFIDENCE))
            continue
        try:
            bounds = mask_bounds(p.mask)
        except ValueError:
            rejected.append(Rejection(p, REASON_DEGENERATE_MASK))
            continue
        if iou(bounds, p.box) < cfg.mask_box_iou:
            rejected.append(Rejection(p, REASON_MASK_BOX_INCONSISTENT))
            continue
        accepted.append(p)
    return accepted, rejected


def to_ground_truth(pred: TeacherPrediction, class_id: int) -> GroundTruthInstance:
    """Accepted prediction -> instance; the box is the mask's tight bounds."""
    return GroundTruthInstance(bbox=mask_bounds(pred.mask), class_id=class_id, mask=pred.mask)


def _boxes_equivalent(a: GroundTruthInstance, b: GroundTruthInstance) -> bool:
    if a.class_id != b.class_id:
        return False
    pa, pb = a.bbox.as_tuple(), b.bbox.as_tuple()
    return all(abs(x - y) <= EDIT_TOLERANCE_PX for x, y in zip(pa, pb))


def _perfect_matching_exists(
    auto: Sequence[GroundTruthInstance], reviewed: Sequence[GroundTruthInstance]
) -> bool:
    """Bipartite perfect matching under the equivalence relation."""
    n = len(auto)
    match_of: List[int] = [-1] * len(reviewed)

    def try_assign(i: int, seen: List[bool]) -> bool:
        for j, rv in enumerate(reviewed):
            if seen[j] or not _boxes_equivalent(auto[i], rv):
                continue
            seen[j] = True
            if match_of[j] < 0 or try_assign(match_of[j], seen):
                match_of[j] = i
                return True
        return False

    for i in range(n):
        if not try_assign(i, [False] * len(reviewed)):
            return False
    return True


def agreement_report(
    auto: Mapping[str, Sequence[GroundTruthInstance]],
    reviewed: Mapping[str, Sequence[GroundTruthInstance]],
) -> ReviewReport:
    """Count frames whose reviewed labels differ from the automatic pass.

    A frame counts as edited on any insertion, deletion, class change,
    or box movement beyond the 1-pixel tolerance.
    """
    if set(auto) != set(reviewed):
        only_a = sorted(set(auto) - set(reviewed))[:5]
        only_r = sorted(set(reviewed) - set(auto))[:5]
        raise ValueError(f"frame sets differ (auto-only {only_a}, reviewed-only {only_r})")
    flagged: List[Tuple[str, str]] = []
    for frame_id in sorted(auto):
        a, r = auto[frame_id], reviewed[frame_id]
        if len(r) < len(a):
            flagged.append((frame_id, "deletion"))
        elif len(r) > len(a):
            flagged.append((frame_id, "insertion"))
        elif not _perfect_matching_exists(a, r):
            flagged.append((frame_id, "modified"))
    return ReviewReport(total_frames=len(auto), edited_frames=len(flagged), flagged=tuple(flagged))


# ---------------------------------------------------------------------------
# Label format conversion.
#
# YOLO tree:  labels/<image_id>.txt with one "class cx cy w h" line per
# instance (center/size normalized to [0,1]), classes.txt, and
# images.json carrying image sizes and the task stream (YOLO text files
# alone cannot rebuild the dataset). Masks are dropped (box format).
#
# COCO doc:   one JSON document with images/annotations/categories;
# bbox is [x, y, width, height] in absolute pixels, category ids equal
# the class indices, and images carry a source_task field so the task
# stream survives the round trip.
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def yolo_lines(record: ImageRecord) -> List[str]:
    lines = []
    for g in record.gt:
        b = g.bbox
        cx = (b.x_min + b.x_max) / 2.0 / record.width
        cy = (b.y_min + b.y_max) / 2.0 / record.height
        w = b.width / record.width
        h = b.height / record.height
        lines.append(f"{g.class_id} {_fmt(cx)} {_fmt(cy)} {_fmt(w)} {_fmt(h)}")
    return lines


def to_yolo_tree(index: DatasetIndex) -> Dict[str, str]:
    """Relative path -> file content for a YOLO label directory tree."""
    files: Dict[str, str] = {
        "classes.txt": "".join(f"{c}\n" for c in index.classes),
        "images.json": json.dumps(
            {
                "images": {
                    i: {"width": r.width, "height": r.height, "source_task": r.source_task}
                    for i, r in sorted(index.images.items())
                },
                "tasks": [
                    {
                        "task_index": t.task_index,
                        "introduced_class": t.introduced_class,
                        "train_ids": list(t.train_ids),
                        "test_ids": list(t.test_ids),
                    }
                    for t in index.tasks
                ],
            },
            sort_keys=True,
        ),
    }
    for image_id, record in sorted(index.images.items()):
        files[f"labels/{image_id}.txt"] = "".join(line + "\n" for line in yolo_lines(record))
    return files


def from_yolo_tree(files: Mapping[str, str]) -> DatasetIndex:
    classes = [c for c in files["classes.txt"].splitlines() if c]
    meta = json.loads(files["images.json"])
    images: Dict[str, ImageRecord] = {}
    for image_id, info in meta["images"].items():
        width, height = int(info["width"]), int(info["height"])
        gt: List[GroundTruthInstance] = []
        content = files.get(f"labels/{image_id}.txt", "")
        for lineno, line in enumerate(content.splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split()
            cls = int(parts[0])
            cx, cy, w, h = (float(p) for p in parts[1:5])
            x_min = (cx - w / 2.0) * width
            y_min = (cy - h / 2.0) * height
            x_max = (cx + w / 2.0) * width
            y_max = (cy + h / 2.0) * height
            try:
                gt.append(GroundTruthInstance(BBox(x_min, y_min, x_max, y_max), cls))
            except ValueError as exc:
                raise ValueError(f"{image_id} line {lineno}: invalid box ({exc})") from exc
        try:
            images[image_id] = ImageRecord(image_id, width, height, tuple(gt), int(info["source_task"]))
        except ValueError as exc:
            raise ValueError(f"{image_id}: {exc}") from exc
    tasks = [
        TaskSpec(int(t["task_index"]), int(t["introduced_class"]), tuple(t["train_ids"]), tuple(t["test_ids"]))
        for t in meta.get("tasks", [])
    ]
    return DatasetIndex(classes=classes, tasks=tasks, images=images)


def to_coco_doc(index: DatasetIndex) -> dict:
    image_ids = sorted(index.images)
    id_of = {image_id: k + 1 for k, image_id in enumerate(image_ids)}
    images = []
    annotations = []
    ann_id = 1
    for image_id in image_ids:
        r = index.images[image_id]
        images.append(
            {
                "id": id_of[image_id],
                "file_name": image_id,
                "width": r.width,
                "height": r.height,
                "source_task": r.source_task,
            }
        )
        for g in r.gt:
            b = g.bbox
            ann = {
                "id": ann_id,
                "image_id": id_of[image_id],
                "category_id": g.class_id,
                "bbox": [b.x_min, b.y_min, b.width, b.height],
                "area": b.area,
                "iscrowd": 0,
            }
            if g.mask is not None:
                ann["segmentation"] = [[coord for vertex in g.mask for coord in vertex]]
            annotations.append(ann)
            ann_id += 1
    return {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": k, "name": name} for k, name in enumerate(index.classes)],
        "tasks": [
            {
                "task_index": t.task_index,
                "introduced_class": t.introduced_class,
                "train_ids": list(t.train_ids),
                "test_ids": list(t.test_ids),
            }
            for t in index.tasks
        ],
    }


def from_coco_doc(doc: dict) -> DatasetIndex:
    classes_by_id = {c["id"]: c["name"] for c in doc["categories"]}
    classes = [classes_by_id[k] for k in sorted(classes_by_id)]
    by_image: Dict[int, List[GroundTruthInstance]] = {}
    for ann in doc["annotations"]:
        x, y, w, h = ann["bbox"]
        mask = None
        if ann.get("segmentation"):
            flat = ann["segmentation"][0]
            mask = tuple((flat[k], flat[k + 1]) for k in range(0, len(flat), 2))
        try:
            inst = GroundTruthInstance(BBox(x, y, x + w, y + h), int(ann["category_id"]), mask)
        except ValueError as exc:
            raise ValueError(f"annotation {ann.get('id')}: {exc}") from exc
        by_image.setdefault(ann["image_id"], []).append(inst)
    images: Dict[str, ImageRecord] = {}
    for img in doc["images"]:
        image_id = img["file_name"]
        try:
            images[image_id] = ImageRecord(
                image_id,
                int(img["width"]),
                int(img["height"]),
                tuple(by_image.get(img["id"], ())),
                int(img.get("source_task", 0)),
            )
        except ValueError as exc:
            raise ValueError(f"{image_id}: {exc}") from exc
    tasks = [
        TaskSpec(int(t["task_index"]), int(t["introduced_class"]), tuple(t["train_ids"]), tuple(t["test_ids"]))
        for t in doc.get("tasks", [])
    ]
    return DatasetIndex(classes=classes, tasks=tasks, images=images)


def convert_labels(index: DatasetIndex, direction: str):
    """Format dispatcher: 'to_yolo' -> path->content map, 'to_coco' -> doc."""
    if direction == "to_yolo":
        return to_yolo_tree(index)
    if direction == "to_coco":
        return to_coco_doc(index)
    raise ValueError(f"unknown direction {direction!r}, expected to_yolo or to_coco")


def write_yolo(index: DatasetIndex, out_dir: Path) -> None:
    out_dir = Path(out_dir)
    for rel, content in to_yolo_tree(index).items():
        path = out_dir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(content, encoding="utf-8")


def read_yolo(in_dir: Path) -> DatasetIndex:
    in_dir = Path(in_dir)
    files: Dict[str, str] = {}
    for path in in_dir.rglob("*"):
        if path.is_file():
            files[path.relative_to(in_dir).as_posix()] = path.read_text(encoding="utf-8")
    return from_yolo_tree(files)


def write_coco(index: DatasetIndex, out_path: Path) -> None:
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    Path(out_path).write_text(json.dumps(to_coco_doc(index), sort_keys=True), encoding="utf-8")


def read_coco(in_path: Path) -> DatasetIndex:
    return from_coco_doc(json.loads(Path(in_path).read_text(encoding="utf-8")))


def read_teacher_jsonl(path: Path) -> List[TeacherPrediction]:
    """One TeacherPrediction JSON object per line."""
    preds = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            preds.append(
                TeacherPrediction(
                    image_id=d["image_id"],
                    mask=tuple((float(x), float(y)) for x, y in d["mask"]),
                    box=BBox(*[float(v) for v in d["box"]]),
                    confidence=float(d["confidence"]),
                    class_name=d["class_name"],
                    prompt=d.get("prompt"),
                )
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"{path} line {lineno}: bad teacher prediction ({exc})") from exc
    return preds
