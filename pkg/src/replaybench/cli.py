"""Command-line front end.

Subcommands: run (experiments), eval (standalone mAP), convert (label
formats), audit (teacher filtering / review agreement), synth (default
scenario generation). Errors exit nonzero with a single
"error: <message>" line on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from ._version import VERSION
from .annotate import (
    AnnotationConfig,
    agreement_report,
    filter_teacher,
    read_coco,
    read_teacher_jsonl,
    read_yolo,
    write_coco,
    write_yolo,
)
from .boxes import BBox, Detection, GroundTruthInstance
from .dataset import dataset_from_dict, load_dataset, save_dataset
from .detector import DetectorSpec
from .metrics import InferenceConfig, NoEvaluableClassesError, map_50_95, postprocess
from .replay import STRATEGIES, StrategyConfig
from .runner import RunConfig, config_from_dict, emit_report, run_matrix
from .scenario import (
    DEFAULT_CO_DECAY,
    DEFAULT_CO_OCCUR,
    DEFAULT_SEED,
    make_default_scenario,
)


def _parse_detector(text: str) -> DetectorSpec:
    if text == "sim":
        return DetectorSpec(kind="sim")
    if text == "echo":
        return DetectorSpec(kind="echo")
    if text.startswith("cmd:"):
        return DetectorSpec(kind="external", command=text[len("cmd:") :])
    raise ValueError(f"detector must be sim, echo, or cmd:\"...\", got {text!r}")


def _cmd_run(args: argparse.Namespace) -> int:
    if args.config:
        cfg = config_from_dict(json.loads(Path(args.config).read_text(encoding="utf-8")))
    else:
        cfg = RunConfig()
    overrides: dict = {}
    if args.dataset_root:
        overrides["dataset_root"] = args.dataset_root
    if args.budget:
        overrides["budgets"] = tuple(args.budget)
    if args.seed:
        overrides["seeds"] = tuple(args.seed)
    if args.detector:
        overrides["detector"] = _parse_detector(args.detector)
    if args.output_dir:
        overrides["output_dir"] = args.output_dir
    if args.eval_mode:
        overrides["eval_mode"] = args.eval_mode
    strategies: List[str]
    if args.strategy == "all":
        strategies = list(STRATEGIES)
    elif args.strategy:
        overrides["strategy"] = StrategyConfig(
            strategy=args.strategy,
            pool_cap=cfg.strategy.pool_cap,
            k_select=cfg.strategy.k_select,
            far_refresh_baseline=cfg.strategy.far_refresh_baseline,
        )
        strategies = [args.strategy]
    else:
        strategies = [cfg.strategy.strategy]
    if overrides:
        from dataclasses import replace

        cfg = replace(cfg, **overrides)
    if cfg.dataset_root is None:
        raise ValueError("a dataset root is required (--dataset-root or config)")
    result = run_matrix(cfg, strategies)
    incomplete = 0
    for entry in result.entries:
        d = entry.to_dict()
        budget = "-" if entry.budget is None else f"{entry.budget:g}"
        acc_text = "null" if d["acc_mean"] is None else f"{d['acc_mean']:.4f}"
        bwt_text = "null" if d["bwt_mean"] is None else f"{d['bwt_mean']:.4f}"
        print(f"{entry.strategy} budget={budget} acc={acc_text} bwt={bwt_text} seeds={d['completed_seeds']}/{d['configured_seeds']}")
        if d["completed_seeds"] < d["configured_seeds"]:
            incomplete += 1
            print(f"warning: {entry.strategy} budget={budget} has failed seeds", file=sys.stderr)
        if d["completed_seeds"] == 0:
            raise RuntimeError(f"no seed completed for {entry.strategy} budget={budget}")
    if cfg.output_dir:
        print(f"report written to {cfg.output_dir}")
    return 0


def _load_gt_doc(path: Path) -> Dict[str, Sequence[GroundTruthInstance]]:
    if path.is_dir():
        path = path / "dataset.json"
    doc = json.loads(path.read_text(encoding="utf-8"))
    if "images" in doc and "classes" in doc:
        index = dataset_from_dict(doc)
        return {i: r.gt for i, r in index.images.items()}
    out: Dict[str, Sequence[GroundTruthInstance]] = {}
    for image_id, instances in doc.items():
        out[image_id] = tuple(
            GroundTruthInstance(BBox(*inst["bbox"]), int(inst["class"])) for inst in instances
        )
    return out


def _cmd_eval(args: argparse.Namespace) -> int:
    gts_by_image = _load_gt_doc(Path(args.gt))
    preds_doc = json.loads(Path(args.pred).read_text(encoding="utf-8"))
    cfg = InferenceConfig(
        conf_threshold=args.conf_threshold,
        nms_iou=args.nms_iou,
        match_iou=args.match_iou,
    )
    image_ids = sorted(gts_by_image)
    image_dets: List[List[Detection]] = []
    image_gts = []
    for image_id in image_ids:
        raw = [
            Detection(BBox(*d["bbox"]), int(d["class"]), float(d["conf"]))
            for d in preds_doc.get(image_id, [])
        ]
        image_dets.append(raw if args.raw else postprocess(raw, cfg))
        image_gts.append(gts_by_image[image_id])
    classes = sorted({g.class_id for gts in image_gts for g in gts})
    try:
        value: Optional[float] = map_50_95(image_dets, image_gts, classes)
    except NoEvaluableClassesError:
        value = None
    print(json.dumps({"images": len(image_ids), "map_50_95": value}, sort_keys=True))
    return 0


def _detect_format(path: Path) -> str:
    if path.is_dir():
        if (path / "classes.txt").exists():
            return "yolo"
        return "native"
    doc = json.loads(path.read_text(encoding="utf-8"))
    if "annotations" in doc and "categories" in doc:
        return "coco"
    return "native"


def _cmd_convert(args: argparse.Namespace) -> int:
    src = Path(args.input)
    src_format = args.from_format or _detect_format(src)
    if src_format == "yolo":
        index = read_yolo(src)
    elif src_format == "coco":
        index = read_coco(src)
    elif src_format == "native":
        index = load_dataset(src)
    else:
        raise ValueError(f"unknown input format {src_format!r}")
    dst = Path(args.output)
    if args.to == "yolo":
        write_yolo(index, dst)
    elif args.to == "coco":
        write_coco(index, dst)
    else:
        save_dataset(index, dst)
    print(f"{src_format} -> {args.to}: {len(index.images)} images, {len(index.classes)} classes")
    return 0


def _load_frames(path: Path) -> Dict[str, Sequence[GroundTruthInstance]]:
    doc = json.loads(path.read_text(encoding="utf-8"))
    frames = doc.get("frames", doc)
    return {
        frame_id: tuple(
            GroundTruthInstance(BBox(*inst["bbox"]), int(inst["class"])) for inst in instances
        )
        for frame_id, instances in frames.items()
    }


def _cmd_audit(args: argparse.Namespace) -> int:
    if args.teacher:
        preds = read_teacher_jsonl(Path(args.teacher))
        cfg = AnnotationConfig(conf_threshold=args.conf_threshold, mask_box_iou=args.mask_iou)
        accepted, rejected = filter_teacher(preds, cfg)
        if args.accepted_out:
            lines = []
            for p in accepted:
                lines.append(
                    json.dumps(
                        {
                            "image_id": p.image_id,
                            "mask": [list(v) for v in p.mask],
                            "box": list(p.box.as_tuple()),
                            "confidence": p.confidence,
                            "class_name": p.class_name,
                        },
                        sort_keys=True,
                    )
                )
            Path(args.accepted_out).write_text("".join(l + "\n" for l in lines), encoding="utf-8")
        reasons: Dict[str, int] = {}
        for r in rejected:
            reasons[r.reason] = reasons.get(r.reason, 0) + 1
        print(
            json.dumps(
                {"total": len(preds), "accepted": len(accepted), "rejected": reasons},
                sort_keys=True,
            )
        )
        return 0
    if args.auto and args.reviewed:
        report = agreement_report(_load_frames(Path(args.auto)), _load_frames(Path(args.reviewed)))
        print(json.dumps(report.to_dict(), sort_keys=True))
        return 0
    raise ValueError("audit needs --teacher, or both --auto and --reviewed")


def _cmd_synth(args: argparse.Namespace) -> int:
    index = make_default_scenario(
        num_tasks=args.tasks,
        train_per_task=args.train_per_task,
        test_per_task=args.test_per_task,
        seed=args.seed,
        co_occur=args.co_occur,
        co_decay=args.co_decay,
    )
    path = save_dataset(index, Path(args.out))
    print(f"wrote {path} ({len(index.images)} images, {index.num_tasks} tasks)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="replaybench")
    parser.add_argument("--version", action="version", version=f"replaybench {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a class-incremental experiment")
    p_run.add_argument("--config", help="JSON config mirroring RunConfig fields")
    p_run.add_argument("--dataset-root", help="directory containing dataset.json")
    p_run.add_argument("--strategy", choices=list(STRATEGIES) + ["all"])
    p_run.add_argument("--budget", type=float, action="append", help="repeatable budget fraction")
    p_run.add_argument("--seed", type=int, action="append", help="repeatable seed")
    p_run.add_argument("--detector", help='sim, echo, or cmd:"<command>"')
    p_run.add_argument("--output-dir")
    p_run.add_argument("--eval-mode", choices=["per_task", "cumulative"])
    p_run.set_defaults(func=_cmd_run)

    p_eval = sub.add_parser("eval", help="standalone mAP50-95 of a prediction file")
    p_eval.add_argument("--pred", required=True, help="JSON {image_id: [detections]}")
    p_eval.add_argument(
        "--gt", required=True, help="dataset root, dataset.json, or {image_id: [instances]}"
    )
    p_eval.add_argument("--conf-threshold", type=float, default=0.25)
    p_eval.add_argument("--nms-iou", type=float, default=0.7)
    p_eval.add_argument("--match-iou", type=float, default=0.5)
    p_eval.add_argument("--raw", action="store_true", help="skip confidence filter and NMS")
    p_eval.set_defaults(func=_cmd_eval)

    p_conv = sub.add_parser("convert", help="convert between label formats")
    p_conv.add_argument("--input", required=True)
    p_conv.add_argument("--output", required=True)
    p_conv.add_argument("--to", required=True, choices=["yolo", "coco", "native"])
    p_conv.add_argument("--from", dest="from_format", choices=["yolo", "coco", "native"])
    p_conv.set_defaults(func=_cmd_convert)

    p_audit = sub.add_parser("audit", help="teacher filtering or review agreement")
    p_audit.add_argument("--teacher", help="teacher predictions, one JSON object per line")
    p_audit.add_argument("--accepted-out", help="where to write surviving predictions")
    p_audit.add_argument("--conf-threshold", type=float, default=0.75)
    p_audit.add_argument("--mask-iou", type=float, default=0.5)
    p_audit.add_argument("--auto", help="automatic labels JSON")
    p_audit.add_argument("--reviewed", help="reviewed labels JSON")
    p_audit.set_defaults(func=_cmd_audit)

    p_synth = sub.add_parser("synth", help="generate the default synthetic scenario")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p_synth.add_argument("--tasks", type=int, default=5)
    p_synth.add_argument("--train-per-task", type=int, default=40)
    p_synth.add_argument("--test-per-task", type=int, default=10)
    p_synth.add_argument("--co-occur", type=float, default=DEFAULT_CO_OCCUR)
    p_synth.add_argument("--co-decay", type=float, default=DEFAULT_CO_DECAY)
    p_synth.set_defaults(func=_cmd_synth)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # single-line machine-parsable failure contract
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
