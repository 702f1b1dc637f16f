"""Replay-strategy benchmark for class-incremental object detection.

Detection metrics (IoU, greedy matching, NMS, COCO-style mAP50-95),
continual-learning aggregates (ACC/BWT over a lower-triangular task
matrix), replay selection strategies (ER, MIR-proxy, FAR), a simulated
detector with forgetting dynamics, an external-detector wire protocol,
annotation post-processing, and a seeded experiment runner.
"""

from ._version import VERSION as __version__
from .annotate import (
    AnnotationConfig,
    ReviewReport,
    TeacherPrediction,
    agreement_report,
    convert_labels,
    filter_teacher,
    to_ground_truth,
)
from .boxes import BBox, Detection, GroundTruthInstance, iou, mask_bounds
from .dataset import (
    DatasetIndex,
    ImageRecord,
    TaskSpec,
    load_dataset,
    save_dataset,
)
from .detector import (
    DetectorError,
    DetectorSpec,
    EchoDetector,
    ExternalDetector,
    SimDetector,
    create_detector,
)
from .metrics import (
    EvalMatrix,
    InferenceConfig,
    NoEvaluableClassesError,
    acc,
    average_precision,
    bwt,
    greedy_match,
    image_recall,
    map_50_95,
    nms,
    postprocess,
)
from .replay import (
    RecallCache,
    StrategyConfig,
    er_select,
    far_cache_baseline,
    far_score,
    far_select,
    mir_select,
    resolve_budget,
)
from .runner import (
    RunConfig,
    RunResult,
    config_from_dict,
    config_to_dict,
    emit_report,
    run_experiment,
    run_increment,
    run_matrix,
    run_seed,
)
from .scenario import make_default_scenario
from .sim import SimSkillState, sim_predict, sim_train
from .wire import ProtocolError

__all__ = [
    "__version__",
    "AnnotationConfig",
    "BBox",
    "DatasetIndex",
    "Detection",
    "DetectorError",
    "DetectorSpec",
    "EchoDetector",
    "EvalMatrix",
    "ExternalDetector",
    "GroundTruthInstance",
    "ImageRecord",
    "InferenceConfig",
    "NoEvaluableClassesError",
    "ProtocolError",
    "RecallCache",
    "ReviewReport",
    "RunConfig",
    "RunResult",
    "SimDetector",
    "SimSkillState",
    "StrategyConfig",
    "TaskSpec",
    "TeacherPrediction",
    "acc",
    "agreement_report",
    "average_precision",
    "bwt",
    "config_from_dict",
    "config_to_dict",
    "convert_labels",
    "create_detector",
    "emit_report",
    "er_select",
    "far_cache_baseline",
    "far_score",
    "far_select",
    "filter_teacher",
    "greedy_match",
    "image_recall",
    "iou",
    "load_dataset",
    "make_default_scenario",
    "map_50_95",
    "mask_bounds",
    "mir_select",
    "nms",
    "postprocess",
    "resolve_budget",
    "run_experiment",
    "run_increment",
    "run_matrix",
    "run_seed",
    "save_dataset",
    "sim_predict",
    "sim_train",
    "to_ground_truth",
]
