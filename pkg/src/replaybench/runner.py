"""Class-incremental experiment orchestration.

One experiment = one strategy, run at each configured replay budget for
each seed: fresh detector, sequential task increments (train on current
data plus the strategy's replay selection, then evaluate every seen
task's test split), then ACC/BWT aggregation and report emission.

Artifacts written to the output directory:
  results.json   full matrices, per-seed metrics, config echo (stable
                 key order and float formatting, so identical configs
                 reproduce the file byte for byte)
  summary.csv    header: strategy,budget,acc_mean,acc_std,bwt_mean,bwt_std
  table.txt      plain-text ACC/BWT table, strategies x budgets
  caches/*.json  FAR baseline snapshots: {"checkpoint_task": int,
                 "recalls": {image_id: recall@0.5}}
"""

from __future__ import annotations

import csv
import hashlib
import json
import statistics
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from ._version import VERSION
from .boxes import Detection
from .dataset import DatasetIndex, load_dataset
from .detector import DetectorBackend, DetectorError, DetectorSpec, create_detector
from .metrics import (
    EvalMatrix,
    InferenceConfig,
    NoEvaluableClassesError,
    acc,
    bwt,
    image_recall,
    map_50_95,
    postprocess,
)
from .replay import (
    RecallCache,
    StrategyConfig,
    er_select,
    far_cache_baseline,
    far_select,
    mir_select,
    resolve_budget,
)
from .wire import ProtocolError

EVAL_MODES = ("per_task", "cumulative")

# Strategies whose selection ignores the budget fraction entirely.
BUDGET_FREE_STRATEGIES = ("naive", "joint")


@dataclass(frozen=True)
class RunConfig:
    """Everything one experiment needs; mirrors the CLI config JSON."""

    dataset_root: Optional[str] = None
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    budgets: Tuple[float, ...] = (0.05, 0.10, 0.25, 0.50)
    seeds: Tuple[int, ...] = (1, 2, 3)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    detector: DetectorSpec = field(default_factory=DetectorSpec)
    output_dir: Optional[str] = None
    eval_mode: str = "per_task"

    def __post_init__(self) -> None:
        object.__setattr__(self, "budgets", tuple(self.budgets))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        for b in self.budgets:
            if not (0.0 < b <= 1.0):
                raise ValueError(f"budget fractions must be in (0,1], got {b}")
        if self.eval_mode not in EVAL_MODES:
            raise ValueError(f"eval_mode must be one of {EVAL_MODES}, got {self.eval_mode!r}")


def config_to_dict(cfg: RunConfig) -> dict:
    d = asdict(cfg)
    d["budgets"] = list(cfg.budgets)
    d["seeds"] = list(cfg.seeds)
    return d


def config_from_dict(doc: Mapping) -> RunConfig:
    known = {
        "dataset_root",
        "strategy",
        "budgets",
        "seeds",
        "inference",
        "detector",
        "output_dir",
        "eval_mode",
    }
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs: dict = {k: doc[k] for k in known & set(doc)}
    if "strategy" in kwargs:
        kwargs["strategy"] = StrategyConfig(**kwargs["strategy"])
    if "inference" in kwargs:
        kwargs["inference"] = InferenceConfig(**kwargs["inference"])
    if "detector" in kwargs:
        kwargs["detector"] = DetectorSpec(**kwargs["detector"])
    return RunConfig(**kwargs)


@dataclass
class SeedOutcome:
    """One seeded run: full matrix on success, error record otherwise."""

    seed: int
    completed: bool
    matrix_rows: Optional[List[List[float]]] = None
    acc: Optional[float] = None
    bwt: Optional[float] = None
    error: Optional[str] = None
    far_caches: List[Tuple[int, RecallCache]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "completed": self.completed,
            "matrix": self.matrix_rows,
            "acc": self.acc,
            "bwt": self.bwt,
            "error": self.error,
        }


@dataclass
class StrategyRunResult:
    """All seeds of one (strategy, budget) cell plus aggregates."""

    strategy: str
    budget: Optional[float]
    outcomes: List[SeedOutcome]

    @property
    def completed(self) -> List[SeedOutcome]:
        return [o for o in self.outcomes if o.completed]

    def _aggregate(self, values: List[Optional[float]]) -> Tuple[Optional[float], Optional[float]]:
        present = [v for v in values if v is not None]
        if not present:
            return None, None
        mean = float(statistics.mean(present))
        std = float(statistics.stdev(present)) if len(present) >= 2 else None
        return mean, std

    def to_dict(self) -> dict:
        acc_mean, acc_std = self._aggregate([o.acc for o in self.completed])
        bwt_mean, bwt_std = self._aggregate([o.bwt for o in self.completed])
        return {
            "strategy": self.strategy,
            "budget": self.budget,
            "seeds": [o.to_dict() for o in self.outcomes],
            "completed_seeds": len(self.completed),
            "configured_seeds": len(self.outcomes),
            "acc_mean": acc_mean,
            "acc_std": acc_std,
            "bwt_mean": bwt_mean,
            "bwt_std": bwt_std,
        }

    def acc_mean(self) -> Optional[float]:
        return self._aggregate([o.acc for o in self.completed])[0]

    def bwt_mean(self) -> Optional[float]:
        return self._aggregate([o.bwt for o in self.completed])[0]


@dataclass
class RunResult:
    config: dict
    entries: List[StrategyRunResult]

    def entry(self, strategy: str, budget: Optional[float]) -> StrategyRunResult:
        for e in self.entries:
            if e.strategy == strategy and e.budget == budget:
                return e
        raise KeyError(f"no run for strategy={strategy!r} budget={budget!r}")


def _derive_seed(seed: int, task_index: int) -> int:
    """Stable per-boundary stream for ER sampling."""
    digest = hashlib.blake2b(f"{seed}:er:{task_index}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


@dataclass
class IncrementState:
    """Mutable per-seed run state threaded through the increments."""

    dataset: DatasetIndex
    detector: DetectorBackend
    strategy: StrategyConfig
    budget: float
    seed: int
    inference: InferenceConfig
    eval_mode: str
    matrix: EvalMatrix
    far_cache: Optional[RecallCache] = None
    far_cache_log: List[Tuple[int, RecallCache]] = field(default_factory=list)

    def score_pool(self, image_ids: Sequence[str]) -> Dict[str, float]:
        """Raw-output recall@0.5 per image under the current model.

        Selection scoring deliberately skips the inference confidence
        filter: it reads the model's retention signal, not the deployed
        operating point.
        """
        scores: Dict[str, float] = {}
        for image_id in image_ids:
            record = self.dataset.images[image_id]
            dets = self.detector.predict(image_id)
            scores[image_id] = image_recall(
                dets, record.gt, 0.5, self.inference.class_aware_recall
            )
        return scores


def select_replay(state: IncrementState, task_index: int) -> List[str]:
    """The strategy's replay ids for the boundary before ``task_index``.

    FAR keeps a one-task-old baseline: the cache consumed here was
    written at the previous boundary (checkpoint task_index-2), and is
    rescored under the current model so drops measure the last task's
    forgetting. After selection the cache is refreshed to the current
    checkpoint over the grown pool (unless configured to keep the first
    one). The first boundary has no older checkpoint, so all drops are
    zero and the tie rule picks the K smallest ids.
    """
    cfg = state.strategy
    if task_index == 0 or cfg.strategy == "naive":
        return []
    pool = state.dataset.prior_train_ids(task_index)
    if not pool:
        return []
    if cfg.strategy == "joint":
        return sorted(pool)
    resolved = resolve_budget(state.budget, pool)
    if resolved == 0:
        return []
    if cfg.strategy == "er":
        return er_select(pool, resolved, _derive_seed(state.seed, task_index))
    effective = replace(cfg, k_select=min(resolved, cfg.k_select))
    capped = sorted(pool)[: cfg.pool_cap]
    if cfg.strategy == "mir":
        return mir_select(pool, state.score_pool(capped), effective)
    if state.far_cache is None:
        scores = state.score_pool(capped)
        state.far_cache = far_cache_baseline(pool, scores, task_index - 1, cfg)
        state.far_cache_log.append((task_index, state.far_cache))
        return far_select(state.far_cache, scores, effective)
    cached_ids = [i for i, _ in state.far_cache.entries]
    scores = state.score_pool(sorted(set(cached_ids) | set(capped)))
    selection = far_select(state.far_cache, scores, effective)
    if cfg.far_refresh_baseline:
        state.far_cache = far_cache_baseline(pool, scores, task_index - 1, cfg)
        state.far_cache_log.append((task_index, state.far_cache))
    return selection


def _evaluate_split(state: IncrementState, eval_task: int, trained_task: int) -> float:
    task = state.dataset.tasks[eval_task]
    image_dets: List[List[Detection]] = []
    image_gts = []
    for image_id in task.test_ids:
        record = state.dataset.images[image_id]
        image_dets.append(postprocess(state.detector.predict(image_id), state.inference))
        image_gts.append(record.gt)
    if state.eval_mode == "per_task":
        classes: List[int] = [task.introduced_class]
    else:
        classes = [t.introduced_class for t in state.dataset.tasks[: trained_task + 1]]
    return map_50_95(image_dets, image_gts, classes)


def run_increment(state: IncrementState, task_index: int) -> List[float]:
    """Train one task (current data plus replay) and score all seen tasks."""
    task = state.dataset.tasks[task_index]
    selection = select_replay(state, task_index)
    train_ids = sorted(selection) + list(task.train_ids)
    all_test_ids = {i for t in state.dataset.tasks for i in t.test_ids}
    leaked = set(train_ids) & all_test_ids
    if leaked:
        raise ValueError(f"train set for task {task_index} contains test ids: {sorted(leaked)[:5]}")
    state.detector.train_task(task_index, train_ids)
    state.detector.snapshot(f"task{task_index}")
    row = [_evaluate_split(state, i, task_index) for i in range(task_index + 1)]
    state.matrix.append_row(row)
    return row


def run_seed(
    dataset: DatasetIndex,
    cfg: RunConfig,
    budget: Optional[float],
    seed: int,
) -> SeedOutcome:
    """One full task stream under one seed; failures become a partial record."""
    detector = create_detector(
        cfg.detector,
        dataset,
        Path(cfg.dataset_root) if cfg.dataset_root else None,
        seed,
    )
    state = IncrementState(
        dataset=dataset,
        detector=detector,
        strategy=cfg.strategy,
        budget=budget if budget is not None else 1.0,
        seed=seed,
        inference=cfg.inference,
        eval_mode=cfg.eval_mode,
        matrix=EvalMatrix(T=dataset.num_tasks),
    )
    try:
        for task_index in range(dataset.num_tasks):
            run_increment(state, task_index)
        outcome = SeedOutcome(
            seed=seed,
            completed=True,
            matrix_rows=[list(r) for r in state.matrix.rows],
            acc=float(acc(state.matrix)),
            bwt=float(bwt(state.matrix)) if dataset.num_tasks >= 2 else None,
            far_caches=state.far_cache_log,
        )
    except (DetectorError, ProtocolError, NoEvaluableClassesError, OSError) as exc:
        outcome = SeedOutcome(
            seed=seed,
            completed=False,
            matrix_rows=[list(r) for r in state.matrix.rows],
            error=f"{type(exc).__name__}: {exc}",
            far_caches=state.far_cache_log,
        )
    finally:
        detector.close()
    return outcome


def run_experiment(cfg: RunConfig, dataset: Optional[DatasetIndex] = None) -> RunResult:
    """The configured strategy across all budgets and seeds."""
    if dataset is None:
        if cfg.dataset_root is None:
            raise ValueError("run_experiment needs a dataset or a dataset_root")
        dataset = load_dataset(Path(cfg.dataset_root))
    name = cfg.strategy.strategy
    budgets: Sequence[Optional[float]]
    budgets = [None] if name in BUDGET_FREE_STRATEGIES else list(cfg.budgets)
    entries = []
    for budget in budgets:
        outcomes = [run_seed(dataset, cfg, budget, seed) for seed in cfg.seeds]
        entries.append(StrategyRunResult(strategy=name, budget=budget, outcomes=outcomes))
    result = RunResult(config=config_to_dict(cfg), entries=entries)
    if cfg.output_dir:
        emit_report(result, Path(cfg.output_dir))
    return result


def run_matrix(
    cfg: RunConfig,
    strategies: Sequence[str],
    dataset: Optional[DatasetIndex] = None,
) -> RunResult:
    """Several strategies under one config, merged into a single result."""
    if dataset is None:
        if cfg.dataset_root is None:
            raise ValueError("run_matrix needs a dataset or a dataset_root")
        dataset = load_dataset(Path(cfg.dataset_root))
    entries = []
    for name in strategies:
        sub = replace(cfg, strategy=replace(cfg.strategy, strategy=name), output_dir=None)
        entries.extend(run_experiment(sub, dataset).entries)
    result = RunResult(config=config_to_dict(cfg), entries=entries)
    if cfg.output_dir:
        emit_report(result, Path(cfg.output_dir))
    return result


def _fmt_cell(mean: Optional[float], std: Optional[float]) -> str:
    if mean is None:
        return "-"
    if std is None:
        return f"{mean:.4f}"
    return f"{mean:.4f}±{std:.4f}"


def emit_report(result: RunResult, output_dir: Path) -> Dict[str, Path]:
    """Write results.json, summary.csv, the text table, and FAR caches."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "version": VERSION,
        "config": result.config,
        "runs": [e.to_dict() for e in result.entries],
    }
    results_path = output_dir / "results.json"
    results_path.write_text(
        json.dumps(doc, sort_keys=True, indent=2, separators=(",", ": ")) + "\n",
        encoding="utf-8",
    )

    csv_path = output_dir / "summary.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "budget", "acc_mean", "acc_std", "bwt_mean", "bwt_std"])
        for e in result.entries:
            d = e.to_dict()
            writer.writerow(
                [
                    e.strategy,
                    "" if e.budget is None else repr(float(e.budget)),
                ]
                + ["" if d[k] is None else f"{d[k]:.6f}" for k in ("acc_mean", "acc_std", "bwt_mean", "bwt_std")]
            )

    budgets = sorted({e.budget for e in result.entries if e.budget is not None})
    strategies = []
    for e in result.entries:
        if e.strategy not in strategies:
            strategies.append(e.strategy)
    header = ["strategy"] + [f"ACC@{int(b * 100)}%" for b in budgets] + ["ACC", "BWT"]
    lines = ["\t".join(header)]
    for name in strategies:
        cells = [name]
        for b in budgets:
            try:
                d = result.entry(name, b).to_dict()
                cells.append(_fmt_cell(d["acc_mean"], d["acc_std"]))
            except KeyError:
                cells.append("-")
        try:
            d = result.entry(name, None).to_dict()
            cells.append(_fmt_cell(d["acc_mean"], d["acc_std"]))
            cells.append(_fmt_cell(d["bwt_mean"], d["bwt_std"]))
        except KeyError:
            cells.append("-")
            d = None
            for b in budgets:
                try:
                    d = result.entry(name, b).to_dict()
                except KeyError:
                    continue
            cells.append(_fmt_cell(d["bwt_mean"], d["bwt_std"]) if d else "-")
        lines.append("\t".join(cells))
    table_path = output_dir / "table.txt"
    table_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    written = {"results": results_path, "summary": csv_path, "table": table_path}
    cache_dir = output_dir / "caches"
    for e in result.entries:
        for o in e.outcomes:
            for boundary, cache in o.far_caches:
                cache_dir.mkdir(parents=True, exist_ok=True)
                tag = "" if e.budget is None else f"_b{int(round(e.budget * 100))}"
                path = cache_dir / f"far{tag}_seed{o.seed}_boundary{boundary}.json"
                path.write_text(
                    json.dumps(
                        {
                            "checkpoint_task": cache.checkpoint_task,
                            "recalls": dict(sorted(cache.as_dict().items())),
                        },
                        sort_keys=True,
                        indent=2,
                    )
                    + "\n",
                    encoding="utf-8",
                )
                written[path.name] = path
    return written
