"""Experiment orchestration: leakage guards, determinism, artifacts."""

import json
import sys
import textwrap
from dataclasses import replace

import pytest

from replaybench import (
    DatasetIndex,
    DetectorSpec,
    EvalMatrix,
    ImageRecord,
    InferenceConfig,
    RunConfig,
    SimDetector,
    StrategyConfig,
    TaskSpec,
    config_from_dict,
    config_to_dict,
    emit_report,
    make_default_scenario,
    run_experiment,
    run_increment,
    run_matrix,
    run_seed,
    save_dataset,
)
from replaybench.runner import IncrementState

from conftest import gt, tiny_dataset


def small_scenario():
    return make_default_scenario(num_tasks=3, train_per_task=8, test_per_task=3)


def small_config(**kwargs):
    base = dict(
        strategy=StrategyConfig(strategy="er"),
        budgets=(0.25, 0.5),
        seeds=(1, 2),
    )
    base.update(kwargs)
    return RunConfig(**base)


# --- config ---------------------------------------------------------------


def test_config_round_trip():
    cfg = small_config(eval_mode="cumulative", output_dir="/tmp/x")
    assert config_from_dict(config_to_dict(cfg)) == cfg


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown config keys"):
        config_from_dict({"stratgy": {}})


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(seeds=())
    with pytest.raises(ValueError):
        RunConfig(budgets=(0.0,))
    with pytest.raises(ValueError):
        RunConfig(budgets=(1.5,))
    with pytest.raises(ValueError):
        RunConfig(eval_mode="sideways")


# --- structural guarantees --------------------------------------------------


class RecordingDetector:
    """Wraps the sim detector and logs every train_task call."""

    def __init__(self, dataset, seed):
        self.inner = SimDetector(dataset, seed=seed)
        self.train_calls = []

    def train_task(self, task_index, image_ids):
        self.train_calls.append((task_index, list(image_ids)))
        self.inner.train_task(task_index, image_ids)

    def predict(self, image_id):
        return self.inner.predict(image_id)

    def snapshot(self, tag):
        return self.inner.snapshot(tag)

    def close(self):
        pass


def _run_recorded(dataset, strategy, budget=0.5, seed=1):
    detector = RecordingDetector(dataset, seed)
    state = IncrementState(
        dataset=dataset,
        detector=detector,
        strategy=StrategyConfig(strategy=strategy),
        budget=budget,
        seed=seed,
        inference=InferenceConfig(),
        eval_mode="per_task",
        matrix=EvalMatrix(T=dataset.num_tasks),
    )
    for task_index in range(dataset.num_tasks):
        run_increment(state, task_index)
    return detector.train_calls, state


@pytest.mark.parametrize("strategy", ["naive", "er", "mir", "far", "joint"])
def test_train_sets_never_contain_test_ids(strategy):
    ds = small_scenario()
    calls, _ = _run_recorded(ds, strategy)
    test_ids = {i for t in ds.tasks for i in t.test_ids}
    assert len(calls) == ds.num_tasks
    for _, ids in calls:
        assert not set(ids) & test_ids


@pytest.mark.parametrize("strategy", ["er", "mir", "far"])
def test_replay_comes_from_strictly_earlier_tasks(strategy):
    ds = small_scenario()
    calls, _ = _run_recorded(ds, strategy, budget=0.5)
    for task_index, ids in calls:
        current = set(ds.tasks[task_index].train_ids)
        replayed = [i for i in ids if i not in current]
        allowed = set(ds.prior_train_ids(task_index))
        assert set(replayed) <= allowed
        if task_index == 0:
            assert replayed == []
        else:
            expected = max(1, round(0.5 * len(allowed)))
            assert len(replayed) == expected


def test_naive_never_replays():
    ds = small_scenario()
    calls, _ = _run_recorded(ds, "naive")
    for task_index, ids in calls:
        assert ids == sorted(ds.tasks[task_index].train_ids) or ids == list(
            ds.tasks[task_index].train_ids
        )
        assert len(ids) == len(ds.tasks[task_index].train_ids)


def test_joint_replays_everything():
    ds = small_scenario()
    calls, _ = _run_recorded(ds, "joint")
    for task_index, ids in calls:
        want = sorted(ds.prior_train_ids(task_index)) + list(ds.tasks[task_index].train_ids)
        assert ids == want


def test_far_caches_follow_lag_one_schedule():
    ds = small_scenario()
    _, state = _run_recorded(ds, "far", budget=0.5)
    boundaries = [b for b, _ in state.far_cache_log]
    checkpoints = [c.checkpoint_task for _, c in state.far_cache_log]
    assert boundaries == [1, 2]
    assert checkpoints == [0, 1]
    # Cache written at boundary b covers tasks before b only.
    for b, cache in state.far_cache_log:
        pool = set(ds.prior_train_ids(b))
        assert {i for i, _ in cache.entries} <= pool


def test_cross_task_leak_is_rejected():
    ds = tiny_dataset(num_tasks=2)
    # Task 1 trains on task 0's test image: construction is legal at the
    # dataset layer but the runner must refuse it.
    t1 = ds.tasks[1]
    tasks = [ds.tasks[0], TaskSpec(1, 1, t1.train_ids + ("t0_te0",), t1.test_ids)]
    leaky = DatasetIndex(classes=ds.classes, tasks=tasks, images=ds.images)
    detector = RecordingDetector(leaky, 1)
    state = IncrementState(
        dataset=leaky,
        detector=detector,
        strategy=StrategyConfig(strategy="naive"),
        budget=1.0,
        seed=1,
        inference=InferenceConfig(),
        eval_mode="per_task",
        matrix=EvalMatrix(T=2),
    )
    run_increment(state, 0)
    with pytest.raises(ValueError, match="contains test ids"):
        run_increment(state, 1)


# --- end-to-end runs ---------------------------------------------------------


def test_echo_detector_scores_perfectly():
    ds = small_scenario()
    cfg = small_config(detector=DetectorSpec(kind="echo"), seeds=(1,), budgets=(0.5,))
    result = run_experiment(cfg, ds)
    outcome = result.entry("er", 0.5).outcomes[0]
    assert outcome.completed
    for row in outcome.matrix_rows:
        assert all(v == 1.0 for v in row)
    assert outcome.acc == 1.0
    assert outcome.bwt == 0.0


def test_budget_free_strategies_run_once():
    ds = small_scenario()
    for name in ("naive", "joint"):
        cfg = small_config(strategy=StrategyConfig(strategy=name), seeds=(1,))
        result = run_experiment(cfg, ds)
        assert [e.budget for e in result.entries] == [None]
    cfg = small_config(seeds=(1,))
    result = run_experiment(cfg, ds)
    assert [e.budget for e in result.entries] == [0.25, 0.5]


def test_matrix_rows_are_lower_triangular():
    ds = small_scenario()
    cfg = small_config(seeds=(1,), budgets=(0.5,))
    outcome = run_experiment(cfg, ds).entry("er", 0.5).outcomes[0]
    assert [len(r) for r in outcome.matrix_rows] == [1, 2, 3]
    for row in outcome.matrix_rows:
        assert all(0.0 <= v <= 1.0 for v in row)


def test_run_seed_is_deterministic():
    ds = small_scenario()
    cfg = small_config()
    a = run_seed(ds, cfg, 0.25, seed=3)
    b = run_seed(ds, cfg, 0.25, seed=3)
    assert a.matrix_rows == b.matrix_rows
    assert a.acc == b.acc and a.bwt == b.bwt
    c = run_seed(ds, cfg, 0.25, seed=4)
    assert a.matrix_rows != c.matrix_rows


def test_eval_modes_differ_on_multiclass_test_splits():
    # On single-class test splits the class-presence filter makes the
    # two modes numerically identical, so build task-1 test images that
    # also carry class 0: cumulative mode then scores both classes.
    images = {}
    for j in range(2):
        for k in range(6):
            image_id = f"t{j}_tr{k}"
            images[image_id] = ImageRecord(
                image_id, 320, 240, (gt(10.0 + 30 * k, 10, 35.0 + 30 * k, 40, cls=j),), j
            )
    for k in range(3):
        image_id = f"t0_te{k}"
        images[image_id] = ImageRecord(
            image_id, 320, 240, (gt(15.0 + 40 * k, 50, 45.0 + 40 * k, 85, cls=0),), 0
        )
        image_id = f"t1_te{k}"
        images[image_id] = ImageRecord(
            image_id,
            320,
            240,
            (
                gt(15.0 + 40 * k, 50, 45.0 + 40 * k, 85, cls=1),
                gt(15.0 + 40 * k, 120, 45.0 + 40 * k, 155, cls=0),
            ),
            1,
        )
    tasks = [
        TaskSpec(j, j, tuple(f"t{j}_tr{k}" for k in range(6)), tuple(f"t{j}_te{k}" for k in range(3)))
        for j in range(2)
    ]
    ds = DatasetIndex(classes=["c0", "c1"], tasks=tasks, images=images)
    per_task = run_seed(ds, small_config(), 0.5, seed=1)
    cumulative = run_seed(ds, small_config(eval_mode="cumulative"), 0.5, seed=1)
    assert per_task.matrix_rows[0] == cumulative.matrix_rows[0]  # one class seen
    assert per_task.matrix_rows[1][1] != cumulative.matrix_rows[1][1]


def test_run_matrix_lookup():
    ds = small_scenario()
    cfg = small_config(seeds=(1,), budgets=(0.5,))
    result = run_matrix(cfg, ["naive", "er"], ds)
    assert result.entry("naive", None).strategy == "naive"
    assert result.entry("er", 0.5).budget == 0.5
    with pytest.raises(KeyError):
        result.entry("er", 0.25)


def test_run_experiment_requires_dataset():
    with pytest.raises(ValueError):
        run_experiment(small_config())


# --- artifacts ----------------------------------------------------------------


def test_report_files_and_byte_identical_reruns(tmp_path):
    ds = small_scenario()
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    cfg = small_config(seeds=(1, 2), budgets=(0.5,))
    run_matrix(cfg, ["naive", "er", "far"], ds)  # no output_dir: nothing written
    for out in (out_a, out_b):
        run_matrix(replace(cfg, output_dir=str(out)), ["naive", "er", "far"], ds)
    files_a = sorted(p.relative_to(out_a).as_posix() for p in out_a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(out_b).as_posix() for p in out_b.rglob("*") if p.is_file())
    assert files_a == files_b
    assert "results.json" in files_a and "summary.csv" in files_a and "table.txt" in files_a
    assert any(name.startswith("caches/far") for name in files_a)
    for name in files_a:
        raw_a = (out_a / name).read_bytes()
        raw_b = (out_b / name).read_bytes()
        if name == "results.json":
            # Paths differ intentionally (config echo); strip them.
            doc_a = json.loads(raw_a)
            doc_b = json.loads(raw_b)
            doc_a["config"]["output_dir"] = doc_b["config"]["output_dir"] = None
            assert doc_a == doc_b
        else:
            assert raw_a == raw_b


def test_results_json_byte_identical_for_same_config(tmp_path):
    ds = small_scenario()
    out = tmp_path / "out"
    cfg = small_config(seeds=(1,), budgets=(0.5,), output_dir=str(out))
    run_experiment(cfg, ds)
    first = (out / "results.json").read_bytes()
    run_experiment(cfg, ds)
    assert (out / "results.json").read_bytes() == first


def test_summary_csv_header_exact(tmp_path):
    ds = small_scenario()
    cfg = small_config(seeds=(1,), budgets=(0.5,), output_dir=str(tmp_path))
    run_experiment(cfg, ds)
    lines = (tmp_path / "summary.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "strategy,budget,acc_mean,acc_std,bwt_mean,bwt_std"
    assert lines[1].startswith("er,0.5,")


def test_far_cache_artifacts(tmp_path):
    ds = small_scenario()
    cfg = small_config(
        strategy=StrategyConfig(strategy="far"),
        seeds=(1,),
        budgets=(0.5,),
        output_dir=str(tmp_path),
    )
    run_experiment(cfg, ds)
    names = sorted(p.name for p in (tmp_path / "caches").iterdir())
    assert names == ["far_b50_seed1_boundary1.json", "far_b50_seed1_boundary2.json"]
    doc = json.loads((tmp_path / "caches" / names[0]).read_text(encoding="utf-8"))
    assert doc["checkpoint_task"] == 0
    assert doc["recalls"]
    assert all(0.0 <= v <= 1.0 for v in doc["recalls"].values())


def test_results_json_structure(tmp_path):
    ds = small_scenario()
    cfg = small_config(seeds=(1, 2), budgets=(0.5,), output_dir=str(tmp_path))
    run_experiment(cfg, ds)
    doc = json.loads((tmp_path / "results.json").read_text(encoding="utf-8"))
    assert doc["config"]["strategy"]["strategy"] == "er"
    (entry,) = doc["runs"]
    assert entry["completed_seeds"] == 2
    assert entry["configured_seeds"] == 2
    assert entry["acc_std"] is not None
    for seed_doc in entry["seeds"]:
        assert seed_doc["completed"] is True
        assert seed_doc["error"] is None


def test_table_txt_mentions_all_strategies(tmp_path):
    ds = small_scenario()
    cfg = small_config(seeds=(1,), budgets=(0.5,), output_dir=str(tmp_path))
    run_matrix(cfg, ["naive", "er", "joint"], ds)
    table = (tmp_path / "table.txt").read_text(encoding="utf-8")
    for name in ("naive", "er", "joint"):
        assert name in table


# --- failure handling ----------------------------------------------------------


FLAKY_BACKEND = """
import json, sys
for line in sys.stdin:
    msg = json.loads(line)
    rid = msg["id"]
    if msg["op"] == "init":
        print(json.dumps({"id": rid, "ok": True}), flush=True)
    elif msg["op"] == "shutdown":
        print(json.dumps({"id": rid, "ok": True}), flush=True)
        break
    else:
        print(json.dumps({"id": rid, "error": "backend on fire"}), flush=True)
"""


def test_failed_seed_becomes_partial_record(tmp_path):
    ds = small_scenario()
    root = tmp_path / "data"
    save_dataset(ds, root)
    script = tmp_path / "flaky.py"
    script.write_text(textwrap.dedent(FLAKY_BACKEND), encoding="utf-8")
    cfg = small_config(
        dataset_root=str(root),
        detector=DetectorSpec(kind="external", command=f"{sys.executable} {script}", timeout_s=30.0),
        seeds=(1,),
        budgets=(0.5,),
        output_dir=str(tmp_path / "out"),
    )
    result = run_experiment(cfg)
    outcome = result.entry("er", 0.5).outcomes[0]
    assert not outcome.completed
    assert "backend on fire" in outcome.error
    assert outcome.acc is None
    doc = json.loads((tmp_path / "out" / "results.json").read_text(encoding="utf-8"))
    (entry,) = doc["runs"]
    assert entry["completed_seeds"] == 0
    assert entry["acc_mean"] is None
    assert entry["seeds"][0]["error"].startswith("DetectorError")


def test_external_echo_backend_matches_in_process(tmp_path):
    # A subprocess that echoes dataset ground truth must reproduce the
    # in-process echo detector bit for bit.
    ds = small_scenario()
    root = tmp_path / "data"
    save_dataset(ds, root)
    echo_script = tmp_path / "echo.py"
    echo_script.write_text(
        textwrap.dedent(
            """
            import json, sys
            dataset = None
            for line in sys.stdin:
                msg = json.loads(line)
                rid, op = msg["id"], msg["op"]
                if op == "init":
                    with open(msg["dataset_root"] + "/dataset.json") as fh:
                        dataset = json.load(fh)
                    print(json.dumps({"id": rid, "ok": True}), flush=True)
                elif op == "predict":
                    rec = dataset["images"][msg["image_id"]]
                    dets = [
                        {"bbox": g["bbox"], "class": g["class"], "conf": 0.99}
                        for g in rec["gt"]
                    ]
                    print(json.dumps({"id": rid, "ok": True, "detections": dets}), flush=True)
                elif op == "shutdown":
                    print(json.dumps({"id": rid, "ok": True}), flush=True)
                    break
                else:
                    print(json.dumps({"id": rid, "ok": True}), flush=True)
            """
        ),
        encoding="utf-8",
    )
    base = small_config(seeds=(1,), budgets=(0.5,))
    external = RunConfig(
        dataset_root=str(root),
        strategy=base.strategy,
        budgets=base.budgets,
        seeds=base.seeds,
        detector=DetectorSpec(kind="external", command=f"{sys.executable} {echo_script}", timeout_s=60.0),
    )
    in_process = RunConfig(
        strategy=base.strategy, budgets=base.budgets, seeds=base.seeds,
        detector=DetectorSpec(kind="echo"),
    )
    got = run_experiment(external).entry("er", 0.5).outcomes[0]
    want = run_experiment(in_process, ds).entry("er", 0.5).outcomes[0]
    assert got.completed and want.completed
    assert got.matrix_rows == want.matrix_rows
    assert got.acc == want.acc == 1.0


def test_emit_report_returns_paths(tmp_path):
    ds = small_scenario()
    cfg = small_config(seeds=(1,), budgets=(0.5,))
    result = run_experiment(cfg, ds)
    written = emit_report(result, tmp_path)
    assert written["results"].exists()
    assert written["summary"].exists()
    assert written["table"].exists()
