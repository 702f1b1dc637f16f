"""Serving loop semantics, driven through in-memory transcripts."""

import io
import json

import pytest

from replaybridge import Backend, EchoBackend, serve


def run_transcript(backend, lines):
    stdin = io.StringIO("".join(line + "\n" for line in lines))
    stdout = io.StringIO()
    rc = serve(backend, stdin, stdout)
    assert rc == 0
    return [json.loads(line) for line in stdout.getvalue().splitlines()]


def req(op, rid, **payload):
    return json.dumps({"op": op, "id": rid, **payload})


@pytest.fixture
def dataset_root(tmp_path):
    doc = {
        "classes": ["car", "van"],
        "tasks": [
            {"task_index": 0, "introduced_class": 0, "train_ids": ["i0"], "test_ids": ["i1"]}
        ],
        "images": {
            "i0": {
                "width": 100,
                "height": 100,
                "source_task": 0,
                "gt": [{"bbox": [1.0, 2.0, 30.0, 40.0], "class": 0}],
            },
            "i1": {
                "width": 100,
                "height": 100,
                "source_task": 0,
                "gt": [
                    {"bbox": [5.0, 5.0, 20.0, 25.0], "class": 1},
                    {"bbox": [50.0, 50.0, 90.0, 95.0], "class": 0},
                ],
            },
        },
    }
    (tmp_path / "dataset.json").write_text(json.dumps(doc), encoding="utf-8")
    return tmp_path


def test_full_session(dataset_root):
    out = run_transcript(
        EchoBackend(),
        [
            req("init", 1, dataset_root=str(dataset_root), classes=["car", "van"]),
            req("train_task", 2, task=0, image_ids=["i0"]),
            req("predict", 3, image_id="i1"),
            req("snapshot", 4, tag="task0"),
            req("shutdown", 5),
        ],
    )
    assert [m["id"] for m in out] == [1, 2, 3, 4, 5]
    assert all(m.get("ok") is True for m in out)
    dets = out[2]["detections"]
    assert dets == [
        {"bbox": [5.0, 5.0, 20.0, 25.0], "class": 1, "conf": 0.99},
        {"bbox": [50.0, 50.0, 90.0, 95.0], "class": 0, "conf": 0.99},
    ]


def test_one_response_per_request(dataset_root):
    lines = [
        req("init", 1, dataset_root=str(dataset_root), classes=[]),
        req("predict", 2, image_id="i0"),
        req("predict", 3, image_id="i0"),
        req("shutdown", 4),
    ]
    out = run_transcript(EchoBackend(), lines)
    assert len(out) == len(lines)


def test_unparseable_line_answers_id_minus_one_and_continues(dataset_root):
    out = run_transcript(
        EchoBackend(),
        [
            "this is not json {{{",
            req("init", 2, dataset_root=str(dataset_root), classes=[]),
            req("shutdown", 3),
        ],
    )
    assert out[0]["id"] == -1
    assert "unparseable" in out[0]["error"]
    assert out[1]["ok"] is True and out[2]["ok"] is True


def test_non_object_request_is_an_error():
    out = run_transcript(EchoBackend(), ["[1,2,3]", req("shutdown", 1)])
    assert out[0] == {"id": -1, "error": "request is not an object"}
    assert out[1]["ok"] is True


def test_unknown_op_errors_and_continues(dataset_root):
    out = run_transcript(
        EchoBackend(),
        [
            req("init", 1, dataset_root=str(dataset_root), classes=[]),
            req("do_magic", 2),
            req("predict", 3, image_id="i0"),
            req("shutdown", 4),
        ],
    )
    assert "unknown op" in out[1]["error"]
    assert out[2]["ok"] is True


def test_backend_exception_becomes_error_response(dataset_root):
    out = run_transcript(
        EchoBackend(),
        [
            req("init", 1, dataset_root=str(dataset_root), classes=[]),
            req("predict", 2, image_id="ghost"),
            req("shutdown", 3),
        ],
    )
    assert "ghost" in out[1]["error"]
    assert out[2]["ok"] is True


def test_missing_id_reports_minus_one(dataset_root):
    out = run_transcript(
        EchoBackend(),
        [json.dumps({"op": "predict", "image_id": "i0"}), req("shutdown", 1)],
    )
    assert out[0]["id"] == -1
    assert "error" in out[0]  # predict before init has no images loaded


def test_eof_without_shutdown_closes_cleanly(dataset_root):
    closed = []

    class Tracking(EchoBackend):
        def close(self):
            closed.append(True)

    out = run_transcript(
        Tracking(), [req("init", 1, dataset_root=str(dataset_root), classes=[])]
    )
    assert len(out) == 1
    assert closed == [True]


def test_blank_lines_ignored(dataset_root):
    out = run_transcript(
        EchoBackend(),
        ["", req("init", 1, dataset_root=str(dataset_root), classes=[]), "   ", req("shutdown", 2)],
    )
    assert [m["id"] for m in out] == [1, 2]


def test_pinned_root_wins_over_init(dataset_root, tmp_path):
    other = tmp_path / "other"
    other.mkdir()
    (other / "dataset.json").write_text(
        json.dumps({"classes": [], "tasks": [], "images": {}}), encoding="utf-8"
    )
    backend = EchoBackend(str(dataset_root))
    out = run_transcript(
        backend,
        [
            req("init", 1, dataset_root=str(other), classes=[]),
            req("predict", 2, image_id="i0"),
            req("shutdown", 3),
        ],
    )
    # i0 exists only in the pinned root.
    assert out[1]["ok"] is True


def test_base_backend_defaults():
    backend = Backend()
    backend.on_init("/nowhere", [])
    backend.train_task(0, [])
    assert backend.snapshot("t") == {"overwrote": False}
    with pytest.raises(NotImplementedError):
        backend.predict("x")
