"""Request loop and backends for the detector wire protocol.

Protocol (newline-delimited JSON over stdin/stdout, UTF-8, one object
per line, responses echo the request id):

    {"op": "init", "id": N, "dataset_root": str, "classes": [str]}
    {"op": "train_task", "id": N, "task": int, "image_ids": [str]}
    {"op": "predict", "id": N, "image_id": str}
    {"op": "snapshot", "id": N, "tag": str}
    {"op": "shutdown", "id": N}

Success responses are {"id": N, "ok": true, ...}; failures are
{"id": N, "error": str}. A predict success carries "detections":
[{"bbox": [x1, y1, x2, y2], "class": int, "conf": float}]. An
unparseable request line is answered with id -1; unknown ops and
backend errors are answered per request. Neither ends the loop: only
shutdown (or stdin closing) does.

The dataset layout matches the harness's dataset.json: a directory
holding one JSON file with "classes", "tasks", and "images", where each
image record carries width/height/source_task and a "gt" list of
{"bbox": [x1, y1, x2, y2], "class": int} instances.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, TextIO


class Backend:
    """Hook surface a trainer implements; defaults are safe no-ops."""

    def on_init(self, dataset_root: str, classes: Sequence[str]) -> None:
        pass

    def train_task(self, task: int, image_ids: Sequence[str]) -> None:
        pass

    def predict(self, image_id: str) -> List[dict]:
        raise NotImplementedError("backend does not predict")

    def snapshot(self, tag: str) -> dict:
        return {"overwrote": False}

    def close(self) -> None:
        pass


class EchoBackend(Backend):
    """Predicts the stored ground truth at fixed confidence.

    Upper-bound fixture: with it in the loop, harness-side scores must
    be perfect, so any loss points at the plumbing rather than a model.
    """

    confidence = 0.99

    def __init__(self, dataset_root: Optional[str] = None):
        # A root given up front wins over the one in the init request.
        self._pinned_root = dataset_root
        self._images: Dict[str, dict] = {}
        if dataset_root is not None:
            self._load(dataset_root)

    def _load(self, root: str) -> None:
        path = Path(root)
        if path.is_dir():
            path = path / "dataset.json"
        doc = json.loads(path.read_text(encoding="utf-8"))
        self._images = doc["images"]

    def on_init(self, dataset_root: str, classes: Sequence[str]) -> None:
        if self._pinned_root is None:
            self._load(dataset_root)

    def predict(self, image_id: str) -> List[dict]:
        record = self._images.get(image_id)
        if record is None:
            raise KeyError(f"unknown image id {image_id!r}")
        return [
            {"bbox": list(g["bbox"]), "class": int(g["class"]), "conf": self.confidence}
            for g in record["gt"]
        ]


def _respond(stdout: TextIO, request_id: int, **payload) -> None:
    stdout.write(json.dumps({"id": request_id, **payload}, separators=(",", ":")) + "\n")
    stdout.flush()


def _handle(backend: Backend, msg: dict) -> dict:
    op = msg.get("op")
    if op == "init":
        backend.on_init(str(msg["dataset_root"]), list(msg.get("classes", [])))
        return {"ok": True}
    if op == "train_task":
        backend.train_task(int(msg["task"]), list(msg["image_ids"]))
        return {"ok": True}
    if op == "predict":
        return {"ok": True, "detections": backend.predict(str(msg["image_id"]))}
    if op == "snapshot":
        ack = backend.snapshot(str(msg.get("tag", "")))
        return {"ok": True, **ack}
    raise ValueError(f"unknown op {op!r}")


def serve(backend: Backend, stdin: TextIO = sys.stdin, stdout: TextIO = sys.stdout) -> int:
    """Answer requests until shutdown or EOF; always returns 0."""
    try:
        for line in stdin:
            if not line.strip():
                continue
            try:
                msg = json.loads(line)
            except json.JSONDecodeError as exc:
                _respond(stdout, -1, error=f"unparseable request: {exc}")
                continue
            if not isinstance(msg, dict):
                _respond(stdout, -1, error="request is not an object")
                continue
            request_id = msg.get("id", -1)
            if not isinstance(request_id, int):
                request_id = -1
            if msg.get("op") == "shutdown":
                _respond(stdout, request_id, ok=True)
                break
            try:
                _respond(stdout, request_id, **_handle(backend, msg))
            except Exception as exc:
                _respond(stdout, request_id, error=f"{type(exc).__name__}: {exc}")
    finally:
        backend.close()
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="replaybridge", description="echo trainer bridge for detector harnesses"
    )
    parser.add_argument(
        "--dataset-root",
        help="dataset directory; when omitted, the init request's root is used",
    )
    args = parser.parse_args(argv)
    return serve(EchoBackend(args.dataset_root))


if __name__ == "__main__":
    sys.exit(main())
