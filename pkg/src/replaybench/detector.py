"""The detector contract and its bindings.

Three backends satisfy the same small surface: the in-process simulated
detector, an in-process echo (perfect) detector used by tests, and an
external trainer spoken to over the line-delimited JSON protocol on a
spawned subprocess. Confidence filtering and NMS are never applied
here: backends return raw detections and the harness post-processes,
so every backend sees identical treatment.
"""

from __future__ import annotations

import select
import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Protocol, Sequence

from .boxes import Detection
from .dataset import DatasetIndex
from .sim import SimSkillState, sim_predict, sim_train
from .wire import ProtocolError, encode_request, parse_detections, parse_response


class DetectorError(RuntimeError):
    """Backend failure that aborts the current run."""


@dataclass(frozen=True)
class SnapshotAck:
    supported: bool
    overwrote: bool = False


class DetectorBackend(Protocol):
    """What the harness needs from any detector."""

    def train_task(self, task_index: int, image_ids: Sequence[str]) -> None: ...

    def predict(self, image_id: str) -> List[Detection]: ...

    def snapshot(self, tag: str) -> SnapshotAck: ...

    def close(self) -> None: ...


@dataclass(frozen=True)
class DetectorSpec:
    """How to obtain a backend: in-process sim/echo or an external command."""

    kind: str = "sim"
    command: Optional[str] = None
    cwd: Optional[str] = None
    env: Dict[str, str] = field(default_factory=dict)
    timeout_s: float = 600.0
    sim_learn_rate: float = 0.5
    sim_decay_rate: float = 0.4
    sim_jitter_scale: float = 0.05
    sim_fp_rate: float = 0.5

    def __post_init__(self) -> None:
        if self.kind not in ("sim", "echo", "external"):
            raise ValueError(f"unknown detector kind {self.kind!r}")
        if self.kind == "external" and not self.command:
            raise ValueError("external detector requires a command")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")


class SimDetector:
    """In-process simulated detector; trains by skill dynamics."""

    def __init__(self, dataset: DatasetIndex, seed: int, spec: Optional[DetectorSpec] = None):
        spec = spec or DetectorSpec(kind="sim")
        self._dataset = dataset
        self._state = SimSkillState.fresh(
            len(dataset.classes),
            seed=seed,
            learn_rate=spec.sim_learn_rate,
            decay_rate=spec.sim_decay_rate,
            jitter_scale=spec.sim_jitter_scale,
            fp_rate=spec.sim_fp_rate,
        )
        self._step = 0
        self._snapshots: Dict[str, SimSkillState] = {}

    @property
    def state(self) -> SimSkillState:
        return self._state

    def train_task(self, task_index: int, image_ids: Sequence[str]) -> None:
        records = self._dataset.records(image_ids)
        self._state = sim_train(self._state, records)
        self._step += 1

    def predict(self, image_id: str) -> List[Detection]:
        record = self._dataset.images.get(image_id)
        if record is None:
            raise DetectorError(f"unknown image id {image_id!r}")
        return sim_predict(self._state, record, self._step)

    def snapshot(self, tag: str) -> SnapshotAck:
        overwrote = tag in self._snapshots
        self._snapshots[tag] = self._state
        return SnapshotAck(supported=True, overwrote=overwrote)

    def snapshot_state(self, tag: str) -> SimSkillState:
        return self._snapshots[tag]

    def close(self) -> None:
        pass


class EchoDetector:
    """In-process perfect detector: predicts the stored ground truth."""

    confidence = 0.99

    def __init__(self, dataset: DatasetIndex):
        self._dataset = dataset

    def train_task(self, task_index: int, image_ids: Sequence[str]) -> None:
        pass

    def predict(self, image_id: str) -> List[Detection]:
        record = self._dataset.images.get(image_id)
        if record is None:
            raise DetectorError(f"unknown image id {image_id!r}")
        return [Detection(g.bbox, g.class_id, self.confidence) for g in record.gt]

    def snapshot(self, tag: str) -> SnapshotAck:
        return SnapshotAck(supported=True)

    def close(self) -> None:
        pass


class ExternalDetector:
    """Detector behind a spawned subprocess speaking the wire protocol.

    Strictly one request in flight; a timeout kills the child and leaves
    the handle unusable.
    """

    def __init__(
        self,
        command: str,
        dataset_root: str,
        classes: Sequence[str],
        timeout_s: float = 600.0,
        cwd: Optional[str] = None,
        env: Optional[Dict[str, str]] = None,
    ):
        full_env = None
        if env:
            import os

            full_env = {**os.environ, **env}
        self._timeout_s = timeout_s
        self._next_id = 1
        self._dead = False
        self._buffer = b""
        try:
            self._proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                cwd=cwd,
                env=full_env,
            )
        except OSError as exc:
            raise DetectorError(f"failed to launch external detector {command!r}: {exc}") from exc
        self._request("init", dataset_root=str(dataset_root), classes=list(classes))

    def _read_line(self) -> str:
        import time

        deadline = time.monotonic() + self._timeout_s
        stdout = self._proc.stdout
        assert stdout is not None
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                self._kill("timeout waiting for backend response")
            ready, _, _ = select.select([stdout], [], [], remaining)
            if not ready:
                continue
            chunk = stdout.read1(65536)
            if not chunk:
                self._kill("backend closed its output stream")
            self._buffer += chunk
        line, _, self._buffer = self._buffer.partition(b"\n")
        return line.decode("utf-8")

    def _kill(self, reason: str) -> None:
        self._dead = True
        try:
            self._proc.kill()
        except OSError:
            pass
        raise DetectorError(f"external detector aborted: {reason}")

    def _request(self, op: str, **payload) -> dict:
        if self._dead:
            raise DetectorError("external detector handle is dead")
        request_id = self._next_id
        self._next_id += 1
        line = encode_request(op, request_id, **payload)
        stdin = self._proc.stdin
        assert stdin is not None
        try:
            stdin.write(line.encode("utf-8") + b"\n")
            stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self._kill(f"backend pipe broken while sending {op}: {exc}")
        raw = self._read_line()
        try:
            msg = parse_response(raw, request_id)
        except ProtocolError:
            self._dead = True
            raise
        if "error" in msg:
            raise DetectorError(f"backend error on {op}: {msg['error']}")
        return msg

    def train_task(self, task_index: int, image_ids: Sequence[str]) -> None:
        self._request("train_task", task=task_index, image_ids=list(image_ids))

    def predict(self, image_id: str) -> List[Detection]:
        msg = self._request("predict", image_id=image_id)
        return parse_detections(msg, str(msg))

    def snapshot(self, tag: str) -> SnapshotAck:
        msg = self._request("snapshot", tag=tag)
        return SnapshotAck(
            supported=not bool(msg.get("unsupported", False)),
            overwrote=bool(msg.get("overwrote", False)),
        )

    def close(self) -> None:
        if self._dead:
            return
        try:
            self._request("shutdown")
        except (DetectorError, ProtocolError):
            pass
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
        self._dead = True


def create_detector(
    spec: DetectorSpec,
    dataset: DatasetIndex,
    dataset_root: Optional[Path],
    seed: int,
) -> DetectorBackend:
    """Build a fresh backend for one seeded run."""
    if spec.kind == "sim":
        return SimDetector(dataset, seed=seed, spec=spec)
    if spec.kind == "echo":
        return EchoDetector(dataset)
    if dataset_root is None:
        raise DetectorError("external detector requires a dataset root on disk")
    assert spec.command is not None
    return ExternalDetector(
        spec.command,
        dataset_root=str(dataset_root),
        classes=dataset.classes,
        timeout_s=spec.timeout_s,
        cwd=spec.cwd,
        env=spec.env or None,
    )
