"""Line-delimited JSON protocol spoken to external detector backends.

One JSON object per line, UTF-8, no pretty-printing. Requests carry a
monotonically increasing integer id and the response must echo it.

Requests:
    {"op": "init", "id": N, "dataset_root": str, "classes": [str]}
    {"op": "train_task", "id": N, "task": int, "image_ids": [str]}
    {"op": "predict", "id": N, "image_id": str}
    {"op": "snapshot", "id": N, "tag": str}
    {"op": "shutdown", "id": N}

Responses:
    {"id": N, "ok": true, ...}    or    {"id": N, "error": str}
    predict success carries
    "detections": [{"bbox": [x1, y1, x2, y2], "class": int, "conf": float}]

json round-trips floats at full precision (shortest representation
that parses back exactly), so payload numbers survive the wire intact.
"""

from __future__ import annotations

import json
import math
from typing import List

from .boxes import BBox, Detection


class ProtocolError(RuntimeError):
    """A wire message violated the protocol; carries the offending line."""


def encode_request(op: str, request_id: int, **payload) -> str:
    msg = {"op": op, "id": request_id, **payload}
    return json.dumps(msg, separators=(",", ":"))


def encode_response(request_id: int, **payload) -> str:
    msg = {"id": request_id, **payload}
    return json.dumps(msg, separators=(",", ":"))


def parse_response(line: str, expected_id: int) -> dict:
    """Parse one response line and enforce id matching."""
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"unparseable response line: {line!r} ({exc})") from exc
    if not isinstance(msg, dict):
        raise ProtocolError(f"response is not an object: {line!r}")
    if msg.get("id") != expected_id:
        raise ProtocolError(
            f"response id {msg.get('id')!r} does not match request id {expected_id}: {line!r}"
        )
    if "error" in msg:
        return msg
    if msg.get("ok") is not True:
        raise ProtocolError(f"response carries neither ok:true nor error: {line!r}")
    return msg


def parse_detections(msg: dict, line: str) -> List[Detection]:
    """Validate and convert a predict response payload."""
    raw = msg.get("detections")
    if not isinstance(raw, list):
        raise ProtocolError(f"predict response without detections array: {line!r}")
    dets: List[Detection] = []
    for entry in raw:
        try:
            bbox = entry["bbox"]
            cls = entry["class"]
            conf = entry["conf"]
        except (TypeError, KeyError) as exc:
            raise ProtocolError(f"malformed detection {entry!r} in line: {line!r}") from exc
        if len(bbox) != 4 or not all(isinstance(v, (int, float)) and math.isfinite(v) for v in bbox):
            raise ProtocolError(f"non-finite or malformed bbox {bbox!r} in line: {line!r}")
        if not isinstance(conf, (int, float)) or not (0.0 <= conf <= 1.0):
            raise ProtocolError(f"confidence outside [0,1] in line: {line!r}")
        try:
            dets.append(Detection(BBox(*[float(v) for v in bbox]), int(cls), float(conf)))
        except ValueError as exc:
            raise ProtocolError(f"invalid detection in line: {line!r} ({exc})") from exc
    return dets
