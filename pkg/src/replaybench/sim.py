"""Deterministic simulated detector with per-class skill dynamics.

Training on a task raises skill for the classes present in the train
set and decays skill for the absent ones, so replay composition feeds
straight back into retention. Prediction quality (emission probability,
box jitter, confidence, false-positive pressure) is driven by skill and
a counter-based RNG keyed on (run seed, image id, training step), so
per-image prediction is reproducible and parallel-safe with no global
RNG state.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from typing import List, Sequence, Tuple

import numpy as np

from .boxes import BBox, Detection
from .dataset import ImageRecord


@dataclass(frozen=True)
class SimSkillState:
    """Per-class detector quality in [0,1] plus the dynamics constants."""

    skill: Tuple[float, ...]
    learn_rate: float = 0.5
    decay_rate: float = 0.4
    jitter_scale: float = 0.05
    fp_rate: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.learn_rate <= 1.0 and 0.0 <= self.decay_rate <= 1.0):
            raise ValueError("learn_rate and decay_rate must lie in [0,1]")
        for s in self.skill:
            if not (0.0 <= s <= 1.0):
                raise ValueError(f"skill outside [0,1]: {s}")

    @classmethod
    def fresh(cls, num_classes: int, seed: int = 0, **kwargs) -> "SimSkillState":
        return cls(skill=(0.0,) * num_classes, seed=seed, **kwargs)


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)


def sim_train(state: SimSkillState, train_set: Sequence[ImageRecord]) -> SimSkillState:
    """One training pass: skill moves by class presence in the train set.

    With p_c the fraction of images containing class c:
    skill_c <- clamp(skill_c + eta*p_c*(1-skill_c) - delta*(1-p_c)*skill_c).
    Order-independent over the set.
    """
    if not train_set:
        raise ValueError("train_set must be non-empty")
    n = len(train_set)
    new_skill = []
    for c, s in enumerate(state.skill):
        hits = sum(1 for rec in train_set if any(g.class_id == c for g in rec.gt))
        p = hits / n
        updated = s + state.learn_rate * p * (1.0 - s) - state.decay_rate * (1.0 - p) * s
        new_skill.append(_clamp01(updated))
    return replace(state, skill=tuple(new_skill))


def _image_rng(seed: int, image_id: str, step: int) -> np.random.Generator:
    digest = hashlib.blake2b(
        f"{seed}:{step}:{image_id}".encode("utf-8"), digest_size=16
    ).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest, "big")))


def sim_predict(state: SimSkillState, image: ImageRecord, step: int = 0) -> List[Detection]:
    """Raw detections for one image under the current skill state.

    Each gt instance of class c is emitted with probability skill_c;
    emitted boxes carry uniform jitter shrinking with skill, confidence
    tracks skill with +-0.05 noise, and false positives arrive with
    expected count fp_rate * (1 - mean skill).
    """
    rng = _image_rng(state.seed, image.image_id, step)
    dets: List[Detection] = []
    for g in image.gt:
        s = state.skill[g.class_id]
        if rng.random() >= s:
            continue
        b = g.bbox
        mx = state.jitter_scale * (1.0 - s) * b.width
        my = state.jitter_scale * (1.0 - s) * b.height
        x_min = b.x_min + rng.uniform(-mx, mx)
        x_max = b.x_max + rng.uniform(-mx, mx)
        y_min = b.y_min + rng.uniform(-my, my)
        y_max = b.y_max + rng.uniform(-my, my)
        conf = _clamp01_conf(s + rng.uniform(-0.05, 0.05))
        dets.append(Detection(BBox(x_min, y_min, x_max, y_max), g.class_id, conf))
    n_classes = len(state.skill)
    if n_classes and state.fp_rate > 0.0:
        mean_skill = sum(state.skill) / n_classes
        lam = state.fp_rate * (1.0 - mean_skill)
        for _ in range(int(rng.poisson(lam))):
            cls = int(rng.integers(0, n_classes))
            w = rng.uniform(0.05, 0.3) * image.width
            h = rng.uniform(0.05, 0.3) * image.height
            x = rng.uniform(0.0, image.width - w)
            y = rng.uniform(0.0, image.height - h)
            conf = rng.uniform(0.05, 0.95)
            dets.append(Detection(BBox(x, y, x + w, y + h), cls, conf))
    return dets


def _clamp01_conf(x: float) -> float:
    return 0.05 if x < 0.05 else (1.0 if x > 1.0 else x)
