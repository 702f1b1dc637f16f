"""Replay-buffer budget resolution and selection strategies.

All strategies operate on image ids in canonical (sorted) order and
break every tie by ascending id, so selections are independent of the
iteration order of whatever mapping supplied the scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

STRATEGIES = ("naive", "er", "mir", "far", "joint")


@dataclass(frozen=True)
class StrategyConfig:
    """Selection strategy plus the shared pool/size caps."""

    strategy: str = "er"
    pool_cap: int = 800
    k_select: int = 200
    # When False, FAR keeps its first checkpoint as baseline instead of
    # refreshing after every completed task.
    far_refresh_baseline: bool = True

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}, expected one of {STRATEGIES}")
        if self.pool_cap <= 0 or self.k_select <= 0:
            raise ValueError("pool_cap and k_select must be positive")
        if self.k_select > self.pool_cap:
            raise ValueError(f"k_select ({self.k_select}) must not exceed pool_cap ({self.pool_cap})")


@dataclass(frozen=True)
class RecallCache:
    """Per-image baseline recall@0.5 snapshot taken at a task checkpoint."""

    checkpoint_task: int
    entries: Tuple[Tuple[str, float], ...]

    def __post_init__(self) -> None:
        for image_id, r in self.entries:
            if not (0.0 <= r <= 1.0):
                raise ValueError(f"cached recall for {image_id!r} outside [0,1]: {r}")

    def as_dict(self) -> Dict[str, float]:
        return dict(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def resolve_budget(fraction: float, prior_pool: Sequence[str]) -> int:
    """Image count for a fractional budget: round half up, floor at 1."""
    if not (0.0 < fraction <= 1.0):
        raise ValueError(f"budget fraction must be in (0,1], got {fraction}")
    n = len(prior_pool)
    if n == 0:
        return 0
    count = math.floor(fraction * n + 0.5)
    return max(count, 1)


def _canonical_capped(prior_pool: Sequence[str], pool_cap: int) -> List[str]:
    return sorted(prior_pool)[:pool_cap]


def er_select(prior_pool: Sequence[str], count: int, seed: int) -> List[str]:
    """Uniform sample without replacement; output sorted by id."""
    canonical = sorted(prior_pool)
    count = min(count, len(canonical))
    if count <= 0:
        return []
    rng = np.random.Generator(np.random.PCG64(seed))
    picks = rng.choice(len(canonical), size=count, replace=False)
    return sorted(canonical[i] for i in picks)


def _require_scores(ids: Sequence[str], scores: Mapping[str, float], what: str) -> None:
    missing = [i for i in ids if i not in scores]
    if missing:
        raise KeyError(f"{what} missing for pooled images: {missing[:5]}")


def mir_select(
    prior_pool: Sequence[str],
    recall_of: Mapping[str, float],
    cfg: StrategyConfig,
) -> List[str]:
    """The k_select capped-pool images with the lowest current recall."""
    capped = _canonical_capped(prior_pool, cfg.pool_cap)
    _require_scores(capped, recall_of, "current recall")
    ranked = sorted(capped, key=lambda i: (recall_of[i], i))
    return sorted(ranked[: cfg.k_select])


def far_cache_baseline(
    prior_pool: Sequence[str],
    recall_of: Mapping[str, float],
    checkpoint_task: int,
    cfg: StrategyConfig,
) -> RecallCache:
    """Snapshot baseline recalls for the capped pool at a checkpoint."""
    capped = _canonical_capped(prior_pool, cfg.pool_cap)
    _require_scores(capped, recall_of, "baseline recall")
    return RecallCache(
        checkpoint_task=checkpoint_task,
        entries=tuple((i, float(recall_of[i])) for i in capped),
    )


def far_score(baseline: float, current: float) -> float:
    """Forgetting priority: recall drop clamped at zero."""
    return max(0.0, baseline - current)


def far_select(
    cache: RecallCache,
    current_recall_of: Mapping[str, float],
    cfg: StrategyConfig,
) -> List[str]:
    """The k_select cached images with the largest recall degradation."""
    ids = [i for i, _ in cache.entries]
    _require_scores(ids, current_recall_of, "current recall")
    baseline = cache.as_dict()
    ranked = sorted(ids, key=lambda i: (-far_score(baseline[i], current_recall_of[i]), i))
    return sorted(ranked[: cfg.k_select])
