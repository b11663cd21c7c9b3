"""
Adaptive holistic token allocation and per-crop top-k selection.

PIPELINE (prune):
    normalize_rows -> make_partition -> holistic_scores -> crop_weights
    -> initial_quotas -> redistribute -> select_topk

Quotas always sum to the retained count and never exceed a crop's size.
Every tie is resolved towards the lower crop or token index.
"""

import logging
import math
from typing import List, Sequence

import numpy as np

from scripts.config import ALLOCATION_LOG_EPSILON
from scripts.pruning.core_model import (
    CropPartition,
    PruneConfig,
    PruneResult,
    QuotaPlan,
    ScoreSheet,
    TokenSet,
    make_partition,
    normalize_rows,
    validate_token_set,
)
from scripts.pruning.scoring import crop_mean_scores, holistic_scores

logger = logging.getLogger(__name__)


def _readonly(array):
    array.flags.writeable = False
    return array


def crop_weights(sheet: ScoreSheet, part: CropPartition, tau: float) -> np.ndarray:
    """
    w_c proportional to (crop mean H)^tau.

    Negative crop means count as 0; all-zero means give uniform weights.
    Means are scaled by their maximum first so large tau cannot overflow.
    """
    if not math.isfinite(tau) or tau <= 0:
        raise ValueError(f"tau must be finite and positive, got {tau}")
    means = np.clip(crop_mean_scores(sheet, part), 0.0, None)
    if not np.all(np.isfinite(means)):
        raise ValueError("crop mean scores must be finite")
    top = means.max()
    if top <= 0.0:
        return np.full(part.crop_count, 1.0 / part.crop_count)
    powered = (means / top) ** tau
    return powered / powered.sum()


def initial_quotas(weights, retain_count: int) -> np.ndarray:
    """floor(w_c * retain_count) per crop."""
    weights = np.asarray(weights, dtype=np.float64)
    return np.floor(weights * retain_count).astype(np.int64)


def _pick(weights: np.ndarray, eligible: np.ndarray, highest: bool) -> int:
    candidates = np.flatnonzero(eligible)
    if highest:
        # argmax returns the first maximum, i.e. the lower crop index
        return int(candidates[np.argmax(weights[candidates])])
    reversed_candidates = candidates[::-1]
    return int(reversed_candidates[np.argmin(weights[reversed_candidates])])


def redistribute(quotas, weights, crop_sizes, retain_count: int) -> QuotaPlan:
    """
    Make quotas feasible and exact.

    Cap pass: clip every quota to its crop size, returning the excess to
    the pool. Shortfall pass: grant one token at a time to the highest-weight
    crop that still has room. An over-full total (possible only for
    hand-built quota vectors) is trimmed from the lowest-weight crops.
    """
    quotas = np.array(quotas, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    crop_sizes = np.asarray(crop_sizes, dtype=np.int64)
    if not (quotas.shape == weights.shape == crop_sizes.shape):
        raise ValueError("quotas, weights and crop sizes must have one entry per crop")
    if retain_count < 0:
        raise ValueError(f"retain_count must be non-negative, got {retain_count}")
    if retain_count > int(crop_sizes.sum()):
        raise ValueError(f"budget exceeds token count: {retain_count} > {int(crop_sizes.sum())}")

    quotas = np.clip(quotas, 0, crop_sizes)
    pool = retain_count - int(quotas.sum())

    while pool > 0:
        c = _pick(weights, quotas < crop_sizes, highest=True)
        quotas[c] += 1
        pool -= 1
    while pool < 0:
        c = _pick(weights, quotas > 0, highest=False)
        quotas[c] -= 1
        pool += 1

    return QuotaPlan(quotas=_readonly(quotas), weights=_readonly(weights.copy()))


def select_topk(sheet: ScoreSheet, part: CropPartition, plan: QuotaPlan) -> PruneResult:
    """Keep the q_c highest-scoring tokens of each crop (ties to the lower index)."""
    if plan.quotas.shape[0] != part.crop_count or np.any(plan.quotas > part.crop_sizes):
        raise ValueError("quota plan does not fit this partition")

    per_crop: List[np.ndarray] = []
    for c, members in enumerate(part.members):
        quota = int(plan.quotas[c])
        order = np.lexsort((members, -sheet.holistic[members]))
        per_crop.append(_readonly(np.sort(members[order[:quota]])))

    retained = np.sort(np.concatenate(per_crop)) if per_crop else np.zeros(0, dtype=np.int64)
    return PruneResult(
        retained=_readonly(retained.astype(np.int64)),
        per_crop=tuple(per_crop),
        quota_plan=plan,
        score_sheet=sheet,
        partition=part,
    )


def prune(ts: TokenSet, cfg: PruneConfig) -> PruneResult:
    """Run the full HoloV pruning pipeline on one image."""
    report = validate_token_set(ts)
    if not report['is_valid']:
        raise ValueError("; ".join(issue['message'] for issue in report['issues']))
    if cfg.retain_count > ts.n_tokens:
        raise ValueError(f"retain_count {cfg.retain_count} exceeds token count {ts.n_tokens}")

    unit = ts if ts.normalized else normalize_rows(ts)
    part = make_partition(unit, cfg)
    sheet = holistic_scores(unit, part, cfg.gamma_floor)
    weights = crop_weights(sheet, part, cfg.tau)
    quotas = initial_quotas(weights, cfg.retain_count)
    plan = redistribute(quotas, weights, part.crop_sizes, cfg.retain_count)
    result = select_topk(sheet, part, plan)

    logger.debug(f"Pruned {ts.n_tokens} -> {result.retain_count} tokens over "
                 f"{part.crop_count} crops, quotas={plan.quotas.tolist()}")
    return result


def log_allocation_objective(crop_scores: Sequence[Sequence[float]], quotas) -> float:
    """
    Sum over crops of log(eps + prefix sum) measured from the empty allocation,
    so the value is 0 when every quota is 0.
    """
    total = 0.0
    base = math.log(ALLOCATION_LOG_EPSILON)
    for scores, quota in zip(crop_scores, quotas):
        prefix = math.fsum(scores[:int(quota)])
        total += math.log(ALLOCATION_LOG_EPSILON + prefix) - base
    return total


def greedy_log_allocation(crop_scores: Sequence[Sequence[float]], retain_count: int) -> np.ndarray:
    """
    Allocate the budget one token at a time to the crop with the largest
    marginal gain of the log-prefix objective.

    Scores must be non-negative and sorted descending within each crop.
    """
    sizes = [len(scores) for scores in crop_scores]
    if retain_count > sum(sizes):
        raise ValueError(f"budget exceeds token count: {retain_count} > {sum(sizes)}")
    for scores in crop_scores:
        if any(s < 0 for s in scores):
            raise ValueError("crop scores must be non-negative")
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError("crop scores must be sorted in descending order")

    quotas = [0] * len(crop_scores)
    prefixes = [0.0] * len(crop_scores)
    for _ in range(retain_count):
        best_crop, best_gain = -1, -math.inf
        for p, scores in enumerate(crop_scores):
            if quotas[p] >= sizes[p]:
                continue
            gain = (math.log(ALLOCATION_LOG_EPSILON + prefixes[p] + scores[quotas[p]])
                    - math.log(ALLOCATION_LOG_EPSILON + prefixes[p]))
            if gain > best_gain:
                best_crop, best_gain = p, gain
        prefixes[best_crop] += crop_scores[best_crop][quotas[best_crop]]
        quotas[best_crop] += 1

    return np.array(quotas, dtype=np.int64)
