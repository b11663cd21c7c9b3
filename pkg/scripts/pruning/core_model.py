#!/usr/bin/env python3
"""
Core Pruning Model

Domain types and validation shared by every pruning, analysis and I/O script.

TYPES:
- TokenSet: per-image visual token embeddings, [CLS] attention and grid geometry
- CropPartition: assignment of token indices to spatial crops
- PruneConfig: budget, allocation sharpness and partition settings
- ScoreSheet / QuotaPlan / PruneResult: outputs of scoring, allocation and selection

All types are frozen dataclasses over read-only numpy arrays, so they can be
shared between worker threads without copying.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from scripts.config import (
    CROP_TOKEN_BUDGET,
    DEFAULT_GAMMA_FLOOR,
    DEFAULT_PARTITION_MODE,
    DEFAULT_SEED,
    DEFAULT_TAU,
)

logger = logging.getLogger(__name__)

UNIT_NORM_TOLERANCE = 1e-5


def _frozen(array, dtype):
    result = np.array(array, dtype=dtype, copy=True)
    result.flags.writeable = False
    return result


def round_half_up(value: float) -> int:
    """Round to nearest integer with .5 going up."""
    return int(math.floor(value + 0.5))


class PartitionMode(str, Enum):
    GRID_TILES = "grid_tiles"
    ROW_MAJOR_BLOCKS = "row_major_blocks"


@dataclass(frozen=True, eq=False)
class TokenSet:
    """Visual tokens of one image: N_v x d embeddings plus per-token attention."""
    embeddings: np.ndarray
    attention: np.ndarray
    grid_h: int
    grid_w: int
    normalized: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'embeddings', _frozen(self.embeddings, np.float32))
        object.__setattr__(self, 'attention', _frozen(self.attention, np.float32))

    @property
    def n_tokens(self) -> int:
        return int(self.embeddings.shape[0]) if self.embeddings.ndim == 2 else 0

    @property
    def dim(self) -> int:
        return int(self.embeddings.shape[1]) if self.embeddings.ndim == 2 else 0

    @classmethod
    def from_arrays(cls, embeddings, attention, grid_h=None, grid_w=None,
                    normalized=False, validate=True) -> "TokenSet":
        """
        Build a TokenSet, inferring a square grid (or 1 x N_v) when no
        geometry is given. With validate=True every invariant violation is
        collected into a single ValueError.
        """
        embeddings = np.asarray(embeddings, dtype=np.float32)
        if grid_h is None or grid_w is None:
            n = embeddings.shape[0] if embeddings.ndim == 2 else 0
            grid_h, grid_w = infer_grid(n)
        token_set = cls(embeddings, attention, int(grid_h), int(grid_w), normalized)
        if validate:
            report = validate_token_set(token_set)
            if not report['is_valid']:
                messages = "; ".join(issue['message'] for issue in report['issues'])
                raise ValueError(f"Invalid token set: {messages}")
        return token_set


def infer_grid(n_tokens: int) -> Tuple[int, int]:
    """Square grid when N_v is a perfect square, otherwise a single row."""
    side = math.isqrt(n_tokens) if n_tokens > 0 else 0
    if side > 0 and side * side == n_tokens:
        return side, side
    return 1, max(n_tokens, 1)


@dataclass(frozen=True, eq=False)
class CropPartition:
    crop_count: int
    assignment: np.ndarray
    crop_sizes: np.ndarray
    members: Tuple[np.ndarray, ...]
    mode: PartitionMode = PartitionMode.GRID_TILES

    @classmethod
    def from_assignment(cls, assignment, crop_count: int,
                        mode: PartitionMode = PartitionMode.GRID_TILES) -> "CropPartition":
        assignment = _frozen(assignment, np.int64)
        sizes = np.bincount(assignment, minlength=crop_count)
        if sizes.shape[0] != crop_count or np.any(sizes == 0):
            raise ValueError("every crop must be non-empty and indexed in [0, C)")
        order = np.argsort(assignment, kind='stable')
        bounds = np.concatenate(([0], np.cumsum(sizes)))
        members = tuple(
            _frozen(order[bounds[c]:bounds[c + 1]], np.int64) for c in range(crop_count)
        )
        return cls(crop_count, assignment, _frozen(sizes, np.int64), members, mode)


@dataclass(frozen=True, eq=False)
class PruneConfig:
    retain_count: int
    tau: float = DEFAULT_TAU
    crop_count: Optional[int] = None
    partition_mode: PartitionMode = PartitionMode(DEFAULT_PARTITION_MODE)
    gamma_floor: float = DEFAULT_GAMMA_FLOOR
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        object.__setattr__(self, 'partition_mode', PartitionMode(self.partition_mode))
        if int(self.retain_count) < 1:
            raise ValueError("retain_count must be ≥ 1")
        if not math.isfinite(self.tau) or self.tau <= 0:
            raise ValueError(f"tau must be finite and positive, got {self.tau}")
        if self.crop_count is not None and int(self.crop_count) < 1:
            raise ValueError(f"crop_count must be ≥ 1, got {self.crop_count}")
        if not math.isfinite(self.gamma_floor) or self.gamma_floor < 0:
            raise ValueError(f"gamma_floor must be ≥ 0, got {self.gamma_floor}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def to_dict(self) -> Dict:
        return {
            'retain_count': int(self.retain_count),
            'tau': float(self.tau),
            'crop_count': None if self.crop_count is None else int(self.crop_count),
            'partition_mode': self.partition_mode.value,
            'gamma_floor': float(self.gamma_floor),
            'seed': int(self.seed),
        }


@dataclass(frozen=True, eq=False)
class ScoreSheet:
    variance: np.ndarray
    attention: np.ndarray
    gamma: np.ndarray
    holistic: np.ndarray


@dataclass(frozen=True, eq=False)
class QuotaPlan:
    quotas: np.ndarray
    weights: np.ndarray

    @property
    def total(self) -> int:
        return int(self.quotas.sum())


@dataclass(frozen=True, eq=False)
class PruneResult:
    retained: np.ndarray
    per_crop: Tuple[np.ndarray, ...]
    quota_plan: QuotaPlan
    score_sheet: ScoreSheet
    partition: CropPartition = field(repr=False, default=None)

    @property
    def retain_count(self) -> int:
        return int(self.retained.shape[0])


def resolve_retain_count(n_tokens: int, retain: Optional[int] = None,
                         ratio: Optional[float] = None) -> int:
    """
    Turn --retain N or --ratio R into a retained token count.

    The ratio is the fraction removed, so retain_count = round((1 - R) * N_v)
    with halves rounding up: 0.889 of 576 keeps 64, 0.667 keeps 192.
    """
    if (retain is None) == (ratio is None):
        raise ValueError("exactly one of retain count or pruning ratio is required")
    if ratio is not None:
        if not 0.0 <= ratio <= 1.0:
            raise ValueError(f"pruning ratio must lie in [0, 1], got {ratio}")
        retain = round_half_up((1.0 - ratio) * n_tokens)
    if retain < 1:
        raise ValueError("retain_count must be ≥ 1")
    if retain > n_tokens:
        raise ValueError(f"retain_count {retain} exceeds token count {n_tokens}")
    return int(retain)


def validate_token_set(ts: TokenSet) -> Dict:
    """Collect every TokenSet invariant violation without raising."""
    issues: List[Dict] = []

    def issue(kind, message, severity='high'):
        issues.append({'type': kind, 'message': message, 'severity': severity})

    emb, att = ts.embeddings, ts.attention
    if emb.ndim != 2 or emb.shape[0] < 1 or emb.shape[1] < 1:
        issue('bad_shape', f"embeddings must be a non-empty N_v x d matrix, got shape {emb.shape}")
        return {'is_valid': False, 'issues': issues}

    n_tokens = emb.shape[0]
    if att.ndim != 1 or att.shape[0] != n_tokens:
        issue('attention_length', f"attention length {att.shape} does not match N_v={n_tokens}")
    if not np.all(np.isfinite(emb)):
        issue('non_finite_embeddings', "non-finite embeddings")
    if not np.all(np.isfinite(att)):
        issue('non_finite_attention', "non-finite attention")
    elif np.any(att < 0):
        issue('negative_attention', "negative attention")
    if ts.grid_h < 1 or ts.grid_w < 1 or ts.grid_h * ts.grid_w != n_tokens:
        issue('grid_mismatch', f"grid mismatch: {ts.grid_h}x{ts.grid_w} != N_v={n_tokens}")
    if ts.normalized and np.all(np.isfinite(emb)):
        norms = np.linalg.norm(emb.astype(np.float64), axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOLERANCE):
            issue('not_unit_norm', "rows flagged normalized are not unit-L2", 'medium')

    return {'is_valid': not issues, 'issues': issues}


def normalize_rows(ts: TokenSet) -> TokenSet:
    """Scale every embedding row to unit L2 norm."""
    emb = ts.embeddings.astype(np.float64)
    norms = np.linalg.norm(emb, axis=1)
    zero_rows = np.flatnonzero(norms == 0.0)
    if zero_rows.size:
        raise ValueError(f"degenerate token embedding at index {int(zero_rows[0])}")
    unit = (emb / norms[:, None]).astype(np.float32)
    return TokenSet(unit, ts.attention, ts.grid_h, ts.grid_w, normalized=True)


def default_crop_count(retain_count: int, n_tokens: int) -> int:
    """round(1024 / retain_count), ties upward, clamped to [1, N_v]."""
    count = (2 * CROP_TOKEN_BUDGET + retain_count) // (2 * retain_count)
    return max(1, min(count, n_tokens))


def _band_sizes(total: int, bands: int) -> np.ndarray:
    # leading bands take the remainder
    sizes = np.full(bands, total // bands, dtype=np.int64)
    sizes[:total % bands] += 1
    return sizes


def _band_labels(total: int, bands: int) -> np.ndarray:
    return np.repeat(np.arange(bands, dtype=np.int64), _band_sizes(total, bands))


def _grid_factorization(crop_count: int, grid_h: int, grid_w: int) -> Optional[Tuple[int, int]]:
    """Row/column band counts for C tiles, most square first, or None if nothing fits."""
    pairs = [(r, crop_count // r) for r in range(1, math.isqrt(crop_count) + 1)
             if crop_count % r == 0]
    pairs.sort(key=lambda pair: (pair[1] - pair[0], pair[0]))
    for r, s in pairs:
        if r <= grid_h and s <= grid_w:
            return r, s
        if s <= grid_h and r <= grid_w:
            return s, r
    return None


def make_partition(ts: TokenSet, cfg: PruneConfig) -> CropPartition:
    """
    Split the token grid into C crops.

    grid_tiles factors C = r x s with |r - s| minimal and tiles the patch grid
    into r row bands by s column bands; row_major_blocks cuts the token order
    into C contiguous blocks. Crop indices run band-row-major.
    """
    n_tokens = ts.n_tokens
    if cfg.crop_count is None:
        crop_count = default_crop_count(cfg.retain_count, n_tokens)
    else:
        crop_count = int(cfg.crop_count)
    if crop_count > n_tokens:
        raise ValueError(f"more crops than tokens: C={crop_count} > N_v={n_tokens}")

    mode = cfg.partition_mode
    if mode is PartitionMode.GRID_TILES:
        if ts.grid_h * ts.grid_w != n_tokens:
            raise ValueError(f"grid mismatch: {ts.grid_h}x{ts.grid_w} != N_v={n_tokens}")
        bands = _grid_factorization(crop_count, ts.grid_h, ts.grid_w)
        if bands is None:
            logger.warning(f"No {crop_count}-tile factorization fits a {ts.grid_h}x{ts.grid_w} "
                           f"grid, falling back to row-major blocks")
            mode = PartitionMode.ROW_MAJOR_BLOCKS
        else:
            rows, cols = bands
            row_label = _band_labels(ts.grid_h, rows)
            col_label = _band_labels(ts.grid_w, cols)
            assignment = (row_label[:, None] * cols + col_label[None, :]).ravel()
            logger.debug(f"Tiled {ts.grid_h}x{ts.grid_w} grid into {rows}x{cols} crops")

    if mode is PartitionMode.ROW_MAJOR_BLOCKS:
        assignment = _band_labels(n_tokens, crop_count)

    return CropPartition.from_assignment(assignment, crop_count, mode)
