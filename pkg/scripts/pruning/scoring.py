"""
Holistic token scoring.

Per crop: masked cosine-similarity matrix, per-token similarity variance,
the adaptive scale gamma_c and the fused score H = gamma_c * V + A.
All arithmetic runs in float64 with token-index-ascending summation.
"""

import logging

import numpy as np

from scripts.config import DEFAULT_GAMMA_FLOOR
from scripts.pruning.core_model import CropPartition, ScoreSheet, TokenSet

logger = logging.getLogger(__name__)


def intra_crop_similarity(ts: TokenSet, part: CropPartition, c: int) -> np.ndarray:
    """Masked similarity matrix of crop c (diagonal exactly zero, exactly symmetric)."""
    if not ts.normalized:
        raise ValueError("embeddings must be unit-normalized")
    z = ts.embeddings[part.members[c]].astype(np.float64)
    upper = np.triu(z @ z.T, k=1)
    return upper + upper.T


def token_variance(sim: np.ndarray, m: int) -> np.ndarray:
    """
    Variance of each token's similarities to the other m - 1 crop members.

    The masked diagonal is excluded from both the mean and the spread, and
    both use the (m - 1) normalizer. A singleton crop has variance [0].
    """
    if sim.ndim != 2 or sim.shape != (m, m):
        raise ValueError(f"similarity matrix must be {m}x{m}, got {sim.shape}")
    if m == 1:
        return np.zeros(1)
    off_diagonal = ~np.eye(m, dtype=bool)
    mu = sim.sum(axis=1) / (m - 1)
    deviation = np.where(off_diagonal, sim - mu[:, None], 0.0)
    return (deviation * deviation).sum(axis=1) / (m - 1)


def adaptive_gamma(variance_c, attention_c, gamma_floor: float = DEFAULT_GAMMA_FLOOR) -> float:
    """mean|A| / mean|V| for one crop, or 0 when the variance mean is under the floor."""
    variance_c = np.asarray(variance_c, dtype=np.float64)
    attention_c = np.asarray(attention_c, dtype=np.float64)
    if variance_c.shape != attention_c.shape or variance_c.size == 0:
        raise ValueError("variance and attention must be non-empty and the same length")
    variance_mean = np.abs(variance_c).mean()
    if variance_mean < gamma_floor or variance_mean == 0.0:
        return 0.0
    return float(np.abs(attention_c).mean() / variance_mean)


def holistic_scores(ts: TokenSet, part: CropPartition,
                    gamma_floor: float = DEFAULT_GAMMA_FLOOR) -> ScoreSheet:
    """Score every token: H_i = gamma_c * V_i + A_i for the crop c holding token i."""
    n_tokens = ts.n_tokens
    attention = ts.attention.astype(np.float64)
    variance = np.zeros(n_tokens)
    holistic = np.zeros(n_tokens)
    gamma = np.zeros(part.crop_count)

    for c, members in enumerate(part.members):
        sim = intra_crop_similarity(ts, part, c)
        crop_variance = token_variance(sim, members.shape[0])
        crop_attention = attention[members]
        gamma[c] = adaptive_gamma(crop_variance, crop_attention, gamma_floor)
        variance[members] = crop_variance
        holistic[members] = gamma[c] * crop_variance + crop_attention

    logger.debug(f"Scored {n_tokens} tokens over {part.crop_count} crops, "
                 f"{int(np.count_nonzero(gamma == 0))} attention-only crops")

    for array in (variance, attention, gamma, holistic):
        array.flags.writeable = False
    return ScoreSheet(variance=variance, attention=attention, gamma=gamma, holistic=holistic)


def crop_mean_scores(sheet: ScoreSheet, part: CropPartition) -> np.ndarray:
    """Crop-level priority: mean holistic score over each crop."""
    return np.array([sheet.holistic[members].mean() for members in part.members])
