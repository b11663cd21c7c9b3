"""
Visual context refetching (VCR).

The FFN is read as a key-value memory: columns k_i of W1 are keys, columns
v_i of W2 are values, and FFN(x) = sum_i phi(<x, k_i>) v_i. Refetching adds
visual tokens as extra entries <z_i : z_i> and mixes the retrieval into the
FFN output with ratio alpha when the decoder is uncertain.

Nothing here touches a real decoder; callers hand in hidden states,
weights and logits.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from scripts.config import (
    ALPHA_MAX,
    ALPHA_MIDPOINT,
    ALPHA_STEEPNESS,
    DEFAULT_UNCERTAINTY_THRESHOLD,
)
from scripts.pruning.core_model import ScoreSheet, TokenSet

logger = logging.getLogger(__name__)


class Activation(str, Enum):
    RELU = "relu"
    SILU = "silu"
    SOFTMAX_OVER_SCORES = "softmax_over_scores"


@dataclass
class MultiplyCounter:
    """Counts scalar multiplications performed by the memory reads."""
    multiplies: int = 0


@dataclass(frozen=True, eq=False)
class FfnWeights:
    w1: np.ndarray
    w2: np.ndarray
    activation: Activation = Activation.RELU

    def __post_init__(self):
        w1 = np.asarray(self.w1, dtype=np.float64)
        w2 = np.asarray(self.w2, dtype=np.float64)
        if w1.ndim != 2 or w1.shape != w2.shape or w1.shape[1] < 1:
            raise ValueError(f"W1 and W2 must both be d x D with D >= 1, got {w1.shape} and {w2.shape}")
        if not (np.all(np.isfinite(w1)) and np.all(np.isfinite(w2))):
            raise ValueError("FFN weights must be finite")
        object.__setattr__(self, 'w1', w1)
        object.__setattr__(self, 'w2', w2)
        object.__setattr__(self, 'activation', Activation(self.activation))

    @property
    def dim(self) -> int:
        return self.w1.shape[0]

    @property
    def memory_size(self) -> int:
        return self.w1.shape[1]


def activate(scores: np.ndarray, activation: Activation) -> np.ndarray:
    activation = Activation(activation)
    if activation is Activation.RELU:
        return np.maximum(scores, 0.0)
    if activation is Activation.SILU:
        return scores / (1.0 + np.exp(-scores))
    shifted = np.exp(scores - scores.max())
    return shifted / shifted.sum()


def _query(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (dim,):
        raise ValueError(f"query must have shape ({dim},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("query must be finite")
    return x


def _memory_read(x, keys, values, activation, counter):
    # keys and values are d x entries
    coefficients = activate(keys.T @ x, activation)
    if counter is not None:
        counter.multiplies += 2 * keys.shape[0] * keys.shape[1]
    return values @ coefficients


def ffn_memory(x, w: FfnWeights, counter: Optional[MultiplyCounter] = None) -> np.ndarray:
    """FFN(x) = sum_i phi(<x, k_i>) v_i."""
    x = _query(x, w.dim)
    return _memory_read(x, w.w1, w.w2, w.activation, counter)


def vcr_delta(x, z_v, activation: Activation = Activation.RELU,
              counter: Optional[MultiplyCounter] = None) -> np.ndarray:
    """Retrieval over visual tokens used as both keys and values."""
    z_v = np.asarray(z_v, dtype=np.float64)
    if z_v.ndim != 2 or z_v.shape[0] == 0:
        raise ValueError("no visual evidence")
    x = _query(x, z_v.shape[1])
    return _memory_read(x, z_v.T, z_v.T, activation, counter)


def ffn_with_vcr(x, w: FfnWeights, z_v, alpha: float,
                 counter: Optional[MultiplyCounter] = None) -> np.ndarray:
    """alpha * Delta(z_v | x) + (1 - alpha) * FFN(x)."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if alpha == 0.0:
        return ffn_memory(x, w, counter)
    delta = vcr_delta(x, z_v, w.activation, counter)
    if alpha == 1.0:
        return delta
    return alpha * delta + (1.0 - alpha) * ffn_memory(x, w, counter)


def normalized_entropy(logits) -> float:
    """Shannon entropy of softmax(logits) divided by log(vocab size)."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.shape[0] < 2:
        raise ValueError("vocabulary size must be at least 2")
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits must be finite")
    shifted = logits - logits.max()
    log_probs = shifted - np.log(np.exp(shifted).sum())
    probs = np.exp(log_probs)
    entropy = -float(np.sum(probs * log_probs))
    return max(0.0, entropy) / math.log(logits.shape[0])


def uncertainty_trigger(logits, threshold: float = DEFAULT_UNCERTAINTY_THRESHOLD) -> bool:
    return normalized_entropy(logits) > threshold


def trigger_layer(num_layers: int) -> int:
    """Middle decoder layer where refetching is injected."""
    if num_layers < 1:
        raise ValueError(f"num_layers must be positive, got {num_layers}")
    return num_layers // 2


def complexity_alpha(sheet: ScoreSheet, alpha_max: float = ALPHA_MAX,
                     midpoint: float = ALPHA_MIDPOINT,
                     steepness: float = ALPHA_STEEPNESS) -> float:
    """
    Heuristic injection ratio: logistic squashing of the mean token
    variance onto [0, alpha_max]. Busier images get a larger alpha.
    """
    if not 0.0 <= alpha_max <= 1.0:
        raise ValueError(f"alpha_max must lie in [0, 1], got {alpha_max}")
    mean_variance = float(np.mean(sheet.variance))
    return alpha_max / (1.0 + math.exp(-steepness * (mean_variance - midpoint)))


def refetch_tokens(ts: TokenSet, retained, pruned_only: bool = True) -> np.ndarray:
    """Visual evidence to re-inject: the pruned tokens by default, else every token."""
    if not pruned_only:
        return ts.embeddings.astype(np.float64)
    mask = np.ones(ts.n_tokens, dtype=bool)
    mask[np.asarray(retained, dtype=np.int64)] = False
    return ts.embeddings[mask].astype(np.float64)


def refetch_ffn(x, w: FfnWeights, evidence, alpha: float, logits,
                threshold: float = DEFAULT_UNCERTAINTY_THRESHOLD,
                counter: Optional[MultiplyCounter] = None) -> np.ndarray:
    """Plain FFN when confident, VCR-mixed FFN when the next-token entropy is high."""
    if np.asarray(evidence).shape[0] == 0 or not uncertainty_trigger(logits, threshold):
        return ffn_memory(x, w, counter)
    logger.debug(f"Refetch triggered with alpha={alpha:.3f} over {len(evidence)} visual tokens")
    return ffn_with_vcr(x, w, evidence, alpha, counter)
