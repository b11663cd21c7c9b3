"""
Quality metrics for comparing pruners, and the attention diagnostics
(dispersion, positional bias) measured on token sets.
"""

import numpy as np

from scripts.pruning.core_model import CropPartition, TokenSet


def _unit_rows(embeddings: np.ndarray) -> np.ndarray:
    rows = embeddings.astype(np.float64)
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def redundancy_metric(ts: TokenSet, retained) -> float:
    """Mean pairwise cosine similarity among retained tokens."""
    retained = np.asarray(retained, dtype=np.int64)
    if retained.shape[0] < 2:
        raise ValueError("redundancy needs at least 2 retained tokens")
    rows = ts.embeddings[retained].astype(np.float64)
    if not ts.normalized:
        rows = _unit_rows(rows)
    gram = rows @ rows.T
    upper = np.triu_indices(retained.shape[0], k=1)
    return float(np.clip(gram[upper].mean(), -1.0, 1.0))


def spatial_coverage(part: CropPartition, retained) -> float:
    """Fraction of crops holding at least one retained token."""
    retained = np.asarray(retained, dtype=np.int64)
    touched = np.unique(part.assignment[retained])
    return touched.shape[0] / part.crop_count


def informative_recall(informative: np.ndarray, retained) -> float:
    """Share of planted informative tokens that survived pruning (1.0 when none were planted)."""
    planted = np.flatnonzero(informative)
    if planted.shape[0] == 0:
        return 1.0
    return float(np.isin(planted, np.asarray(retained, dtype=np.int64)).mean())


def attention_cdf(attention) -> np.ndarray:
    """Cumulative attention share of tokens sorted by descending attention."""
    attention = np.asarray(attention, dtype=np.float64)
    total = attention.sum()
    if not total > 0:
        raise ValueError("attention must have positive total mass")
    cdf = np.cumsum(np.sort(attention)[::-1]) / total
    return np.minimum(cdf, 1.0)


def attention_concentration(attention, top_fraction: float = 0.2) -> float:
    """Share of total attention held by the top `top_fraction` of tokens."""
    if not 0.0 < top_fraction <= 1.0:
        raise ValueError(f"top_fraction must lie in (0, 1], got {top_fraction}")
    cdf = attention_cdf(attention)
    count = max(1, int(np.ceil(top_fraction * cdf.shape[0])))
    return float(cdf[count - 1])


def end_concentration(attention, top_fraction: float = 0.1, edge_fraction: float = 0.25) -> float:
    """
    Share of the top-attention tokens sitting in the first or last
    `edge_fraction` of the sequence; about 2 * edge_fraction without bias.
    """
    attention = np.asarray(attention, dtype=np.float64)
    n_tokens = attention.shape[0]
    count = max(1, int(np.ceil(top_fraction * n_tokens)))
    order = np.lexsort((np.arange(n_tokens), -attention))[:count]
    edge = edge_fraction * n_tokens
    at_ends = (order < edge) | (order >= n_tokens - edge)
    return float(at_ends.mean())
