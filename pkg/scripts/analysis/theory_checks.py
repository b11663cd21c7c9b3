"""
Empirical checks of the pruning guarantees.

COVERAGE: every pruned token x_j whose best retained match x_i has cosine
    >= epsilon, and whose grid neighbourhood shows context variance <= delta,
    must satisfy ||x_i - x_j|| <= sqrt(2(1 - epsilon)) ||x_j|| + sqrt(delta).
SEMANTIC PRESERVATION: a mean-pooled layer f with Lipschitz constant L moves
    by at most L [sqrt(2(1 - epsilon)) B + sqrt(delta)] + C_eta B^2 / gamma when
    every pruned token is replaced by its retained surrogate.
ALLOCATION: greedy log-prefix allocation reaches at least (1 - 1/e) of the
    exhaustive optimum.

Checks are report-style: they return dicts and never raise on a failed bound.
"""

import itertools
import math
from typing import Dict, List, Sequence

import numpy as np

from scripts.pruning.allocation import greedy_log_allocation, log_allocation_objective
from scripts.pruning.baselines import make_rng
from scripts.pruning.core_model import TokenSet

BOUND_SLACK = 1e-5
PREMISE_SLACK = 1e-7
GREEDY_RATIO = 1.0 - 1.0 / math.e


def grid_neighbours(index: int, grid_h: int, grid_w: int) -> List[int]:
    """8-connected neighbours of a token on the patch grid."""
    row, col = divmod(index, grid_w)
    neighbours = []
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            r, c = row + dr, col + dc
            if 0 <= r < grid_h and 0 <= c < grid_w:
                neighbours.append(r * grid_w + c)
    return neighbours


def _pruned_indices(n_tokens: int, retained: np.ndarray) -> np.ndarray:
    mask = np.ones(n_tokens, dtype=bool)
    mask[retained] = False
    return np.flatnonzero(mask)


def _surrogates(x: np.ndarray, retained: np.ndarray, pruned: np.ndarray):
    """Best retained cosine match for every pruned token (ties to the lower index)."""
    norms = np.linalg.norm(x, axis=1)
    cosines = (x[pruned] @ x[retained].T) / np.outer(norms[pruned], norms[retained])
    best = np.argmax(cosines, axis=1)
    return retained[best], cosines[np.arange(pruned.shape[0]), best]


def check_coverage_lemma(ts: TokenSet, retained, epsilon: float, delta: float) -> Dict:
    """Check the coverage bound for every pruned token."""
    x = ts.embeddings.astype(np.float64)
    retained = np.unique(np.asarray(retained, dtype=np.int64))
    pruned = _pruned_indices(ts.n_tokens, retained)
    records, violations, assumption_failures = [], [], []

    if not retained.shape[0]:
        # nothing can cover a pruned token, so every one is a premise failure
        for j in pruned:
            record = {'token': int(j), 'surrogate': None, 'cosine': None, 'context_variance': None,
                      'distance': None, 'bound': None, 'premises_hold': False}
            records.append(record)
            assumption_failures.append(record)
        surrogate, cosine = np.zeros(0, dtype=np.int64), np.zeros(0)
    elif pruned.shape[0]:
        surrogate, cosine = _surrogates(x, retained, pruned)
    else:
        surrogate, cosine = np.zeros(0, dtype=np.int64), np.zeros(0)

    for j, i, cos in zip(pruned, surrogate, cosine):
        neighbours = grid_neighbours(int(j), ts.grid_h, ts.grid_w)
        context = x[neighbours] @ x[i] if neighbours else np.zeros(1)
        context_variance = float(np.mean((context - context.mean()) ** 2))
        distance = float(np.linalg.norm(x[i] - x[j]))
        bound = math.sqrt(max(0.0, 2.0 * (1.0 - epsilon))) * float(np.linalg.norm(x[j])) \
            + math.sqrt(delta)
        premises = bool(cos >= epsilon - PREMISE_SLACK and context_variance <= delta + PREMISE_SLACK)
        record = {
            'token': int(j),
            'surrogate': int(i),
            'cosine': float(cos),
            'context_variance': context_variance,
            'distance': distance,
            'bound': bound,
            'premises_hold': premises,
        }
        records.append(record)
        if not premises:
            assumption_failures.append(record)
        elif distance > bound + BOUND_SLACK:
            violations.append(record)

    return {
        'is_valid': not violations,
        'checked': int(pruned.shape[0]),
        'premises_held': len(records) - len(assumption_failures),
        'violations': violations,
        'assumption_failures': assumption_failures,
        'records': records,
    }


def clipped_transform(d: int, lipschitz_L: float, seed: int) -> np.ndarray:
    """Random d x d weight matrix rescaled to spectral norm exactly L."""
    if lipschitz_L <= 0:
        raise ValueError(f"Lipschitz constant must be positive, got {lipschitz_L}")
    weights = make_rng(seed).standard_normal((d, d))
    return weights * (lipschitz_L / np.linalg.norm(weights, 2))


def pooled_layer(x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Mean-pooled tanh(x W): L-Lipschitz in every token when ||W||_2 = L."""
    return np.tanh(x @ weights).mean(axis=0)


def check_semantic_preservation(ts: TokenSet, retained, lipschitz_L: float, epsilon: float,
                                delta: float, gamma: float, bound_B: float,
                                c_eta: float = 1.0, seed: int = 0) -> Dict:
    """
    Compare f(X) against f of X with every pruned token swapped for its
    retained surrogate, and test the result against the preservation bound.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    x = ts.embeddings.astype(np.float64)
    retained = np.unique(np.asarray(retained, dtype=np.int64))
    pruned = _pruned_indices(ts.n_tokens, retained)
    if pruned.shape[0] and not retained.shape[0]:
        raise ValueError("retained set is empty: pruned tokens have no surrogate")
    weights = clipped_transform(ts.dim, lipschitz_L, seed)

    substituted = x.copy()
    premises_hold = bool(np.all(np.linalg.norm(x, axis=1) <= bound_B + PREMISE_SLACK))
    if pruned.shape[0]:
        coverage = check_coverage_lemma(ts, retained, epsilon, delta)
        surrogate = np.array([r['surrogate'] for r in coverage['records']], dtype=np.int64)
        substituted[pruned] = x[surrogate]
        premises_hold = premises_hold and not coverage['assumption_failures']

    lhs = float(np.linalg.norm(pooled_layer(x, weights) - pooled_layer(substituted, weights)))
    rhs = lipschitz_L * (math.sqrt(max(0.0, 2.0 * (1.0 - epsilon))) * bound_B + math.sqrt(delta)) \
        + c_eta * bound_B ** 2 / gamma
    return {
        'lhs': lhs,
        'rhs': rhs,
        'holds': lhs <= rhs + BOUND_SLACK,
        'premises_hold': premises_hold,
    }


def optimal_log_allocation(crop_scores: Sequence[Sequence[float]], budget: int):
    """Exhaustive maximum of the log-prefix objective over all exact-budget quota vectors."""
    best_quotas, best_value = None, -math.inf
    ranges = [range(len(scores) + 1) for scores in crop_scores]
    for quotas in itertools.product(*ranges):
        if sum(quotas) != budget:
            continue
        value = log_allocation_objective(crop_scores, quotas)
        if value > best_value:
            best_quotas, best_value = quotas, value
    if best_quotas is None:
        raise ValueError(f"budget exceeds token count: {budget}")
    return np.array(best_quotas, dtype=np.int64), best_value


def check_greedy_allocation(crop_scores: Sequence[Sequence[float]], budget: int) -> Dict:
    """Greedy vs exhaustive optimum on one instance."""
    crop_scores = [sorted((float(s) for s in scores), reverse=True) for scores in crop_scores]
    greedy = greedy_log_allocation(crop_scores, budget)
    greedy_value = log_allocation_objective(crop_scores, greedy)
    optimal, optimal_value = optimal_log_allocation(crop_scores, budget)
    ratio = 1.0 if optimal_value <= 0 else greedy_value / optimal_value
    return {
        'greedy_quotas': greedy.tolist(),
        'greedy_value': greedy_value,
        'optimal_quotas': optimal.tolist(),
        'optimal_value': optimal_value,
        'ratio': ratio,
        'holds': greedy_value >= GREEDY_RATIO * optimal_value - 1e-9,
    }
