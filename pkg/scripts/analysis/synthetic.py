"""
Synthetic token sets with planted structure.

Each instance mimics what visual tokens look like to a pruner:
- semantic clusters occupying contiguous row-major bands of the patch grid
- a handful of planted informative tokens pointing in their own directions
- [CLS]-style attention with a U-shaped positional bias (high at both
  sequence ends) on top of a flat base saliency

Cluster centroids and planted directions are mutually orthonormal whenever
cluster_count + len(planted) <= d. Everything is drawn from one PCG64
stream, so a spec plus its seed fully determines the instance.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, List, Tuple

import numpy as np

from scripts.pruning.baselines import make_rng
from scripts.pruning.core_model import TokenSet


@dataclass(frozen=True)
class SyntheticSpec:
    grid_h: int = 24
    grid_w: int = 24
    d: int = 64
    cluster_count: int = 4
    planted_informative: Tuple[int, ...] = ()
    positional_bias_strength: float = 1.5
    noise_sigma: float = 0.1
    seed: int = 0
    base_saliency: float = 1.0
    saliency_jitter: float = 0.01
    informative_saliency: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, 'planted_informative',
                           tuple(int(i) for i in self.planted_informative))
        n_tokens = self.grid_h * self.grid_w
        if self.grid_h < 1 or self.grid_w < 1 or self.d < 1:
            raise ValueError("grid dimensions and d must be positive")
        if not 1 <= self.cluster_count <= n_tokens:
            raise ValueError(f"cluster_count must lie in [1, {n_tokens}], got {self.cluster_count}")
        if any(not 0 <= i < n_tokens for i in self.planted_informative):
            raise ValueError(f"planted informative indices must lie in [0, {n_tokens})")
        if len(set(self.planted_informative)) != len(self.planted_informative):
            raise ValueError("planted informative indices must be unique")
        for name in ('positional_bias_strength', 'noise_sigma', 'base_saliency',
                     'saliency_jitter', 'informative_saliency'):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    @property
    def n_tokens(self) -> int:
        return self.grid_h * self.grid_w

    @classmethod
    def from_dict(cls, config: Dict) -> "SyntheticSpec":
        """Build from a JSON spec; 'planted_count' draws that many planted indices from the seed."""
        config = dict(config)
        planted_count = config.pop('planted_count', None)
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(config) - known)
        if unknown:
            raise ValueError(f"Unknown synthetic spec keys: {', '.join(unknown)}")
        spec = cls(**config)
        if planted_count is not None:
            spec = with_random_planted(spec, int(planted_count))
        return spec

    def to_dict(self) -> Dict:
        result = {name: getattr(self, name) for name in self.__dataclass_fields__}
        result['planted_informative'] = list(self.planted_informative)
        return result


@dataclass(frozen=True, eq=False)
class SyntheticLabels:
    cluster_ids: np.ndarray
    informative: np.ndarray = field(repr=False)

    @property
    def informative_indices(self) -> np.ndarray:
        return np.flatnonzero(self.informative)


def with_random_planted(spec: SyntheticSpec, planted_count: int) -> SyntheticSpec:
    """Copy of spec with planted_count informative indices drawn from its seed."""
    if not 0 <= planted_count <= spec.n_tokens:
        raise ValueError(f"planted_count must lie in [0, {spec.n_tokens}], got {planted_count}")
    # offset the seed so the planted draw is independent of the embedding stream
    rng = make_rng((int(spec.seed) + 0x9E3779B97F4A7C15) % 2 ** 64)
    planted = np.sort(rng.permutation(spec.n_tokens)[:planted_count])
    return replace(spec, planted_informative=tuple(int(i) for i in planted))


def positional_profile(n_tokens: int) -> np.ndarray:
    """U-shaped profile (2t - 1)^2 over sequence position t in [0, 1]."""
    if n_tokens == 1:
        return np.ones(1)
    t = np.arange(n_tokens) / (n_tokens - 1)
    return (2.0 * t - 1.0) ** 2


def _directions(rng: np.random.Generator, count: int, d: int) -> np.ndarray:
    gaussian = rng.standard_normal((d, count))
    if count <= d:
        q, r = np.linalg.qr(gaussian)
        # fix column signs so the basis is a deterministic function of the draw
        q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
        return q.T
    return (gaussian / np.linalg.norm(gaussian, axis=0)).T


def generate_synthetic(spec: SyntheticSpec) -> Tuple[TokenSet, SyntheticLabels]:
    """Draw one planted-structure instance; returns raw (unnormalized) embeddings."""
    rng = make_rng(spec.seed)
    n_tokens, d = spec.n_tokens, spec.d
    planted = np.array(spec.planted_informative, dtype=np.int64)

    directions = _directions(rng, spec.cluster_count + planted.shape[0], d)
    centroids = directions[:spec.cluster_count]
    cluster_ids = (np.arange(n_tokens) * spec.cluster_count) // n_tokens

    clean = centroids[cluster_ids].copy()
    clean[planted] = directions[spec.cluster_count:]
    noise = rng.standard_normal((n_tokens, d)) * (spec.noise_sigma / np.sqrt(d))
    embeddings = clean + noise

    informative = np.zeros(n_tokens, dtype=bool)
    informative[planted] = True
    attention = (spec.base_saliency
                 + spec.saliency_jitter * rng.random(n_tokens)
                 + spec.informative_saliency * informative
                 + spec.positional_bias_strength * positional_profile(n_tokens))

    token_set = TokenSet.from_arrays(embeddings, attention, spec.grid_h, spec.grid_w)
    return token_set, SyntheticLabels(cluster_ids=cluster_ids, informative=informative)


def trial_seeds(seed: int, trials: int) -> List[int]:
    """Independent per-trial u64 seeds: SeedSequence(seed).spawn(trials), first state word each."""
    children = np.random.SeedSequence(int(seed)).spawn(trials)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]
