"""
Analytic FLOPs model for visual token pruning.

Per transformer layer the prefill cost of n visual tokens is
    a*n^2*d + b*n*d^2 + c*n*d*m
and the per-token decode cost against a cache of n tokens is
    b*d^2 + (b*d + c*d*m)*n.

Defaults a=2, b=4, c=6 are modeling conventions (attention matmuls,
Q/K/V/O projections, three SwiGLU matmuls at 2 FLOPs per MAC), not
measured values. Everything is plain float64 arithmetic in a fixed order.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

from scripts.config import (
    DEFAULT_FFN_SIZE,
    DEFAULT_FLOPS_A,
    DEFAULT_FLOPS_B,
    DEFAULT_FLOPS_C,
    DEFAULT_HIDDEN_SIZE,
    DEFAULT_LAYERS,
)
from scripts.pruning.core_model import round_half_up


@dataclass(frozen=True)
class CostParams:
    n: int
    d: int = DEFAULT_HIDDEN_SIZE
    m: int = DEFAULT_FFN_SIZE
    layers: int = DEFAULT_LAYERS
    a: float = DEFAULT_FLOPS_A
    b: float = DEFAULT_FLOPS_B
    c: float = DEFAULT_FLOPS_C

    def __post_init__(self):
        # n = 0 is allowed so an empty token set costs nothing
        if int(self.n) < 0:
            raise ValueError(f"n must be non-negative, got {self.n}")
        for name in ('d', 'm', 'layers'):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer, got {getattr(self, name)}")
        for name in ('a', 'b', 'c'):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be finite and positive, got {value}")


class FlopsReduction(NamedTuple):
    exact: float
    approximation: float
    retained_tokens: int


def layer_flops(p: CostParams, n: int) -> float:
    """Prefill FLOPs of one layer over n tokens."""
    n, d, m = float(n), float(p.d), float(p.m)
    return p.a * n * n * d + p.b * n * d * d + p.c * n * d * m


def prefill_flops(p: CostParams) -> float:
    return p.layers * layer_flops(p, p.n)


def retained_tokens(p: CostParams, R: float) -> int:
    """n_hat = round((1 - R) * n), halves up."""
    if not 0.0 <= R <= 1.0:
        raise ValueError(f"pruning ratio must lie in [0, 1], got {R}")
    return round_half_up((1.0 - R) * p.n)


def flops_reduction(p: CostParams, R: float) -> FlopsReduction:
    """Exact prefill FLOPs saving at pruning ratio R, plus the 2R - R^2 approximation."""
    n_hat = retained_tokens(p, R)
    full = layer_flops(p, p.n)
    exact = 0.0 if full == 0.0 else 1.0 - layer_flops(p, n_hat) / full
    return FlopsReduction(exact=exact, approximation=2.0 * R - R * R, retained_tokens=n_hat)


def decode_flops_per_token(p: CostParams, cached_n: int) -> float:
    if cached_n < 0:
        raise ValueError(f"cached_n must be non-negative, got {cached_n}")
    d, m = float(p.d), float(p.m)
    return p.layers * (p.b * d * d + (p.b * d + p.c * d * m) * cached_n)


def decode_reduction(p: CostParams, R: float) -> float:
    """Relative per-token decode saving when the cache holds n_hat instead of n visual tokens."""
    full = decode_flops_per_token(p, p.n)
    return 1.0 - decode_flops_per_token(p, retained_tokens(p, R)) / full


def generation_flops(p: CostParams, R: float, output_tokens: int) -> float:
    """Prefill on n_hat tokens followed by output_tokens decode steps over a growing cache."""
    if output_tokens < 0:
        raise ValueError(f"output_tokens must be non-negative, got {output_tokens}")
    n_hat = retained_tokens(p, R)
    total = p.layers * layer_flops(p, n_hat)
    for step in range(output_tokens):
        total += decode_flops_per_token(p, n_hat + step)
    return total


def quadratic_share(p: CostParams) -> float:
    """Fraction of the per-layer prefill cost carried by the a*n^2*d term."""
    full = layer_flops(p, p.n)
    return 0.0 if full == 0.0 else p.a * float(p.n) * p.n * p.d / full


def crossover_tokens(p: CostParams) -> float:
    """Token count at which the quadratic term equals the two linear terms."""
    return (p.b * p.d + p.c * p.m) / p.a
