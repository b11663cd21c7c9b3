"""
Baseline pruners used as comparators for HoloV.

- random_prune: uniform sample without replacement, PCG64-seeded
- attention_topk_prune: global top-k by [CLS] attention, no crop structure

PRNG CONTRACT:
    A partial Fisher-Yates shuffle of range(N_v) driven by raw 64-bit words
    of PCG64(seed). Step i swaps position i with i + bounded_draw(N_v-1-i);
    the first k positions, sorted ascending, are the kept tokens. Golden
    values are listed in docs/FILE_FORMATS.md.
"""

import numpy as np

from scripts.pruning.allocation import prune
from scripts.pruning.core_model import PruneConfig, TokenSet


def _check_budget(n_tokens: int, retain_count: int):
    if retain_count < 0:
        raise ValueError(f"retain_count must be non-negative, got {retain_count}")
    if retain_count > n_tokens:
        raise ValueError(f"budget exceeds token count: {retain_count} > {n_tokens}")


def make_rng(seed: int) -> np.random.Generator:
    """The project's one seeded generator: PCG64 over an unsigned 64-bit seed."""
    if not 0 <= int(seed) < 2 ** 64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.PCG64(int(seed)))


def bounded_draw(bit_generator, upper: int) -> int:
    """
    Uniform integer in [0, upper] by masked rejection over raw 64-bit words.

    upper == 0 returns 0 without consuming a word.
    """
    if upper == 0:
        return 0
    mask = (1 << int(upper).bit_length()) - 1
    while True:
        word = int(bit_generator.random_raw()) & mask
        if word <= upper:
            return word


def random_prune(ts: TokenSet, retain_count: int, seed: int) -> np.ndarray:
    """Sorted indices of a uniform random subset of size retain_count."""
    _check_budget(ts.n_tokens, retain_count)
    bits = make_rng(seed).bit_generator
    order = list(range(ts.n_tokens))
    for i in range(retain_count):
        j = i + bounded_draw(bits, ts.n_tokens - 1 - i)
        order[i], order[j] = order[j], order[i]
    return np.sort(np.asarray(order[:retain_count], dtype=np.int64))


def attention_topk_prune(ts: TokenSet, retain_count: int) -> np.ndarray:
    """Sorted indices of the retain_count highest-attention tokens (ties to the lower index)."""
    _check_budget(ts.n_tokens, retain_count)
    indices = np.arange(ts.n_tokens)
    order = np.lexsort((indices, -ts.attention.astype(np.float64)))
    return np.sort(order[:retain_count]).astype(np.int64)


def _holov(ts, cfg):
    return prune(ts, cfg).retained


def _random(ts, cfg):
    return random_prune(ts, cfg.retain_count, cfg.seed)


def _attn_topk(ts, cfg):
    return attention_topk_prune(ts, cfg.retain_count)


METHODS = {
    'holov': _holov,
    'random': _random,
    'attn-topk': _attn_topk,
}


def retained_indices(method: str, ts: TokenSet, cfg: PruneConfig) -> np.ndarray:
    """Dispatch a pruning method by its command-line tag."""
    try:
        pruner = METHODS[method]
    except KeyError:
        raise ValueError(f"Unknown method '{method}', expected one of {', '.join(METHODS)}")
    return pruner(ts, cfg)
