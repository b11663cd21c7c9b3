#!/usr/bin/env python3
"""
FLOPs Report

Evaluates the analytic cost model for one model shape and pruning ratio
and prints a JSON metrics record on stdout.

FIELDS:
- retained_tokens: n_hat = round((1 - R) * n)
- flops_reduction_exact / flops_reduction_approx: prefill saving and 2R - R^2
- prefill_flops, prefill_flops_pruned: full-model prefill before/after pruning
- decode_flops_per_token, decode_flops_per_token_pruned, decode_reduction
- quadratic_share, crossover_tokens: how far the shape is from the n^2 regime

USAGE:
    python scripts/cost_model/flops_report.py --n 576 --ratio 0.889
    python scripts/cost_model/flops_report.py --n 2048 --d 256 --m 256 --layers 4 --ratio 0.5
"""

import argparse
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

# Add project root to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from scripts.config import (
    DEFAULT_FFN_SIZE,
    DEFAULT_FLOPS_A,
    DEFAULT_FLOPS_B,
    DEFAULT_FLOPS_C,
    DEFAULT_HIDDEN_SIZE,
    DEFAULT_LAYERS,
    setup_logging,
)
from scripts.cost_model.flops import (
    CostParams,
    crossover_tokens,
    decode_flops_per_token,
    decode_reduction,
    flops_reduction,
    prefill_flops,
    quadratic_share,
)


def flops_record(params: CostParams, ratio: float) -> dict:
    reduction = flops_reduction(params, ratio)
    pruned = replace(params, n=reduction.retained_tokens)
    return {
        **asdict(params),
        'ratio': ratio,
        'retained_tokens': reduction.retained_tokens,
        'flops_reduction_exact': reduction.exact,
        'flops_reduction_approx': reduction.approximation,
        'prefill_flops': prefill_flops(params),
        'prefill_flops_pruned': prefill_flops(pruned),
        'decode_flops_per_token': decode_flops_per_token(params, params.n),
        'decode_flops_per_token_pruned': decode_flops_per_token(params, reduction.retained_tokens),
        'decode_reduction': decode_reduction(params, ratio) if params.n else 0.0,
        'quadratic_share': quadratic_share(params),
        'crossover_tokens': crossover_tokens(params),
    }


def run(args, logger):
    try:
        params = CostParams(n=args.n, d=args.d, m=args.m, layers=args.layers,
                            a=args.a, b=args.b, c=args.c)
        record = flops_record(params, args.ratio)
    except ValueError as e:
        logger.error(f"Invalid cost model parameters: {e}")
        return 2
    print(json.dumps(record, sort_keys=True, indent=2))
    logger.info(f"n={params.n} -> {record['retained_tokens']} tokens: "
                f"FLOPs -{record['flops_reduction_exact']:.2%} "
                f"(2R-R^2 = {record['flops_reduction_approx']:.5f})")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(description='Analytic FLOPs model for visual token pruning')
    parser.add_argument('--n', type=int, required=True, help='Visual token count')
    parser.add_argument('--d', type=int, default=DEFAULT_HIDDEN_SIZE, help='Hidden size')
    parser.add_argument('--m', type=int, default=DEFAULT_FFN_SIZE, help='FFN intermediate size')
    parser.add_argument('--layers', type=int, default=DEFAULT_LAYERS, help='Decoder layers')
    parser.add_argument('--a', type=float, default=DEFAULT_FLOPS_A, help='Attention constant')
    parser.add_argument('--b', type=float, default=DEFAULT_FLOPS_B, help='Projection constant')
    parser.add_argument('--c', type=float, default=DEFAULT_FLOPS_C, help='FFN constant')
    parser.add_argument('--ratio', '--R', dest='ratio', type=float, required=True,
                        help='Pruning ratio R in [0, 1]')
    parser.add_argument('--debug', action='store_true', help='Enable debug logging')
    return parser


def main():
    """Main execution for standalone usage"""
    args = build_parser().parse_args()
    logger = setup_logging('flops_report', args.debug)
    sys.exit(run(args, logger))


if __name__ == "__main__":
    main()
