#!/usr/bin/env python3
"""
Visual Token Pruning Script

Prunes every image in a tensor container with HoloV or one of the baseline
pruners and writes a mask file plus a metrics record.

FUNCTIONALITY:
- Budget from --retain N or --ratio R (retain_count = round((1 - R) * N_v))
- Methods: holov (crop-wise holistic allocation), random, attn-topk
- Metrics per image: retain ratio, spatial coverage, redundancy,
  analytic prefill FLOPs reduction
- Images are processed in parallel (HOLOV_THREADS caps the workers);
  output order and bytes do not depend on the worker count

OUTPUT:
- <out>/masks.json     mask file (one record per image)
- <out>/metrics.json   metrics record (one entry per image)

USAGE:
    python scripts/pruning/prune_tokens.py --input tokens.htc --ratio 0.889 --out results/
    python scripts/pruning/prune_tokens.py --input tokens.htc --retain 64 --method random --seed 7 --out results/

EXIT CODES:
    0 success, 2 invalid input or configuration (diagnostics on stderr)
"""

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from tqdm import tqdm

# Add project root to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from scripts.analysis.metrics import redundancy_metric, spatial_coverage
from scripts.artifacts.mask_file import MaskRecord, canonical_json, config_digest, save_masks
from scripts.artifacts.tensor_container import atomic_write_bytes, load_tensors
from scripts.config import DEFAULT_SEED, DEFAULT_TAU, get_max_workers, setup_logging
from scripts.cost_model.flops import CostParams, flops_reduction
from scripts.pruning.baselines import METHODS, retained_indices
from scripts.pruning.core_model import (
    PartitionMode,
    PruneConfig,
    make_partition,
    normalize_rows,
    resolve_retain_count,
)

METRICS_FORMAT = "holov-metrics/1"


def build_config(args, n_tokens):
    retain_count = resolve_retain_count(n_tokens, retain=args.retain, ratio=args.ratio)
    return PruneConfig(
        retain_count=retain_count,
        tau=args.tau,
        crop_count=args.crops,
        partition_mode=PartitionMode(args.partition_mode),
        seed=args.seed,
    )


def prune_image(image_id, ts, args):
    """Prune one image; returns (MaskRecord, metrics dict)."""
    cfg = build_config(args, ts.n_tokens)
    unit = normalize_rows(ts)
    retained = retained_indices(args.method, unit, cfg)

    digest = config_digest({'method': args.method, **cfg.to_dict()})
    record = MaskRecord(
        image_id=image_id,
        n_v=ts.n_tokens,
        grid_h=ts.grid_h,
        grid_w=ts.grid_w,
        retain_count=int(retained.shape[0]),
        retained=tuple(retained.tolist()),
        method=args.method,
        config_digest=digest,
    )

    ratio = 1.0 - cfg.retain_count / ts.n_tokens
    reduction = flops_reduction(CostParams(n=ts.n_tokens), ratio)
    metrics = {
        'image_id': image_id,
        'method': args.method,
        'n_v': ts.n_tokens,
        'retain_count': cfg.retain_count,
        'retain_ratio': cfg.retain_count / ts.n_tokens,
        'pruning_ratio': ratio,
        'spatial_coverage': spatial_coverage(make_partition(unit, cfg), retained),
        'redundancy': redundancy_metric(unit, retained) if retained.shape[0] >= 2 else None,
        'flops_reduction_exact': reduction.exact,
        'flops_reduction_approx': reduction.approximation,
        'config_digest': digest,
    }
    return record, metrics


def run(args, logger):
    """Execute a pruning run; returns the process exit code."""
    try:
        if args.retain is not None and args.retain < 1:
            raise ValueError("retain_count must be ≥ 1")
        token_sets = load_tensors(args.input)
        logger.info(f"Loaded {len(token_sets)} image(s) from {args.input}")

        max_workers = get_max_workers(logger)
        image_ids = sorted(token_sets)
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            futures = [executor.submit(prune_image, image_id, token_sets[image_id], args)
                       for image_id in image_ids]
            results = [future.result() for future in
                       tqdm(futures, desc="Pruning images", disable=len(futures) < 2)]
    except (ValueError, FileNotFoundError) as e:
        logger.error(f"Pruning failed: {e}")
        return 2

    out_dir = Path(args.out)
    records = [record for record, _ in results]
    metrics = [entry for _, entry in results]
    save_masks(out_dir / "masks.json", records)
    atomic_write_bytes(out_dir / "metrics.json",
                       canonical_json({'format': METRICS_FORMAT, 'records': metrics}))

    for entry in metrics:
        logger.info(f"{entry['image_id']}: kept {entry['retain_count']}/{entry['n_v']} "
                    f"({entry['method']}), coverage {entry['spatial_coverage']:.3f}, "
                    f"FLOPs -{entry['flops_reduction_exact']:.1%}")
    logger.info(f"Wrote masks and metrics to {out_dir}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(description='Prune visual tokens in a tensor container')
    parser.add_argument('--input', required=True, help='Tensor container file')
    budget = parser.add_mutually_exclusive_group(required=True)
    budget.add_argument('--retain', type=int, help='Number of tokens to keep per image')
    budget.add_argument('--ratio', type=float, help='Fraction of tokens to prune, in [0, 1]')
    parser.add_argument('--tau', type=float, default=DEFAULT_TAU,
                        help=f'Allocation sharpness (default: {DEFAULT_TAU})')
    parser.add_argument('--crops', type=int, default=None,
                        help='Crop count (default: round(1024 / retain_count))')
    parser.add_argument('--partition-mode', choices=[mode.value for mode in PartitionMode],
                        default=PartitionMode.GRID_TILES.value, help='Crop geometry')
    parser.add_argument('--method', choices=sorted(METHODS), default='holov',
                        help='Pruning method (default: holov)')
    parser.add_argument('--seed', type=int, default=DEFAULT_SEED,
                        help='Seed for the random baseline')
    parser.add_argument('--out', required=True, help='Output directory')
    parser.add_argument('--debug', action='store_true', help='Enable debug logging')
    return parser


def main():
    """Main execution for standalone usage"""
    args = build_parser().parse_args()
    logger = setup_logging('prune_tokens', args.debug)
    sys.exit(run(args, logger))


if __name__ == "__main__":
    main()
