#!/usr/bin/env python3
"""
Synthetic Pruning Lab

Runs seeded head-to-head trials of the pruning methods on planted-structure
token sets and reports per-trial metrics plus HoloV's aggregate win rates.

FUNCTIONALITY:
- Trial t uses seed trial_seeds(--seed, --trials)[t] for both the synthetic
  instance and the random baseline
- Metrics per method: spatial_coverage, redundancy, informative_recall
- Attention diagnostics per trial: top-20% concentration, end concentration
  and the attention CDF at every tenth of the tokens
- --crops and --tau set the HoloV partition and sharpening; --crops-sweep
  repeats the trials once per crop count and reports each aggregate
- Win rates per baseline: share of trials where HoloV's coverage is >=,
  redundancy is <=, and recall is >= the baseline's
- Trials run in parallel (HOLOV_THREADS); records stay in trial order

SPEC FILE (optional JSON object, any SyntheticSpec field plus planted_count):
    {"grid_h": 24, "grid_w": 24, "positional_bias_strength": 2.0, "planted_count": 8}

USAGE:
    python scripts/analysis/run_lab.py --trials 500 --seed 0
    python scripts/analysis/run_lab.py --trials 1 --spec lab_spec.json --methods holov,random --out lab.json
    python scripts/analysis/run_lab.py --trials 200 --tau 2 --crops-sweep 4,9,16,36
"""

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from tqdm import tqdm

# Add project root to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from scripts.analysis.metrics import (
    attention_cdf,
    attention_concentration,
    end_concentration,
    informative_recall,
    redundancy_metric,
    spatial_coverage,
)
from scripts.analysis.synthetic import SyntheticSpec, generate_synthetic, trial_seeds
from scripts.artifacts.mask_file import canonical_json
from scripts.artifacts.tensor_container import atomic_write_bytes
from scripts.config import (
    DEFAULT_LAB_METHODS,
    DEFAULT_SEED,
    DEFAULT_TAU,
    DEFAULT_TRIALS,
    LAB_PLANTED_COUNT,
    LAB_RETAIN_COUNT,
    get_max_workers,
    load_json_config,
    setup_logging,
)
from scripts.pruning.baselines import METHODS, retained_indices
from scripts.pruning.core_model import PruneConfig, make_partition, normalize_rows

LAB_FORMAT = "holov-lab/1"
METRIC_NAMES = ('spatial_coverage', 'redundancy', 'informative_recall')
CDF_POINTS = tuple(q / 10 for q in range(1, 11))
# HoloV wins a metric when its value compares this way against the baseline
WIN_RULES = {
    'spatial_coverage': np.greater_equal,
    'redundancy': np.less_equal,
    'informative_recall': np.greater_equal,
}


def parse_methods(text):
    methods = [m.strip() for m in text.split(',') if m.strip()]
    if not methods:
        raise ValueError("at least one method is required")
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"Unknown method(s): {', '.join(unknown)}")
    if len(set(methods)) != len(methods):
        raise ValueError("methods must not repeat")
    return methods


def parse_crop_sweep(text):
    try:
        counts = [int(c) for c in text.split(',') if c.strip()]
    except ValueError:
        raise ValueError(f"crop sweep must be comma-separated integers, got {text!r}")
    if not counts:
        raise ValueError("crop sweep needs at least one crop count")
    if any(c < 1 for c in counts):
        raise ValueError(f"crop counts must be ≥ 1, got {text!r}")
    if len(set(counts)) != len(counts):
        raise ValueError("crop counts must not repeat")
    return counts


def attention_diagnostics(attention):
    """Concentration diagnostics of one trial's [CLS] attention."""
    cdf = attention_cdf(attention)
    n_tokens = cdf.shape[0]
    return {
        'attention_concentration': attention_concentration(attention),
        'end_concentration': end_concentration(attention),
        'attention_cdf': [float(cdf[max(1, int(np.ceil(q * n_tokens))) - 1]) for q in CDF_POINTS],
    }


def trial_spec(base_config, seed):
    """SyntheticSpec for one trial; planted tokens are redrawn per trial unless fixed in the file."""
    config = dict(base_config)
    config['seed'] = seed
    if 'planted_informative' not in config:
        config.setdefault('planted_count', LAB_PLANTED_COUNT)
    return SyntheticSpec.from_dict(config)


def run_trial(trial, seed, base_config, methods, retain_count, crop_count=None, tau=DEFAULT_TAU):
    spec = trial_spec(base_config, seed)
    ts, labels = generate_synthetic(spec)
    unit = normalize_rows(ts)
    cfg = PruneConfig(retain_count=retain_count, tau=tau, crop_count=crop_count, seed=seed)
    part = make_partition(unit, cfg)

    metrics = {}
    for method in methods:
        retained = retained_indices(method, unit, cfg)
        metrics[method] = {
            'spatial_coverage': spatial_coverage(part, retained),
            'redundancy': redundancy_metric(unit, retained),
            'informative_recall': informative_recall(labels.informative, retained),
        }
    return {'trial': trial, 'seed': seed, 'metrics': metrics,
            'diagnostics': attention_diagnostics(ts.attention)}


def aggregate(records, methods):
    means = {
        method: {name: float(np.mean([r['metrics'][method][name] for r in records]))
                 for name in METRIC_NAMES}
        for method in methods
    }
    win_rates = {}
    if 'holov' in methods:
        for baseline in methods:
            if baseline == 'holov':
                continue
            win_rates[baseline] = {}
            for name, rule in WIN_RULES.items():
                ours = np.array([r['metrics']['holov'][name] for r in records])
                theirs = np.array([r['metrics'][baseline][name] for r in records])
                win_rates[baseline][name] = float(np.mean(rule(ours, theirs)))
    return {'means': means, 'holov_win_rates': win_rates}


def run_trials(seeds, base_config, methods, args, crop_count, logger, desc="Lab trials"):
    """Run one trial per seed on the thread pool; records come back in trial order."""
    with ThreadPoolExecutor(max_workers=get_max_workers(logger)) as executor:
        futures = [executor.submit(run_trial, t, seed, base_config, methods, args.retain,
                                   crop_count, args.tau)
                   for t, seed in enumerate(seeds)]
        return [future.result() for future in
                tqdm(futures, desc=desc, disable=len(futures) < 2)]


def build_report(args, logger):
    """Run every trial and return the report document."""
    if args.trials < 1:
        raise ValueError(f"trials must be ≥ 1, got {args.trials}")
    if args.retain < 2:
        raise ValueError(f"lab retain count must be ≥ 2 (redundancy needs a pair), got {args.retain}")
    methods = parse_methods(args.methods)
    base_config = load_json_config(args.spec) if args.spec else {}
    base_config.pop('seed', None)

    sweep_counts = parse_crop_sweep(args.crops_sweep) if args.crops_sweep else []
    # rejects a bad --tau or --crops before any trial runs
    PruneConfig(retain_count=args.retain, tau=args.tau, crop_count=args.crops)

    base_spec = trial_spec(base_config, 0)
    if args.retain > base_spec.n_tokens:
        raise ValueError(f"budget exceeds token count: {args.retain} > {base_spec.n_tokens}")
    for crop_count in [args.crops, *sweep_counts]:
        if crop_count is not None and crop_count > base_spec.n_tokens:
            raise ValueError(f"more crops than tokens: C={crop_count} > N_v={base_spec.n_tokens}")

    seeds = trial_seeds(args.seed, args.trials)
    records = run_trials(seeds, base_config, methods, args, args.crops, logger)
    sweep = []
    for crop_count in sweep_counts:
        logger.debug(f"Crop sweep: C={crop_count}")
        swept = run_trials(seeds, base_config, methods, args, crop_count, logger,
                           desc=f"Sweep C={crop_count}")
        sweep.append({'crop_count': crop_count, 'aggregate': aggregate(swept, methods)})

    spec_summary = base_spec.to_dict()
    spec_summary.pop('seed')
    if 'planted_informative' not in base_config:
        spec_summary.pop('planted_informative')
        spec_summary['planted_count'] = int(base_config.get('planted_count', LAB_PLANTED_COUNT))

    report = {
        'format': LAB_FORMAT,
        'seed': args.seed,
        'trials': args.trials,
        'retain_count': args.retain,
        'crop_count': args.crops,
        'tau': float(args.tau),
        'methods': methods,
        'spec': spec_summary,
        'records': records,
        'aggregate': aggregate(records, methods),
    }
    if sweep_counts:
        report['sweep'] = sweep
    return report


def run(args, logger):
    try:
        report = build_report(args, logger)
    except (ValueError, FileNotFoundError, TypeError) as e:
        logger.error(f"Lab run failed: {e}")
        return 2

    document = canonical_json(report)
    if args.out:
        atomic_write_bytes(args.out, document)
        logger.info(f"Wrote {args.trials} trial(s) to {args.out}")
    else:
        sys.stdout.write(document.decode('utf-8'))

    for baseline, rates in report['aggregate']['holov_win_rates'].items():
        logger.info(f"HoloV vs {baseline}: coverage {rates['spatial_coverage']:.1%}, "
                    f"redundancy {rates['redundancy']:.1%}, recall {rates['informative_recall']:.1%}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(description='Seeded synthetic pruning trials')
    parser.add_argument('--trials', type=int, default=DEFAULT_TRIALS,
                        help=f'Number of trials (default: {DEFAULT_TRIALS})')
    parser.add_argument('--seed', type=int, default=DEFAULT_SEED, help='Root seed')
    parser.add_argument('--spec', help='Synthetic spec JSON file')
    parser.add_argument('--methods', default=','.join(DEFAULT_LAB_METHODS),
                        help='Comma-separated methods (default: holov,random,attn-topk)')
    parser.add_argument('--retain', type=int, default=LAB_RETAIN_COUNT,
                        help=f'Tokens kept per trial (default: {LAB_RETAIN_COUNT})')
    parser.add_argument('--crops', type=int,
                        help='HoloV crop count (default: round(1024 / retain))')
    parser.add_argument('--tau', type=float, default=DEFAULT_TAU,
                        help=f'Crop weight sharpening exponent (default: {DEFAULT_TAU})')
    parser.add_argument('--crops-sweep', help='Comma-separated crop counts to sweep, e.g. 4,9,16')
    parser.add_argument('--out', help='Write the report here instead of stdout')
    parser.add_argument('--debug', action='store_true', help='Enable debug logging')
    return parser


def main():
    """Main execution for standalone usage"""
    args = build_parser().parse_args()
    logger = setup_logging('run_lab', args.debug)
    sys.exit(run(args, logger))


if __name__ == "__main__":
    main()
