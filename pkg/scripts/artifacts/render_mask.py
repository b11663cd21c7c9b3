#!/usr/bin/env python3
"""
Render a pruning mask as a grayscale pixmap.

White pixels mark retained tokens, black pixels mark pruned ones; each
pixel is one patch of the grid_h x grid_w grid.

USAGE:
    python scripts/artifacts/render_mask.py --masks results/masks.json --out mask.pgm
    python scripts/artifacts/render_mask.py --masks results/masks.json --image-id cat --out cat.pgm
    python scripts/artifacts/render_mask.py --masks results/masks.json --grid-h 12 --grid-w 48 --out wide.pgm
"""

import argparse
import sys
from pathlib import Path

# Add project root to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from scripts.artifacts.mask_file import load_masks, render_pgm
from scripts.artifacts.tensor_container import atomic_write_bytes
from scripts.config import setup_logging


def select_record(records, image_id=None):
    if image_id is None:
        if len(records) != 1:
            raise ValueError(f"mask file holds {len(records)} images; pass --image-id")
        return records[0]
    for record in records:
        if record.image_id == image_id:
            return record
    raise ValueError(f"no mask for image '{image_id}'")


def run(args, logger):
    try:
        record = select_record(load_masks(args.masks), args.image_id)
        pixmap = render_pgm(record, args.grid_h, args.grid_w)
    except (ValueError, FileNotFoundError) as e:
        logger.error(f"Rendering failed: {e}")
        return 2

    atomic_write_bytes(args.out, pixmap)
    logger.info(f"Rendered '{record.image_id}' ({record.retain_count}/{record.n_v} kept) to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(description='Render a pruning mask as a PGM pixmap')
    parser.add_argument('--masks', required=True, help='Mask file written by prune_tokens.py')
    parser.add_argument('--image-id', help='Image to render (required when the file holds several)')
    parser.add_argument('--grid-h', type=int, help='Override grid height')
    parser.add_argument('--grid-w', type=int, help='Override grid width')
    parser.add_argument('--out', required=True, help='Output .pgm path')
    parser.add_argument('--debug', action='store_true', help='Enable debug logging')
    return parser


def main():
    args = build_parser().parse_args()
    logger = setup_logging('render_mask', args.debug)
    sys.exit(run(args, logger))


if __name__ == "__main__":
    main()
