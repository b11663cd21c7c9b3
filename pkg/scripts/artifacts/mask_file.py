"""
Mask files and mask pixmaps.

A mask file records, per image, which visual tokens a pruner kept:

    {"format": "holov-mask/1",
     "masks": [{"image_id", "n_v", "grid_h", "grid_w", "retain_count",
                "retained": [...], "method", "config_digest"}]}

Files are canonical JSON (sorted keys, indent 2, trailing newline) so the
same masks always produce the same bytes. Pixmaps are binary PGM (P5):
255 for retained tokens, 0 for pruned ones, one pixel per patch.
"""

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from scripts.artifacts.tensor_container import atomic_write_bytes

FORMAT_TAG = "holov-mask/1"
RETAINED_LEVEL = 255
PRUNED_LEVEL = 0


def canonical_json(document) -> bytes:
    return (json.dumps(document, sort_keys=True, indent=2) + "\n").encode('utf-8')


def config_digest(config: Dict) -> str:
    """First 16 hex characters of SHA-256 over the canonical config JSON."""
    return hashlib.sha256(canonical_json(config)).hexdigest()[:16]


@dataclass(frozen=True)
class MaskRecord:
    image_id: str
    n_v: int
    grid_h: int
    grid_w: int
    retain_count: int
    retained: tuple
    method: str
    config_digest: str

    def __post_init__(self):
        object.__setattr__(self, 'retained', tuple(int(i) for i in self.retained))
        issues = validate_mask_record(self)
        if issues:
            raise ValueError(f"Invalid mask for image '{self.image_id}': {'; '.join(issues)}")

    def to_dict(self) -> Dict:
        return {
            'image_id': self.image_id,
            'n_v': self.n_v,
            'grid_h': self.grid_h,
            'grid_w': self.grid_w,
            'retain_count': self.retain_count,
            'retained': list(self.retained),
            'method': self.method,
            'config_digest': self.config_digest,
        }


def validate_mask_record(record: MaskRecord) -> List[str]:
    issues = []
    if record.grid_h * record.grid_w != record.n_v:
        issues.append(f"grid mismatch: {record.grid_h}x{record.grid_w} != N_v={record.n_v}")
    if len(record.retained) != record.retain_count:
        issues.append(f"retain_count {record.retain_count} != {len(record.retained)} indices")
    if any(b <= a for a, b in zip(record.retained, record.retained[1:])):
        issues.append("retained indices must be strictly increasing")
    if record.retained and not (0 <= record.retained[0] and record.retained[-1] < record.n_v):
        issues.append(f"retained indices must lie in [0, {record.n_v})")
    return issues


def encode_masks(records: Sequence[MaskRecord]) -> bytes:
    ordered = sorted(records, key=lambda record: record.image_id)
    return canonical_json({'format': FORMAT_TAG, 'masks': [r.to_dict() for r in ordered]})


def save_masks(path, records: Sequence[MaskRecord]):
    atomic_write_bytes(path, encode_masks(records))


def load_masks(path) -> List[MaskRecord]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Mask file not found: {path}")
    try:
        document = json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        raise ValueError(f"Invalid JSON in mask file: {e}")
    if not isinstance(document, dict) or document.get('format') != FORMAT_TAG:
        raise ValueError(f"{path} is not a {FORMAT_TAG} mask file")
    try:
        return [MaskRecord(**entry) for entry in document['masks']]
    except (KeyError, TypeError) as e:
        raise ValueError(f"Malformed mask entry in {path}: {e}")


def render_pgm(record: MaskRecord, grid_h: int = None, grid_w: int = None) -> bytes:
    """Binary PGM of the mask: white where tokens were kept, black where pruned."""
    grid_h = record.grid_h if grid_h is None else grid_h
    grid_w = record.grid_w if grid_w is None else grid_w
    if grid_h * grid_w != record.n_v:
        raise ValueError(f"grid mismatch: {grid_h}x{grid_w} != N_v={record.n_v}")
    pixels = np.full(record.n_v, PRUNED_LEVEL, dtype=np.uint8)
    pixels[list(record.retained)] = RETAINED_LEVEL
    header = f"P5\n{grid_w} {grid_h}\n255\n".encode('ascii')
    return header + pixels.tobytes()


def read_pgm(data: bytes) -> np.ndarray:
    """Decode a P5 pixmap written by render_pgm into a grid_h x grid_w array."""
    parts = data.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5" or parts[2] != b"255":
        raise ValueError("not a binary 8-bit PGM")
    width, height = (int(v) for v in parts[1].split())
    pixels = np.frombuffer(parts[3], dtype=np.uint8)
    if pixels.shape[0] != width * height:
        raise ValueError("pixmap payload does not match its header")
    return pixels.reshape(height, width)
