"""
Tensor container: the only ingestion path for token sets.

FILE LAYOUT (all integers little-endian):
    bytes 0..7     uint64 manifest length L
    bytes 8..8+L   UTF-8 JSON manifest
    remainder      payload of raw float32 tensors, row-major, back to back

Manifest:
    {"format": "holov-tensors/1",
     "tensors": [{"name", "dtype": "f32", "shape", "offset", "length", "crc32"}],
     "images": {"<image_id>": {"grid_h", "grid_w"}}}

A single-image container may name its tensors plainly "embeddings" and
"attention" (image id "image"); multi-image containers prefix the image id,
"<image_id>/embeddings". Offsets are relative to the payload start and
crc32 is the zero-padded hex CRC-32 of the tensor's bytes. See
docs/FILE_FORMATS.md for the full grammar.
"""

import json
import os
import struct
import tempfile
import zlib
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from scripts.pruning.core_model import TokenSet, infer_grid

FORMAT_TAG = "holov-tensors/1"
DEFAULT_IMAGE_ID = "image"
REQUIRED_TENSORS = ("embeddings", "attention")
_HEADER = struct.Struct("<Q")
_DTYPES = {"f32": np.dtype("<f4")}


def atomic_write_bytes(path, data: bytes):
    """Write to a temp file in the target directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    temp_file = tempfile.NamedTemporaryFile(
        mode='wb',
        dir=path.parent,
        delete=False,
        suffix='.tmp'
    )
    try:
        temp_file.write(data)
        temp_file.flush()
        os.fsync(temp_file.fileno())
        temp_file.close()
        os.replace(temp_file.name, path)
    except Exception:
        temp_file.close()
        try:
            os.unlink(temp_file.name)
        except OSError:
            pass
        raise


def _crc(data: bytes) -> str:
    return f"{zlib.crc32(data) & 0xFFFFFFFF:08x}"


def encode_tensors(token_sets: Dict[str, TokenSet]) -> bytes:
    """Serialize token sets keyed by image id into container bytes."""
    if not token_sets:
        raise ValueError("nothing to save: no token sets given")
    single = list(token_sets) == [DEFAULT_IMAGE_ID]

    entries, chunks, images = [], [], {}
    offset = 0
    for image_id in sorted(token_sets):
        if not image_id:
            raise ValueError("image id must be non-empty")
        if "/" in image_id:
            raise ValueError(f"image id must not contain '/': {image_id!r}")
        ts = token_sets[image_id]
        images[image_id] = {'grid_h': int(ts.grid_h), 'grid_w': int(ts.grid_w)}
        for tensor_name in REQUIRED_TENSORS:
            array = np.ascontiguousarray(getattr(ts, tensor_name), dtype=_DTYPES["f32"])
            data = array.tobytes(order='C')
            entries.append({
                'name': tensor_name if single else f"{image_id}/{tensor_name}",
                'dtype': "f32",
                'shape': [int(dim) for dim in array.shape],
                'offset': offset,
                'length': len(data),
                'crc32': _crc(data),
            })
            chunks.append(data)
            offset += len(data)

    manifest = {'format': FORMAT_TAG, 'tensors': entries, 'images': images}
    manifest_bytes = json.dumps(manifest, sort_keys=True, indent=2).encode('utf-8')
    return _HEADER.pack(len(manifest_bytes)) + manifest_bytes + b"".join(chunks)


def save_tensors(path, token_sets: Dict[str, TokenSet]):
    atomic_write_bytes(path, encode_tensors(token_sets))


def read_manifest(blob: bytes) -> Dict:
    if len(blob) < _HEADER.size:
        raise ValueError("container too short for a manifest header")
    (manifest_length,) = _HEADER.unpack_from(blob, 0)
    end = _HEADER.size + manifest_length
    if end > len(blob):
        raise ValueError("manifest length runs past end of file")
    try:
        manifest = json.loads(blob[_HEADER.size:end].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ValueError(f"manifest does not parse: {e}")
    if not isinstance(manifest, dict) or not isinstance(manifest.get('tensors'), list):
        raise ValueError("manifest must be an object with a 'tensors' list")
    manifest['_payload_start'] = end
    return manifest


def decode_tensors(blob: bytes) -> Tuple[Dict, Dict[str, np.ndarray]]:
    """Verify and decode every tensor in the container, keyed by tensor name."""
    manifest = read_manifest(blob)
    payload = memoryview(blob)[manifest['_payload_start']:]
    tensors, spans = {}, []

    for entry in manifest['tensors']:
        try:
            name, dtype = entry['name'], entry['dtype']
            shape = [int(dim) for dim in entry['shape']]
            offset, length = int(entry['offset']), int(entry['length'])
            checksum = entry['crc32']
        except (KeyError, TypeError, ValueError) as e:
            raise ValueError(f"malformed manifest entry {entry!r}: {e}")
        if dtype not in _DTYPES:
            raise ValueError(f"tensor '{name}' has unsupported dtype {dtype!r}")
        if not shape or any(dim < 1 for dim in shape):
            raise ValueError(f"tensor '{name}' has non-positive shape {shape}")
        expected = int(np.prod(shape)) * _DTYPES[dtype].itemsize
        if length != expected:
            raise ValueError(f"shape mismatch for tensor '{name}': {shape} needs {expected} bytes, "
                             f"manifest says {length}")
        if offset < 0 or offset + length > len(payload):
            raise ValueError(f"tensor '{name}' runs past end of payload")
        data = bytes(payload[offset:offset + length])
        if _crc(data) != checksum:
            raise ValueError(f"checksum mismatch for tensor '{name}'")
        if name in tensors:
            raise ValueError(f"duplicate tensor '{name}'")
        spans.append((offset, offset + length, name))
        tensors[name] = np.frombuffer(data, dtype=_DTYPES[dtype]).reshape(shape).astype(np.float32)

    spans.sort()
    for (_, end, first), (start, _, second) in zip(spans, spans[1:]):
        if start < end:
            raise ValueError(f"tensors '{first}' and '{second}' overlap")

    return manifest, tensors


def load_tensors(path) -> Dict[str, TokenSet]:
    """Load and validate every image's TokenSet from a container file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Tensor container not found: {path}")
    manifest, tensors = decode_tensors(path.read_bytes())
    images = manifest.get('images') or {}

    image_ids = sorted({name.rsplit("/", 1)[0] if "/" in name else DEFAULT_IMAGE_ID
                        for name in tensors} | set(images))
    token_sets = {}
    for image_id in image_ids:
        prefix = "" if image_id == DEFAULT_IMAGE_ID and "embeddings" in tensors else f"{image_id}/"
        arrays = {}
        for tensor_name in REQUIRED_TENSORS:
            if prefix + tensor_name not in tensors:
                raise ValueError(f"missing tensor '{prefix}{tensor_name}'")
            arrays[tensor_name] = tensors[prefix + tensor_name]
        geometry = images.get(image_id) or {}
        grid_h = geometry.get('grid_h')
        grid_w = geometry.get('grid_w')
        if grid_h is None or grid_w is None:
            grid_h, grid_w = infer_grid(arrays['embeddings'].shape[0])
        token_sets[image_id] = TokenSet.from_arrays(
            arrays['embeddings'], arrays['attention'], grid_h, grid_w
        )
    return token_sets
