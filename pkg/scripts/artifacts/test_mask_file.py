"""Tests for mask files, mask pixmaps and the render command."""

import json
import logging

import numpy as np
import pytest

from scripts.artifacts.mask_file import (
    FORMAT_TAG,
    MaskRecord,
    canonical_json,
    config_digest,
    encode_masks,
    load_masks,
    read_pgm,
    render_pgm,
    save_masks,
)
from scripts.artifacts.render_mask import build_parser, run, select_record

LOGGER = logging.getLogger('test_mask_file')


def _record(image_id='image', retained=(0, 2, 4), grid_h=2, grid_w=3, method='holov'):
    return MaskRecord(
        image_id=image_id,
        n_v=grid_h * grid_w,
        grid_h=grid_h,
        grid_w=grid_w,
        retain_count=len(retained),
        retained=retained,
        method=method,
        config_digest='0123456789abcdef',
    )


@pytest.mark.parametrize("kwargs, message", [
    ({'retained': (2, 1)}, "strictly increasing"),
    ({'retained': (1, 1)}, "strictly increasing"),
    ({'retained': (0, 6)}, r"must lie in \[0, 6\)"),
])
def test_record_validation(kwargs, message):
    with pytest.raises(ValueError, match=message):
        _record(**kwargs)


def test_record_validation_counts_and_grid():
    with pytest.raises(ValueError, match="retain_count 3 != 2 indices"):
        MaskRecord('image', 6, 2, 3, 3, (0, 1), 'holov', 'x')
    with pytest.raises(ValueError, match="grid mismatch"):
        MaskRecord('image', 7, 2, 3, 1, (0,), 'holov', 'x')


def test_retained_is_stored_as_python_ints():
    record = _record(retained=np.array([1, 3]))
    assert record.retained == (1, 3)
    assert all(type(i) is int for i in record.retained)


def test_canonical_json_is_sorted_and_newline_terminated():
    blob = canonical_json({'b': 1, 'a': [1, 2]})
    assert blob.endswith(b"\n")
    assert blob.index(b'"a"') < blob.index(b'"b"')
    assert canonical_json({'a': [1, 2], 'b': 1}) == blob


def test_config_digest_ignores_key_order():
    digest = config_digest({'method': 'holov', 'tau': 1.0})
    assert digest == config_digest({'tau': 1.0, 'method': 'holov'})
    assert len(digest) == 16
    assert digest != config_digest({'method': 'holov', 'tau': 2.0})


def test_masks_are_sorted_by_image_id():
    document = json.loads(encode_masks([_record('zebra'), _record('ant')]))
    assert document['format'] == FORMAT_TAG
    assert [m['image_id'] for m in document['masks']] == ['ant', 'zebra']


def test_save_and_load(tmp_path):
    records = [_record('cat'), _record('dog', retained=(5,), method='random')]
    path = tmp_path / "masks.json"
    save_masks(path, records)
    loaded = load_masks(path)
    assert [r.to_dict() for r in loaded] == [r.to_dict() for r in records]
    save_masks(tmp_path / "again.json", loaded)
    assert (tmp_path / "again.json").read_bytes() == path.read_bytes()


def test_load_rejects_foreign_files(tmp_path):
    path = tmp_path / "masks.json"
    path.write_text('{"format": "other/1", "masks": []}')
    with pytest.raises(ValueError, match="is not a holov-mask/1 mask file"):
        load_masks(path)
    path.write_text('{"format": "holov-mask/1", "masks": [{"image_id": "x"}]}')
    with pytest.raises(ValueError, match="Malformed mask entry"):
        load_masks(path)
    path.write_text('{not json')
    with pytest.raises(ValueError, match="Invalid JSON"):
        load_masks(path)
    with pytest.raises(FileNotFoundError):
        load_masks(tmp_path / "missing.json")


def test_checkerboard_pixmap_bytes():
    pixmap = render_pgm(_record(retained=(0, 2, 4)))
    assert pixmap == b"P5\n3 2\n255\n" + bytes([255, 0, 255, 0, 255, 0])
    assert read_pgm(pixmap).tolist() == [[255, 0, 255], [0, 255, 0]]


def test_all_kept_and_all_pruned_pixmaps():
    white = read_pgm(render_pgm(_record(retained=tuple(range(6)))))
    assert np.all(white == 255)
    black = read_pgm(render_pgm(_record(retained=())))
    assert np.all(black == 0)


def test_pixmap_grid_override():
    pixmap = render_pgm(_record(retained=(0, 2, 4)), grid_h=1, grid_w=6)
    assert read_pgm(pixmap).shape == (1, 6)
    with pytest.raises(ValueError, match="grid mismatch"):
        render_pgm(_record(), grid_h=4, grid_w=4)


def test_read_pgm_rejects_other_formats():
    with pytest.raises(ValueError, match="not a binary 8-bit PGM"):
        read_pgm(b"P2\n1 1\n255\n0")
    with pytest.raises(ValueError, match="does not match its header"):
        read_pgm(b"P5\n2 2\n255\n\x00")


def test_select_record():
    records = [_record('cat'), _record('dog')]
    assert select_record(records, 'dog').image_id == 'dog'
    assert select_record(records[:1]).image_id == 'cat'
    with pytest.raises(ValueError, match="mask file holds 2 images; pass --image-id"):
        select_record(records)
    with pytest.raises(ValueError, match="no mask for image 'eel'"):
        select_record(records, 'eel')


def test_render_command(tmp_path):
    masks = tmp_path / "masks.json"
    save_masks(masks, [_record('cat'), _record('dog', retained=(1,))])
    out = tmp_path / "dog.pgm"
    args = build_parser().parse_args(['--masks', str(masks), '--image-id', 'dog', '--out', str(out)])
    assert run(args, LOGGER) == 0
    assert read_pgm(out.read_bytes()).tolist() == [[0, 255, 0], [0, 0, 0]]


@pytest.mark.parametrize("extra", [[], ['--image-id', 'eel'], ['--grid-h', '5', '--grid-w', '5']])
def test_render_command_failures_exit_2(tmp_path, extra):
    masks = tmp_path / "masks.json"
    save_masks(masks, [_record('cat'), _record('dog')])
    if extra and extra[0] == '--grid-h':
        extra = ['--image-id', 'cat', *extra]
    out = tmp_path / "out.pgm"
    args = build_parser().parse_args(['--masks', str(masks), '--out', str(out), *extra])
    assert run(args, LOGGER) == 2
    assert not out.exists()


def test_render_command_missing_file(tmp_path):
    args = build_parser().parse_args(['--masks', str(tmp_path / "none.json"),
                                      '--out', str(tmp_path / "out.pgm")])
    assert run(args, LOGGER) == 2
