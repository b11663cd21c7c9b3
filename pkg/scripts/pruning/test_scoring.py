"""Tests for similarity, variance, gamma and holistic scores."""

import numpy as np
import pytest

from conftest import random_token_set
from scripts.pruning.allocation import prune
from scripts.pruning.core_model import CropPartition, PruneConfig, TokenSet, make_partition
from scripts.pruning.scoring import (
    adaptive_gamma,
    crop_mean_scores,
    holistic_scores,
    intra_crop_similarity,
    token_variance,
)


def _single_crop(rows, attention=None):
    rows = np.asarray(rows, dtype=np.float64)
    attention = np.ones(rows.shape[0]) if attention is None else attention
    ts = TokenSet.from_arrays(rows, attention, 1, rows.shape[0], normalized=True)
    part = CropPartition.from_assignment(np.zeros(rows.shape[0], dtype=np.int64), 1)
    return ts, part


def test_identical_pair_similarity():
    ts, part = _single_crop([[1.0, 0.0], [1.0, 0.0]])
    assert intra_crop_similarity(ts, part, 0).tolist() == [[0.0, 1.0], [1.0, 0.0]]


def test_orthogonal_pair_similarity():
    ts, part = _single_crop([[1.0, 0.0], [0.0, 1.0]])
    assert intra_crop_similarity(ts, part, 0).tolist() == [[0.0, 0.0], [0.0, 0.0]]


def test_three_token_similarity_and_variance():
    ts, part = _single_crop([[1.0, 0.0], [0.6, 0.8], [0.0, 1.0]])
    sim = intra_crop_similarity(ts, part, 0)
    np.testing.assert_allclose(sim, [[0.0, 0.6, 0.0], [0.6, 0.0, 0.8], [0.0, 0.8, 0.0]], atol=1e-6)
    # off-diagonal means 0.3, 0.7, 0.4; squared spreads over M - 1 = 2
    np.testing.assert_allclose(token_variance(sim, 3), [0.09, 0.01, 0.16], atol=1e-6)


def test_similarity_requires_unit_rows():
    ts = TokenSet.from_arrays([[2.0, 0.0], [0.0, 2.0]], [1.0, 1.0], 1, 2)
    part = CropPartition.from_assignment([0, 0], 1)
    with pytest.raises(ValueError, match="embeddings must be unit-normalized"):
        intra_crop_similarity(ts, part, 0)


def test_similarity_is_exactly_symmetric():
    ts = random_token_set(11, grid_h=6, grid_w=6, dim=32)
    part = make_partition(ts, PruneConfig(retain_count=4, crop_count=4))
    for c in range(part.crop_count):
        sim = intra_crop_similarity(ts, part, c)
        assert np.array_equal(sim, sim.T)
        assert np.all(np.diag(sim) == 0.0)


def test_token_variance_degenerate_cases():
    assert token_variance(np.zeros((1, 1)), 1).tolist() == [0.0]
    identical = np.ones((3, 3)) - np.eye(3)
    assert token_variance(identical, 3).tolist() == [0.0, 0.0, 0.0]
    with pytest.raises(ValueError):
        token_variance(np.zeros((2, 2)), 3)


def _two_pass_variance(sim):
    m = sim.shape[0]
    result = []
    for i in range(m):
        others = [float(sim[i, j]) for j in range(m) if j != i]
        mean = sum(others) / (m - 1)
        result.append(sum((s - mean) ** 2 for s in others) / (m - 1))
    return np.array(result)


def test_token_variance_matches_two_pass_oracle():
    rng = np.random.default_rng(5)
    for _ in range(50):
        m = int(rng.integers(2, 20))
        rows = rng.standard_normal((m, 8))
        rows /= np.linalg.norm(rows, axis=1, keepdims=True)
        ts, part = _single_crop(rows)
        sim = intra_crop_similarity(ts, part, 0)
        expected = _two_pass_variance(sim)
        np.testing.assert_allclose(token_variance(sim, m), expected, rtol=1e-6, atol=1e-12)


def test_adaptive_gamma_examples():
    assert adaptive_gamma([0.1, 0.1], [0.2, 0.2]) == pytest.approx(2.0)
    assert adaptive_gamma([0.0, 0.0], [0.2, 0.4]) == 0.0
    assert adaptive_gamma([0.05, 0.15], [0.0, 0.0]) == 0.0
    assert adaptive_gamma([1e-14], [1.0]) == 0.0
    with pytest.raises(ValueError):
        adaptive_gamma([0.1], [0.1, 0.2])


def test_holistic_score_composition():
    ts = random_token_set(2, grid_h=6, grid_w=6, dim=16)
    part = make_partition(ts, PruneConfig(retain_count=8, crop_count=4))
    sheet = holistic_scores(ts, part)
    for c, members in enumerate(part.members):
        expected = sheet.gamma[c] * sheet.variance[members] + sheet.attention[members]
        assert np.array_equal(sheet.holistic[members], expected)
    assert np.all(sheet.variance >= 0) and np.all(sheet.gamma >= 0)
    assert np.all(np.isfinite(sheet.holistic))
    assert not sheet.holistic.flags.writeable


def test_holistic_hand_example():
    # gamma = 0.2 / 0.1 = 2, so a token with V = 0.18 and A = 0.05 scores 0.41
    gamma = adaptive_gamma([0.18, 0.02], [0.05, 0.35])
    assert gamma == pytest.approx(2.0)
    assert gamma * 0.18 + 0.05 == pytest.approx(0.41)


def test_identical_crop_scores_equal_attention():
    attention = np.array([0.3, 0.1, 0.7, 0.2])
    ts, part = _single_crop([[0.0, 1.0]] * 4, attention)
    sheet = holistic_scores(ts, part)
    assert sheet.gamma.tolist() == [0.0]
    np.testing.assert_allclose(sheet.holistic, attention.astype(np.float32))


def test_holistic_scores_are_reproducible():
    ts = random_token_set(8, grid_h=5, grid_w=5, dim=12)
    part = make_partition(ts, PruneConfig(retain_count=5, crop_count=5))
    first, second = holistic_scores(ts, part), holistic_scores(ts, part)
    assert first.holistic.tobytes() == second.holistic.tobytes()


def _within_crop_order(sheet, part):
    return [np.lexsort((members, -sheet.holistic[members])).tolist() for members in part.members]


def test_attention_rescaling_by_ten_scales_scores():
    ts = random_token_set(4, grid_h=4, grid_w=4, dim=8)
    part = make_partition(ts, PruneConfig(retain_count=4, crop_count=4))
    scaled = TokenSet(ts.embeddings, ts.attention * 10, 4, 4, normalized=True)
    base, rescaled = holistic_scores(ts, part), holistic_scores(scaled, part)
    np.testing.assert_allclose(rescaled.holistic, 10 * base.holistic, rtol=1e-6)
    assert _within_crop_order(base, part) == _within_crop_order(rescaled, part)


def test_selection_is_scale_invariant():
    for seed in range(200):
        ts = random_token_set(seed, grid_h=6, grid_w=6, dim=8)
        part = make_partition(ts, PruneConfig(retain_count=6, crop_count=6))
        base = holistic_scores(ts, part)
        for k in (0.25, 2.0, 8.0):
            scaled = TokenSet(ts.embeddings, ts.attention * k, 6, 6, normalized=True)
            assert _within_crop_order(base, part) == _within_crop_order(holistic_scores(scaled, part), part)


def test_retained_set_is_scale_invariant_end_to_end():
    for seed in range(100):
        ts = random_token_set(seed, grid_h=8, grid_w=8, dim=8)
        cfg = PruneConfig(retain_count=16, crop_count=4)
        base = prune(ts, cfg).retained
        for k in (0.01, 100.0):
            scaled = TokenSet(ts.embeddings, ts.attention * k, 8, 8, normalized=True)
            assert np.array_equal(prune(scaled, cfg).retained, base), f"seed {seed}, k={k}"


def test_crop_mean_scores():
    ts = random_token_set(1, grid_h=4, grid_w=4, dim=8)
    part = make_partition(ts, PruneConfig(retain_count=4, crop_count=2))
    sheet = holistic_scores(ts, part)
    means = crop_mean_scores(sheet, part)
    assert means.shape == (2,)
    assert means[1] == pytest.approx(sheet.holistic[part.members[1]].mean())
