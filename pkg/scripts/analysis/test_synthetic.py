"""Tests for the planted-structure generator."""

import numpy as np
import pytest

from scripts.analysis.metrics import end_concentration
from scripts.analysis.synthetic import (
    SyntheticSpec,
    generate_synthetic,
    positional_profile,
    trial_seeds,
    with_random_planted,
)
from scripts.pruning.core_model import normalize_rows


def test_no_bias_gives_flat_attention():
    ts, _ = generate_synthetic(SyntheticSpec(positional_bias_strength=0.0, saliency_jitter=0.0))
    assert np.all(ts.attention == 1.0)


def test_strong_bias_pushes_top_decile_to_the_ends():
    ts, _ = generate_synthetic(SyntheticSpec(positional_bias_strength=10.0))
    assert end_concentration(ts.attention) == 1.0


def test_single_noiseless_cluster_is_one_token_repeated():
    ts, _ = generate_synthetic(SyntheticSpec(cluster_count=1, noise_sigma=0.0))
    unit = normalize_rows(ts).embeddings.astype(np.float64)
    np.testing.assert_allclose(unit @ unit.T, np.ones((576, 576)), atol=1e-6)


def test_generator_is_seed_reproducible():
    spec = with_random_planted(SyntheticSpec(seed=42), 6)
    first, first_labels = generate_synthetic(spec)
    second, second_labels = generate_synthetic(spec)
    assert first.embeddings.tobytes() == second.embeddings.tobytes()
    assert first.attention.tobytes() == second.attention.tobytes()
    assert np.array_equal(first_labels.informative, second_labels.informative)
    other, _ = generate_synthetic(with_random_planted(SyntheticSpec(seed=43), 6))
    assert not np.array_equal(first.embeddings, other.embeddings)


def test_clusters_are_row_major_bands():
    _, labels = generate_synthetic(SyntheticSpec())
    assert np.array_equal(labels.cluster_ids, np.repeat(np.arange(4), 144))


def test_planted_tokens_get_their_own_directions():
    spec = SyntheticSpec(planted_informative=(5, 300), noise_sigma=0.0)
    ts, labels = generate_synthetic(spec)
    assert labels.informative_indices.tolist() == [5, 300]
    unit = normalize_rows(ts).embeddings.astype(np.float64)
    # orthogonal to each other and to the centroid of their band
    assert abs(unit[5] @ unit[300]) < 1e-6
    assert abs(unit[5] @ unit[6]) < 1e-6
    assert abs(unit[300] @ unit[301]) < 1e-6
    assert ts.attention[5] > ts.attention[6] + 3.9


def test_raw_embeddings_are_not_normalized():
    ts, _ = generate_synthetic(SyntheticSpec())
    assert not ts.normalized


def test_positional_profile_is_u_shaped():
    profile = positional_profile(5)
    np.testing.assert_allclose(profile, [1.0, 0.25, 0.0, 0.25, 1.0])
    assert positional_profile(1).tolist() == [1.0]


@pytest.mark.parametrize("kwargs, message", [
    ({'planted_informative': (576,)}, "planted informative indices"),
    ({'planted_informative': (3, 3)}, "unique"),
    ({'noise_sigma': -0.1}, "noise_sigma"),
    ({'positional_bias_strength': float('nan')}, "positional_bias_strength"),
    ({'cluster_count': 0}, "cluster_count"),
    ({'grid_h': 0}, "positive"),
])
def test_spec_validation(kwargs, message):
    with pytest.raises(ValueError, match=message):
        SyntheticSpec(**kwargs)


def test_spec_from_dict():
    spec = SyntheticSpec.from_dict({'grid_h': 8, 'grid_w': 8, 'planted_count': 5, 'seed': 9})
    assert spec.n_tokens == 64
    assert len(spec.planted_informative) == 5
    assert list(spec.planted_informative) == sorted(spec.planted_informative)
    assert SyntheticSpec.from_dict(spec.to_dict()).planted_informative == spec.planted_informative
    with pytest.raises(ValueError, match="Unknown synthetic spec keys: colour"):
        SyntheticSpec.from_dict({'colour': 'red'})
    with pytest.raises(ValueError, match="planted_count"):
        with_random_planted(SyntheticSpec(grid_h=2, grid_w=2), 5)


def test_trial_seeds_are_stable_and_distinct():
    seeds = trial_seeds(0, 100)
    assert seeds == trial_seeds(0, 100)
    assert len(set(seeds)) == 100
    assert all(0 <= seed < 2 ** 64 for seed in seeds)
    assert trial_seeds(0, 5) == seeds[:5]
    assert trial_seeds(1, 5) != seeds[:5]


def test_trial_seeds_golden_values():
    assert trial_seeds(0, 3) == [
        8668861027912758289,
        4881901421217228719,
        16452687389592421897,
    ]
