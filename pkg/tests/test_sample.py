"""
    This file is part of cigar.


    Tests for triplet sampling, plain and candidate-oriented, and for the
    background sampler that feeds training.

"""

import numpy as np
import pytest
from pytest import fixture

from cigar.classes.errors import ConfigurationError, EmptyDatasetError, SamplingError
from cigar.tools import sample
from cigar.tools.dataset import InteractionDataset
from cigar.tools.mih import CandidateSet
from cigar.tools.sample import Sampler


@fixture
def dataset():
    rng = np.random.default_rng(2)
    train = [sorted(rng.choice(30, size=rng.integers(3, 10), replace=False).tolist()) for _ in range(30)]
    return InteractionDataset.from_lists(train, num_items=40)

@fixture
def candidates(dataset):
    # Every user's candidates: their training items plus the four items after the largest
    return CandidateSet.from_lists([
        np.concatenate((dataset.train_items(u), dataset.train_items(u).max() + np.arange(1, 5)))
        for u in range(dataset.num_users)
    ])


def test_single_triplet():
    dataset = InteractionDataset.from_lists([[0]], num_items=2)
    batch = sample.sample_triplets(dataset, 50, np.random.default_rng(0))

    assert set(batch.triples()) == {(0, 0, 1)}


def test_triplet_validity(dataset):
    batch = sample.sample_triplets(dataset, 5000, np.random.default_rng(1))

    assert batch.size == 5000
    assert dataset.contains(batch.users, batch.positives).all()
    assert not dataset.contains(batch.users, batch.negatives).any()


def test_deterministic(dataset):
    first = sample.sample_triplets(dataset, 100, np.random.default_rng(8))
    second = sample.sample_triplets(dataset, 100, np.random.default_rng(8))
    assert first.triples() == second.triples()


def test_positive_distribution():
    # One user with 4 training items: positives uniform over them
    dataset = InteractionDataset.from_lists([[0, 1, 2, 3]], num_items=10)
    batch = sample.sample_triplets(dataset, 40000, np.random.default_rng(3))
    counts = np.bincount(batch.positives, minlength=4)[:4]
    sigma = np.sqrt(40000 * 0.25 * 0.75)

    assert np.all(np.abs(counts - 10000) <= 3 * sigma)


def test_users_uniform():
    # Activity does not bias user sampling
    dataset = InteractionDataset.from_lists([[0], list(range(1, 9))], num_items=10)
    batch = sample.sample_triplets(dataset, 20000, np.random.default_rng(4))
    share = (batch.users == 0).mean()

    assert abs(share - 0.5) <= 3 * np.sqrt(0.25 / 20000)


def test_user_with_every_item():
    dataset = InteractionDataset.from_lists([[0, 1]], num_items=2)

    with pytest.raises(SamplingError):
        sample.sample_triplets(dataset, 10, np.random.default_rng(0))


def test_no_training():
    dataset = InteractionDataset.from_lists([[], []], num_items=3)

    with pytest.raises(EmptyDatasetError):
        sample.sample_triplets(dataset, 10, np.random.default_rng(0))


def test_h_zero_matches_plain(dataset, candidates):
    plain = sample.sample_triplets(dataset, 500, np.random.default_rng(6))
    oriented = sample.sample_candidate_oriented(dataset, candidates, 0.0, 500, np.random.default_rng(6))

    assert plain.triples() == oriented.triples()
    assert not oriented.candidate_branch.any()


def test_batches_without_candidate_branch(dataset, candidates):
    # With a small ratio and single-triplet batches most draws skip the candidate branch
    rng = np.random.default_rng(10)
    batches = [sample.sample_candidate_oriented(dataset, candidates, 0.1, 1, rng) for _ in range(50)]

    assert any(not batch.candidate_branch.any() for batch in batches)
    assert all(batch.size == 1 and batch.candidate_branch.shape == (1,) for batch in batches)


def test_sampler_h_zero(dataset, candidates):
    with Sampler(dataset, 32, seed=4, h=0.0, candidates=candidates) as sampler:
        for _ in range(3):
            sampler.next_batch()

    assert sampler.sampled == 96
    assert sampler.candidate_negatives == 0


def test_h_one_all_candidates(dataset, candidates):
    batch = sample.sample_candidate_oriented(dataset, candidates, 1.0, 2000, np.random.default_rng(7))

    for user, _, negative in batch.triples():
        assert negative in candidates.for_user(user)
        assert negative not in dataset.train_items(user)

    assert batch.fallbacks == 0


def test_h_half_binomial(dataset, candidates):
    batch = sample.sample_candidate_oriented(dataset, candidates, 0.5, 10000, np.random.default_rng(9))
    drawn = int(batch.candidate_branch.sum())

    assert abs(drawn - 5000) <= 3 * np.sqrt(10000 * 0.25)


def test_empty_pool_falls_back(dataset):
    # Candidates that are all training items leave nothing to draw from
    candidates = CandidateSet.from_lists([dataset.train_items(u) for u in range(dataset.num_users)])
    batch = sample.sample_candidate_oriented(dataset, candidates, 1.0, 300, np.random.default_rng(0))

    assert batch.fallbacks == 300
    assert not dataset.contains(batch.users, batch.negatives).any()


def test_ratio_out_of_range(dataset, candidates):
    with pytest.raises(ConfigurationError):
        sample.sample_candidate_oriented(dataset, candidates, 1.5, 10, np.random.default_rng(0))


def test_threaded_matches_inline(dataset, candidates):
    with Sampler(dataset, 64, seed=12, h=0.5, candidates=candidates, threaded=True) as threaded:
        first = [threaded.next_batch().triples() for _ in range(5)]

    with Sampler(dataset, 64, seed=12, h=0.5, candidates=candidates, threaded=False) as inline:
        second = [inline.next_batch().triples() for _ in range(5)]

    assert first == second


def test_sampler_telemetry(dataset, candidates):
    with Sampler(dataset, 1000, seed=1, h=1.0, candidates=candidates, queue_size=2) as sampler:
        for _ in range(3):
            next(sampler)

    telemetry = sampler.telemetry()

    assert telemetry['sampled'] == 3000
    assert telemetry['candidate_negatives'] == 3000
    assert telemetry['candidate_fraction'] == 1.0
    assert telemetry['fallbacks'] == 0


def test_sampler_forwards_errors():
    dataset = InteractionDataset.from_lists([[0, 1]], num_items=2)

    with Sampler(dataset, 10, seed=0) as sampler:
        with pytest.raises(SamplingError):
            sampler.next_batch()
