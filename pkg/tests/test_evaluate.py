"""
    This file is part of cigar.


    Tests for leave-one-out evaluation: ranking metrics, full-ranking
    evaluation and the candidate plus re-ranking pipeline.

"""

import numpy as np
import pytest
from pytest import fixture

from cigar.classes.cache import FunctionCache
from cigar.const import data, models
from cigar.models.ranker import RankerModel
from cigar.reports import evaluate
from cigar.setup import settings
from cigar.tools import codes, metrics, mih
from cigar.tools.dataset import InteractionDataset
from cigar.tools.mih import CandidateSet


@fixture
def dataset():
    rng = np.random.default_rng(0)
    train, valid, test = [], [], []
    for _ in range(50):
        items = rng.choice(100, size=6, replace=False)
        train.append(items[:4].tolist())
        valid.append(items[4])
        test.append(items[5])
    return InteractionDataset.from_lists(train, 100, np.array(valid), np.array(test))

@fixture
def random_model(dataset):
    rng = np.random.default_rng(1)
    return RankerModel(models.BPR_MF, {'user_emb': rng.normal(size=(50, 8)), 'item_emb': rng.normal(size=(100, 8))}, 50, 100)

@fixture
def hashing(dataset):
    rng = np.random.default_rng(2)
    user_codes = codes.binarize(rng.normal(size=(50, 64)))
    item_codes = codes.binarize(rng.normal(size=(100, 64)))
    return user_codes, item_codes, mih.build_index(item_codes, 4)


def teardown_function():
    settings.reset()
    FunctionCache.clear_all()


def placing_model(dataset: InteractionDataset, rank: int) -> RankerModel:
    """ Puts every user's test item at the given rank using free items
    above it. """
    user_emb = np.zeros((dataset.num_users, dataset.num_items))

    for user in range(dataset.num_users):
        taken = np.concatenate((dataset.train_items(user), [dataset.test[user]]))
        above = np.setdiff1d(np.arange(dataset.num_items), taken)[:rank - 1]
        user_emb[user, above] = rank + 1
        user_emb[user, dataset.test[user]] = 1

    return RankerModel(models.BPR_MF, {'user_emb': user_emb, 'item_emb': np.eye(dataset.num_items)}, dataset.num_users, dataset.num_items)


def test_full_rank_ties():
    scores = np.array([0.5, 0.9, 0.5, 0.5])

    assert metrics.full_rank(scores, 2) == 3
    assert metrics.full_rank(scores, 0) == 2
    assert metrics.full_rank(scores, 2, exclude=np.array([1, 0])) == 1


def test_candidate_rank_miss():
    assert metrics.candidate_rank(np.array([1.0, 2.0]), np.array([4, 7]), 9) == metrics.MISS
    assert metrics.candidate_rank(np.array([1.0, 2.0]), np.array([4, 7]), 4) == 2


def test_hit_rate_and_reciprocal_rank():
    ranks = np.array([1, 3, 0, 12])

    assert metrics.hit_rate(ranks, 10) == 0.5
    assert metrics.reciprocal_rank(ranks, 10) == pytest.approx((1 + 1 / 3) / 4)
    assert metrics.hit_rate(np.array([]), 10) == 0.0


def test_oracle(dataset):
    report = evaluate.evaluate_full(placing_model(dataset, 1), dataset, 10)

    assert report.hr_at_n == 1.0
    assert report.mrr_at_n == 1.0
    assert report.num_users_evaluated == 50


def test_rank_three(dataset):
    report = evaluate.evaluate_full(placing_model(dataset, 3), dataset, 10)

    assert report.hr_at_n == 1.0
    assert report.mrr_at_n == pytest.approx(1 / 3)
    assert report.at(10).hr == 1.0


def test_random_scores():
    # 99 non-training items per user, so HR@10 is 10/99 in expectation
    rng = np.random.default_rng(3)
    train = [[u % 100] for u in range(2000)]
    test = [(u % 100 + rng.integers(1, 100)) % 100 for u in range(2000)]
    dataset = InteractionDataset.from_lists(train, 100, np.full(2000, -1), np.array(test))
    model = RankerModel(models.BPR_MF, {'user_emb': rng.normal(size=(2000, 8)), 'item_emb': rng.normal(size=(100, 8))}, 2000, 100)
    report = evaluate.evaluate_full(model, dataset, 10)

    assert report.hr_at_n == pytest.approx(0.1, abs=0.03)


def test_cutoffs_monotone(dataset, random_model):
    report = evaluate.evaluate_full(random_model, dataset, [1, 5, 10, 50])
    hrs = [report.at(n).hr for n in (1, 5, 10, 50)]
    mrrs = [report.at(n).mrr for n in (1, 5, 10, 50)]

    assert hrs == sorted(hrs)
    assert mrrs == sorted(mrrs)
    assert all(mrr <= hr for hr, mrr in zip(hrs, mrrs))
    assert report.n == 1


@pytest.mark.parametrize('source', data.SOURCES)
def test_exhaustive_candidates_match_full(dataset, random_model, hashing, source):
    user_codes, item_codes, index = hashing
    full = evaluate.evaluate_full(random_model, dataset, 10)
    cigar = evaluate.evaluate_cigar(user_codes, index, random_model, dataset, 10, c=100, source=source, item_codes=item_codes)

    assert cigar.ranks.tolist() == full.ranks.tolist()
    assert cigar.hr_at_n == full.hr_at_n
    assert cigar.mrr_at_n == full.mrr_at_n


def test_candidate_hr_bounds_pipeline(dataset, random_model, hashing):
    user_codes, item_codes, index = hashing

    for c in (5, 20, 50):
        stage = evaluate.evaluate_candidates(user_codes, index, dataset, c)
        pipeline = evaluate.evaluate_cigar(user_codes, index, random_model, dataset, [1, 5, 10], c=c)
        assert all(pipeline.at(n).hr <= stage.hr_at_n for n in (1, 5, 10))


def test_every_item_a_candidate(dataset, hashing):
    user_codes, item_codes, index = hashing
    report = evaluate.evaluate_candidates(user_codes, index, dataset, 200, source=data.SOURCE_LINEAR, item_codes=item_codes)

    assert report.hr_at_n == 1.0
    assert report.stage == 'candidates'


def test_candidate_set(dataset, random_model):
    # Test item placed first among two distractors, one of them a training item
    lists = [[dataset.train_items(u)[0], dataset.test[u], (dataset.test[u] + 1) % 100] for u in range(50)]
    report = evaluate.evaluate_candidate_set(random_model, CandidateSet.from_lists(lists), dataset, 10)

    assert report.hr_at_n == 1.0
    assert set(report.ranks.tolist()) <= {1, 2}


def test_valid_split(dataset):
    report = evaluate.evaluate_full(placing_model(dataset, 1), dataset, 1, split=data.VALID)

    assert report.split == data.VALID
    assert report.hr_at_n < 1.0


def test_evaluation_users(dataset):
    users = evaluate.evaluation_users(dataset, data.TEST, limit=10, seed=4)

    assert len(users) == 10
    assert users.tolist() == sorted(users.tolist())
    assert users.tolist() == evaluate.evaluation_users(dataset, data.TEST, limit=10, seed=4).tolist()

    settings.eval_users = 5
    assert len(evaluate.evaluation_users(dataset, data.TEST)) == 5


def test_users_without_held_out():
    dataset = InteractionDataset.from_lists([[0], [1], [2]], 5, np.array([3, -1, 4]), np.array([-1, -1, 1]))

    assert evaluate.evaluation_users(dataset, data.VALID).tolist() == [0, 2]
    assert evaluate.evaluation_users(dataset, data.TEST).tolist() == [2]


def test_threads_keep_order(dataset, random_model):
    single = evaluate.evaluate_full(random_model, dataset, 10, keep_ranks=True)
    settings.threads = 4
    pooled = evaluate.evaluate_full(random_model, dataset, 10, keep_ranks=True)

    assert single.per_user_ranks == pooled.per_user_ranks
