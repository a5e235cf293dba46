"""
    This file is part of cigar.


    Tests for the re-ranking models: scoring, loss gradients, constraints,
    re-ranking of candidates and training on toy data.

"""

import numpy as np
import pytest
from pytest import fixture

from cigar.classes.cache import FunctionCache
from cigar.classes.errors import ConfigurationError, PreconditionError
from cigar.const import models
from cigar.models import ranker
from cigar.models.ranker import RankerModel, RerankConfig
from cigar.setup import settings
from cigar.tools import codes
from cigar.tools.dataset import InteractionDataset
from cigar.tools.mih import CandidateList, CandidateSet
from cigar.tools.sample import TripletBatch


@fixture
def batch():
    return TripletBatch(np.array([0, 1, 2, 0]), np.array([0, 1, 2, 3]), np.array([1, 2, 3, 2]))

@fixture
def rng():
    return np.random.default_rng(7)

@fixture
def config():
    return RerankConfig(k=4, neumf_dim=3, mlp_arch=[5, 4], init_std=0.3, lam=0.01, margin=0.5)

@fixture
def toy():
    # Users 0-3 like items 0-3, users 4-7 like items 4-7
    train = [[g * 4 + (u + s) % 4 for s in range(2)] for u, g in ((u, u // 4) for u in range(8))]
    valid = [g * 4 + (u + 2) % 4 for u, g in ((u, u // 4) for u in range(8))]
    test = [g * 4 + (u + 3) % 4 for u, g in ((u, u // 4) for u in range(8))]
    return InteractionDataset.from_lists(train, 8, np.array(valid), np.array(test))


def teardown_function():
    settings.reset()
    FunctionCache.clear_all()


def check_gradients(kind: int, params: dict, batch: TripletBatch, config: RerankConfig, h: float = 1e-5) -> None:
    _, grads = ranker.loss_and_gradients(kind, params, batch, config)

    for name, value in params.items():
        grad = grads[name]
        analytic = grad.dense(value.shape) if hasattr(grad, 'rows') else grad
        numeric = np.zeros_like(value)

        for index in np.ndindex(value.shape):
            original = value[index]
            value[index] = original + h
            upper = ranker.loss_and_gradients(kind, params, batch, config)[0]
            value[index] = original - h
            lower = ranker.loss_and_gradients(kind, params, batch, config)[0]
            value[index] = original
            numeric[index] = (upper - lower) / (2 * h)

        assert np.allclose(analytic, numeric, rtol=1e-4, atol=1e-6), name


def test_bpr_mf_score():
    model = RankerModel(models.BPR_MF, {'user_emb': np.eye(3), 'item_emb': np.eye(3)}, 3, 3)

    assert model.score(0, 0) == 1.0
    assert model.score(0, 1) == 0.0
    assert model.scores(2).tolist() == [0.0, 0.0, 1.0]


def test_cml_score():
    user_emb = np.array([[0.2, 0.1]])
    item_emb = np.array([[0.2, 0.1], [0.2, 0.5]])
    model = RankerModel(models.CML, {'user_emb': user_emb, 'item_emb': item_emb}, 1, 2)

    assert model.score(0, 0) == 0.0
    assert model.score(0, 1) == pytest.approx(-0.4)


def test_neumf_gmf_only():
    # With the MLP half of w zeroed the score is w·(p_u ⊙ q_i)
    params = ranker.initialize(models.NEUMF, 2, 3, RerankConfig(neumf_dim=2, mlp_arch=[4]), np.random.default_rng(0))
    params['w'][2:] = 0
    model = RankerModel(models.NEUMF, params, 2, 3)
    expected = (params['item_emb'] * params['user_emb'][1]) @ params['w'][:2]

    assert np.allclose(model.scores(1), expected)


def test_pop_score():
    dataset = InteractionDataset.from_lists([[0, 1], [1], [1, 2]], num_items=4)
    model = ranker.popularity_model(dataset)

    assert model.scores(0).tolist() == [1.0, 3.0, 1.0, 0.0]
    assert ranker.train_ranker(dataset, RerankConfig(kind=models.POP)).kind == models.POP


def test_out_of_range():
    model = RankerModel(models.BPR_MF, {'user_emb': np.eye(2), 'item_emb': np.eye(2)}, 2, 2)

    with pytest.raises(PreconditionError):
        model.scores(5)

    with pytest.raises(PreconditionError):
        model.score(0, 2)


def test_bpr_loss_shift_invariant():
    positive, negative = np.array([0.5, -1.0, 2.0]), np.array([0.1, 0.3, 2.5])

    assert ranker.bpr_loss(positive + 7, negative + 7) == pytest.approx(ranker.bpr_loss(positive, negative))
    assert ranker.bpr_loss(np.zeros(2), np.zeros(2)) == pytest.approx(2 * np.log(2))


def test_hinge_loss():
    positive, negative = np.array([0.5, -1.0, 2.0]), np.array([0.1, 0.3, 2.5])

    assert ranker.hinge_loss(positive, negative, 0.5) == pytest.approx(0.1 + 1.8 + 1.0)
    assert ranker.hinge_loss(positive - 3, negative - 3, 0.5) == pytest.approx(ranker.hinge_loss(positive, negative, 0.5))
    assert ranker.hinge_loss(np.array([5.0]), np.array([0.0]), 1.0) == 0.0


def test_bpr_mf_gradients(batch, config, rng):
    params = ranker.initialize(models.BPR_MF, 3, 4, config, rng)
    check_gradients(models.BPR_MF, params, batch, config)


def test_cml_gradients(batch, config, rng):
    params = ranker.initialize(models.CML, 3, 4, config, rng)
    check_gradients(models.CML, params, batch, config)


def test_neumf_gradients(batch, config, rng):
    params = ranker.initialize(models.NEUMF, 3, 4, config, rng)
    for name in params:
        if name.startswith('mlp_b'):
            params[name] += rng.normal(0, 0.1, params[name].shape)
    check_gradients(models.NEUMF, params, batch, config)


def test_project_unit_ball(rng):
    matrix = rng.normal(0, 2, (10, 3))
    ranker.project_unit_ball(matrix)
    assert np.all(np.linalg.norm(matrix, axis=1) <= 1 + 1e-6)


def test_cml_training_stays_in_ball(toy):
    config = RerankConfig(kind=models.CML, k=4, num_epochs=5, iters_per_epoch=5, batch_size=32, learning_rate=0.1, init_std=0.5)
    model = ranker.train_ranker(toy, config)

    assert np.all(np.linalg.norm(model.user_emb, axis=1) <= 1 + 1e-6)
    assert np.all(np.linalg.norm(model.item_emb, axis=1) <= 1 + 1e-6)


def test_rerank_order_invariant(rng):
    model = RankerModel(models.BPR_MF, {'user_emb': rng.normal(size=(1, 4)), 'item_emb': rng.normal(size=(30, 4))}, 1, 30)
    items = np.arange(30)
    shuffled = rng.permutation(items)

    assert ranker.rerank(model, 0, items, 5).tolist() == ranker.rerank(model, 0, shuffled, 5).tolist()
    assert ranker.rerank(model, 0, items, 1).tolist() == [int(np.argmax(model.scores(0)))]


def test_rerank_exclusions():
    model = RankerModel(models.BPR_MF, {'user_emb': np.ones((1, 2)), 'item_emb': np.eye(3)[:, :2]}, 1, 3)
    cands = CandidateList(np.array([2, 0, 1]), np.zeros(3))

    assert ranker.rerank(model, 0, cands, 10, exclude=np.array([0, 1, 2])).tolist() == []
    assert ranker.rerank(model, 0, cands, 10, exclude=np.array([1])).tolist() == [0, 2]


def test_quantize_zero_embeddings():
    base = RankerModel(models.BPR_MF, {'user_emb': np.zeros((2, 8)), 'item_emb': np.zeros((3, 8))}, 2, 3)
    model = ranker.quantize_to_bprb(base)

    assert model.kind == models.BPR_B
    assert np.all(model.params['user_codes'] == 0xFF)
    assert model.scores(0).tolist() == [8.0, 8.0, 8.0]


def test_quantize_kind_mismatch():
    model = RankerModel(models.CML, {'user_emb': np.zeros((1, 8)), 'item_emb': np.zeros((1, 8))}, 1, 1)

    with pytest.raises(ConfigurationError):
        ranker.quantize_to_bprb(model)


def test_toy_separable():
    # User 0 likes item 0, user 1 likes item 1
    dataset = InteractionDataset.from_lists([[0], [1]], num_items=2)
    config = RerankConfig(kind=models.BPR_MF, k=4, num_epochs=20, iters_per_epoch=5, batch_size=16, learning_rate=0.05, init_std=0.1)
    model = ranker.train_ranker(dataset, config)

    assert model.score(0, 0) > model.score(0, 1)
    assert model.score(1, 1) > model.score(1, 0)


def test_candidate_oriented_training(toy):
    candidates = CandidateSet.from_lists([list(range(8)) for _ in range(8)])
    config = RerankConfig(kind=models.BPR_MF, k=4, h=1.0, num_epochs=2, iters_per_epoch=3, batch_size=16, eval_every=1)
    model = ranker.train_ranker(toy, config, candidates)

    assert model.candidate_oriented
    assert model.name == 'BPR-MF+'
    assert model.telemetry['candidate_fraction'] == 1.0
    assert model.telemetry['sampled'] == 2 * 3 * 16


def test_deterministic(toy):
    config = RerankConfig(kind=models.NEUMF, neumf_dim=3, mlp_arch=[4], num_epochs=2, iters_per_epoch=3, batch_size=16, seed=5)
    first = ranker.train_ranker(toy, config)
    second = ranker.train_ranker(toy, config)

    assert all(np.array_equal(first.params[name], second.params[name]) for name in first.params)


def test_invalid_config():
    with pytest.raises(ConfigurationError):
        RerankConfig(h=1.5).validate()

    with pytest.raises(ConfigurationError):
        ranker.train_ranker(InteractionDataset.from_lists([[0]], 2), RerankConfig(kind=models.BPR_B))


def test_save_load(toy, tmp_path):
    config = RerankConfig(kind=models.NEUMF, neumf_dim=3, mlp_arch=[4, 2], num_epochs=1, iters_per_epoch=2, batch_size=8)
    model = ranker.train_ranker(toy, config)
    model.save(tmp_path / 'ranker.cgrk')
    loaded = RankerModel.load(tmp_path / 'ranker.cgrk')

    assert loaded.kind == models.NEUMF
    assert loaded.name == 'NeuMF'
    assert np.allclose(loaded.scores(3), model.scores(3))


@pytest.mark.parametrize('kind', [models.BPR_MF, models.CML, models.NEUMF])
@pytest.mark.parametrize('seed', range(100))
def test_gradients_random_instances(kind, seed, config):
    rng = np.random.default_rng(seed)
    num_users, num_items = int(rng.integers(2, 5)), int(rng.integers(3, 6))
    batch = TripletBatch(rng.integers(0, num_users, 5), rng.integers(0, num_items, 5), rng.integers(0, num_items, 5))
    params = ranker.initialize(kind, num_users, num_items, config, rng)
    for name in params:
        if name.startswith('mlp_b'):
            params[name] += rng.normal(0, 0.1, params[name].shape)
    check_gradients(kind, params, batch, config)


@pytest.mark.parametrize('h', [0.0, 0.5, 1.0])
def test_cml_candidate_oriented_training(toy, h):
    candidates = CandidateSet.from_lists([list(range(8)) for _ in range(8)])
    config = RerankConfig(kind=models.CML, k=4, h=h, num_epochs=2, iters_per_epoch=3, batch_size=16, learning_rate=0.1, init_std=0.5)
    model = ranker.train_ranker(toy, config, candidates)

    assert model.name == 'CML+'
    assert model.telemetry['sampled'] == 2 * 3 * 16
    assert np.all(np.linalg.norm(model.item_emb, axis=1) <= 1 + 1e-6)

    if h == 0.0:
        assert model.telemetry['candidate_negatives'] == 0


def test_code_model_keeps_label(tmp_path):
    user_codes = codes.binarize(np.array([[1.0, -1.0, 1.0, 1.0, -1.0, 1.0, -1.0, -1.0]]))
    item_codes = codes.binarize(np.array([[1.0] * 8, [-1.0] * 8]))
    model = ranker.code_model(user_codes, item_codes, 'HashRec')
    model.save(tmp_path / 'hashrec.cgrk')
    loaded = RankerModel.load(tmp_path / 'hashrec.cgrk')

    assert loaded.name == 'HashRec'
    assert 'label' not in loaded.params
    assert loaded.scores(0).tolist() == model.scores(0).tolist()

    ranker.quantize_to_bprb(RankerModel(models.BPR_MF, {'user_emb': np.ones((1, 8)), 'item_emb': np.ones((2, 8))}, 1, 2)).save(tmp_path / 'bprb.cgrk')
    assert RankerModel.load(tmp_path / 'bprb.cgrk').name == 'BPR-B'
