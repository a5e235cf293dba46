"""
    This file is part of cigar.


    Tests for the retrieval benchmark.

"""

import numpy as np
import pytest
from pytest import fixture

from cigar.classes.errors import ConfigurationError
from cigar.classes.wrap import LatencyTable
from cigar.const import data, models
from cigar.models.ranker import RankerModel
from cigar.reports import bench
from cigar.setup import settings
from cigar.tools import codes, mih
from cigar.tools.dataset import InteractionDataset


@fixture
def rng():
    return np.random.default_rng(0)

@fixture
def dataset(rng):
    return InteractionDataset.from_lists([rng.choice(200, size=5, replace=False).tolist() for _ in range(30)], num_items=200)

@fixture
def artifacts(rng):
    model = RankerModel(models.BPR_MF, {'user_emb': rng.normal(size=(30, 8)), 'item_emb': rng.normal(size=(200, 8))}, 30, 200)
    user_codes = codes.binarize(rng.normal(size=(30, 64)))
    item_codes = codes.binarize(rng.normal(size=(200, 64)))
    return dict(model=model, user_codes=user_codes, item_codes=item_codes, index=mih.build_index(item_codes, 4))


def teardown_function():
    settings.reset()


def test_every_method(dataset, artifacts):
    table = bench.bench_retrieval(list(data.BENCH_METHODS), dataset, 20, n=10, c=50, warmup=5, repeats=2, **artifacts)
    frame = table.frame()

    assert list(frame.columns) == LatencyTable.columns
    assert frame['method'].tolist() == list(data.BENCH_METHODS)
    assert (frame['queries'] == 20).all()
    assert (frame['repeats'] == 2).all()
    assert (frame['p50_ms'] <= frame['p90_ms']).all()
    assert (frame['p99_ms'] <= frame['max_ms']).all()
    assert (frame['total_s'] > 0).all()


def test_no_queries(dataset, artifacts):
    table = bench.bench_retrieval(list(data.BENCH_METHODS), dataset, 0, **artifacts)

    assert len(table) == 0
    assert str(table) == 'No queries timed'


def test_unknown_method(dataset, artifacts):
    with pytest.raises(ConfigurationError):
        bench.bench_retrieval(['brute-force'], dataset, 5, **artifacts)


def test_missing_artifacts(dataset):
    with pytest.raises(ConfigurationError):
        bench.bench_retrieval([data.MIH], dataset, 5)


def test_query_users(dataset):
    users = bench.query_users(dataset, 70, seed=3)

    assert len(users) == 70
    assert set(users.tolist()) == set(range(30))
    assert users.tolist() == bench.query_users(dataset, 70, seed=3).tolist()


def test_csv(dataset, artifacts, tmp_path):
    table = bench.bench_retrieval([data.LINEAR_HAMMING], dataset, 5, warmup=0, repeats=1, **artifacts)
    table.to_csv(tmp_path / 'latency.csv')

    assert (tmp_path / 'latency.csv').read_text().splitlines()[0] == ','.join(LatencyTable.columns)
