"""
    This file is part of cigar.


    Wall-clock timing of Top-N retrieval. Queries are independent and run
    one after another on a single thread; each method gets a warm-up pass
    first, then the same query list is timed several times so the spread
    between repeats can be reported with the means.

    Methods:
        linear-real     score every item with a real-valued model
        linear-hamming  exhaustive Hamming scan over item codes
        mih             multi-index hashing lookup
        cigar-pipeline  MIH candidates re-ranked by a real-valued model

"""

import logging
import time
from typing import Callable

import numpy as np

from cigar.classes.errors import ConfigurationError
from cigar.classes.progress import progress
from cigar.classes.wrap import LatencyTable
from cigar.const import data
from cigar.models.ranker import RankerModel, rerank
from cigar.setup import settings
from cigar.tools import metrics, mih
from cigar.tools.codes import BinaryCodeMatrix
from cigar.tools.dataset import InteractionDataset
from cigar.tools.mih import MultiIndexHashTable


log = logging.getLogger(__name__)


def query_users(dataset: InteractionDataset, num_queries: int, seed: int = None) -> np.ndarray:
    """ A seeded sample of users, with repeats once every user is used. """
    rng = np.random.default_rng(settings.seed if seed is None else seed)
    return rng.permutation(np.resize(np.arange(dataset.num_users), max(num_queries, dataset.num_users)))[:num_queries]


def _method(method: str, dataset: InteractionDataset, n: int, c: int, l_max: int, model: RankerModel, user_codes: BinaryCodeMatrix, item_codes: BinaryCodeMatrix, index: MultiIndexHashTable) -> Callable[[int], np.ndarray]:
    """ The per-user Top-N function a method times. """
    requirements = {
        data.LINEAR_REAL: (model,),
        data.LINEAR_HAMMING: (user_codes, item_codes),
        data.MIH: (user_codes, index),
        data.CIGAR_PIPELINE: (user_codes, index, model),
    }

    if method not in requirements:
        raise ConfigurationError(f'Unknown benchmark method: {method}')

    if any(requirement is None for requirement in requirements[method]):
        raise ConfigurationError(f'Benchmark method {method} is missing a model, codes or index')

    def linear_real(user: int) -> np.ndarray:
        scores = model.scores(user)
        scores[dataset.train_items(user)] = -np.inf
        return metrics.top_n(scores, np.arange(dataset.num_items), n)

    def linear_hamming(user: int) -> np.ndarray:
        train = dataset.train_items(user)
        return mih.linear_scan_topc(item_codes, user_codes.row(user), n + len(train)).without(train).items[:n]

    def hashing(user: int) -> np.ndarray:
        train = dataset.train_items(user)
        return mih.query(index, user_codes.row(user), n + len(train), l_max).without(train).items[:n]

    def pipeline(user: int) -> np.ndarray:
        candidates = mih.query(index, user_codes.row(user), c, l_max)
        return rerank(model, user, candidates, n, dataset.train_items(user))

    return {
        data.LINEAR_REAL: linear_real,
        data.LINEAR_HAMMING: linear_hamming,
        data.MIH: hashing,
        data.CIGAR_PIPELINE: pipeline,
    }[method]


def time_queries(top_n: Callable[[int], np.ndarray], users: np.ndarray) -> np.ndarray:
    """ Seconds taken by each query, in order. """
    timings = np.empty(len(users))

    for position, user in enumerate(users.tolist()):
        start = time.perf_counter()
        top_n(user)
        timings[position] = time.perf_counter() - start

    return timings


def bench_retrieval(methods: list, dataset: InteractionDataset, num_queries: int = None, model: RankerModel = None, user_codes: BinaryCodeMatrix = None, item_codes: BinaryCodeMatrix = None, index: MultiIndexHashTable = None, n: int = None, c: int = None, l_max: int = None, warmup: int = None, repeats: int = None) -> LatencyTable:
    """ Times Top-N retrieval for each method over the same users. """
    num_queries = settings.bench_queries if num_queries is None else num_queries
    n = settings.top_n if n is None else n
    c = settings.candidates if c is None else c
    l_max = settings.max_radius if l_max is None else l_max
    warmup = settings.bench_warmup if warmup is None else warmup
    repeats = max(settings.bench_repeats if repeats is None else repeats, 1)

    if num_queries <= 0:
        return LatencyTable([])

    users = query_users(dataset, num_queries)
    rows = []

    for method in methods:
        top_n = _method(method, dataset, n, c, l_max, model, user_codes, item_codes, index)
        time_queries(top_n, users[:warmup])

        runs = [time_queries(top_n, users) for _ in progress(range(repeats), log, desc=method)]
        totals = np.array([run.sum() for run in runs])
        pooled = np.concatenate(runs) * 1000

        rows.append({
            'method': method,
            'queries': num_queries,
            'repeats': repeats,
            'total_s': float(totals.mean()),
            'total_s_std': float(totals.std()),
            'mean_ms': float(pooled.mean()),
            'p50_ms': float(np.percentile(pooled, 50)),
            'p90_ms': float(np.percentile(pooled, 90)),
            'p99_ms': float(np.percentile(pooled, 99)),
            'max_ms': float(pooled.max()),
        })

        log.info('%s: %.3fs for %d queries (±%.3fs over %d repeats)', method, totals.mean(), num_queries, totals.std(), repeats)

    return LatencyTable(rows)
