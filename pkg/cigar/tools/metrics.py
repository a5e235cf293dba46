"""
    This file is part of cigar.


    Leave-one-out ranking metrics. Each user contributes the 1-based
    position of their held-out item, or 0 when the item was never ranked
    (it fell outside the candidate set). Ties are resolved by ascending
    item id, so a position is fully determined by the scores:

        rank = 1 + #(score > s_t) + #(score == s_t and id < t)

    HR@N is the fraction of users with 0 < rank ≤ N and MRR@N the mean
    of 1/rank over the same users (0 elsewhere).

"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np


MISS = 0


def full_rank(scores: np.ndarray, target: int, exclude: np.ndarray = None) -> int:
    """ Position of target among all items, with excluded items ranked
    last. """
    scores = np.array(scores, dtype=np.float64)

    if exclude is not None and len(exclude):
        scores[exclude] = -np.inf

    return tie_rank(scores, np.arange(len(scores)), scores[target], target)


def candidate_rank(scores: np.ndarray, items: np.ndarray, target: int) -> int:
    """ Position of target among the scored candidate items, or MISS when
    it is not one of them. """
    items = np.asarray(items)
    found = np.flatnonzero(items == target)

    if not len(found):
        return MISS

    return tie_rank(np.asarray(scores, dtype=np.float64), items, scores[found[0]], target)


def tie_rank(scores: np.ndarray, items: np.ndarray, target_score: float, target: int) -> int:
    return 1 + int((scores > target_score).sum()) + int(((scores == target_score) & (items < target)).sum())


def top_n(scores: np.ndarray, items: np.ndarray, n: int) -> np.ndarray:
    """ The n highest-scoring items, ties by ascending id. """
    order = np.lexsort((items, -np.asarray(scores, dtype=np.float64)))
    return np.asarray(items)[order[:n]]


def hit_rate(ranks: np.ndarray, n: int) -> float:
    ranks = np.asarray(ranks)
    return float(((ranks > 0) & (ranks <= n)).mean()) if len(ranks) else 0.0


def reciprocal_rank(ranks: np.ndarray, n: int) -> float:
    ranks = np.asarray(ranks, dtype=np.float64)

    if not len(ranks):
        return 0.0

    hits = (ranks > 0) & (ranks <= n)
    return float(np.where(hits, 1 / np.where(hits, ranks, 1), 0).mean())


def collect_ranks(rank_user: Callable[[int], int], users: np.ndarray, threads: int = 1) -> np.ndarray:
    """ Ranks every user, in user order regardless of thread count. """
    users = np.asarray(users).tolist()

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            ranks = list(executor.map(rank_user, users))
    else:
        ranks = [rank_user(user) for user in users]

    return np.asarray(ranks, dtype=np.int64)


def summarize(ranks: np.ndarray, ns: list) -> dict:
    """ HR and MRR at every cutoff in ns. """
    return {
        'num_users': len(ranks),
        'hr': {n: hit_rate(ranks, n) for n in ns},
        'mrr': {n: reciprocal_rank(ranks, n) for n in ns},
        'ranks': np.asarray(ranks),
    }
