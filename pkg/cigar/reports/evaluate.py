"""
    This file is part of cigar.


    Leave-one-out evaluation of full rankings, of the candidate stage on
    its own, and of the candidate generation plus re-ranking pipeline.

    Only each user's training items are excluded when ranking; the other
    held-out item stays in the pool so valid and test are treated alike.
    In the pipeline a held-out item outside the user's candidates is a
    miss, which makes candidate HR@c an upper bound for pipeline HR@N.

"""

import logging

import numpy as np

from cigar.classes.wrap import EvalReport
from cigar.const import data
from cigar.models.ranker import RankerModel
from cigar.setup import settings
from cigar.tools import metrics, mih
from cigar.tools.codes import BinaryCodeMatrix
from cigar.tools.dataset import InteractionDataset
from cigar.tools.mih import CandidateSet, MultiIndexHashTable


log = logging.getLogger(__name__)


def evaluation_users(dataset: InteractionDataset, split: str, limit: int = None, seed: int = None) -> np.ndarray:
    """ Users with a held-out item in the split, optionally a seeded
    random subset of them in ascending order. """
    users = np.flatnonzero(dataset.held_out(split) >= 0)
    limit = settings.eval_users if limit is None else limit

    if limit is not None and limit < len(users):
        rng = np.random.default_rng(settings.seed if seed is None else seed)
        users = np.sort(rng.choice(users, size=limit, replace=False))

    return users


def _cutoffs(n: int | list) -> list:
    if n is None:
        return [settings.top_n]
    return [n] if isinstance(n, int) else list(n)


def evaluate_full(model: RankerModel, dataset: InteractionDataset, n: int | list = None, split: str = data.TEST, users: np.ndarray = None, keep_ranks: bool = False) -> EvalReport:
    """ HR@N and MRR@N with every non-training item ranked. """
    held_out = dataset.held_out(split)
    users = evaluation_users(dataset, split) if users is None else users

    def rank_user(user: int) -> int:
        return metrics.full_rank(model.scores(user), held_out[user], dataset.train_items(user))

    ranks = metrics.collect_ranks(rank_user, users, settings.threads)
    report = EvalReport(metrics.summarize(ranks, _cutoffs(n)), model.name, 'full', split, keep_ranks)
    log.info('%s full ranking on %s: HR@%d=%.4f', model.name, split, report.n, report.hr_at_n)

    return report


def evaluate_candidate_set(model: RankerModel, candidates: CandidateSet, dataset: InteractionDataset, n: int | list = None, split: str = data.TEST, users: np.ndarray = None, keep_ranks: bool = False) -> EvalReport:
    """ Re-ranks precomputed candidates. """
    held_out = dataset.held_out(split)
    users = evaluation_users(dataset, split) if users is None else users

    def rank_user(user: int) -> int:
        items = candidates.for_user(user)
        items = items[~np.isin(items, dataset.train_items(user))]
        return metrics.candidate_rank(model.scores(user, items), items, held_out[user])

    ranks = metrics.collect_ranks(rank_user, users, settings.threads)
    return EvalReport(metrics.summarize(ranks, _cutoffs(n)), model.name, 'cigar', split, keep_ranks)


def evaluate_cigar(user_codes: BinaryCodeMatrix, index: MultiIndexHashTable, model: RankerModel, dataset: InteractionDataset, n: int | list = None, c: int = None, split: str = data.TEST, l_max: int = None, source: str = data.SOURCE_MIH, item_codes: BinaryCodeMatrix = None, users: np.ndarray = None, keep_ranks: bool = False) -> EvalReport:
    """ Retrieves c candidates per user, re-ranks them with the model and
    scores the result. """
    c = settings.candidates if c is None else c
    l_max = settings.max_radius if l_max is None else l_max
    held_out = dataset.held_out(split)
    users = evaluation_users(dataset, split) if users is None else users
    popularity = dataset.popularity_ranking()

    def rank_user(user: int) -> int:
        items = mih.retrieve(dataset, user, c, source, user_codes, index, item_codes, l_max, popularity).items
        return metrics.candidate_rank(model.scores(user, items), items, held_out[user])

    ranks = metrics.collect_ranks(rank_user, users, settings.threads)
    report = EvalReport(metrics.summarize(ranks, _cutoffs(n)), model.name, 'cigar', split, keep_ranks)
    report.extra['c'] = c
    log.info('%s on %d %s candidates, %s: HR@%d=%.4f', model.name, c, source, split, report.n, report.hr_at_n)

    return report


def evaluate_candidates(user_codes: BinaryCodeMatrix, index: MultiIndexHashTable, dataset: InteractionDataset, c: int = None, split: str = data.TEST, l_max: int = None, source: str = data.SOURCE_MIH, item_codes: BinaryCodeMatrix = None, users: np.ndarray = None, label: str = None, keep_ranks: bool = False) -> EvalReport:
    """ HR@c of the candidate stage: whether the held-out item is among
    the user's c candidates. Ranks are candidate-list positions. """
    c = settings.candidates if c is None else c
    l_max = settings.max_radius if l_max is None else l_max
    held_out = dataset.held_out(split)
    users = evaluation_users(dataset, split) if users is None else users
    popularity = dataset.popularity_ranking()

    def rank_user(user: int) -> int:
        items = mih.retrieve(dataset, user, c, source, user_codes, index, item_codes, l_max, popularity).items
        found = np.flatnonzero(items == held_out[user])
        return int(found[0]) + 1 if len(found) else metrics.MISS

    ranks = metrics.collect_ranks(rank_user, users, settings.threads)
    report = EvalReport(metrics.summarize(ranks, [c]), label or source, 'candidates', split, keep_ranks)
    log.info('%s candidates on %s: HR@%d=%.4f', report.model, split, c, report.hr_at_n)

    return report
