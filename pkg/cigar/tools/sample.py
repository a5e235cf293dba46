"""
    This file is part of cigar.


    Triplet sampling for pairwise training. A triplet (u, i, j) pairs a
    user with one of their training items and with an item they have not
    interacted with. Users are drawn uniformly (not by activity), the
    positive uniformly from the user's training items, and the negative
    uniformly from all items with rejection.

    Candidate-oriented sampling mixes in hard negatives: with probability
    h a triplet's negative is instead drawn from the user's retrieved
    candidates that are not training items.

    Sampling can run in a background thread that fills a bounded queue
    while the optimizer consumes batches. The producer owns its random
    generator, so batches come out in the same order for the same seed
    whether or not the thread is used.

"""

import logging
import queue
import threading
from typing import NamedTuple

import numpy as np

from cigar.classes.errors import EmptyDatasetError, ConfigurationError, SamplingError
from cigar.tools.dataset import InteractionDataset
from cigar.tools.mih import CandidateSet


log = logging.getLogger(__name__)


class TripletBatch(NamedTuple):
    users: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray
    candidate_branch: np.ndarray = None
    fallbacks: int = 0

    def triples(self) -> list:
        return list(zip(self.users.tolist(), self.positives.tolist(), self.negatives.tolist()))

    @property
    def size(self) -> int:
        return len(self.users)


def sample_triplets(dataset: InteractionDataset, batch_size: int, rng: np.random.Generator) -> TripletBatch:
    """ batch_size triplets with uniform users, uniform positives and
    rejection-sampled uniform negatives. """
    degrees = dataset.degrees
    eligible = np.flatnonzero(degrees > 0)

    if not len(eligible):
        raise EmptyDatasetError('Cannot sample triplets from a dataset without training interactions')

    users = eligible[rng.integers(len(eligible), size=batch_size)]

    if np.any(degrees[users] >= dataset.num_items):
        raise SamplingError('A sampled user has interacted with every item, no negative exists')

    offsets = np.floor(rng.random(batch_size) * degrees[users]).astype(np.int64)
    positives = dataset.train_indices[dataset.train_indptr[users] + offsets]
    negatives = rng.integers(dataset.num_items, size=batch_size)
    rejected = np.flatnonzero(dataset.contains(users, negatives))

    while len(rejected):
        negatives[rejected] = rng.integers(dataset.num_items, size=len(rejected))
        rejected = rejected[dataset.contains(users[rejected], negatives[rejected])]

    return TripletBatch(users, positives, negatives)


def sample_candidate_oriented(dataset: InteractionDataset, candidates: CandidateSet, h: float, batch_size: int, rng: np.random.Generator, pool: CandidateSet = None) -> TripletBatch:
    """ Triplets whose negative comes, with probability h, from the
    user's candidates minus their training items. A user whose candidate
    pool is empty keeps the global negative; those are counted as
    fallbacks. Pass a precomputed pool (candidates.negatives(dataset)) to
    skip recomputing it per batch. """
    if not 0 <= h <= 1:
        raise ConfigurationError(f'Sampling ratio must lie in [0, 1], got {h}')

    # Global triplets first so that h=0 reproduces sample_triplets exactly
    batch = sample_triplets(dataset, batch_size, rng)
    branch = rng.random(batch_size) < h

    if not branch.any():
        return TripletBatch(batch.users, batch.positives, batch.negatives, branch, 0)

    pool = candidates.negatives(dataset) if pool is None else pool
    users = batch.users[branch]
    sizes = np.diff(pool.indptr)[users]
    offsets = np.floor(rng.random(len(users)) * sizes).astype(np.int64)
    available = sizes > 0

    negatives = batch.negatives.copy()
    drawn = np.flatnonzero(branch)[available]
    negatives[drawn] = pool.items[pool.indptr[users[available]] + offsets[available]]

    fallbacks = int((~available).sum())

    if fallbacks:
        log.warning('%d of %d candidate-branch triplets had no candidate negatives and used a global negative', fallbacks, len(users))

    return TripletBatch(batch.users, batch.positives, negatives, branch, fallbacks)


class Sampler:
    """ Iterator of triplet batches, optionally produced ahead of time in
    a background thread. Keeps running telemetry on how many negatives
    came from the candidate branch. """
    def __init__(self, dataset: InteractionDataset, batch_size: int, seed: int, h: float = 0.0, candidates: CandidateSet = None, queue_size: int = 4, threaded: bool = True) -> None:
        self.dataset = dataset
        self.batch_size = batch_size
        self.h = h
        self.candidates = candidates
        self.pool = candidates.negatives(dataset) if candidates is not None else None
        self.rng = np.random.default_rng(seed)
        self.threaded = threaded

        self.sampled = 0
        self.candidate_negatives = 0
        self.fallbacks = 0

        self._queue = queue.Queue(maxsize=max(queue_size, 1))
        self._stop = threading.Event()
        self._thread = None

    def sample(self) -> TripletBatch:
        if self.candidates is None:
            return sample_triplets(self.dataset, self.batch_size, self.rng)

        return sample_candidate_oriented(self.dataset, self.candidates, self.h, self.batch_size, self.rng, self.pool)

    def start(self) -> 'Sampler':
        if self.threaded and self._thread is None:
            self._thread = threading.Thread(target=self._produce, name='triplet-sampler', daemon=True)
            self._thread.start()
        return self

    def close(self) -> None:
        self._stop.set()

        if self._thread is not None:
            # Unblock a producer waiting on a full queue
            while self._thread.is_alive():
                try:
                    self._queue.get_nowait()
                except queue.Empty:
                    pass
                self._thread.join(timeout=0.05)
            self._thread = None

    def _produce(self) -> None:
        while not self._stop.is_set():
            try:
                item = self.sample()
            except Exception as e:
                item = e

            while not self._stop.is_set():
                try:
                    self._queue.put(item, timeout=0.1)
                    break
                except queue.Full:
                    continue

            if isinstance(item, Exception):
                return

    def next_batch(self) -> TripletBatch:
        if self._thread is None:
            batch = self.sample()
        else:
            batch = self._queue.get()
            if isinstance(batch, Exception):
                raise batch

        self.sampled += batch.size
        self.fallbacks += batch.fallbacks

        if batch.candidate_branch is not None:
            self.candidate_negatives += int(batch.candidate_branch.sum()) - batch.fallbacks

        return batch

    @property
    def candidate_fraction(self) -> float:
        """ Fraction of sampled negatives that came from candidates. """
        return self.candidate_negatives / self.sampled if self.sampled else 0.0

    def telemetry(self) -> dict:
        return {
            'sampled': self.sampled,
            'candidate_negatives': self.candidate_negatives,
            'candidate_fraction': self.candidate_fraction,
            'fallbacks': self.fallbacks,
        }

    def __iter__(self):
        return self

    def __next__(self) -> TripletBatch:
        return self.next_batch()

    def __enter__(self) -> 'Sampler':
        return self.start()

    def __exit__(self, *args) -> None:
        self.close()
