"""
    This file is part of cigar.


    This module turns raw implicit-feedback logs into the leave-one-out
    dataset every model trains and evaluates on.

    Every logged action counts as positive feedback: ratings are accepted
    but ignored, and repeated (user, item) events collapse to one
    interaction before anything else happens. The k-core filter then
    iterates to the unique fixed point where every user and item keeps at
    least k interactions, and the split holds out one random action per
    user for validation and one for testing.

    Users and items are remapped to dense ids in order of first appearance,
    so the same log and seed always give the same dataset.

"""

import logging
import re
from typing import Iterator, NamedTuple

import numpy as np
import pandas as pd

from cigar.classes import container
from cigar.classes.errors import ConfigurationError, EmptyDatasetError, InputError, ParseError, PreconditionError
from cigar.const import data, formats


log = logging.getLogger(__name__)


class Interaction(NamedTuple):
    user: int
    item: int
    timestamp: int | None = None


class Interactions:
    """ Column-oriented list of interactions. Behaves like a list of
    Interaction tuples but keeps the columns as numpy arrays. """
    def __init__(self, users: np.ndarray, items: np.ndarray, timestamps: np.ndarray = None) -> None:
        self.users = np.asarray(users, dtype=np.int64)
        self.items = np.asarray(items, dtype=np.int64)
        self.timestamps = None if timestamps is None else np.asarray(timestamps, dtype=np.int64)

    @classmethod
    def from_pairs(cls, pairs: list) -> 'Interactions':
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        return cls(pairs[:, 0], pairs[:, 1])

    def subset(self, mask: np.ndarray) -> 'Interactions':
        return Interactions(self.users[mask], self.items[mask], None if self.timestamps is None else self.timestamps[mask])

    def pairs(self) -> set:
        return set(zip(self.users.tolist(), self.items.tolist()))

    def __len__(self) -> int:
        return len(self.users)

    def __getitem__(self, index: int) -> Interaction:
        timestamp = None if self.timestamps is None else int(self.timestamps[index])
        return Interaction(int(self.users[index]), int(self.items[index]), timestamp)

    def __iter__(self) -> Iterator[Interaction]:
        return (self[index] for index in range(len(self)))


class InteractionDataset:
    """ Leave-one-out dataset. Training items are stored per user as a
    sorted CSR structure; valid and test hold one item per user (-1 where
    a dataset was built without held-out items). """
    def __init__(self, num_users: int, num_items: int, train_indptr: np.ndarray, train_indices: np.ndarray, valid: np.ndarray, test: np.ndarray, user_remap: np.ndarray = None, item_remap: np.ndarray = None) -> None:
        self.num_users = int(num_users)
        self.num_items = int(num_items)
        self.train_indptr = np.asarray(train_indptr, dtype=np.int64)
        self.train_indices = np.asarray(train_indices, dtype=np.int64)
        self.valid = np.asarray(valid, dtype=np.int64)
        self.test = np.asarray(test, dtype=np.int64)
        self.user_remap = np.arange(self.num_users) if user_remap is None else np.asarray(user_remap, dtype=np.int64)
        self.item_remap = np.arange(self.num_items) if item_remap is None else np.asarray(item_remap, dtype=np.int64)

        # Sorted (user, item) keys for vectorized membership tests
        self._train_keys = np.repeat(np.arange(self.num_users, dtype=np.int64), self.degrees) * self.num_items + self.train_indices

    @classmethod
    def from_lists(cls, train: list, num_items: int, valid: list = None, test: list = None) -> 'InteractionDataset':
        """ Builds a dataset straight from per-user training item lists. """
        train = [sorted(set(items)) for items in train]
        indptr = np.concatenate(([0], np.cumsum([len(items) for items in train])))
        indices = np.concatenate([np.asarray(items, dtype=np.int64) for items in train]) if train else np.zeros(0, dtype=np.int64)
        valid = np.full(len(train), -1) if valid is None else valid
        test = np.full(len(train), -1) if test is None else test
        return cls(len(train), num_items, indptr, indices, valid, test)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.train_indptr)

    @property
    def num_train(self) -> int:
        return len(self.train_indices)

    def train_items(self, user: int) -> np.ndarray:
        return self.train_indices[self.train_indptr[user]:self.train_indptr[user+1]]

    def train_users(self) -> np.ndarray:
        """ User id of every training interaction, aligned with train_indices. """
        return np.repeat(np.arange(self.num_users, dtype=np.int64), self.degrees)

    def contains(self, users: np.ndarray, items: np.ndarray) -> np.ndarray:
        """ Vectorized test of whether each (user, item) is a training
        interaction. """
        keys = np.asarray(users, dtype=np.int64) * self.num_items + np.asarray(items, dtype=np.int64)
        positions = np.searchsorted(self._train_keys, keys)
        positions = np.minimum(positions, max(len(self._train_keys) - 1, 0))
        return (self._train_keys[positions] == keys) if len(self._train_keys) else np.zeros(keys.shape, dtype=bool)

    def held_out(self, split: str) -> np.ndarray:
        if split not in data.SPLITS:
            raise ConfigurationError(f'Unknown split: {split}')
        return self.valid if split == data.VALID else self.test

    def popularity(self) -> np.ndarray:
        """ Training-split interaction count of every item. """
        return np.bincount(self.train_indices, minlength=self.num_items)

    def popularity_ranking(self) -> np.ndarray:
        """ Item ids by descending training popularity, ties by ascending id. """
        counts = self.popularity()
        return np.lexsort((np.arange(self.num_items), -counts))

    def save(self, path: str) -> None:
        container.write(path, formats.DATASET, {
            'num_users': np.int64(self.num_users),
            'num_items': np.int64(self.num_items),
            'train_indptr': self.train_indptr,
            'train_indices': self.train_indices,
            'valid': self.valid,
            'test': self.test,
            'user_remap': self.user_remap,
            'item_remap': self.item_remap,
        })

    @classmethod
    def load(cls, path: str) -> 'InteractionDataset':
        fields = container.read(path, formats.DATASET)
        return cls(
                num_users=container.scalar(fields, 'num_users'),
                num_items=container.scalar(fields, 'num_items'),
                train_indptr=fields['train_indptr'],
                train_indices=fields['train_indices'],
                valid=fields['valid'],
                test=fields['test'],
                user_remap=fields['user_remap'],
                item_remap=fields['item_remap'],
            )


def load_interactions(path: str, format: str = data.CSV) -> Interactions:
    """ Parses a log of user,item[,rating][,timestamp] records into
    deduplicated interactions. A first line whose user and item fields are
    both non-numeric is skipped as a header. """
    if format not in data.SEPARATORS:
        raise ConfigurationError(f'Unknown log format: {format}')

    separator = data.SEPARATORS[format]

    try:
        frame = pd.read_csv(
                path,
                sep=separator,
                header=None,
                index_col=False,
                names=range(5),
                dtype=str,
                keep_default_na=False,
                skip_blank_lines=False,
                engine='python',
                on_bad_lines='error',
            )
    except FileNotFoundError as e:
        raise InputError(f'{path} does not exist') from e
    except pd.errors.EmptyDataError as e:
        raise EmptyDatasetError(f'{path} contains no interactions') from e
    except pd.errors.ParserError as e:
        match = re.search(r'line (\d+)', str(e))
        raise ParseError('too many fields', int(match.group(1)) if match else None) from e

    extra = np.flatnonzero(frame[4].notna().to_numpy())

    if len(extra):
        raise ParseError('too many fields', int(extra[0]) + 1)

    frame = frame.drop(columns=4).fillna('')
    lines = np.arange(1, len(frame) + 1)
    blank = (frame[0].str.strip() == '') & (frame[1].str.strip() == '')
    frame, lines = frame[~blank.to_numpy()], lines[~blank.to_numpy()]

    if len(frame) and not _is_integer(frame.iloc[0, 0]) and not _is_integer(frame.iloc[0, 1]):
        frame, lines = frame.iloc[1:], lines[1:]

    if len(frame) == 0:
        raise EmptyDatasetError(f'{path} contains no interactions')

    users = pd.to_numeric(frame[0].str.strip(), errors='coerce')
    items = pd.to_numeric(frame[1].str.strip(), errors='coerce')
    timestamps_raw = frame[3].str.strip()
    has_timestamps = bool((timestamps_raw != '').all())
    timestamps = pd.to_numeric(timestamps_raw, errors='coerce') if has_timestamps else None

    for column, name in ((users, 'user'), (items, 'item'), (timestamps, 'timestamp')):
        if column is None:
            continue
        values = column.to_numpy(dtype=float)
        bad = np.isnan(values) | (values != np.round(values))
        if bad.any():
            row = int(np.argmax(bad))
            raise ParseError(f'{name} is not an integer: {frame.iloc[row].tolist()[:4]!r}', int(lines[row]))

    interactions = Interactions(
            users=users.to_numpy(dtype=np.int64),
            items=items.to_numpy(dtype=np.int64),
            timestamps=timestamps.to_numpy(dtype=np.int64) if has_timestamps else None,
        )

    raw = len(interactions)
    interactions = deduplicate(interactions)
    log.info('Loaded %d records (%d unique interactions) from %s', raw, len(interactions), path)

    return interactions


def deduplicate(interactions: Interactions) -> Interactions:
    """ Collapses repeated (user, item) pairs, keeping the first event. """
    frame = pd.DataFrame({'user': interactions.users, 'item': interactions.items})
    return interactions.subset(~frame.duplicated(keep='first').to_numpy())


def kcore_filter(interactions: Interactions, k: int) -> Interactions:
    """ Iteratively removes users and items with fewer than k interactions
    until every survivor has at least k. """
    if k < 1:
        raise ConfigurationError(f'k-core requires k >= 1, got {k}')

    keep = np.ones(len(interactions), dtype=bool)
    users = np.unique(interactions.users, return_inverse=True)[1]
    items = np.unique(interactions.items, return_inverse=True)[1]
    rounds = 0

    while True:
        rounds += 1
        user_degree = np.bincount(users[keep], minlength=users.max(initial=-1) + 1)
        item_degree = np.bincount(items[keep], minlength=items.max(initial=-1) + 1)
        weak_user = np.zeros(len(users), dtype=bool)
        weak_item = np.zeros(len(items), dtype=bool)
        weak_user[keep] = user_degree[users[keep]] < k
        weak_item[keep] = item_degree[items[keep]] < k
        drop = weak_user | weak_item

        if not drop.any():
            break

        keep &= ~drop

    if not keep.any():
        raise EmptyDatasetError(f'No interactions survive the {k}-core filter')

    log.info('%d-core kept %d of %d interactions after %d rounds', k, int(keep.sum()), len(interactions), rounds)

    return interactions.subset(keep)


def drop_popular(interactions: Interactions, percent: float) -> Interactions:
    """ Discards the given percentage of most popular items, ties broken
    by ascending item id. """
    if percent <= 0:
        return interactions

    item_ids, counts = np.unique(interactions.items, return_counts=True)
    num_dropped = int(len(item_ids) * percent / 100)

    if num_dropped == 0:
        return interactions

    order = np.lexsort((item_ids, -counts))
    dropped = item_ids[order[:num_dropped]]
    log.info('Dropping the %d most popular items (%.3f%%)', num_dropped, percent)

    return interactions.subset(~np.isin(interactions.items, dropped))


def leave_one_out_split(interactions: Interactions, seed: int) -> InteractionDataset:
    """ Holds out one random interaction per user for validation and
    another for testing; the rest become training data. """
    interactions = deduplicate(interactions)
    user_ids, first_user = np.unique(interactions.users, return_index=True)
    item_ids, first_item = np.unique(interactions.items, return_index=True)

    # Dense ids by order of first appearance
    user_remap = user_ids[np.argsort(first_user, kind='stable')]
    item_remap = item_ids[np.argsort(first_item, kind='stable')]
    users = _remap(interactions.users, user_remap)
    items = _remap(interactions.items, item_remap)
    num_users, num_items = len(user_remap), len(item_remap)

    degrees = np.bincount(users, minlength=num_users)

    if (degrees < 3).any():
        short = int(np.argmax(degrees < 3))
        raise PreconditionError(f'User {user_remap[short]} has {degrees[short]} interactions; the split needs at least 3')

    rng = np.random.default_rng(seed)
    order = np.lexsort((rng.random(len(users)), users))
    starts = np.concatenate(([0], np.cumsum(degrees)[:-1]))
    ranked = np.empty(len(users), dtype=np.int64)
    ranked[order] = np.arange(len(users)) - np.repeat(starts, degrees)

    valid = np.empty(num_users, dtype=np.int64)
    test = np.empty(num_users, dtype=np.int64)
    valid[users[ranked == 0]] = items[ranked == 0]
    test[users[ranked == 1]] = items[ranked == 1]

    train = ranked >= 2
    train_order = np.lexsort((items[train], users[train]))
    train_indices = items[train][train_order]
    train_indptr = np.concatenate(([0], np.cumsum(degrees - 2)))

    log.info('Split %d users, %d items: %d train interactions', num_users, num_items, len(train_indices))

    return InteractionDataset(num_users, num_items, train_indptr, train_indices, valid, test, user_remap, item_remap)


def prepare(path: str, format: str, k: int, seed: int, drop_top_percent: float = 0.0) -> InteractionDataset:
    """ Helper running the whole ingest: load, popularity truncation,
    k-core, split. """
    interactions = load_interactions(path, format)
    interactions = drop_popular(interactions, drop_top_percent)
    interactions = kcore_filter(interactions, k)
    return leave_one_out_split(interactions, seed)


def _remap(values: np.ndarray, remap: np.ndarray) -> np.ndarray:
    """ Maps original ids to their positions in remap. """
    order = np.argsort(remap)
    return order[np.searchsorted(remap, values, sorter=order)]


def _is_integer(value: str) -> bool:
    try:
        int(value.strip())
        return True
    except ValueError:
        return False
