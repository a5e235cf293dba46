"""
    This file is part of cigar.


    Multi-index hashing over item binary codes.

    Each r-bit code is split into m substrings of r/m bits and every item
    is inserted into one bucket per substring table. A query probes, for
    growing radius l, every bucket within Hamming distance l of each of its
    own substrings, unions what it finds and stops once it has at least c
    items or reaches l_max. Survivors are ranked by full-code distance.

    By the pigeonhole principle, any item within full-code distance
    m·(l+1) - 1 of the query shares at least one substring within distance
    l, so after probing radius l everything up to that distance has been
    seen. CandidateList.exact_radius records this bound for each query.

    Ties in full-code distance are always broken by ascending item id.

"""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from cigar.classes import container
from cigar.classes.cache import cache
from cigar.classes.errors import ConfigurationError
from cigar.const import data, formats
from cigar.tools import codes
from cigar.tools.codes import BinaryCodeMatrix
from cigar.tools.dataset import InteractionDataset


log = logging.getLogger(__name__)


class CandidateList:
    """ Items ordered by non-decreasing Hamming distance to a query.
    Entries appended by popularity padding carry PAD_DISTANCE. """
    def __init__(self, items: np.ndarray, distances: np.ndarray, exact_radius: int = None, padded: int = 0) -> None:
        self.items = np.asarray(items, dtype=np.int64)
        self.distances = np.asarray(distances, dtype=np.int64)
        self.exact_radius = exact_radius
        self.padded = padded

    @classmethod
    def empty(cls) -> 'CandidateList':
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))

    def without(self, exclude: np.ndarray) -> 'CandidateList':
        keep = ~np.isin(self.items, exclude)
        return CandidateList(self.items[keep], self.distances[keep], self.exact_radius, self.padded)

    def head(self, count: int) -> 'CandidateList':
        return CandidateList(self.items[:count], self.distances[:count], self.exact_radius, min(self.padded, max(count - len(self) + self.padded, 0)))

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items.tolist())


class CandidateSet:
    """ Per-user candidate item lists, stored as CSR. """
    def __init__(self, indptr: np.ndarray, items: np.ndarray) -> None:
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.items = np.asarray(items, dtype=np.int64)

    @classmethod
    def from_lists(cls, lists: list) -> 'CandidateSet':
        indptr = np.concatenate(([0], np.cumsum([len(items) for items in lists], dtype=np.int64)))
        items = np.concatenate([np.asarray(items, dtype=np.int64) for items in lists]) if lists else np.zeros(0, dtype=np.int64)
        return cls(indptr, items)

    @property
    def num_users(self) -> int:
        return len(self.indptr) - 1

    def for_user(self, user: int) -> np.ndarray:
        return self.items[self.indptr[user]:self.indptr[user+1]]

    def candidate_list(self, user: int) -> CandidateList:
        items = self.for_user(user)
        return CandidateList(items, np.zeros(len(items), dtype=np.int64))

    def negatives(self, dataset: InteractionDataset) -> 'CandidateSet':
        """ Candidates with each user's training items removed. """
        users = np.repeat(np.arange(self.num_users, dtype=np.int64), np.diff(self.indptr))
        keep = ~dataset.contains(users, self.items)
        counts = np.bincount(users[keep], minlength=self.num_users)
        return CandidateSet(np.concatenate(([0], np.cumsum(counts))), self.items[keep])

    def save(self, path: str) -> None:
        container.write(path, formats.CANDIDATES, {
            'indptr': self.indptr,
            'items': self.items,
        })

    @classmethod
    def load(cls, path: str) -> 'CandidateSet':
        fields = container.read(path, formats.CANDIDATES)
        return cls(fields['indptr'], fields['items'])


class MultiIndexHashTable:
    """ m substring tables over item codes plus the full code store. Each
    table is kept as sorted bucket keys, bucket offsets and the item ids
    they point into; the dict view maps a key to its bucket. """
    def __init__(self, full_codes: BinaryCodeMatrix, m: int, keys: list, offsets: list, items: list) -> None:
        self.full_codes = full_codes
        self.m = int(m)
        self.r = full_codes.r
        self.substring_len = self.r // self.m
        self._keys = keys
        self._offsets = offsets
        self._items = items
        self.tables = [
            dict(zip(table_keys.tolist(), np.split(table_items, table_offsets[1:-1])))
            for table_keys, table_offsets, table_items in zip(keys, offsets, items)
        ]

    @property
    def num_items(self) -> int:
        return self.full_codes.rows

    def save(self, path: str) -> None:
        fields = {
            'm': np.int64(self.m),
            'r': np.int64(self.r),
            'codes': self.full_codes.codes,
        }

        for j in range(self.m):
            fields[f'keys_{j}'] = self._keys[j]
            fields[f'offsets_{j}'] = self._offsets[j]
            fields[f'items_{j}'] = self._items[j]

        container.write(path, formats.INDEX, fields)

    @classmethod
    def load(cls, path: str) -> 'MultiIndexHashTable':
        fields = container.read(path, formats.INDEX)
        m = container.scalar(fields, 'm')
        return cls(
                full_codes=BinaryCodeMatrix(fields['codes'], container.scalar(fields, 'r')),
                m=m,
                keys=[fields[f'keys_{j}'] for j in range(m)],
                offsets=[fields[f'offsets_{j}'] for j in range(m)],
                items=[fields[f'items_{j}'] for j in range(m)],
            )


def default_substrings(num_items: int) -> int:
    """ Substring count by catalogue size: finer tables for small
    catalogues, 4 for millions of items. """
    if num_items < 50000:
        return 16
    if num_items < 200000:
        return 8
    return 4


@cache
def flip_masks(length: int, radius: int) -> np.ndarray:
    """ Every length-bit mask with exactly radius bits set. """
    masks = [sum(1 << bit for bit in bits) for bits in itertools.combinations(range(length), radius)]
    return np.asarray(masks, dtype=np.int64)


def build_index(item_codes: BinaryCodeMatrix, m: int) -> MultiIndexHashTable:
    """ Inserts every item into the bucket of its j-th substring in
    table j, for each of the m tables. """
    if m < 1 or item_codes.r % m:
        raise ConfigurationError(f'Code length {item_codes.r} is not divisible into {m} substrings')

    substrings = codes.substrings(item_codes.codes, item_codes.r, m)
    keys, offsets, items = [], [], []

    for j in range(m):
        # Stable sort keeps each bucket in ascending item order
        order = np.argsort(substrings[:, j], kind='stable')
        table_keys, starts = np.unique(substrings[order, j], return_index=True)
        keys.append(table_keys)
        offsets.append(np.append(starts, len(order)).astype(np.int64))
        items.append(order.astype(np.int64))

    log.info('Built %d-table index over %d items (%d-bit substrings)', m, item_codes.rows, item_codes.r // m)

    return MultiIndexHashTable(item_codes, m, keys, offsets, items)


def query(index: MultiIndexHashTable, user_code: np.ndarray, c: int, l_max: int) -> CandidateList:
    """ Probes buckets at growing substring radius until at least c items
    are found or l_max is reached, then returns up to c of them nearest
    first. """
    if len(user_code) * 8 != index.r:
        raise ConfigurationError(f'Query has {len(user_code) * 8} bits, index has {index.r}')

    query_keys = codes.substrings(user_code, index.r, index.m)[0].tolist()
    retrieved = np.zeros(0, dtype=np.int64)
    radius = -1

    for radius in range(l_max + 1):
        masks = flip_masks(index.substring_len, radius)
        buckets = [retrieved]

        for table, key in zip(index.tables, query_keys):
            for probe in (key ^ masks).tolist():
                bucket = table.get(probe)
                if bucket is not None:
                    buckets.append(bucket)

        # np.unique doubles as the per-query seen-set
        retrieved = np.unique(np.concatenate(buckets))

        if len(retrieved) >= c:
            break

    distances = codes.hamming_distances(index.full_codes.codes[retrieved], user_code) if len(retrieved) else np.zeros(0, dtype=np.int64)
    order = np.lexsort((retrieved, distances))[:c]
    exact_radius = min(index.m * (radius + 1) - 1, index.r) if radius >= 0 else -1

    return CandidateList(retrieved[order], distances[order], exact_radius=exact_radius)


def linear_scan_topc(item_codes: BinaryCodeMatrix, user_code: np.ndarray, c: int) -> CandidateList:
    """ Exact c nearest items by exhaustive Hamming scan. """
    distances = codes.hamming_distances(item_codes.codes, user_code)
    count = len(distances)
    c = min(c, count)

    if c <= 0:
        return CandidateList(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), exact_radius=item_codes.r)

    # Distance and id folded into one key so partitioning respects ties
    keys = distances * count + np.arange(count)
    top = np.argpartition(keys, c - 1)[:c] if c < count else np.arange(count)
    top = top[np.argsort(keys[top])]

    return CandidateList(top, distances[top], exact_radius=item_codes.r)


def pad_candidates(cands: CandidateList, c: int, popularity: np.ndarray, exclude: np.ndarray = None) -> CandidateList:
    """ Appends the most popular items not already present and not
    excluded until min(c, |I - exclude|) non-excluded items are listed. """
    exclude = np.zeros(0, dtype=np.int64) if exclude is None else np.unique(np.asarray(exclude, dtype=np.int64))
    target = min(c, len(popularity) - len(exclude))
    have = int((~np.isin(cands.items, exclude)).sum())
    need = target - have

    if need <= 0:
        return cands

    fill = popularity[~np.isin(popularity, np.union1d(cands.items, exclude))][:need]

    return CandidateList(
            items=np.concatenate((cands.items, fill)),
            distances=np.concatenate((cands.distances, np.full(len(fill), formats.PAD_DISTANCE, dtype=np.int64))),
            exact_radius=cands.exact_radius,
            padded=cands.padded + len(fill),
        )


def retrieve(dataset: InteractionDataset, user: int, c: int, source: str = data.SOURCE_MIH, user_codes: BinaryCodeMatrix = None, index: MultiIndexHashTable = None, item_codes: BinaryCodeMatrix = None, l_max: int = 1, popularity: np.ndarray = None) -> CandidateList:
    """ c candidates for one user, none of them training items: retrieve
    c + |train[u]| from the source, drop training items, pad by
    popularity. """
    exclude = dataset.train_items(user)
    popularity = dataset.popularity_ranking() if popularity is None else popularity
    wanted = c + len(exclude)

    if source == data.SOURCE_MIH:
        cands = query(index, user_codes.row(user), wanted, l_max)
    elif source == data.SOURCE_LINEAR:
        cands = linear_scan_topc(item_codes, user_codes.row(user), wanted)
    elif source == data.SOURCE_POP:
        cands = CandidateList.empty()
    else:
        raise ConfigurationError(f'Unknown candidate source: {source}')

    return pad_candidates(cands.without(exclude).head(c), c, popularity, exclude)


def generate_candidates(dataset: InteractionDataset, c: int, source: str = data.SOURCE_MIH, user_codes: BinaryCodeMatrix = None, index: MultiIndexHashTable = None, item_codes: BinaryCodeMatrix = None, l_max: int = 1, threads: int = 1) -> CandidateSet:
    """ Precomputes every user's candidates. Queries are independent, so
    they fan out over threads; results keep user order. """
    popularity = dataset.popularity_ranking()

    def for_user(user: int) -> np.ndarray:
        return retrieve(dataset, user, c, source, user_codes, index, item_codes, l_max, popularity).items

    users = range(dataset.num_users)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            lists = list(executor.map(for_user, users))
    else:
        lists = [for_user(user) for user in users]

    log.info('Generated %d candidates from %s for %d users', c, source, dataset.num_users)

    return CandidateSet.from_lists(lists)
