"""
    This file is part of cigar.


    Binary codes for users and items. A code in {-1,+1}^r is stored packed,
    eight bits per byte, with a set bit meaning +1. Hamming distances are
    computed word-wise as XOR followed by a population count, and the inner
    product of two codes follows from the distance: <a,b> = r - 2·d_H(a,b).

    sgn(0) is +1 throughout.

"""

import numpy as np

from cigar.classes.errors import ConfigurationError


SUBSTRING_CHUNK = 65536

class BinaryCodeMatrix:
    """ Packed {-1,+1} codes, one row per user or item. """
    def __init__(self, codes: np.ndarray, r: int) -> None:
        if r % 8:
            raise ConfigurationError(f'Code length must be a multiple of 8, got {r}')

        self.codes = np.ascontiguousarray(codes, dtype=np.uint8).reshape(-1, r // 8)
        self.r = int(r)

    @property
    def rows(self) -> int:
        return self.codes.shape[0]

    @property
    def words(self) -> np.ndarray:
        """ Codes viewed as the widest unsigned words dividing r. """
        return as_words(self.codes)

    def row(self, index: int) -> np.ndarray:
        return self.codes[index]

    def signs(self) -> np.ndarray:
        """ Unpacked {-1,+1} matrix. """
        return unpack(self.codes, self.r)

    def take(self, rows: np.ndarray) -> 'BinaryCodeMatrix':
        return BinaryCodeMatrix(self.codes[rows], self.r)

    def __len__(self) -> int:
        return self.rows

    def __eq__(self, other: object) -> bool:
        return isinstance(other, BinaryCodeMatrix) and self.r == other.r and np.array_equal(self.codes, other.codes)


def sgn(values: np.ndarray) -> np.ndarray:
    """ Elementwise sign with sgn(0) = +1. """
    return np.where(np.asarray(values) >= 0, 1.0, -1.0)


def binarize(embeddings: np.ndarray) -> BinaryCodeMatrix:
    """ Packs sgn() of each row of a real matrix. """
    embeddings = np.atleast_2d(np.asarray(embeddings))
    return BinaryCodeMatrix(np.packbits(embeddings >= 0, axis=1), embeddings.shape[1])


def unpack(codes: np.ndarray, r: int) -> np.ndarray:
    """ Packed rows back to {-1,+1} as int8. """
    bits = np.unpackbits(np.atleast_2d(codes), axis=1, count=r)
    return (bits.astype(np.int8) * 2 - 1)


def as_words(codes: np.ndarray) -> np.ndarray:
    """ Reinterprets packed byte rows as 64, 32 or 16-bit words where the
    row width allows, so XOR/POPCNT run on as few words as possible. """
    codes = np.ascontiguousarray(codes)
    width = codes.shape[-1]

    for dtype in (np.uint64, np.uint32, np.uint16):
        if width % np.dtype(dtype).itemsize == 0:
            return codes.view(dtype)

    return codes


def hamming_distance(a: np.ndarray, b: np.ndarray) -> int:
    """ Number of differing bits between two packed code rows. """
    a, b = np.asarray(a, dtype=np.uint8), np.asarray(b, dtype=np.uint8)

    if a.shape != b.shape:
        raise ConfigurationError(f'Code lengths differ: {a.size * 8} vs {b.size * 8} bits')

    return int(np.bitwise_count(np.bitwise_xor(as_words(a), as_words(b))).sum())


def hamming_distances(codes: np.ndarray, query: np.ndarray) -> np.ndarray:
    """ Distances from one packed query row to every packed row. """
    codes, query = np.atleast_2d(codes), np.asarray(query, dtype=np.uint8)

    if codes.shape[1] != query.shape[-1]:
        raise ConfigurationError(f'Code lengths differ: {codes.shape[1] * 8} vs {query.shape[-1] * 8} bits')

    xor = np.bitwise_xor(as_words(codes), as_words(query.reshape(1, -1)))
    return np.bitwise_count(xor).sum(axis=1, dtype=np.int64)


def hamming_matrix(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """ All pairwise distances between two sets of packed rows. """
    left_words, right_words = as_words(np.atleast_2d(left)), as_words(np.atleast_2d(right))
    xor = np.bitwise_xor(left_words[:, None, :], right_words[None, :, :])
    return np.bitwise_count(xor).sum(axis=2, dtype=np.int64)


def inner_products(codes: np.ndarray, query: np.ndarray, r: int) -> np.ndarray:
    """ <query, row> for {-1,+1} codes, via the Hamming identity. """
    return r - 2 * hamming_distances(codes, query)


def substrings(codes: np.ndarray, r: int, m: int) -> np.ndarray:
    """ Splits each r-bit row into m substrings of r/m bits and returns
    their integer values, most significant bit first, as an (n, m) array. """
    if r % m:
        raise ConfigurationError(f'Code length {r} is not divisible into {m} substrings')

    length = r // m

    if length > 32:
        raise ConfigurationError(f'Substrings of {length} bits do not fit a bucket key')

    codes = np.atleast_2d(codes)
    weights = (1 << np.arange(length - 1, -1, -1, dtype=np.int64))
    keys = np.empty((codes.shape[0], m), dtype=np.int64)

    for start in range(0, codes.shape[0], SUBSTRING_CHUNK):
        bits = np.unpackbits(codes[start:start+SUBSTRING_CHUNK], axis=1, count=r).reshape(-1, m, length)
        keys[start:start+SUBSTRING_CHUNK] = bits.astype(np.int64) @ weights

    return keys
