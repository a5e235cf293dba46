"""
    This file is part of cigar.


    Magic bytes and versions for the binary artifacts written by the
    container module. Bump a version whenever the field layout of the
    matching artifact changes.

"""


DATASET = b'CGDS'
HASHREC = b'CGHR'
INDEX = b'CGIX'
RANKER = b'CGRK'
CANDIDATES = b'CGCD'

VERSIONS = {
    DATASET: 1,
    HASHREC: 1,
    INDEX: 1,
    RANKER: 1,
    CANDIDATES: 1,
}

""" Distance recorded for candidates appended by popularity padding. """
PAD_DISTANCE = 2**31 - 1
