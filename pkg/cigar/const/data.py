"""
    This file is part of cigar.


    Defines string indices for dataset splits, log formats, candidate
    sources and benchmark methods. These are strings rather than integers
    since they are accepted verbatim on the command line.

"""


""" Held-out splits. """
VALID = 'valid'
TEST = 'test'

SPLITS = (VALID, TEST)

""" Interaction log formats and their field separators. """
CSV = 'csv'
TSV = 'tsv'
MOVIELENS = 'ml'

SEPARATORS = {
    CSV: ',',
    TSV: '\t',
    MOVIELENS: '::',
}

""" Candidate sources. """
SOURCE_MIH = 'mih'
SOURCE_LINEAR = 'linear'
SOURCE_POP = 'pop'

SOURCES = (SOURCE_MIH, SOURCE_LINEAR, SOURCE_POP)

""" Retrieval benchmark methods. """
LINEAR_REAL = 'linear-real'
LINEAR_HAMMING = 'linear-hamming'
MIH = 'mih'
CIGAR_PIPELINE = 'cigar-pipeline'

BENCH_METHODS = (LINEAR_REAL, LINEAR_HAMMING, MIH, CIGAR_PIPELINE)
