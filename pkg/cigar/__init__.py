import logging

from cigar.setup import settings


logging.getLogger(__name__).addHandler(logging.NullHandler())
