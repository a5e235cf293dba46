"""
    This file is part of cigar.


    Progress bars for long loops. Bars only show when the calling
    module's logger would print INFO messages and stderr is a terminal,
    so tests and redirected runs stay quiet.

"""

import logging
import sys
from typing import Iterable

from tqdm import tqdm


def progress(iterable: Iterable, logger: logging.Logger, **kwargs) -> tqdm:
    enabled = logger.isEnabledFor(logging.INFO) and sys.stderr.isatty()
    return tqdm(iterable, disable=not enabled, leave=False, **kwargs)
