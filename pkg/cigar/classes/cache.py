"""
    This file is part of cigar.


    Wrapper for functools' LRU cache that keeps track of every cached
    function so they can all be cleared at once, eg. between tests or when
    settings change.

"""

import functools
from typing import Callable


class FunctionCache:
    registry = []

    def clear_all() -> None:
        for cached_func in FunctionCache.registry:
            cached_func.cache_clear()

    def info() -> dict:
        return {cached_func.__name__: cached_func.cache_info() for cached_func in FunctionCache.registry}


def cache(func: Callable = None, maxsize: int = None) -> Callable:
    """ Usable bare (@cache) or with a size bound (@cache(maxsize=64)). """
    def register(func: Callable) -> Callable:
        cached_func = functools.lru_cache(maxsize=maxsize)(func)
        FunctionCache.registry.append(cached_func)
        return cached_func

    return register(func) if func is not None else register
