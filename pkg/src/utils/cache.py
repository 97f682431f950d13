from cachetools import LRUCache, cached
from cachetools.keys import hashkey
from threading import Lock

from src.config import CACHE_SIZE


attribution_cache = LRUCache(maxsize=CACHE_SIZE)
attribution_lock = Lock()

conductance_cache = LRUCache(maxsize=CACHE_SIZE)
conductance_lock = Lock()


def _window_key(model, token_ids, target, *args, **kwargs):
    return hashkey(model.fingerprint, tuple(token_ids), target.target_token_id, target.kind, *args, *sorted(kwargs.items()))


def cache_with_attributions(func) -> callable:
    """
    Decorator caching per-window attribution results.
    Keys combine the model fingerprint, the window's token ids, the target and
    any extra arguments, so results are shared only between identical calls.
    Args:
        func (callable): A pure function (model, token_ids, target, ...).
    Returns:
        callable: The cached version of the function.
    """
    return cached(cache=attribution_cache, key=_window_key, lock=attribution_lock)(func)


def cache_with_conductance(func) -> callable:
    """
    Decorator caching per-window layer conductance so a layer sweep computes
    each window once.
    Args:
        func (callable): A pure function (model, token_ids, target, steps_m).
    Returns:
        callable: The cached version of the function.
    """
    return cached(cache=conductance_cache, key=_window_key, lock=conductance_lock)(func)


def clear_caches() -> None:
    with attribution_lock:
        attribution_cache.clear()
    with conductance_lock:
        conductance_cache.clear()
