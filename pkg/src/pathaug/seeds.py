"""Order-independent RNG streams and a deterministic worker pool."""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor

import numpy as np


def derive_seed(master: int, *keys) -> int:
    """A 63-bit seed that depends only on ``master`` and the string forms of ``keys``."""
    if master < 0:
        raise ValueError("master seed must be non-negative")
    words = [int.from_bytes(hashlib.sha256(str(k).encode("utf-8")).digest()[:4], "little")
             for k in keys]
    state = np.random.SeedSequence([int(master), *words]).generate_state(2, np.uint64)
    return int(state[0] >> np.uint64(1))


def derive_rng(master: int, *keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *keys))


_CONTEXT: dict = {}


def _install(ctx):
    _CONTEXT.clear()
    _CONTEXT.update(ctx)


def context() -> dict:
    return _CONTEXT


def parallel_map(fn, items, jobs: int = 1, ctx: dict | None = None) -> list:
    """``list(map(fn, items))`` over ``jobs`` processes, results in input order.

    ``ctx`` is installed once per worker and read back through :func:`context`.
    """
    items = list(items)
    ctx = ctx or {}
    if jobs <= 1 or len(items) <= 1:
        _install(ctx)
        return [fn(i) for i in items]
    chunk = max(1, len(items) // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs, initializer=_install, initargs=(ctx,)) as ex:
        return list(ex.map(fn, items, chunksize=chunk))
