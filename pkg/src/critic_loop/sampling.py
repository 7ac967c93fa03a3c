"""Seeded sampling without replacement, stable across platforms."""

from __future__ import annotations

import random
from typing import Sequence, TypeVar

T = TypeVar("T")


def seeded_sample(items: Sequence[T], n: int, seed: int) -> list[T]:
    """Uniform sample of ``n`` items without replacement.

    Implemented as an explicit partial Fisher-Yates shuffle over a copy so
    the draw depends only on (items order, n, seed), not on interpreter
    internals. ``n`` must not exceed the pool size.
    """
    if n < 0:
        raise ValueError("sample size must be nonnegative")
    if n > len(items):
        raise ValueError(f"sample size {n} exceeds pool size {len(items)}")
    pool = list(items)
    rng = random.Random(seed)
    for i in range(n):
        j = rng.randrange(i, len(pool))
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:n]
