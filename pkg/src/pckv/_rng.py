"""Deterministic stream derivation for all randomized stages.

Every randomized component draws from a counter-based Philox generator keyed
by an integer seed plus a path of stage/index integers.  Streams derived from
distinct paths are independent, so repeats, pipeline stages, and chunks of a
user population can be simulated in any order (or in parallel) while staying
bit-reproducible for a fixed root seed.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream"]


def stream(seed, *path: int) -> np.random.Generator:
    """Return an independent Generator for ``(seed, *path)``.

    Args:
        seed: root entropy; an int, a SeedSequence, or an existing Generator
            (returned as-is, for call sites that accept either form).
        *path: non-negative integers naming the sub-stream.
    """
    if isinstance(seed, np.random.Generator):
        if path:
            raise ValueError("cannot derive a sub-stream from a Generator")
        return seed
    if isinstance(seed, np.random.SeedSequence):
        base = seed
    else:
        base = np.random.SeedSequence(int(seed))
    if path:
        # extend the existing key so nested derivations stay distinct
        base = np.random.SeedSequence(
            entropy=base.entropy,
            spawn_key=tuple(base.spawn_key) + tuple(int(p) for p in path),
        )
    return np.random.Generator(np.random.Philox(base))
