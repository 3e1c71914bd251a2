"""Padding and sampling of one key-value pair per user.

Records of varying size are padded with dummy keys ``d+1 .. d+ell`` up to
length ``ell``, then a single slot is sampled uniformly: with probability
``|S| / max(|S|, ell)`` a uniformly chosen real pair, otherwise a uniformly
chosen dummy key carrying value 0.  The sampled value ``v*`` is discretized to
+1 with probability ``(1 + v*) / 2`` and to -1 otherwise, which keeps its
expectation at ``v*``.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .model import UserRecord

__all__ = ["pad_and_sample", "sample_distribution"]


def _check_args(record: UserRecord, ell: int, d: int):
    if ell < 1:
        raise ValueError("ell must be >= 1")
    if d < 1:
        raise ValueError("d must be >= 1")
    for p in record:
        if p.key > d:
            raise ValueError(f"record key {p.key} outside domain 1..{d}")


def pad_and_sample(record: UserRecord, ell: int, d: int, rng: np.random.Generator):
    """Draw one discretized pair from a padded record.

    Returns:
        ``(key, value)`` with key in 1..d+ell and value in {+1, -1}.
    """
    _check_args(record, ell, d)
    s = len(record)
    eta = s / max(s, ell)
    if rng.random() < eta:
        pair = record.pairs[rng.integers(s)]
        key, v_star = pair.key, pair.value
    else:
        key = d + 1 + int(rng.integers(ell))
        v_star = 0.0
    value = 1 if rng.random() < (1.0 + v_star) / 2.0 else -1
    return key, value


def sample_distribution(record: UserRecord, ell: int, d: int) -> dict:
    """Exact distribution of :func:`pad_and_sample` as ``{(key, sign): prob}``.

    Probabilities are exact ``Fraction``s whenever the record's values are
    integers or Fractions; entries with zero probability are omitted.
    """
    _check_args(record, ell, d)
    s = len(record)
    dist: dict = {}
    if s:
        w = Fraction(1, max(s, ell))  # eta / |S|
        for p in record:
            v = p.value
            up = w * (1 + v) / 2
            down = w * (1 - v) / 2
            if up:
                dist[(p.key, 1)] = up
            if down:
                dist[(p.key, -1)] = down
    eta = Fraction(s, max(s, ell))
    if eta < 1:
        dummy_w = (1 - eta) / (2 * ell)
        for k in range(d + 1, d + ell + 1):
            dist[(k, 1)] = dummy_w
            dist[(k, -1)] = dummy_w
    return dist
