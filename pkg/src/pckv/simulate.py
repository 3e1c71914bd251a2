"""Vectorized simulation of entire report cohorts.

The scalar perturbers in :mod:`.mechanisms` are the reference semantics; here
the same distributions are sampled for a whole population at once and reduced
straight to support counts, never materializing per-user report objects.
Scratch memory is bounded by chunking the unary noise matrix; all draws come
from :func:`pckv._rng.stream` sub-streams keyed by (seed, stage, chunk), so a
run is bit-reproducible for a given seed regardless of platform.
"""

from __future__ import annotations

import numpy as np

from ._rng import stream
from .budget import PerturbProbs
from .estimation import PrivKvCounts, SupportCounts
from .mechanisms import (
    perturb_grr,
    perturb_privkv,
    perturb_ue,
    privkv_probs,
)
from .model import Dataset

__all__ = ["sample_pairs", "run_ue", "run_grr", "run_privkv", "iter_reports",
           "CHUNK_ELEMS"]

# cap on float64 scratch elements per draw (64 MiB)
CHUNK_ELEMS = 1 << 23

# stage codes for stream derivation
_SAMPLE, _NOISE, _CHANNEL, _REPORTS = 0, 1, 2, 3


def sample_pairs(dataset: Dataset, ell: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Pad-and-sample one discretized pair per user, vectorized.

    Returns:
        ``(keys, values)``: int64 keys in 1..d+ell and int8 values in {+1, -1},
        one entry per user.  Distributionally identical to calling
        :func:`pckv.sampling.pad_and_sample` per record.
    """
    if ell < 1:
        raise ValueError("ell must be >= 1")
    n = len(dataset)
    sizes = dataset.record_sizes()
    denom = np.maximum(sizes, ell)
    u_eta = rng.random(n)
    u_pick = rng.random(n)
    u_disc = rng.random(n)

    real = u_eta * denom < sizes  # u < eta without a division
    keys = np.empty(n, dtype=np.int64)
    v_star = np.zeros(n, dtype=np.float64)
    # real picks: uniform slot within the user's slice (real implies size >= 1)
    slot = np.minimum((u_pick * sizes).astype(np.int64), np.maximum(sizes - 1, 0))
    flat = (dataset.indptr[:-1] + slot)[real]
    keys[real] = dataset.keys[flat]
    v_star[real] = dataset.values[flat]
    # dummy picks: uniform over d+1 .. d+ell
    dummy = dataset.d + 1 + np.minimum((u_pick * ell).astype(np.int64), ell - 1)
    keys[~real] = dummy[~real]
    values = np.where(u_disc * 2.0 < 1.0 + v_star, 1, -1).astype(np.int8)
    return keys, values


def run_ue(dataset: Dataset, probs: PerturbProbs, ell: int, seed) -> SupportCounts:
    """Simulate the unary mechanism for every user and tally support counts."""
    a, b, p = float(probs.a), float(probs.b), float(probs.p)
    if a < 0.5:
        raise ValueError("unary reports require a >= 1/2")
    n = len(dataset)
    d_prime = dataset.d + ell
    keys, values = sample_pairs(dataset, ell, stream(seed, _SAMPLE))

    n1 = np.zeros(d_prime, dtype=np.int64)
    n2 = np.zeros(d_prime, dtype=np.int64)
    rows_per_chunk = max(1, CHUNK_ELEMS // d_prime)
    for chunk, start in enumerate(range(0, n, rows_per_chunk)):
        stop = min(start + rows_per_chunk, n)
        rows = stop - start
        rng = stream(seed, _NOISE, chunk)
        u = rng.random((rows, d_prime))
        cols = keys[start:stop] - 1
        # silence the background at each sampled position (b <= 1/2 < 1),
        # the correlated channel supplies that position instead
        u[np.arange(rows), cols] = 1.0
        n1 += np.count_nonzero(u < b / 2, axis=0)
        n2 += np.count_nonzero((u >= b / 2) & (u < b), axis=0)
        w = rng.random(rows)
        sym = np.zeros(rows, dtype=np.int8)
        keep = w < a * p
        flip = (w >= a * p) & (w < a)
        vals = values[start:stop]
        sym[keep] = vals[keep]
        sym[flip] = -vals[flip]
        n1 += np.bincount(cols[sym == 1], minlength=d_prime)
        n2 += np.bincount(cols[sym == -1], minlength=d_prime)
    return SupportCounts(n1=n1, n2=n2, n=n, d=dataset.d)


def run_grr(dataset: Dataset, probs: PerturbProbs, ell: int, seed) -> SupportCounts:
    """Simulate the single-pair mechanism for every user and tally counts."""
    d_prime = dataset.d + ell
    expect_b = (1 - float(probs.a)) / (d_prime - 1)
    if abs(float(probs.b) - expect_b) > 1e-9:
        raise ValueError("b inconsistent with a and d_prime")
    a, p = float(probs.a), float(probs.p)
    n = len(dataset)
    keys, values = sample_pairs(dataset, ell, stream(seed, _SAMPLE))

    rng = stream(seed, _CHANNEL)
    w = rng.random(n)
    u_other = rng.random(n)
    u_sign = rng.random(n)

    out_key = keys.copy()
    out_val = values.astype(np.int64)
    flip = (w >= a * p) & (w < a)
    out_val[flip] = -out_val[flip]
    other = (w >= a)
    pick = 1 + np.minimum((u_other * (d_prime - 1)).astype(np.int64), d_prime - 2)
    pick += pick >= keys  # skip over the sampled key
    out_key[other] = pick[other]
    out_val[other] = np.where(u_sign[other] < 0.5, 1, -1)

    n1 = np.bincount(out_key[out_val == 1] - 1, minlength=d_prime)
    n2 = np.bincount(out_key[out_val == -1] - 1, minlength=d_prime)
    return SupportCounts(n1=n1, n2=n2, n=n, d=dataset.d)


def run_privkv(dataset: Dataset, eps: float, seed) -> PrivKvCounts:
    """Simulate the baseline protocol for every user and tally its counts."""
    p1, p2 = privkv_probs(eps)
    n = len(dataset)
    d = dataset.d
    rng = stream(seed, _CHANNEL)
    u_idx = rng.random(n)
    u_bit = rng.random(n)
    u_disc = rng.random(n)
    u_val = rng.random(n)

    index = 1 + np.minimum((u_idx * d).astype(np.int64), d - 1)
    # possession lookup via composite (user, key) codes, strictly increasing
    sizes = dataset.record_sizes()
    owner = np.repeat(np.arange(n, dtype=np.int64), sizes)
    codes = owner * (d + 1) + dataset.keys
    queries = np.arange(n, dtype=np.int64) * (d + 1) + index
    v_base = np.zeros(n, dtype=np.float64)
    if len(codes):
        pos = np.searchsorted(codes, queries)
        pos_c = np.minimum(pos, len(codes) - 1)
        held = (pos < len(codes)) & (codes[pos_c] == queries)
        v_base[held] = dataset.values[pos_c[held]]
    else:
        held = np.zeros(n, dtype=bool)

    bit = held.astype(np.int64)
    bit_out = np.where(u_bit < p1, bit, 1 - bit)
    v_disc = np.where(u_disc * 2.0 < 1.0 + v_base, 1, -1)
    v_out = np.where(u_val < p2, v_disc, -v_disc)
    v_out = np.where(bit_out == 1, v_out, 0)

    idx0 = index - 1
    sampled = np.bincount(idx0, minlength=d)
    ones = np.bincount(idx0[bit_out == 1], minlength=d)
    pos_c = np.bincount(idx0[v_out == 1], minlength=d)
    neg_c = np.bincount(idx0[v_out == -1], minlength=d)
    return PrivKvCounts(sampled=sampled, ones=ones, pos=pos_c, neg=neg_c, n=n, d=d)


def iter_reports(dataset: Dataset, mechanism: str, seed, *, probs=None,
                 ell=None, eps=None):
    """Yield one report object per user via the scalar perturbers.

    Slow path, intended for dumping or piping small cohorts; the ``run_*``
    reducers are the bulk path.
    """
    rng = stream(seed, _REPORTS)
    if mechanism == "ue":
        for rec in dataset.iter_records():
            yield perturb_ue(rec, probs, ell, dataset.d, rng)
    elif mechanism == "grr":
        for rec in dataset.iter_records():
            yield perturb_grr(rec, probs, ell, dataset.d, rng)
    elif mechanism == "privkv":
        for rec in dataset.iter_records():
            yield perturb_privkv(rec, eps, dataset.d, rng)
    else:
        raise ValueError(f"unknown mechanism {mechanism!r}")
