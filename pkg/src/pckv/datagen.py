"""Dataset generation and ingestion.

Synthetic populations follow two key-popularity shapes: ``uniform`` (every
key equally likely) and ``gaussian`` (popularity concentrated on central
keys via a truncated normal over key indices).  Per-key true means are drawn
once per dataset; every user possessing a key holds exactly that key's mean,
so the returned ground truth matches the generating parameters and the
recomputed statistics agree exactly.

Real rating data is ingested from header-less CSV lines ``user_id,key,value``
with both ids dictionary-encoded and ratings linearly mapped onto [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import stream
from .model import Dataset, TrueStats, true_stats

__all__ = [
    "SynthConfig",
    "gen_synthetic",
    "load_csv",
    "save_dataset",
    "load_dataset",
]

# stream stage codes
_MEANS, _KEYS = 0, 1

_DISTRIBUTIONS = ("uniform", "gaussian")


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of a synthetic population."""

    n: int
    d: int
    distribution: str = "uniform"
    sigma_key: float = 50.0
    sigma_mean: float = 1.0
    pairs_per_user: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.d < 2:
            raise ValueError("d must be >= 2")
        if self.distribution not in _DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if self.sigma_key <= 0 or self.sigma_mean <= 0:
            raise ValueError("sigmas must be positive")
        if not 1 <= self.pairs_per_user <= self.d:
            raise ValueError("need 1 <= pairs_per_user <= d")


def _truncated_normal(rng, sigma: float, lo: float, hi: float, size) -> np.ndarray:
    """N(0, sigma) with out-of-range samples redrawn (not clipped)."""
    out = rng.normal(0.0, sigma, size)
    bad = (out < lo) | (out > hi)
    while bad.any():
        out[bad] = rng.normal(0.0, sigma, int(bad.sum()))
        bad = (out < lo) | (out > hi)
    return out


def _draw_keys(rng, cfg: SynthConfig, size) -> np.ndarray:
    if cfg.distribution == "uniform":
        return rng.integers(1, cfg.d + 1, size=size, dtype=np.int64)
    # gaussian popularity: z ~ N(0, sigma_key), keep while round(z) lands in
    # [-d/2, d/2-1], then shift so the domain becomes 1..d centered near d/2
    half = cfg.d // 2
    lo, hi = -half, cfg.d - half - 1
    z = rng.normal(0.0, cfg.sigma_key, size)
    k = np.rint(z).astype(np.int64)
    bad = (k < lo) | (k > hi)
    while bad.any():
        k[bad] = np.rint(rng.normal(0.0, cfg.sigma_key, int(bad.sum()))).astype(np.int64)
        bad = (k < lo) | (k > hi)
    return k + half + 1


def gen_synthetic(cfg: SynthConfig) -> tuple[Dataset, TrueStats]:
    """Generate a population and its exact ground truth.

    Deterministic for a fixed config (including its seed).  With
    ``pairs_per_user > 1`` each user's keys are pairwise distinct; colliding
    draws are redrawn individually, which biases multi-pair records slightly
    toward sampling without replacement.
    """
    mean_rng = stream(cfg.seed, _MEANS)
    if cfg.distribution == "uniform":
        means = mean_rng.uniform(-1.0, 1.0, cfg.d)
    else:
        means = _truncated_normal(mean_rng, cfg.sigma_mean, -1.0, 1.0, cfg.d)

    key_rng = stream(cfg.seed, _KEYS)
    c = cfg.pairs_per_user
    keys = _draw_keys(key_rng, cfg, (cfg.n, c))
    if c > 1:
        # enforce distinct keys per user: redraw every later duplicate slot
        # until clean, re-examining only rows that still carry duplicates
        # (clean rows never draw again, so the stream is spent identically)
        rows = np.arange(cfg.n)
        tries = 0
        while rows.size:
            sub = keys[rows]
            srt_idx = np.argsort(sub, axis=1, kind="stable")
            srt = np.take_along_axis(sub, srt_idx, axis=1)
            dup_sorted = np.zeros_like(sub, dtype=bool)
            dup_sorted[:, 1:] = srt[:, 1:] == srt[:, :-1]
            dirty = dup_sorted.any(axis=1)
            if not dirty.any():
                break
            tries += 1
            if tries > 10_000:
                raise RuntimeError("could not draw distinct keys per user")
            rows = rows[dirty]
            dup_mask = np.zeros((rows.size, c), dtype=bool)
            np.put_along_axis(dup_mask, srt_idx[dirty], dup_sorted[dirty], axis=1)
            sub = keys[rows]
            sub[dup_mask] = _draw_keys(key_rng, cfg, (int(dup_mask.sum()),))
            keys[rows] = sub
        keys = np.sort(keys, axis=1)

    flat_keys = keys.reshape(-1)
    values = means[flat_keys - 1]
    indptr = np.arange(cfg.n + 1, dtype=np.int64) * c
    data = Dataset(cfg.d, indptr, flat_keys, values)
    return data, true_stats(data)


def load_csv(path, rating_min: float, rating_max: float) -> Dataset:
    """Load ``user_id,key,value`` lines into a dense-key dataset.

    Users and keys are dictionary-encoded in first-appearance order; ratings
    are mapped linearly so rating_min -> -1 and rating_max -> +1.  Repeated
    (user, key) rows are merged by averaging their mapped values.
    """
    if not rating_min < rating_max:
        raise ValueError("need rating_min < rating_max")
    span = rating_max - rating_min
    user_ids: dict = {}
    key_ids: dict = {}
    triples: list = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValueError(f"line {lineno}: expected user_id,key,value")
            uid_s, key_s, val_s = (x.strip() for x in parts)
            try:
                rating = float(val_s)
            except ValueError as exc:
                raise ValueError(f"line {lineno}: bad value {val_s!r}") from exc
            if not rating_min <= rating <= rating_max:
                raise ValueError(
                    f"line {lineno}: value {rating} outside "
                    f"[{rating_min}, {rating_max}]"
                )
            uid = user_ids.setdefault(uid_s, len(user_ids))
            kid = key_ids.setdefault(key_s, len(key_ids) + 1)
            triples.append((uid, kid, 2.0 * (rating - rating_min) / span - 1.0))
    if not triples:
        raise ValueError("no data rows found")

    n, d = len(user_ids), len(key_ids)
    uids = np.array([t[0] for t in triples], dtype=np.int64)
    kids = np.array([t[1] for t in triples], dtype=np.int64)
    vals = np.array([t[2] for t in triples], dtype=np.float64)

    # merge duplicate (user, key) rows by averaging, then sort per user
    codes = uids * np.int64(d + 1) + kids
    order = np.argsort(codes, kind="stable")
    codes, vals = codes[order], vals[order]
    uniq, start = np.unique(codes, return_index=True)
    sums = np.add.reduceat(vals, start)
    counts = np.diff(np.append(start, len(vals)))
    merged_vals = sums / counts
    merged_uids = uniq // (d + 1)
    merged_kids = uniq % (d + 1)

    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, merged_uids + 1, 1)
    indptr = np.cumsum(indptr)
    return Dataset(d, indptr, merged_kids, merged_vals)


def save_dataset(dataset: Dataset, path) -> None:
    """Persist a dataset as a compressed npz archive (exact round trip)."""
    np.savez_compressed(
        path,
        d=np.int64(dataset.d),
        indptr=dataset.indptr,
        keys=dataset.keys,
        values=dataset.values,
    )


def load_dataset(path) -> Dataset:
    with np.load(path) as arc:
        return Dataset(int(arc["d"]), arc["indptr"], arc["keys"], arc["values"])
