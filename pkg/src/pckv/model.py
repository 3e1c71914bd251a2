"""Key-value data model.

A dataset holds one record per user; a record is a set of ``(key, value)``
pairs with pairwise-distinct integer keys from a dense domain ``1..d`` and
values in ``[-1, 1]``.  Records may be empty and may hold any number of pairs
up to ``d``.  Storage is columnar (CSR-style) so million-user populations stay
cheap to hold and to scan.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

__all__ = ["KvPair", "UserRecord", "Dataset", "TrueStats", "true_stats"]


@dataclass(frozen=True, slots=True)
class KvPair:
    """A single possession: integer key plus a value in [-1, 1]."""

    key: int
    value: float

    def __post_init__(self):
        if int(self.key) != self.key or self.key < 1:
            raise ValueError(f"key must be a positive integer, got {self.key!r}")
        if not -1.0 <= self.value <= 1.0:
            raise ValueError(f"value {self.value!r} outside [-1, 1]")


class UserRecord:
    """One user's key-value pairs, kept sorted by key.

    Keys must be pairwise distinct; the record may be empty.
    """

    __slots__ = ("pairs",)

    def __init__(self, pairs: Iterable = ()):
        norm = []
        for p in pairs:
            if not isinstance(p, KvPair):
                p = KvPair(int(p[0]), float(p[1]))
            norm.append(p)
        norm.sort(key=lambda p: p.key)
        for left, right in zip(norm, norm[1:]):
            if left.key == right.key:
                raise ValueError(f"duplicate key {left.key} in record")
        self.pairs = tuple(norm)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[KvPair]:
        return iter(self.pairs)

    def __eq__(self, other) -> bool:
        return isinstance(other, UserRecord) and self.pairs == other.pairs

    def __hash__(self) -> int:
        return hash(self.pairs)

    def __repr__(self) -> str:
        return f"UserRecord({list(self.pairs)!r})"

    def keys(self) -> tuple:
        return tuple(p.key for p in self.pairs)

    def get(self, key: int):
        """Return the value held for ``key``, or None if not possessed."""
        for p in self.pairs:
            if p.key == key:
                return p.value
        return None


class Dataset:
    """An ordered population of user records over the key domain ``1..d``.

    Internally columnar: ``indptr`` (n+1 offsets), ``keys`` and ``values``
    hold every pair, with each user's slice sorted by key.
    """

    __slots__ = ("d", "indptr", "keys", "values")

    def __init__(self, d: int, indptr, keys, values, validate: bool = True):
        self.d = int(d)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.keys = np.asarray(keys, dtype=np.int64)
        self.values = np.asarray(values, dtype=np.float64)
        if validate:
            self._validate()

    @classmethod
    def from_records(cls, records: Iterable, d: int) -> "Dataset":
        """Build from an iterable of UserRecord (or iterables of pairs)."""
        indptr = [0]
        keys: list = []
        values: list = []
        for rec in records:
            if not isinstance(rec, UserRecord):
                rec = UserRecord(rec)
            for p in rec:
                keys.append(p.key)
                values.append(p.value)
            indptr.append(len(keys))
        return cls(d, indptr, keys, values)

    def _validate(self):
        if self.d < 1:
            raise ValueError("domain size d must be >= 1")
        if self.indptr.ndim != 1 or len(self.indptr) < 2 or self.indptr[0] != 0:
            raise ValueError("dataset needs at least one user and indptr[0] == 0")
        if np.any(np.diff(self.indptr) < 0) or self.indptr[-1] != len(self.keys):
            raise ValueError("indptr is not a valid offset array")
        if len(self.keys) != len(self.values):
            raise ValueError("keys and values length mismatch")
        if len(self.keys):
            if self.keys.min() < 1 or self.keys.max() > self.d:
                raise ValueError("key outside domain 1..d")
            if self.values.min() < -1.0 or self.values.max() > 1.0:
                raise ValueError("value outside [-1, 1]")
            # sorted-by-key within each user slice, strictly increasing
            # (strictness is what rules out duplicate keys per user)
            inner = np.ones(len(self.keys), dtype=bool)
            starts = self.indptr[1:-1]
            inner[starts[starts < len(self.keys)]] = False  # record boundaries
            bad = (np.diff(self.keys) <= 0) & inner[1:]
            if bad.any():
                u = int(np.searchsorted(self.indptr, np.flatnonzero(bad)[0], "right")) - 1
                raise ValueError(f"record {u} has unsorted or duplicate keys")

    def __len__(self) -> int:
        return len(self.indptr) - 1

    @property
    def n(self) -> int:
        return len(self)

    def record(self, i: int) -> UserRecord:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        rec = UserRecord()
        rec.pairs = tuple(
            KvPair(int(k), float(v))
            for k, v in zip(self.keys[lo:hi], self.values[lo:hi])
        )
        return rec

    def iter_records(self) -> Iterator[UserRecord]:
        for i in range(len(self)):
            yield self.record(i)

    @property
    def users(self) -> tuple:
        """All records, materialized. Convenience view; O(total pairs)."""
        return tuple(self.iter_records())

    def record_sizes(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def max_record_size(self) -> int:
        sizes = self.record_sizes()
        return int(sizes.max()) if len(sizes) else 0


@dataclass(frozen=True)
class TrueStats:
    """Ground-truth per-key frequency and mean for a dataset.

    ``freq[k-1]`` is the fraction of users possessing key ``k``; ``mean[k-1]``
    averages the values of possessing users and is NaN (undefined) for keys
    nobody holds -- never silently 0.
    """

    n: int
    d: int
    freq: np.ndarray
    mean: np.ndarray

    def freq_of(self, key: int) -> float:
        return float(self.freq[key - 1])

    def mean_of(self, key: int) -> float:
        return float(self.mean[key - 1])


def true_stats(dataset: Dataset) -> TrueStats:
    """Compute exact per-key frequencies and means.

    Args:
        dataset: population with at least one user.

    Returns:
        TrueStats with ``freq`` in [0, 1] and NaN means for unpossessed keys.
    """
    n = len(dataset)
    if n < 1:
        raise ValueError("dataset must contain at least one user")
    counts = np.bincount(dataset.keys - 1, minlength=dataset.d).astype(np.float64)
    sums = np.bincount(dataset.keys - 1, weights=dataset.values, minlength=dataset.d)
    freq = counts / n
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return TrueStats(n=n, d=dataset.d, freq=freq, mean=mean)
