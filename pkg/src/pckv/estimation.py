"""Server-side aggregation and estimation.

Aggregation reduces reports to per-key support counts ``n1`` (value +1) and
``n2`` (value -1) over the padded domain.  Frequency estimates debias the
total support; mean estimates come either from a direct ratio (baseline form)
or from the corrected pipeline: invert the expected-count linear system per
key, clip the calibrated counts to their feasible range, and take the ratio
against the clipped frequency.  Raw (uncorrected) values are kept alongside
for diagnostics and theory validation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .budget import PerturbProbs
from .mechanisms import GrrReport, PrivKvReport, UeReport

__all__ = [
    "SupportCounts",
    "PrivKvCounts",
    "Estimates",
    "aggregate",
    "merge_counts",
    "estimate_frequency",
    "estimate_mean_baseline",
    "calibrate_counts",
    "estimate_corrected",
    "aggregate_privkv",
    "estimate_privkv",
]


@dataclass
class SupportCounts:
    """Per-key counts of +1 and -1 reports over keys ``1 .. d + ell``."""

    n1: np.ndarray
    n2: np.ndarray
    n: int
    d: int

    def __post_init__(self):
        self.n1 = np.asarray(self.n1, dtype=np.int64)
        self.n2 = np.asarray(self.n2, dtype=np.int64)
        if self.n1.shape != self.n2.shape or self.n1.ndim != 1:
            raise ValueError("n1 and n2 must be 1-d arrays of equal length")
        if not 1 <= self.d <= len(self.n1):
            raise ValueError("need 1 <= d <= d_prime")
        if self.n < 0:
            raise ValueError("n must be non-negative")

    @property
    def d_prime(self) -> int:
        return len(self.n1)


def merge_counts(a: SupportCounts, b: SupportCounts) -> SupportCounts:
    """Combine counts from two disjoint user shards (associative)."""
    if a.d != b.d or a.d_prime != b.d_prime:
        raise ValueError("cannot merge counts over different domains")
    return SupportCounts(n1=a.n1 + b.n1, n2=a.n2 + b.n2, n=a.n + b.n, d=a.d)


def aggregate(reports, d: int, d_prime: int) -> SupportCounts:
    """Tally a homogeneous batch of unary or single-pair reports.

    Dummy-key tallies (keys above ``d``) are retained; estimators slice them
    off unless asked for diagnostics.
    """
    if not 1 <= d < d_prime:
        raise ValueError("need 1 <= d < d_prime")
    n1 = np.zeros(d_prime, dtype=np.int64)
    n2 = np.zeros(d_prime, dtype=np.int64)
    n = 0
    kind = None
    for rep in reports:
        if kind is None:
            if not isinstance(rep, (UeReport, GrrReport)):
                raise TypeError(f"cannot aggregate {type(rep).__name__}")
            kind = type(rep)
        elif type(rep) is not kind:
            raise TypeError("mixed report types in one aggregation")
        n += 1
        if isinstance(rep, UeReport):
            if rep.d_prime != d_prime:
                raise ValueError("report length does not match d_prime")
            sym = np.asarray(rep.bits)
            n1 += sym == 1
            n2 += sym == -1
        else:
            if rep.key > d_prime:
                raise ValueError("report key outside padded domain")
            if rep.value == 1:
                n1[rep.key - 1] += 1
            else:
                n2[rep.key - 1] += 1
    counts = SupportCounts(n1=n1, n2=n2, n=n, d=d)
    if kind is GrrReport and counts.n1.sum() + counts.n2.sum() != n:
        raise AssertionError("single-pair tallies must sum to n")
    return counts


def _slice(arr: np.ndarray, counts: SupportCounts, include_dummies: bool):
    return arr if include_dummies else arr[: counts.d]


def estimate_frequency(
    counts: SupportCounts,
    probs: PerturbProbs,
    ell: int,
    include_dummies: bool = False,
) -> np.ndarray:
    """Unbiased frequency estimate per key (no clipping).

    f_hat_k = ((n1 + n2) / n - b) / (a - b) * ell
    """
    a, b = float(probs.a), float(probs.b)
    if a <= b:
        raise ValueError("frequency estimation requires a > b")
    if ell < 1:
        raise ValueError("ell must be >= 1")
    if counts.n < 1:
        raise ValueError("need at least one report")
    support = (counts.n1 + counts.n2) / counts.n
    f = (support - b) / (a - b) * ell
    return _slice(f, counts, include_dummies)


def estimate_mean_baseline(
    counts: SupportCounts,
    probs: PerturbProbs,
    ell: int = 1,
    include_dummies: bool = False,
) -> np.ndarray:
    """Direct-ratio mean estimate per key (no clipping, may be non-finite).

    m_hat_k = (n1 - n2)(a - b) / (a (2p - 1) (n1 + n2 - n b))

    ``ell`` cancels out of the ratio and is accepted only for signature
    symmetry with the frequency estimator.
    """
    a, b, p = float(probs.a), float(probs.b), float(probs.p)
    if ell < 1:
        raise ValueError("ell must be >= 1")
    if p <= 0.5:
        raise ValueError("mean estimation requires p > 1/2")
    if a <= b:
        raise ValueError("mean estimation requires a > b")
    num = (counts.n1 - counts.n2) * (a - b)
    den = a * (2 * p - 1) * (counts.n1 + counts.n2 - counts.n * b)
    with np.errstate(divide="ignore", invalid="ignore"):
        m = num / den
    return _slice(m, counts, include_dummies)


def calibrate_counts(
    counts: SupportCounts,
    probs: PerturbProbs,
    n: int | None = None,
    include_dummies: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Invert the expected-count system per key.

    The observed ``(n1, n2)`` mix true +1 and -1 supporters through the
    channel matrix [[ap - b/2, a(1-p) - b/2], [a(1-p) - b/2, ap - b/2]] after
    subtracting the ``n b / 2`` background; this solves for the true counts.
    Estimates are unbiased but unclipped (can fall outside [0, n]).
    ``n`` overrides the population size recorded in ``counts``.
    """
    a, b, p = float(probs.a), float(probs.b), float(probs.p)
    if n is None:
        n = counts.n
    alpha = a * p - b / 2
    beta = a * (1 - p) - b / 2
    det = alpha * alpha - beta * beta  # = a (a - b)(2p - 1)
    if det <= 1e-12:
        raise ValueError("calibration matrix is singular (need a > b and p > 1/2)")
    x1 = counts.n1 - n * b / 2
    x2 = counts.n2 - n * b / 2
    nh1 = (alpha * x1 - beta * x2) / det
    nh2 = (alpha * x2 - beta * x1) / det
    return _slice(nh1, counts, include_dummies), _slice(nh2, counts, include_dummies)


@dataclass
class Estimates:
    """Corrected per-key estimates plus the raw values they started from."""

    f_hat: np.ndarray
    m_hat: np.ndarray
    f_hat_raw: np.ndarray
    m_hat_raw: np.ndarray
    n: int
    d: int

    def __post_init__(self):
        if not (
            len(self.f_hat) == len(self.m_hat) == len(self.f_hat_raw)
            == len(self.m_hat_raw) == self.d
        ):
            raise ValueError("estimate arrays must have length d")


def estimate_corrected(
    counts: SupportCounts, probs: PerturbProbs, ell: int, n: int | None = None
) -> Estimates:
    """Frequency and mean estimates with outlier correction.

    Per key: clip the frequency estimate into [1/n, 1]; clip the calibrated
    supporter counts into [0, n f_hat / ell]; then take the mean as
    ell (nh1 - nh2) / (n f_hat), which lands in [-1, 1] by construction.
    """
    if n is None:
        n = counts.n
    elif n != counts.n:
        counts = SupportCounts(n1=counts.n1, n2=counts.n2, n=n, d=counts.d)
    f_raw = estimate_frequency(counts, probs, ell)
    m_raw = estimate_mean_baseline(counts, probs, ell)
    f_hat = np.clip(f_raw, 1.0 / n, 1.0)
    nh1, nh2 = calibrate_counts(counts, probs, n)
    bound = n * f_hat / ell
    nh1 = np.clip(nh1, 0.0, bound)
    nh2 = np.clip(nh2, 0.0, bound)
    m_hat = ell * (nh1 - nh2) / (n * f_hat)
    return Estimates(
        f_hat=f_hat, m_hat=m_hat, f_hat_raw=f_raw, m_hat_raw=m_raw, n=n, d=counts.d
    )


@dataclass
class PrivKvCounts:
    """Baseline tallies grouped by sampled index: totals, reported ones, signs."""

    sampled: np.ndarray
    ones: np.ndarray
    pos: np.ndarray
    neg: np.ndarray
    n: int
    d: int

    def __post_init__(self):
        for arr in (self.sampled, self.ones, self.pos, self.neg):
            if len(arr) != self.d:
                raise ValueError("count arrays must have length d")


def aggregate_privkv(reports, d: int) -> PrivKvCounts:
    sampled = np.zeros(d, dtype=np.int64)
    ones = np.zeros(d, dtype=np.int64)
    pos = np.zeros(d, dtype=np.int64)
    neg = np.zeros(d, dtype=np.int64)
    n = 0
    for rep in reports:
        if not isinstance(rep, PrivKvReport):
            raise TypeError(f"cannot aggregate {type(rep).__name__}")
        if rep.index > d:
            raise ValueError("report index outside domain")
        n += 1
        i = rep.index - 1
        sampled[i] += 1
        if rep.key_bit == 1:
            ones[i] += 1
            if rep.value == 1:
                pos[i] += 1
            else:
                neg[i] += 1
    return PrivKvCounts(sampled=sampled, ones=ones, pos=pos, neg=neg, n=n, d=d)


def estimate_privkv(counts: PrivKvCounts, p1: float, p2: float) -> Estimates:
    """Baseline estimators with randomized-response debiasing.

    Frequency per key uses only the users whose sampled index hit the key;
    the mean divides the net sign count by the debiased tally of reported
    ones.  The same outlier clipping as the corrected pipeline applies
    (frequency into [1/n, 1], mean into [-1, 1]).
    """
    if not 0.5 < p1 < 1 or not 0.5 < p2 < 1:
        raise ValueError("retention probabilities must lie in (1/2, 1)")
    n = counts.n
    if n < 1:
        raise ValueError("need at least one report")
    with np.errstate(divide="ignore", invalid="ignore"):
        f_raw = (counts.ones / counts.sampled - (1 - p1)) / (2 * p1 - 1)
        m_raw = (counts.pos - counts.neg) / ((2 * p2 - 1) * counts.ones)
    f_hat = np.clip(np.nan_to_num(f_raw, nan=0.0, posinf=1.0, neginf=0.0), 1.0 / n, 1.0)
    m_hat = np.clip(np.nan_to_num(m_raw, nan=0.0, posinf=1.0, neginf=-1.0), -1.0, 1.0)
    return Estimates(
        f_hat=f_hat, m_hat=m_hat, f_hat_raw=f_raw, m_hat_raw=m_raw, n=n, d=counts.d
    )
