"""Privacy-budget composition and allocation for correlated key-value reports.

A report spends budget twice: ``eps_key`` on whether a key appears and
``eps_value`` on the sign of its value.  Because the value channel only fires
when the key channel reports a possession, the two do not add up sequentially;
the combined guarantee is strictly tighter.  This module computes that
combined level for both report encodings, inverts it (allocation strategies
that hit a requested total exactly), and maps budget splits to the concrete
perturbation probabilities ``(a, b, p)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "PerturbProbs",
    "BudgetSpec",
    "compose_ue",
    "compose_grr",
    "allocate",
    "split_from_theta",
    "probs_ue",
    "probs_grr",
]

STRATEGIES = ("optimized", "non_optimized", "naive")
MECHANISMS = ("ue", "grr")


@dataclass(frozen=True)
class PerturbProbs:
    """Perturbation probabilities shared by both report encodings.

    a: chance the sampled key is reported as present.
    b: chance a key the user did not sample shows up anyway.
    p: chance a reported value keeps its sign.

    Fields accept exact rationals (``fractions.Fraction``) as well as floats;
    the enumeration auditor relies on that.
    """

    a: float
    b: float
    p: float

    def __post_init__(self):
        if not (0 < self.a < 1):
            raise ValueError(f"a={self.a!r} outside (0, 1)")
        if not (0 < self.b <= 0.5):
            raise ValueError(f"b={self.b!r} outside (0, 1/2]")
        if self.b > self.a:
            raise ValueError(f"need b <= a, got a={self.a!r} b={self.b!r}")
        if not (0.5 <= self.p < 1):
            raise ValueError(f"p={self.p!r} outside [1/2, 1)")


def _check_split(eps_key: float, eps_value: float):
    if eps_key < 0 or eps_value < 0:
        raise ValueError("budgets must be non-negative")


def compose_ue(eps_key: float, eps_value: float) -> float:
    """Combined privacy level of a padded unary-encoded report.

    Tighter than ``eps_key + eps_value`` (equal only when eps_value is 0),
    and independent of the padding length.
    """
    _check_split(eps_key, eps_value)
    # log(2 / (1 + e^-eps_value)) without overflow for large budgets
    gain = math.log(2.0) - math.log1p(math.exp(-eps_value))
    return max(eps_value, eps_key + gain)


def compose_grr(eps_key: float, eps_value: float, ell: int) -> float:
    """Combined privacy level of a single-pair (generalized RR) report.

    Sampling one of ``ell`` padded slots amplifies privacy, so the level
    decreases strictly in ``ell`` and coincides with :func:`compose_ue`
    at ``ell == 1``.
    """
    _check_split(eps_key, eps_value)
    if ell < 1:
        raise ValueError("ell must be >= 1")
    e1 = math.exp(eps_key)
    e2 = math.exp(eps_value)
    lam = (ell - 1) * (e2 + 1.0) / 2.0
    num = e1 * e2 + lam
    den = min(e1, (e2 + 1.0) / 2.0) + lam
    return math.log(num / den)


def allocate(
    eps_total: float, ell: int, strategy: str, mechanism: str = "ue"
) -> tuple[float, float]:
    """Split a total budget into ``(eps_key, eps_value)``.

    Strategies:
        optimized: minimizes the leading mean-estimation error subject to the
            combined level equaling ``eps_total`` exactly.  Depends on the
            mechanism for ``ell > 1``.
        non_optimized: fully allocated split with eps_value = eps_total / 2.
        naive: plain halving, accounted sequentially; its combined level under
            the tight composition is below ``eps_total``.
    """
    if eps_total <= 0:
        raise ValueError("eps_total must be positive")
    if ell < 1:
        raise ValueError("ell must be >= 1")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if mechanism not in MECHANISMS:
        raise ValueError(f"unknown mechanism {mechanism!r}")
    if strategy == "naive":
        return eps_total / 2.0, eps_total / 2.0
    if strategy == "non_optimized":
        half = math.exp(eps_total / 2.0)
        return math.log((half * half + half) / 2.0), eps_total / 2.0
    if mechanism == "grr" and ell > 1:
        grow = ell * math.expm1(eps_total)
        return math.log1p(grow / 2.0), math.log1p(grow)
    return math.log1p(math.exp(eps_total)) - math.log(2.0), eps_total


def split_from_theta(eps_total: float, theta: float) -> tuple[float, float]:
    """Budget split on the fully-allocated curve, parameterized by e^eps_key.

    Valid for theta in [(e^eps + 1)/2, e^eps); every point composes back to
    ``eps_total`` under :func:`compose_ue`.
    """
    if eps_total <= 0:
        raise ValueError("eps_total must be positive")
    e_tot = math.exp(eps_total)
    if not ((e_tot + 1.0) / 2.0 <= theta < e_tot):
        raise ValueError(f"theta={theta!r} outside [(e^eps+1)/2, e^eps)")
    eps_value = -math.log(2.0 * theta / e_tot - 1.0)
    return math.log(theta), eps_value


def probs_ue(eps_key: float, eps_value: float) -> PerturbProbs:
    """Perturbation probabilities for the unary-encoded report."""
    _check_split(eps_key, eps_value)
    if eps_key == 0 and eps_value == 0:
        raise ValueError("at least one of eps_key, eps_value must be positive")
    b = 1.0 / (math.exp(eps_key) + 1.0)
    p = 1.0 / (1.0 + math.exp(-eps_value))
    return PerturbProbs(a=0.5, b=b, p=p)


def probs_grr(eps_key: float, eps_value: float, d_prime: int) -> PerturbProbs:
    """Perturbation probabilities for the single-pair report.

    ``b`` is tied to ``a`` by mass conservation over the padded domain:
    b = (1 - a) / (d_prime - 1).
    """
    _check_split(eps_key, eps_value)
    if d_prime < 2:
        raise ValueError("d_prime must be >= 2")
    e1 = math.exp(eps_key)
    a = e1 / (e1 + d_prime - 1.0)
    b = (1.0 - a) / (d_prime - 1.0)
    p = 1.0 / (1.0 + math.exp(-eps_value))
    return PerturbProbs(a=a, b=b, p=p)


@dataclass(frozen=True)
class BudgetSpec:
    """A resolved budget: total, split, padding length and domain sizes."""

    eps_total: float
    eps_key: float
    eps_value: float
    ell: int
    d: int
    strategy: str
    mechanism: str

    def __post_init__(self):
        if self.ell < 1 or self.d < 2:
            raise ValueError("need ell >= 1 and d >= 2")
        if self.eps_total <= 0:
            raise ValueError("eps_total must be positive")
        if self.strategy not in STRATEGIES + ("manual",):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"unknown mechanism {self.mechanism!r}")

    @property
    def d_prime(self) -> int:
        return self.d + self.ell

    @classmethod
    def from_strategy(
        cls, eps_total: float, ell: int, d: int, strategy: str, mechanism: str = "ue"
    ) -> "BudgetSpec":
        ek, ev = allocate(eps_total, ell, strategy, mechanism)
        return cls(eps_total, ek, ev, ell, d, strategy, mechanism)

    @classmethod
    def manual(
        cls, eps_key: float, eps_value: float, ell: int, d: int, mechanism: str = "ue"
    ) -> "BudgetSpec":
        """Record a caller-chosen split; the total is its composed level."""
        if mechanism == "grr":
            total = compose_grr(eps_key, eps_value, ell)
        else:
            total = compose_ue(eps_key, eps_value)
        return cls(total, eps_key, eps_value, ell, d, "manual", mechanism)

    @property
    def eps_consumed(self) -> float:
        """Tight combined level of the recorded split.

        Equals ``eps_total`` for fully-allocated strategies; below it for
        ``naive``, which budgets sequentially.
        """
        if self.mechanism == "grr":
            return compose_grr(self.eps_key, self.eps_value, self.ell)
        return compose_ue(self.eps_key, self.eps_value)

    def probs(self) -> PerturbProbs:
        if self.mechanism == "grr":
            return probs_grr(self.eps_key, self.eps_value, self.d_prime)
        return probs_ue(self.eps_key, self.eps_value)
