"""Local perturbation mechanisms for key-value reports.

Three report encodings:

* unary ("pckv-ue"): a length ``d + ell`` vector over {+1, -1, 0}; the sampled
  position carries the discretized value through a correlated channel, all
  other positions emit independent background noise.
* single-pair ("pckv-grr"): one ``(key, sign)`` pair drawn from a generalized
  randomized-response kernel over the padded domain.
* "privkv": the sampled-index baseline protocol (one round, one pair per
  user); kept for comparison only.

Each perturber has an exact output-distribution twin used by tests and by the
privacy auditor, computed by composing the sampling distribution with the
per-report kernel.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .budget import PerturbProbs
from .model import UserRecord
from .sampling import pad_and_sample, sample_distribution

__all__ = [
    "UeReport",
    "GrrReport",
    "PrivKvReport",
    "perturb_ue",
    "perturb_grr",
    "perturb_privkv",
    "privkv_probs",
    "output_distribution_ue",
    "output_distribution_grr",
    "report_to_line",
    "parse_report_line",
]


@dataclass(frozen=True)
class UeReport:
    """Unary report: one symbol from {+1, -1, 0} per padded key."""

    bits: tuple

    def __post_init__(self):
        if any(s not in (-1, 0, 1) for s in self.bits):
            raise ValueError("bits must be in {-1, 0, 1}")

    @property
    def d_prime(self) -> int:
        return len(self.bits)


@dataclass(frozen=True)
class GrrReport:
    """Single-pair report: a padded-domain key and a sign."""

    key: int
    value: int

    def __post_init__(self):
        if self.key < 1:
            raise ValueError("key must be >= 1")
        if self.value not in (-1, 1):
            raise ValueError("value must be +1 or -1")


@dataclass(frozen=True)
class PrivKvReport:
    """Baseline report: sampled index, possession bit, sign (0 iff bit is 0)."""

    index: int
    key_bit: int
    value: int

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("index must be >= 1")
        if self.key_bit not in (0, 1):
            raise ValueError("key_bit must be 0 or 1")
        if self.key_bit == 0 and self.value != 0:
            raise ValueError("value must be 0 when key_bit is 0")
        if self.key_bit == 1 and self.value not in (-1, 1):
            raise ValueError("value must be +1 or -1 when key_bit is 1")


def _check_ue_probs(probs: PerturbProbs):
    if probs.a < 0.5:
        raise ValueError("unary reports require a >= 1/2")


def _check_grr_probs(probs: PerturbProbs, d_prime: int, tol=1e-9):
    expect = (1 - probs.a) / (d_prime - 1)
    if abs(probs.b - expect) > tol:
        raise ValueError(
            f"b={probs.b!r} inconsistent with a={probs.a!r} and d_prime={d_prime}"
        )


def perturb_ue(
    record: UserRecord, probs: PerturbProbs, ell: int, d: int, rng: np.random.Generator
) -> UeReport:
    """Perturb one record into a unary report over ``d + ell`` positions."""
    _check_ue_probs(probs)
    a, b, p = float(probs.a), float(probs.b), float(probs.p)
    key, value = pad_and_sample(record, ell, d, rng)
    d_prime = d + ell
    u = rng.random(d_prime)
    symbols = np.zeros(d_prime, dtype=np.int8)
    symbols[u < b / 2] = 1
    symbols[(u >= b / 2) & (u < b)] = -1
    w = rng.random()
    if w < a * p:
        symbols[key - 1] = value
    elif w < a:
        symbols[key - 1] = -value
    else:
        symbols[key - 1] = 0
    return UeReport(bits=tuple(int(s) for s in symbols))


def perturb_grr(
    record: UserRecord, probs: PerturbProbs, ell: int, d: int, rng: np.random.Generator
) -> GrrReport:
    """Perturb one record into a single pair over the padded domain."""
    d_prime = d + ell
    _check_grr_probs(probs, d_prime)
    a, p = float(probs.a), float(probs.p)
    key, value = pad_and_sample(record, ell, d, rng)
    w = rng.random()
    if w < a * p:
        return GrrReport(key=key, value=value)
    if w < a:
        return GrrReport(key=key, value=-value)
    other = 1 + int(rng.integers(d_prime - 1))
    if other >= key:
        other += 1
    sign = 1 if rng.random() < 0.5 else -1
    return GrrReport(key=other, value=sign)


def privkv_probs(eps: float) -> tuple[float, float]:
    """Key and value retention probabilities for the baseline (c = 1)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    p = 1.0 / (1.0 + math.exp(-eps / 2.0))
    return p, p


def perturb_privkv(
    record: UserRecord, eps_total: float, d: int, rng: np.random.Generator
) -> PrivKvReport:
    """Baseline: sample an index, randomize possession bit and value sign."""
    p1, p2 = privkv_probs(eps_total)
    for pair in record:
        if pair.key > d:
            raise ValueError(f"record key {pair.key} outside domain 1..{d}")
    index = 1 + int(rng.integers(d))
    held = record.get(index)
    bit = 1 if held is not None else 0
    bit_out = bit if rng.random() < p1 else 1 - bit
    if bit_out == 0:
        return PrivKvReport(index=index, key_bit=0, value=0)
    v_base = held if held is not None else 0.0
    v_disc = 1 if rng.random() < (1.0 + v_base) / 2.0 else -1
    v_out = v_disc if rng.random() < p2 else -v_disc
    return PrivKvReport(index=index, key_bit=1, value=v_out)


def output_distribution_ue(
    record: UserRecord, probs: PerturbProbs, ell: int, d: int
) -> dict:
    """Exact distribution over all 3^(d+ell) unary reports.

    Exponential in the padded domain size; guarded to ``d + ell <= 10``.
    Exact rationals in, exact rationals out.
    """
    _check_ue_probs(probs)
    d_prime = d + ell
    if d_prime > 10:
        raise ValueError("exact unary enumeration limited to d + ell <= 10")
    a, b, p = probs.a, probs.b, probs.p
    pairs = sample_distribution(record, ell, d)
    background = {1: b / 2, -1: b / 2, 0: 1 - b}
    sampled_row = {1: a * p, -1: a * (1 - p), 0: 1 - a}

    dist: dict = {}
    for y in itertools.product((1, -1, 0), repeat=d_prime):
        dist[y] = sum(
            weight * _patched_product(y, key, sign, background, sampled_row)
            for (key, sign), weight in pairs.items()
        )
    return dist


def _patched_product(y, key, sign, background, sampled_row):
    # product of per-position factors, with the sampled position swapped from
    # the background row to the correlated channel row (a sign flip selects
    # the mirrored row)
    prob = 1
    for i, sym in enumerate(y):
        if i == key - 1:
            prob = prob * sampled_row[sym * sign]
        else:
            prob = prob * background[sym]
    return prob


def output_distribution_grr(
    record: UserRecord, probs: PerturbProbs, ell: int, d: int
) -> dict:
    """Exact distribution over the 2(d+ell) single-pair reports."""
    d_prime = d + ell
    if d_prime > 10_000:
        raise ValueError("single-pair enumeration limited to d + ell <= 10000")
    _check_grr_probs(
        probs, d_prime, tol=0 if isinstance(probs.b, Fraction) else 1e-9
    )
    a, b, p = probs.a, probs.b, probs.p
    pairs = sample_distribution(record, ell, d)
    dist: dict = {}
    for out_key in range(1, d_prime + 1):
        for out_sign in (1, -1):
            total = 0
            for (key, sign), weight in pairs.items():
                if key == out_key:
                    kernel = a * p if sign == out_sign else a * (1 - p)
                else:
                    kernel = b / 2
                total = total + weight * kernel
            dist[(out_key, out_sign)] = total
    return dist


_UE_CHARS = {1: "+", -1: "-", 0: "0"}
_UE_SYMS = {"+": 1, "-": -1, "0": 0}


def report_to_line(report) -> str:
    """Serialize a report to its one-line wire form."""
    if isinstance(report, UeReport):
        return "".join(_UE_CHARS[s] for s in report.bits)
    if isinstance(report, GrrReport):
        return f"{report.key},{report.value}"
    if isinstance(report, PrivKvReport):
        return f"{report.index},{report.key_bit},{report.value}"
    raise TypeError(f"not a report: {report!r}")


def parse_report_line(line: str, kind: str):
    """Parse one wire line; ``kind`` is 'ue', 'grr', or 'privkv'."""
    line = line.strip()
    try:
        if kind == "ue":
            return UeReport(bits=tuple(_UE_SYMS[c] for c in line))
        if kind == "grr":
            key, value = line.split(",")
            return GrrReport(key=int(key), value=int(value))
        if kind == "privkv":
            index, bit, value = line.split(",")
            return PrivKvReport(index=int(index), key_bit=int(bit), value=int(value))
    except (KeyError, ValueError) as exc:
        raise ValueError(f"malformed {kind} report line: {line!r}") from exc
    raise ValueError(f"unknown report kind {kind!r}")
