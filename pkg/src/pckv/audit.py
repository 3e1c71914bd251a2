"""Exhaustive privacy audit by exact enumeration.

For small domains the report distribution of each mechanism can be computed
exactly for every possible input record.  The worst-case likelihood ratio
over all pairs of inputs and all outputs is then the mechanism's true privacy
level; the audit compares it against the closed-form composed bound and
fails hard if the bound is ever exceeded.

Input records are enumerated over all key subsets up to a size cap with
values at the extremes {-1, +1}: the ratio is linear in each value, so the
extremes dominate (enumerating interior values can only tie, never win --
see the vertex-sufficiency test).  With ``fractions.Fraction`` probabilities
the entire audit runs in exact rational arithmetic and the comparison against
the bound is exact.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

from .budget import PerturbProbs, compose_grr, compose_ue
from .mechanisms import output_distribution_grr, output_distribution_ue
from .model import KvPair, UserRecord

__all__ = ["AuditResult", "audit_ue", "audit_grr", "enumerate_input_records"]


@dataclass(frozen=True)
class AuditResult:
    """Outcome of an exhaustive audit.

    ``achieved_at`` is the witness triple: the two input records (as key-value
    tuples) and the output on which the worst ratio occurs.
    """

    mechanism: str
    d: int
    ell: int
    max_ratio: object  # float, or Fraction in exact mode
    log_max_ratio: float
    theoretical_eps: float
    slack: float
    achieved_at: tuple
    n_inputs: int
    n_outputs: int
    exact: bool


def enumerate_input_records(d: int, max_size: int, value_grid=(-1, 1)):
    """All records over keys 1..d up to ``max_size`` pairs, values on a grid.

    Includes the empty record.  Values default to the two extremes.
    """
    if max_size < 0:
        raise ValueError("max_size must be >= 0")
    records = []
    for size in range(0, min(max_size, d) + 1):
        for keys in itertools.combinations(range(1, d + 1), size):
            for values in itertools.product(value_grid, repeat=size):
                # build KvPair directly: the tuple path would coerce exact
                # int/Fraction values to float and break exact mode
                records.append(
                    UserRecord(KvPair(k, v) for k, v in zip(keys, values))
                )
    return records


def _is_exact(probs: PerturbProbs) -> bool:
    return all(isinstance(x, Fraction) for x in (probs.a, probs.b, probs.p))


def _scan(records, dist_of):
    """Worst likelihood ratio over input pairs, via per-output extremes."""
    best = {}  # output -> [max_p, argmax, min_p, argmin]
    for rec in records:
        for out, prob in dist_of(rec).items():
            cur = best.get(out)
            if cur is None:
                best[out] = [prob, rec, prob, rec]
            else:
                if prob > cur[0]:
                    cur[0], cur[1] = prob, rec
                if prob < cur[2]:
                    cur[2], cur[3] = prob, rec
    max_ratio = None
    witness = None
    for out, (hi, hi_rec, lo, lo_rec) in best.items():
        if lo == 0:
            raise AssertionError("zero-probability output breaks the privacy bound")
        ratio = hi / lo
        if max_ratio is None or ratio > max_ratio:
            max_ratio = ratio
            witness = (hi_rec, lo_rec, out)
    return max_ratio, witness, len(best)


def _finish(mechanism, d, ell, probs, max_ratio, witness, n_inputs, n_outputs,
            theoretical_eps, exact, bound_ratio=None):
    log_ratio = math.log(max_ratio) if not isinstance(max_ratio, Fraction) else (
        math.log(max_ratio.numerator) - math.log(max_ratio.denominator)
    )
    slack = theoretical_eps - log_ratio
    if exact and bound_ratio is not None:
        # compare in ratio space with exact rationals, no tolerance
        if max_ratio > bound_ratio:
            raise AssertionError(
                f"audit found exact ratio {max_ratio} above the composed "
                f"bound {bound_ratio}"
            )
    elif log_ratio > theoretical_eps + 1e-9:
        raise AssertionError(
            f"audit found ratio e^{log_ratio:.12f} above the composed "
            f"bound e^{theoretical_eps:.12f}"
        )
    hi_rec, lo_rec, out = witness
    return AuditResult(
        mechanism=mechanism,
        d=d,
        ell=ell,
        max_ratio=max_ratio,
        log_max_ratio=log_ratio,
        theoretical_eps=theoretical_eps,
        slack=slack,
        achieved_at=(
            tuple((p.key, p.value) for p in hi_rec),
            tuple((p.key, p.value) for p in lo_rec),
            out,
        ),
        n_inputs=n_inputs,
        n_outputs=n_outputs,
        exact=exact,
    )


def _split_from_probs_ue(probs):
    a, b, p = probs.a, probs.b, probs.p
    eps_key = math.log(float(a * (1 - b))) - math.log(float(b * (1 - a)))
    eps_value = math.log(float(p)) - math.log(float(1 - p))
    return eps_key, eps_value


def audit_ue(
    d: int,
    ell: int,
    probs: PerturbProbs,
    max_set_size: int | None = None,
    value_grid=(-1, 1),
) -> AuditResult:
    """Audit the unary mechanism by full enumeration.

    Cost grows as 3^(d + ell) outputs times the number of input records;
    guarded to ``d + ell <= 10``.  Exact-rational probabilities switch the
    whole computation to exact arithmetic.
    """
    if d < 1 or ell < 1:
        raise ValueError("need d >= 1 and ell >= 1")
    if d + ell > 10:
        raise ValueError("unary audit limited to d + ell <= 10")
    if max_set_size is None:
        max_set_size = max(ell, 3)
    records = enumerate_input_records(d, max_set_size, value_grid)
    max_ratio, witness, n_outputs = _scan(
        records, lambda rec: output_distribution_ue(rec, probs, ell, d)
    )
    eps_key, eps_value = _split_from_probs_ue(probs)
    theoretical = compose_ue(eps_key, eps_value)
    exact = _is_exact(probs)
    bound = None
    if exact:
        a, b, p = probs.a, probs.b, probs.p
        # e^eps of the composed guarantee, as an exact rational:
        # max of the value-only ratio and the key-and-value ratio
        bound = max(p / (1 - p), 2 * p * a * (1 - b) / (b * (1 - a)))
    return _finish("ue", d, ell, probs, max_ratio, witness, len(records),
                   n_outputs, theoretical, exact, bound)


def audit_grr(
    d: int,
    ell: int,
    probs: PerturbProbs,
    max_set_size: int | None = None,
    value_grid=(-1, 1),
) -> AuditResult:
    """Audit the single-pair mechanism by full enumeration.

    Outputs number only 2 (d + ell), so far larger domains are feasible than
    for the unary audit; guarded to ``d + ell <= 1000``.
    """
    if d < 1 or ell < 1:
        raise ValueError("need d >= 1 and ell >= 1")
    if d + ell > 1000:
        raise ValueError("single-pair audit limited to d + ell <= 1000")
    if max_set_size is None:
        max_set_size = max(ell, 3)
    records = enumerate_input_records(d, max_set_size, value_grid)
    max_ratio, witness, n_outputs = _scan(
        records, lambda rec: output_distribution_grr(rec, probs, ell, d)
    )
    a, b, p = probs.a, probs.b, probs.p
    eps_key = math.log(float(a)) - math.log(float(b))
    eps_value = math.log(float(p)) - math.log(float(1 - p))
    theoretical = compose_grr(eps_key, eps_value, ell)
    exact = _is_exact(probs)
    bound = None
    if exact:
        ratio_key = a / b
        ratio_value = p / (1 - p)
        lam = (ell - 1) * (ratio_value + 1) / 2
        bound = (ratio_key * ratio_value + lam) / (
            min(ratio_key, (ratio_value + 1) / 2) + lam
        )
    return _finish("grr", d, ell, probs, max_ratio, witness, len(records),
                   n_outputs, theoretical, exact, bound)
