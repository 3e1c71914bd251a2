"""End-to-end experiment harness.

One experiment fixes a dataset (synthetic config or CSV path), a mechanism,
and a budget; each repeat derives its own seed, perturbs every user, estimates,
and scores against ground truth.  Metrics are averaged over repeats and can be
restricted to the top-N keys by true frequency.  Reports serialize to
deterministic JSON (sorted keys, identical bytes for identical config+seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .budget import BudgetSpec
from .datagen import SynthConfig, gen_synthetic, load_csv
from .estimation import (
    Estimates,
    estimate_corrected,
    estimate_privkv,
)
from .mechanisms import privkv_probs
from .model import Dataset, TrueStats, true_stats
from .simulate import run_grr, run_privkv, run_ue
from .theory import predict_errors

__all__ = [
    "ExperimentConfig",
    "MetricsReport",
    "run_experiment",
    "precision_top_n",
    "compare_allocations",
    "MECHANISM_NAMES",
    "ELL_PRESETS",
]

MECHANISM_NAMES = ("pckv-ue", "pckv-grr", "privkv")

# padding lengths used for the rating datasets these presets are named after
ELL_PRESETS = {"ecomm": 1, "clothing": 2, "amazon": 2, "movie": 100}

# seed-path stage code reserved for per-repeat derivation
_EXP_STAGE = 10


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment."""

    source: object  # SynthConfig or a CSV path
    mechanism: str
    eps_total: float
    ell: int = 1
    strategy: str = "optimized"
    repeats: int = 1
    top_n: int | None = None
    seed: int = 0
    rating_min: float | None = None
    rating_max: float | None = None

    def __post_init__(self):
        if self.mechanism not in MECHANISM_NAMES:
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        if self.eps_total <= 0:
            raise ValueError("eps_total must be positive")
        if self.ell < 1:
            raise ValueError("ell must be >= 1")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.top_n is not None and self.top_n < 1:
            raise ValueError("top_n must be >= 1 when given")


@dataclass
class MetricsReport:
    """Scored experiment outcome, averaged over repeats."""

    mechanism: str
    n: int
    d: int
    ell: int
    eps_total: float
    strategy: str
    repeats: int
    seed: int
    scope: str
    mse_freq: float
    mse_mean: float
    mse_freq_raw: float
    mse_mean_raw: float
    precision_top_n: float | None
    ell_covers_all: bool
    predictions: dict | None
    per_key: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {
            "mechanism": self.mechanism,
            "n": self.n,
            "d": self.d,
            "ell": self.ell,
            "eps_total": self.eps_total,
            "strategy": self.strategy,
            "repeats": self.repeats,
            "seed": self.seed,
            "scope": self.scope,
            "mse_freq": _jsonable(self.mse_freq),
            "mse_mean": _jsonable(self.mse_mean),
            "mse_freq_raw": _jsonable(self.mse_freq_raw),
            "mse_mean_raw": _jsonable(self.mse_mean_raw),
            "precision_top_n": _jsonable(self.precision_top_n),
            "ell_covers_all": self.ell_covers_all,
            "predictions": self.predictions,
            "per_key": self.per_key,
        }
        return out

    def to_json(self, indent=None) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=indent)


def _jsonable(x):
    if x is None:
        return None
    x = float(x)
    return x if np.isfinite(x) else None


def resolve_dataset(cfg: ExperimentConfig) -> tuple[Dataset, TrueStats]:
    if isinstance(cfg.source, SynthConfig):
        return gen_synthetic(cfg.source)
    if cfg.rating_min is None or cfg.rating_max is None:
        raise ValueError("CSV sources need rating_min and rating_max")
    data = load_csv(cfg.source, cfg.rating_min, cfg.rating_max)
    return data, true_stats(data)


def _top_key_ids(freq: np.ndarray, top_n: int) -> np.ndarray:
    """Keys of the N largest frequencies, ties broken by ascending key id."""
    d = len(freq)
    order = np.lexsort((np.arange(1, d + 1), -np.asarray(freq, dtype=np.float64)))
    return order[:top_n] + 1


def precision_top_n(estimates: Estimates, stats: TrueStats, top_n: int) -> float:
    """Fraction of predicted top-N keys that are truly top-N."""
    if not 1 <= top_n <= estimates.d:
        raise ValueError("need 1 <= top_n <= d")
    if estimates.d != stats.d:
        raise ValueError("estimates and stats cover different domains")
    predicted = set(_top_key_ids(estimates.f_hat, top_n))
    actual = set(_top_key_ids(stats.freq, top_n))
    return len(predicted & actual) / top_n


def _repeat_seed(seed: int, repeat: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(
        entropy=int(seed), spawn_key=(_EXP_STAGE, int(repeat))
    )


def _one_run(cfg: ExperimentConfig, data: Dataset, repeat: int) -> Estimates:
    rs = _repeat_seed(cfg.seed, repeat)
    if cfg.mechanism == "privkv":
        counts = run_privkv(data, cfg.eps_total, rs)
        p1, p2 = privkv_probs(cfg.eps_total)
        return estimate_privkv(counts, p1, p2)
    spec = BudgetSpec.from_strategy(
        cfg.eps_total, cfg.ell, data.d, cfg.strategy,
        "grr" if cfg.mechanism == "pckv-grr" else "ue",
    )
    probs = spec.probs()
    if cfg.mechanism == "pckv-grr":
        counts = run_grr(data, probs, cfg.ell, rs)
    else:
        counts = run_ue(data, probs, cfg.ell, rs)
    return estimate_corrected(counts, probs, cfg.ell)


def _scope_mask(stats: TrueStats, top_n: int | None) -> tuple[np.ndarray, str]:
    if top_n is None:
        return np.arange(stats.d), "all-keys"
    ids = _top_key_ids(stats.freq, min(top_n, stats.d))
    return ids - 1, f"top-{top_n}-true"


def _mse(est: np.ndarray, true: np.ndarray) -> float:
    err = np.asarray(est, dtype=np.float64) - true
    return float(np.mean(err * err)) if len(err) else float("nan")


def _attach_predictions(cfg, data, stats, sel) -> dict | None:
    if cfg.mechanism == "privkv":
        return None
    spec = BudgetSpec.from_strategy(
        cfg.eps_total, cfg.ell, data.d, cfg.strategy,
        "grr" if cfg.mechanism == "pckv-grr" else "ue",
    )
    probs = spec.probs()
    f = stats.freq[sel]
    m = stats.mean[sel]
    ok_f = f > 0
    ok_m = ok_f & np.isfinite(m)
    out: dict = {"mse_f_approx": None, "mse_m_approx": None}
    if ok_f.any():
        pred = predict_errors(probs, cfg.ell, stats.n, f[ok_f], 0.0)
        out["mse_f_approx"] = _jsonable(np.mean(np.atleast_1d(pred.mse_f_approx)))
        out["var_f"] = _jsonable(np.mean(np.atleast_1d(pred.var_f)))
    if ok_m.any():
        pred = predict_errors(probs, cfg.ell, stats.n, f[ok_m], m[ok_m])
        out["mse_m_approx"] = _jsonable(np.mean(np.atleast_1d(pred.mse_m_approx)))
    return out


def run_experiment(cfg: ExperimentConfig) -> MetricsReport:
    """Run, estimate, and score one experiment configuration.

    Deterministic: identical config (including seed) gives identical output.
    """
    data, stats = resolve_dataset(cfg)
    sel, scope = _scope_mask(stats, cfg.top_n)
    mean_ok = np.isfinite(stats.mean[sel])

    acc = {k: 0.0 for k in ("mse_f", "mse_m", "mse_f_raw", "mse_m_raw")}
    prec_acc = 0.0
    sums = None
    for rep in range(cfg.repeats):
        est = _one_run(cfg, data, rep)
        if sums is None:
            sums = {
                "f_hat": np.zeros(data.d),
                "m_hat": np.zeros(data.d),
                "f_hat_raw": np.zeros(data.d),
                "m_hat_raw": np.zeros(data.d),
            }
        for name in sums:
            sums[name] += getattr(est, name)
        acc["mse_f"] += _mse(est.f_hat[sel], stats.freq[sel])
        acc["mse_m"] += _mse(est.m_hat[sel][mean_ok], stats.mean[sel][mean_ok])
        acc["mse_f_raw"] += _mse(est.f_hat_raw[sel], stats.freq[sel])
        acc["mse_m_raw"] += _mse(est.m_hat_raw[sel][mean_ok], stats.mean[sel][mean_ok])
        if cfg.top_n is not None:
            prec_acc += precision_top_n(est, stats, min(cfg.top_n, data.d))

    r = cfg.repeats
    per_key = []
    for k0 in sel:
        k = int(k0) + 1
        m_true = stats.mean[k0]
        per_key.append({
            "key": k,
            "f_true": _jsonable(stats.freq[k0]),
            "m_true": _jsonable(m_true),
            "f_hat": _jsonable(sums["f_hat"][k0] / r),
            "m_hat": _jsonable(sums["m_hat"][k0] / r),
            "f_hat_raw": _jsonable(sums["f_hat_raw"][k0] / r),
            "m_hat_raw": _jsonable(sums["m_hat_raw"][k0] / r),
        })

    return MetricsReport(
        mechanism=cfg.mechanism,
        n=data.n,
        d=data.d,
        ell=cfg.ell,
        eps_total=cfg.eps_total,
        strategy=cfg.strategy if cfg.mechanism != "privkv" else "naive",
        repeats=cfg.repeats,
        seed=cfg.seed,
        scope=scope,
        mse_freq=acc["mse_f"] / r,
        mse_mean=acc["mse_m"] / r,
        mse_freq_raw=acc["mse_f_raw"] / r,
        mse_mean_raw=acc["mse_m_raw"] / r,
        precision_top_n=(prec_acc / r) if cfg.top_n is not None else None,
        ell_covers_all=cfg.ell >= data.max_record_size,
        predictions=_attach_predictions(cfg, data, stats, sel),
        per_key=per_key,
    )


def compare_allocations(
    eps_list,
    mechanism: str,
    dataset_cfg: SynthConfig,
    ell: int = 1,
    repeats: int = 1,
    seed: int = 0,
    top_n: int | None = None,
) -> list:
    """Score optimized / non_optimized / naive splits under shared seeds.

    For each eps, all three strategies see the same dataset and the same
    per-repeat randomness, so differences come from the allocation alone.
    Returns one row per (eps, strategy).
    """
    if mechanism == "privkv":
        raise ValueError("allocation comparison applies to the pckv mechanisms")
    rows = []
    for eps in eps_list:
        for strategy in ("optimized", "non_optimized", "naive"):
            cfg = ExperimentConfig(
                source=dataset_cfg,
                mechanism=mechanism,
                eps_total=float(eps),
                ell=ell,
                strategy=strategy,
                repeats=repeats,
                top_n=top_n,
                seed=seed,
            )
            rep = run_experiment(cfg)
            rows.append({
                "eps": float(eps),
                "strategy": strategy,
                "mse_freq": _jsonable(rep.mse_freq),
                "mse_mean": _jsonable(rep.mse_mean),
                "mse_freq_raw": _jsonable(rep.mse_freq_raw),
                "mse_mean_raw": _jsonable(rep.mse_mean_raw),
            })
    return rows
