"""Command-line interface.

Subcommands cover the full pipeline: dataset generation and inspection
(``gen``, ``stats``), budget allocation (``allocate``), end-to-end runs and
allocation comparisons (``run``, ``compare``), the privacy auditor
(``audit``), and the theory oracles (``scan``, ``predict``).  Output goes to
stdout (or ``--out``) as JSON by default; tabular payloads also support
``--format csv``.  Failures print a machine-readable error object to stderr
and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from fractions import Fraction

import numpy as np

from .audit import audit_grr, audit_ue
from .budget import (
    MECHANISMS,
    STRATEGIES,
    BudgetSpec,
    PerturbProbs,
    allocate,
    probs_grr,
    probs_ue,
)
from .datagen import SynthConfig, gen_synthetic, load_dataset, load_csv, save_dataset
from .estimation import Estimates  # noqa: F401  (re-export convenience)
from .experiment import (
    ExperimentConfig,
    compare_allocations,
    run_experiment,
)
from .mechanisms import report_to_line
from .model import true_stats
from .simulate import iter_reports
from .theory import allocation_objective_scan, predict_errors
from . import __version__

__all__ = ["main"]


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # route argparse's own failures through the JSON error path
    def error(self, message):
        raise CliError(message)


def _common_flags(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0, help="root seed")
    p.add_argument("--out", default=None, help="write output here instead of stdout")
    p.add_argument("--format", choices=("json", "csv"), default="json")


def _synth_flags(p: argparse.ArgumentParser):
    p.add_argument("--n", type=int, default=1000, help="synthetic user count")
    p.add_argument("--d", type=int, default=10, help="key domain size")
    p.add_argument("--distribution", choices=("uniform", "gaussian"),
                   default="uniform")
    p.add_argument("--sigma-key", type=float, default=50.0)
    p.add_argument("--sigma-mean", type=float, default=1.0)
    p.add_argument("--pairs-per-user", type=int, default=1)
    p.add_argument("--data-seed", type=int, default=None,
                   help="dataset seed (defaults to --seed)")


def _data_flags(p: argparse.ArgumentParser):
    p.add_argument("--data", default=None,
                   help="dataset file (.npz) or rating CSV; omit for synthetic")
    p.add_argument("--rating-min", type=float, default=None)
    p.add_argument("--rating-max", type=float, default=None)
    _synth_flags(p)


def _synth_config(args) -> SynthConfig:
    return SynthConfig(
        n=args.n,
        d=args.d,
        distribution=args.distribution,
        sigma_key=args.sigma_key,
        sigma_mean=args.sigma_mean,
        pairs_per_user=args.pairs_per_user,
        seed=args.seed if args.data_seed is None else args.data_seed,
    )


def _load_any(args):
    path = args.data
    if path.endswith(".npz"):
        return load_dataset(path)
    if args.rating_min is None or args.rating_max is None:
        raise CliError("CSV data needs --rating-min and --rating-max")
    return load_csv(path, args.rating_min, args.rating_max)


def build_parser() -> _Parser:
    parser = _Parser(prog="pckv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset (.npz)")
    _common_flags(p)
    _synth_flags(p)

    p = sub.add_parser("stats", help="ground-truth per-key frequency and mean")
    _common_flags(p)
    _data_flags(p)

    p = sub.add_parser("allocate", help="budget split and perturbation probs")
    _common_flags(p)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--ell", type=int, default=1)
    p.add_argument("--mechanism", choices=MECHANISMS, default="ue")
    p.add_argument("--strategy", choices=STRATEGIES, default="optimized")
    p.add_argument("--domain", type=int, default=None,
                   help="key domain size d (needed for grr probs)")

    p = sub.add_parser("run", help="run an experiment and score it")
    _common_flags(p)
    _data_flags(p)
    p.add_argument("--mechanism", choices=("pckv-ue", "pckv-grr", "privkv"),
                   required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--ell", type=int, default=1)
    p.add_argument("--strategy", choices=STRATEGIES, default="optimized")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--top-n", type=int, default=None)
    p.add_argument("--dump-reports", default=None,
                   help="also write one perturbed report per user to this file")

    p = sub.add_parser("audit", help="exhaustive privacy audit on a small domain")
    _common_flags(p)
    p.add_argument("--mechanism", choices=MECHANISMS, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--ell", type=int, default=1)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--strategy", choices=STRATEGIES, default="optimized")
    p.add_argument("--exact", action="store_true",
                   help="exact rational arithmetic end to end")
    p.add_argument("--a", default=None, help="override a (accepts fractions)")
    p.add_argument("--b", default=None, help="override b")
    p.add_argument("--p", default=None, help="override p")

    p = sub.add_parser("scan", help="allocation objective along the budget curve")
    _common_flags(p)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--m-star-sq", type=float, default=1.0)
    p.add_argument("--grid-size", type=int, default=10_000)

    p = sub.add_parser("predict", help="closed-form error prediction for one key")
    _common_flags(p)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--mechanism", choices=MECHANISMS, default="ue")
    p.add_argument("--strategy", choices=STRATEGIES, default="optimized")
    p.add_argument("--domain", type=int, default=None)
    p.add_argument("--a", type=float, default=None)
    p.add_argument("--b", type=float, default=None)
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--ell", type=int, default=1)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--f-star", type=float, required=True)
    p.add_argument("--m-star", type=float, default=0.0)

    p = sub.add_parser("compare", help="score the three allocation strategies")
    _common_flags(p)
    _synth_flags(p)
    p.add_argument("--eps-list", required=True,
                   help="comma-separated budgets, e.g. 0.5,1,2,4")
    p.add_argument("--mechanism", choices=("pckv-ue", "pckv-grr"),
                   default="pckv-ue")
    p.add_argument("--ell", type=int, default=1)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--top-n", type=int, default=None)

    return parser


def _cmd_gen(args):
    if args.out is None:
        raise CliError("gen requires --out for the dataset file")
    cfg = _synth_config(args)
    data, stats = gen_synthetic(cfg)
    save_dataset(data, args.out)
    summary = {
        "out": args.out,
        "n": data.n,
        "d": data.d,
        "distribution": cfg.distribution,
        "pairs_per_user": cfg.pairs_per_user,
        "seed": cfg.seed,
        "total_pairs": int(len(data.keys)),
    }
    return {"json": summary, "csv": None, "to_stdout": True}


def _cmd_stats(args):
    if args.data is not None:
        data = _load_any(args)
    else:
        data, _ = gen_synthetic(_synth_config(args))
    stats = true_stats(data)
    rows = [
        {
            "key": k + 1,
            "f_true": float(stats.freq[k]),
            "m_true": None if not np.isfinite(stats.mean[k]) else float(stats.mean[k]),
        }
        for k in range(data.d)
    ]
    payload = {"n": stats.n, "d": stats.d, "per_key": rows}
    return {"json": payload, "csv": (("key", "f_true", "m_true"), rows)}


def _cmd_allocate(args):
    mech = args.mechanism
    ek, ev = allocate(args.eps, args.ell, args.strategy, mech)
    out = {
        "eps_total": args.eps,
        "eps_key": ek,
        "eps_value": ev,
        "ell": args.ell,
        "strategy": args.strategy,
        "mechanism": mech,
    }
    if mech == "grr":
        if args.domain is None:
            raise CliError("grr probabilities need --domain")
        d_prime = args.domain + args.ell
        probs = probs_grr(ek, ev, d_prime)
        out["d_prime"] = d_prime
    else:
        probs = probs_ue(ek, ev)
    out.update(a=float(probs.a), b=float(probs.b), p=float(probs.p))
    return {"json": out, "csv": None}


def _cmd_run(args):
    if args.data is not None:
        source = args.data
    else:
        source = _synth_config(args)
    cfg = ExperimentConfig(
        source=source,
        mechanism=args.mechanism,
        eps_total=args.eps,
        ell=args.ell,
        strategy=args.strategy,
        repeats=args.repeats,
        top_n=args.top_n,
        seed=args.seed,
        rating_min=args.rating_min,
        rating_max=args.rating_max,
    )
    report = run_experiment(cfg)
    if args.dump_reports:
        _dump_reports(args, cfg)
    fields = ("key", "f_true", "m_true", "f_hat", "m_hat",
              "f_hat_raw", "m_hat_raw")
    return {"json": report.to_dict(), "csv": (fields, report.per_key)}


def _dump_reports(args, cfg: ExperimentConfig):
    from .experiment import resolve_dataset

    data, _ = resolve_dataset(cfg)
    if cfg.mechanism == "privkv":
        reports = iter_reports(data, "privkv", cfg.seed, eps=cfg.eps_total)
    else:
        mech = "grr" if cfg.mechanism == "pckv-grr" else "ue"
        spec = BudgetSpec.from_strategy(cfg.eps_total, cfg.ell, data.d,
                                        cfg.strategy, mech)
        reports = iter_reports(data, mech, cfg.seed, probs=spec.probs(),
                               ell=cfg.ell)
    with open(args.dump_reports, "w", encoding="utf-8") as fh:
        for rep in reports:
            fh.write(report_to_line(rep) + "\n")


def _parse_prob(text):
    # accepts "1/3", "0.25", etc.; Fraction keeps it exact
    return Fraction(text)


def _cmd_audit(args):
    explicit = [x is not None for x in (args.a, args.b, args.p)]
    if any(explicit) and not all(explicit):
        raise CliError("--a/--b/--p must be given together")
    if all(explicit):
        probs = PerturbProbs(_parse_prob(args.a), _parse_prob(args.b),
                             _parse_prob(args.p))
    else:
        if args.eps is None:
            raise CliError("audit needs --eps (or explicit --a/--b/--p)")
        spec = BudgetSpec.from_strategy(args.eps, args.ell, args.d,
                                        args.strategy, args.mechanism)
        probs = spec.probs()
        if args.exact:
            a, p = Fraction(probs.a), Fraction(probs.p)
            if args.mechanism == "grr":
                # rebuild b from a so the kernel stays exactly consistent
                b = (1 - a) / (args.d + args.ell - 1)
            else:
                b = Fraction(probs.b)
            probs = PerturbProbs(a, b, p)
    fn = audit_ue if args.mechanism == "ue" else audit_grr
    res = fn(args.d, args.ell, probs)
    out = {
        "mechanism": res.mechanism,
        "d": res.d,
        "ell": res.ell,
        "max_ratio": float(res.max_ratio),
        "max_ratio_exact": str(res.max_ratio) if res.exact else None,
        "log_max_ratio": res.log_max_ratio,
        "theoretical_eps": res.theoretical_eps,
        "slack": res.slack,
        "achieved_at": {
            "s1": [list(kv) for kv in res.achieved_at[0]],
            "s2": [list(kv) for kv in res.achieved_at[1]],
            "output": _render_output(res),
        },
        "n_inputs": res.n_inputs,
        "n_outputs": res.n_outputs,
        "exact": res.exact,
    }
    return {"json": out, "csv": None}


def _render_output(res):
    y = res.achieved_at[2]
    if res.mechanism == "ue":
        return "".join({1: "+", -1: "-", 0: "0"}[s] for s in y)
    return list(y)


def _cmd_scan(args):
    res = allocation_objective_scan(args.eps, args.m_star_sq, args.grid_size)
    rows = [
        {"theta": float(t), "phi": float(ph), "g": float(gg), "h": float(hh)}
        for t, ph, gg, hh in zip(res.thetas, res.phi, res.g, res.h)
    ]
    payload = {
        "eps_total": res.eps_total,
        "m_star_sq": res.m_star_sq,
        "theta_opt": res.theta_opt,
        "phi_opt": res.phi_opt,
        "theta_best": res.theta_best,
        "phi_best": res.phi_best,
        "curve": rows,
    }
    return {"json": payload, "csv": (("theta", "phi", "g", "h"), rows)}


def _cmd_predict(args):
    explicit = [x is not None for x in (args.a, args.b, args.p)]
    if any(explicit) and not all(explicit):
        raise CliError("--a/--b/--p must be given together")
    if all(explicit):
        probs = PerturbProbs(args.a, args.b, args.p)
    else:
        if args.eps is None:
            raise CliError("predict needs --eps (or explicit --a/--b/--p)")
        if args.mechanism == "grr" and args.domain is None:
            raise CliError("grr prediction needs --domain")
        spec = BudgetSpec.from_strategy(
            args.eps, args.ell, args.domain if args.domain else 2,
            args.strategy, args.mechanism,
        )
        probs = spec.probs()
    pred = predict_errors(probs, args.ell, args.n, args.f_star, args.m_star)
    payload = {k: getattr(pred, k) for k in (
        "var_f", "e_m", "var_m_bound", "mse_f_approx", "mse_m_approx",
        "delta", "gamma", "mu", "g", "h",
    )}
    payload.update(a=float(probs.a), b=float(probs.b), p=float(probs.p))
    return {"json": payload, "csv": (tuple(payload), [payload])}


def _cmd_compare(args):
    try:
        eps_list = [float(x) for x in args.eps_list.split(",") if x.strip()]
    except ValueError as exc:
        raise CliError(f"bad --eps-list: {args.eps_list!r}") from exc
    if not eps_list:
        raise CliError("empty --eps-list")
    rows = compare_allocations(
        eps_list,
        args.mechanism,
        _synth_config(args),
        ell=args.ell,
        repeats=args.repeats,
        seed=args.seed,
        top_n=args.top_n,
    )
    fields = ("eps", "strategy", "mse_freq", "mse_mean",
              "mse_freq_raw", "mse_mean_raw")
    return {"json": rows, "csv": (fields, rows)}


_HANDLERS = {
    "gen": _cmd_gen,
    "stats": _cmd_stats,
    "allocate": _cmd_allocate,
    "run": _cmd_run,
    "audit": _cmd_audit,
    "scan": _cmd_scan,
    "predict": _cmd_predict,
    "compare": _cmd_compare,
}


def _render(result, args) -> str:
    if args.format == "csv":
        if result.get("csv") is None:
            raise CliError(f"{args.command} has no csv form; use --format json")
        fields, rows = result["csv"]
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=fields, extrasaction="ignore",
                                lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()
    return json.dumps(result["json"], sort_keys=True, indent=2) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        result = _HANDLERS[args.command](args)
        text = _render(result, args)
        if args.out and not result.get("to_stdout"):
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return 0
    except CliError as exc:
        _emit_error("usage", exc)
        return 2
    except (ValueError, TypeError, OSError, RuntimeError, AssertionError) as exc:
        _emit_error(type(exc).__name__, exc)
        return 1


def _emit_error(kind: str, exc: Exception):
    json.dump({"error": kind, "message": str(exc)}, sys.stderr)
    sys.stderr.write("\n")


if __name__ == "__main__":
    sys.exit(main())
