"""Command-line front end.

Exit codes: 0 success, 2 input error, 3 no valid model, 4 rank-deficient
model, 5 oracle mismatch.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import replace
from typing import Optional, Sequence

from . import __version__
from .criteria import A_DEFAULT, CRITERIA, Hyperparams
from .design import model_spectrum, read_csv, standardize
from .errors import AbortEmpty, GbfError, InputError, QuadratureNonConverged, RankDeficient, SaturatedFit
from .oracle import run_oracle_check
from .selection import SCHEMA_VERSION, SelectionConfig, rank_models
from .shrinkage import bayes_fit

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_EMPTY = 3
EXIT_RANK = 4
EXIT_ORACLE = 5


def _csv_list(text: str) -> list:
    return [t.strip() for t in text.split(",") if t.strip()]


def _eg_rule(text: str):
    if text == "condition":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected 'condition' or a positive number") from None


def build_parser() -> argparse.ArgumentParser:
    out = argparse.ArgumentParser(add_help=False)
    out.add_argument("--out", help="output file (default: stdout)")
    out.add_argument("--format", choices=("json", "csv", "table"), default="json")
    out.add_argument("--threads", type=int, help="worker processes (default: $GBF_THREADS or all cores)")
    out.add_argument("--seed", type=int, help="master seed, recorded in every report")

    prior = argparse.ArgumentParser(add_help=False)
    prior.add_argument("--a", type=float, default=-0.75, help="prior exponent a in (-1, -1/2)")
    prior.add_argument("--nu", choices=("paper", "unit"), default="paper", help="prior scale scheme")
    prior.add_argument("--eg-rule", type=_eg_rule, default="condition",
                       help="E[g] when q >= n-1: 'condition' or a positive number")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--input", required=True, help="CSV file with a header row")
    data.add_argument("--response", required=True, help="name of the response column")
    data.add_argument("--drop", type=_csv_list, default=[], help="comma list of columns to ignore")

    parser = argparse.ArgumentParser(prog="gbfselect", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", parents=[data, prior, out], help="rank every submodel")
    p.add_argument("--criterion", choices=CRITERIA, default="gbf")
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--max-q", type=int)

    p = sub.add_parser("estimate", parents=[data, prior, out], help="shrinkage fit of one model")
    p.add_argument("--model", type=_csv_list, required=True, help="comma list of predictor columns")

    p = sub.add_parser("simulate", parents=[prior, out], help="run a simulation scenario")
    p.add_argument("--scenario", required=True, help="scenario file or bundled scenario name")
    p.add_argument("--criterion", choices=CRITERIA, help="restrict to one criterion")
    p.add_argument("--replications", type=int, help="override the replication count")
    p.add_argument("--n-grid", type=_csv_list, help="comma list of sample sizes for a consistency sweep")

    p = sub.add_parser("oracle-check", parents=[out], help="closed form vs quadrature self-check")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--perturb", type=float, default=0.0, help=argparse.SUPPRESS)
    return parser


def resolve_threads(flag: Optional[int]) -> int:
    if flag is None:
        env = os.environ.get("GBF_THREADS")
        if env:
            try:
                flag = int(env)
            except ValueError:
                raise InputError(f"GBF_THREADS must be an integer, got {env!r}") from None
        else:
            flag = os.cpu_count() or 1
    if flag < 1:
        raise InputError("thread count must be at least 1")
    return flag


def _hyperparams(args) -> Hyperparams:
    return Hyperparams(a=args.a, nu_scheme=args.nu, eg_rule=args.eg_rule)


def _emit(args, text: str):
    if not text.endswith("\n"):
        text += "\n"
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2)


def _csv_text(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _num(x, fmt=".6g"):
    return "-" if x is None else format(x, fmt)


def cmd_select(args) -> int:
    resolve_threads(args.threads)
    design = standardize(read_csv(args.input, args.response, args.drop))
    hp = _hyperparams(args)
    criterion = args.criterion
    if criterion == "gbf" and (hp.a != A_DEFAULT or hp.nu_scheme != "paper"):
        # the gBF closed form fixes a = -3/4 and the paper nu; other settings need the general family
        criterion = "bf"
    cfg = SelectionConfig(criterion=criterion, hp=hp, max_q=args.max_q, top_k=args.top_k)
    result = rank_models(design, cfg)
    entries = result.top(cfg.top_k)
    if args.format == "json":
        report = result.to_dict(cfg.top_k)
        report["seed"] = args.seed
        _emit(args, _dumps(report))
    elif args.format == "csv":
        rows = [["rank", "mask", "q", "score", "posterior", "r2", "dbar_over_dmin", "columns"]]
        rows += [[e.rank, e.mask, e.q, repr(e.score), "" if e.posterior is None else repr(e.posterior),
                  repr(e.r2), repr(e.dbar_over_dmin), ";".join(e.columns)] for e in entries]
        _emit(args, _csv_text(rows))
    else:
        c = result.counts
        lines = [
            f"gbfselect {__version__}  criterion={cfg.criterion}  n={design.n}  p={design.p}  "
            f"scored {c['scored']} of {c['enumerated']} models",
            f"{'rank':>4s} {'q':>3s} {'score':>12s} {'posterior':>10s} {'R2':>7s} {'dbar/dmin':>9s}  columns",
        ]
        for e in entries:
            lines.append(f"{e.rank:4d} {e.q:3d} {e.score:12.4f} {_num(e.posterior, '10.4f'):>10s} "
                         f"{e.r2:7.4f} {e.dbar_over_dmin:9.3f}  {' '.join(e.columns) or '(null)'}")
        incl = result.inclusion_probs()
        if incl is not None:
            lines.append("")
            lines.append("inclusion probabilities")
            lines += [f"  {name:>12s} {pr:.4f}" for name, pr in zip(design.names, incl)]
        _emit(args, "\n".join(lines))
    return EXIT_OK


def cmd_estimate(args) -> int:
    resolve_threads(args.threads)
    design = standardize(read_csv(args.input, args.response, args.drop))
    if not args.model:
        raise InputError("--model needs at least one column")
    hp = _hyperparams(args)
    mask = design.mask_of(args.model)
    spec = model_spectrum(design, mask, strict=True)
    fit = bayes_fit(spec, design, hp)
    columns = design.columns_of(mask)
    if args.format == "json":
        report = {
            "schema_version": SCHEMA_VERSION, "tool": "gbfselect", "version": __version__,
            "seed": args.seed, "hyperparams": hp.describe(), "n": design.n, "q": spec.q,
            "model": columns, "H": fit.H, "shrink_weights": fit.weights.tolist(),
            "fitted": fit.fitted.tolist(),
        }
        _emit(args, _dumps(report))
    elif args.format == "csv":
        head = f"# H={fit.H!r}\n# shrink_weights={';'.join(repr(w) for w in fit.weights)}\n"
        _emit(args, head + _csv_text([["row", "fitted"]] + [[i + 1, repr(v)] for i, v in enumerate(fit.fitted)]))
    else:
        lines = [f"model: {' '.join(columns)}  (q={spec.q}, n={design.n})", f"H = {fit.H:.6g}",
                 "shrink weights: " + " ".join(f"{w:.4f}" for w in fit.weights), "", "row  fitted"]
        lines += [f"{i + 1:3d}  {v:.6g}" for i, v in enumerate(fit.fitted)]
        _emit(args, "\n".join(lines))
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .simbench import consistency_sweep, load_scenario

    workers = resolve_threads(args.threads)
    scenario = load_scenario(args.scenario)
    if args.replications is not None:
        scenario = replace(scenario, replications=args.replications)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    if args.criterion:
        scenario = replace(scenario, criteria=(args.criterion,))
    hp = _hyperparams(args)
    if args.n_grid:
        try:
            grid = [int(n) for n in args.n_grid]
        except ValueError:
            raise InputError("--n-grid takes integers") from None
        crit = args.criterion or "gbf"
        rows = consistency_sweep(scenario, grid, SelectionConfig(criterion=crit, hp=hp), workers)
        if args.format == "json":
            _emit(args, _dumps({
                "schema_version": SCHEMA_VERSION, "tool": "gbfselect", "version": __version__,
                "scenario": scenario.name, "seed": scenario.seed, "criterion": crit,
                "hyperparams": hp.describe(), "rows": rows,
            }))
        elif args.format == "csv":
            _emit(args, _csv_text([["n", "replications", "freq_first", "se"]]
                                  + [[r["n"], r["replications"], repr(r["freq_first"]), repr(r["se"])] for r in rows]))
        else:
            lines = [f"true model ranked first under {crit}, scenario {scenario.name}, seed {scenario.seed}",
                     f"{'n':>5s} {'N':>5s} {'freq':>6s} {'se':>6s}"]
            lines += [f"{r['n']:5d} {r['replications']:5d} {r['freq_first']:6.3f} {r['se']:6.3f}" for r in rows]
            _emit(args, "\n".join(lines))
        return EXIT_OK
    from .simbench import run_replications

    report = run_replications(scenario, scenario.criteria, SelectionConfig(hp=hp), workers)
    if args.format == "json":
        _emit(args, report.to_json())
        if args.out:
            sys.stdout.write(report.to_text())
    elif args.format == "csv":
        rows = [["criterion", "true_rank_first", "true_rank_top3", "pe_mean", "pe_lq", "pe_uq"]]
        for c, s in report.to_dict()["criteria"].items():
            e = s["prediction_error"]
            rows.append([c, repr(s["true_rank_first"]), repr(s["true_rank_top3"]),
                         repr(e["mean"]), repr(e["lq"]), repr(e["uq"])])
        _emit(args, _csv_text(rows))
    else:
        _emit(args, report.to_text())
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    if args.instances < 0:
        raise InputError("--instances must be nonnegative")
    report = run_oracle_check(args.instances, args.seed or 0, args.perturb)
    if args.format == "json":
        _emit(args, _dumps({
            "schema_version": SCHEMA_VERSION, "tool": "gbfselect", "version": __version__,
            "seed": args.seed or 0, "instances": len(report.instances),
            "max_rel_err": report.max_rel_err, "orthogonal_err": report.orthogonal_err,
            "rtol": report.rtol, "passed": report.passed,
        }))
    else:
        _emit(args, report.summary())
    return EXIT_OK if report.passed else EXIT_ORACLE


COMMANDS = {"select": cmd_select, "estimate": cmd_estimate, "simulate": cmd_simulate,
            "oracle-check": cmd_oracle_check}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (RankDeficient, SaturatedFit) as exc:
        code, msg = EXIT_RANK, exc
    except AbortEmpty as exc:
        code, msg = EXIT_EMPTY, exc
    except QuadratureNonConverged as exc:
        code, msg = EXIT_ORACLE, exc
    except (GbfError, OSError) as exc:
        code, msg = EXIT_INPUT, exc
    print(f"gbfselect: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
