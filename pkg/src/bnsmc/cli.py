"""Command-line interface.

Subcommands: validate, simulate, reproduce-tables, price, oracle-check.

Exit codes: 0 success, 1 usage or parse error, 2 parameter validation failure,
3 engine failure, 4 oracle disagreement.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import model, oracle
from .config import (ConfigError, RunConfig, env_workers, load_config, parse_workers,
                     rows_to_csv)
from .errors import AssumptionViolation, EngineError, OracleFailure, ParameterError
from .estimators import PAYOFFS
from .tables import TABLE1, TABLE2, run_experiment, run_table

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_ENGINE, EXIT_ORACLE = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model overrides")
    g.add_argument("--config", help="INI file with [model] and [run] sections")
    g.add_argument("--alpha", type=float)
    g.add_argument("--S0", type=float)
    g.add_argument("--sigma0-sq", type=float, dest="sigma0_sq")
    g.add_argument("--lambda", type=float, dest="lam")
    g.add_argument("--a", type=float)
    g.add_argument("--b", type=float)
    g.add_argument("--rho", type=float)
    g.add_argument("--T", type=float)


def _run_flags(p: argparse.ArgumentParser, out_formats=("csv", "json")) -> None:
    g = p.add_argument_group("run overrides")
    g.add_argument("--steps", type=int, help="number of time steps M")
    g.add_argument("--paths", type=int, help="number of paths L")
    g.add_argument("--seed", type=int)
    g.add_argument("--algo", choices=("algo1", "algo2"))
    g.add_argument("--out", help="output data file")
    g.add_argument("--format", choices=out_formats)
    g.add_argument("--workers", help="worker threads (integer or 'auto')")
    g.add_argument("--timing", action="store_true",
                   help="also write wall times into data files (breaks byte reproducibility)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="bnsmc", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check the admissibility conditions")
    _model_flags(p)

    p = sub.add_parser("simulate", help="run one experiment and write its estimates")
    _model_flags(p)
    _run_flags(p)

    p = sub.add_parser("reproduce-tables", help="run every benchmark row of both tables")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--scale", type=float, default=1.0, help="divide every L by this factor")
    p.add_argument("--out", default=".", help="directory for table1.csv and table2.csv")
    p.add_argument("--workers")
    p.add_argument("--tables", choices=("1", "2", "both"), default="both")
    p.add_argument("--timing", action="store_true")

    p = sub.add_parser("price", help="zero-rate option price")
    _model_flags(p)
    _run_flags(p, out_formats=("json",))
    p.add_argument("--payoff", choices=PAYOFFS, default="euro_call")
    p.add_argument("--strike", type=float, help="defaults to S0")

    p = sub.add_parser("oracle-check", help="compare closed forms against quadrature")
    _model_flags(p)
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--perturb", action="append", default=[], metavar="NAME=REL",
                   help="fault injection: scale a closed-form value by (1 + REL)")
    return ap


def _resolve(args) -> RunConfig:
    cfg = load_config(args.config)
    changes = {k: getattr(args, k) for k in ("alpha", "S0", "sigma0_sq", "lam", "a", "b", "rho", "T")
               if getattr(args, k, None) is not None}
    if changes:
        cfg.params = cfg.params.with_(**changes)
    for flag, attr in (("steps", "M"), ("paths", "L"), ("seed", "seed"), ("algo", "algo"),
                       ("out", "out"), ("format", "format")):
        v = getattr(args, flag, None)
        if v is not None:
            setattr(cfg, attr, v)
    if getattr(args, "workers", None) is not None:
        cfg.workers = parse_workers(args.workers, where="flag.workers")
    else:
        env = env_workers()
        if env is not None:
            cfg.workers = env
    return cfg


def _fmt(x) -> str:
    if x is None:
        return "-"
    return f"{x:.6g}" if isinstance(x, float) else str(x)


def cmd_validate(args) -> int:
    cfg = _resolve(args)
    p = cfg.params
    model._check_domain(p)
    (l1, r1), (l2, r2) = model.assumption_margins(p)
    ok1, ok2 = l1 > r1, l2 > r2
    print(f"condition 1: b^2/2 = {l1:.6g} > 2*max((1-e^(-lambda T))/lambda, |rho|) = {r1:.6g}"
          f"  margin {l1 - r1:.6g}  {'OK' if ok1 else 'VIOLATED'}")
    print(f"condition 2: alpha/(e^(-lambda T) sigma0^2 + C2_rho) = {l2:.6g} > -1"
          f"  margin {l2 - r2:.6g}  {'OK' if ok2 else 'VIOLATED'}")
    model.validate(p)
    print("valid")
    return EXIT_OK


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _reports_json(reports) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2, allow_nan=True) + "\n"


def cmd_simulate(args) -> int:
    cfg = _resolve(args).check()
    res = run_experiment(cfg, timing=args.timing)
    row = res.row
    if cfg.out:
        _write(cfg.out, rows_to_csv([row]) if cfg.format == "csv" else _reports_json(res.reports))
    print(f"{cfg.algo} alpha={_fmt(row.alpha)} M={row.M} L={row.L} seed={row.seed}")
    print(f"  terminal Error % {row.error_terminal_pct:+.6f}  (stderr {row.stderr_terminal:.6f})")
    print(f"  asian    Error % {row.error_asian_pct:+.6f}  (stderr {row.stderr_asian:.6f})")
    print(f"  wall time {res.wall_time_sec:.3f} s")
    return EXIT_OK


def cmd_price(args) -> int:
    cfg = _resolve(args)
    cfg.estimands = (args.payoff,)
    cfg.strike = args.strike
    cfg.format = "json"
    cfg.check()
    res = run_experiment(cfg, timing=args.timing)
    rep = res.reports[0]
    if cfg.out:
        _write(cfg.out, _reports_json(res.reports))
    print(f"{rep.estimand} {cfg.algo} strike={_fmt(rep.strike)}: {rep.point:.6f} "
          f"(stderr {rep.stderr:.6f}, {res.wall_time_sec:.3f} s)")
    return EXIT_OK


def cmd_reproduce_tables(args) -> int:
    if not args.scale >= 1:
        raise ConfigError("flag.scale", "must be >= 1")
    workers = parse_workers(args.workers, "flag.workers") if args.workers else (env_workers() or 1)
    os.makedirs(args.out, exist_ok=True)
    todo = {"1": [("table1", TABLE1)], "2": [("table2", TABLE2)],
            "both": [("table1", TABLE1), ("table2", TABLE2)]}[args.tables]

    def show(o):
        r = o.row
        print(f"  alpha={_fmt(r.alpha):>5} M={r.M:>6} L={r.L:>7}  "
              f"terminal {r.error_terminal_pct:+9.4f} (ref {o.spec.ref_terminal:+.4f})  "
              f"asian {r.error_asian_pct:+9.4f} (ref {o.spec.ref_asian:+.4f})  "
              f"{o.wall_time_sec:8.2f} s  {o.note}", flush=True)

    for name, specs in todo:
        print(f"{name} (seed {args.seed}, scale {args.scale:g})", flush=True)
        outcomes = run_table(specs, args.seed, args.scale, workers, args.timing, progress=show)
        _write(os.path.join(args.out, f"{name}.csv"), rows_to_csv([o.row for o in outcomes]))
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    cfg = _resolve(args)
    model._check_domain(cfg.params)
    perturb = {}
    for item in args.perturb:
        name, sep, rel = item.partition("=")
        if not sep:
            raise ConfigError("flag.perturb", f"expected NAME=REL, got {item!r}")
        try:
            perturb[name] = float(rel)
        except ValueError:
            raise ConfigError("flag.perturb", f"cannot parse {rel!r}") from None
    results = oracle.run_checks(cfg.params, args.delta, perturb, tol=args.tol)
    unknown = set(perturb) - {r.quantity for r in results}
    if unknown:
        raise ConfigError("flag.perturb", f"unknown quantity {sorted(unknown)}")
    print(f"{'quantity':<28}{'closed form':>24}{'oracle':>24}{'rel err':>11}{'tol':>9}  result")
    for r in results:
        print(f"{r.quantity:<28}{r.closed_form:>24.16g}{r.oracle:>24.16g}{r.rel_err:>11.2e}"
              f"{r.tolerance:>9.0e}  {'PASS' if r.passed else 'FAIL'}")
    failed = [r.quantity for r in results if not r.passed]
    if failed:
        print(f"FAILED: {', '.join(failed)}", file=sys.stderr)
        return EXIT_ORACLE
    print("all checks passed")
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "simulate": cmd_simulate, "price": cmd_price,
            "reproduce-tables": cmd_reproduce_tables, "oracle-check": cmd_oracle_check}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AssumptionViolation, ParameterError) as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except EngineError as exc:
        print(f"engine error: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    except OracleFailure as exc:
        print(f"oracle failure: {exc}", file=sys.stderr)
        return EXIT_ORACLE


if __name__ == "__main__":
    sys.exit(main())
