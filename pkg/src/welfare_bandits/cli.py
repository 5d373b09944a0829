"""Command-line front end: ``simulate``, ``verify`` and ``rates``.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness import ConfigError, ExperimentPlan, run_plan
from .verify import DEFAULT_EPSILONS, DEFAULT_LAMBDAS, constants_table, format_rows, run_suite

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(raw: dict, item: str) -> None:
    """Set a dotted ``key=value`` in ``raw``; ``T=n`` is shorthand for ``horizons=[n]``."""
    if "=" not in item:
        raise ConfigError(item, "override must look like KEY=VALUE")
    key, text = item.split("=", 1)
    value = _parse_value(text)
    if key == "T":
        key, value = "horizons", value if isinstance(value, list) else [value]
    parts = key.split(".")
    node = raw
    for p in parts[:-1]:
        nxt = node.setdefault(p, {})
        if not isinstance(nxt, dict):
            raise ConfigError(key, f"{p} is not an object")
        node = nxt
    node[parts[-1]] = value


def load_plan(args) -> ExperimentPlan:
    if args.config is None:
        raw = {}
    else:
        path = Path(args.config)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    for item in args.override:
        apply_override(raw, item)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.threads is not None:
        raw["threads"] = args.threads
    return ExperimentPlan.from_dict(raw)


def _report(result, quiet: bool):
    if quiet:
        return
    for h in result.horizons:
        flag = "  [outside bound hypothesis]" if h.in_hypothesis is False else ""
        line = (f"T={h.T:>9d}  regret {h.mean[-1]:12.4f} +- {h.se[-1]:.4f}  "
                f"per round {h.mean[-1] / h.T:.6f}{flag}")
        if h.bound is not None:
            line += "  bound ok" if h.bound.passed else f"  bound check failed: {h.bound.reason}"
        print(line)


def cmd_simulate(args) -> int:
    plan = load_plan(args)
    result = run_plan(plan)
    out = result.write(args.out or plan.out or "results")
    _report(result, args.quiet)
    if not args.quiet:
        print(f"wrote {out / 'regret.csv'} and {out / 'summary.json'}")
    return EXIT_OK


def cmd_rates(args) -> int:
    plan = load_plan(args)
    if len(plan.horizons) < 4:
        raise ConfigError("horizons", "rate fitting needs at least 4 horizons spanning two decades")
    if plan.horizons[-1] < 100 * plan.horizons[0]:
        raise ConfigError("horizons", "rate fitting needs horizons spanning at least two decades")
    result = run_plan(plan)
    out = result.write(args.out or plan.out or "results")
    _report(result, args.quiet)
    if result.rate is None:
        print(f"rate fit failed: {result.rate_error}", file=sys.stderr)
        return EXIT_RUNTIME
    lo, hi = result.rate.slope_interval(n=len(plan.horizons))
    print(f"slope {result.rate.slope:.4f}  95% CI [{lo:.4f}, {hi:.4f}]  R^2 {result.rate.r_squared:.4f}")
    if not args.quiet:
        print(f"wrote {out / 'summary.json'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    lambdas = [args.lam] if args.lam is not None else DEFAULT_LAMBDAS
    epsilons = [args.epsilon] if args.epsilon is not None else DEFAULT_EPSILONS
    for lam in lambdas:
        if not 0.0 < lam < 1.0:
            raise ConfigError("--lambda", "must lie in (0, 1)")
    for eps in epsilons:
        if not -1.0 <= eps <= 1.0:
            raise ConfigError("--epsilon", "must lie in [-1, 1]")
    if args.lam is not None:
        consts = constants_table(args.lam)
        print("  ".join(f"{k} = {v:.6e}" for k, v in consts.items()))
    rows = run_suite(lambdas, epsilons, c1_shift=args.perturb)
    failed = [r for r in rows if not r.passed]
    if not args.quiet or failed:
        print(format_rows(rows if not args.quiet else failed))
    print(f"{len(rows) - len(failed)}/{len(rows)} checks passed")
    return EXIT_RUNTIME if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="welfare-bandits", description="Welfare-maximizing bandit simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON plan file")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="set a (dotted) plan key after reading the file; repeatable")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--quiet", action="store_true")

    common(sub.add_parser("simulate", help="run a plan and write regret.csv and summary.json"))
    common(sub.add_parser("rates", help="run a horizon sweep and fit the regret growth exponent"))
    v = sub.add_parser("verify", help="run the analytic identity suite")
    v.add_argument("--lambda", dest="lam", type=float)
    v.add_argument("--epsilon", type=float)
    v.add_argument("--quiet", action="store_true")
    v.add_argument("--perturb", type=float, default=0.0, help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING if getattr(args, "quiet", False) else logging.INFO,
                        format="%(message)s")
    handlers = {"simulate": cmd_simulate, "rates": cmd_rates, "verify": cmd_verify}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
