"""Command-line entry point: ``hourly-dr <subcommand> ...``.

Exit codes: 0 success, 1 malformed input, 2 iteration budget exhausted.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from hourly_dr import analysis, bench, forecasting, online
from hourly_dr.io import InputError, load_game, load_json, profile_csv
from hourly_dr.solvers import SolverConfig, random_start, solve, solve_optimal

EXIT_OK, EXIT_INPUT, EXIT_BUDGET = 0, 1, 2

log = logging.getLogger("hourly_dr")


def resolve_seed(flag):
    if flag is not None:
        return flag
    env = os.environ.get("DR_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise InputError(f"DR_SEED: expected an integer, got {env!r}") from None


def _gamma(value):
    if value == "auto":
        return value
    try:
        return float(value)
    except ValueError:
        raise argparse.ArgumentTypeError("gamma must be a number or 'auto'") from None


def _solver_flags(p, eps=1e-3):
    p.add_argument("--eps-stop", type=float, default=eps)
    p.add_argument("--k-max", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=None, help="seed (falls back to $DR_SEED, then 0)")


def _config(args):
    try:
        return SolverConfig(eps_stop=args.eps_stop, k_max=args.k_max, gamma=getattr(args, "gamma", "auto"),
                            record_history=getattr(args, "history", False))
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_report(out: Path, report, extra=None):
    (out / "profile.csv").write_text(profile_csv(report.profile))
    d = report.to_dict()
    d.update(extra or {})
    (out / "report.json").write_text(json.dumps(d, indent=2) + "\n")
    if report.history:
        (out / "history.csv").write_text(report.history_csv())


def cmd_solve(args) -> int:
    game = load_game(args.game)
    cfg = _config(args)
    x0 = random_start(game, resolve_seed(args.seed)) if args.random_start else None
    report = solve(game, x0, cfg, args.algorithm)
    _write_report(_outdir(args), report)
    print(f"{args.algorithm}: {report.iterations} iterations, residual {report.final_residual:.3g}, "
          f"{'converged' if report.converged else 'NOT converged'}")
    return EXIT_OK if report.converged else EXIT_BUDGET


def cmd_optimal(args) -> int:
    game = load_game(args.game)
    report = solve_optimal(game, _config(args))
    _write_report(_outdir(args), report)
    print(f"optimal: {report.iterations} iterations, residual {report.final_residual:.3g}")
    return EXIT_OK if report.converged else EXIT_BUDGET


def cmd_poa(args) -> int:
    game = load_game(args.game)
    try:
        rep = analysis.poa_bound(game)
    except (analysis.PoaBoundUndefined, TypeError) as exc:
        raise InputError(str(exc)) from None
    code = EXIT_OK
    if args.empirical:
        cfg = _config(args)
        ne = solve(game, None, cfg, args.algorithm)
        opt = solve_optimal(game, SolverConfig(eps_stop=min(cfg.eps_stop, 1e-8), k_max=200_000))
        rep.empirical_poa = analysis.empirical_poa(game, ne.profile, opt.profile)
        if not (ne.converged and opt.converged):
            code = EXIT_BUDGET
    if args.out:
        out = _outdir(args)
        (out / "poa.json").write_text(rep.to_json(indent=2) + "\n")
    lbar = game.upper.sum(axis=0)
    print(f"{'t':>4} {'alpha':>12} {'beta':>12} {'Lbar':>12} {'phi':>12}")
    for t in range(game.T):
        print(f"{t:>4} {game.prices.alpha[t]:>12.6g} {game.prices.beta[t]:>12.6g} {lbar[t]:>12.6g} "
              f"{rep.phi[t]:>12.6g}")
    print(f"t0 = {rep.t0}, condition holds: {'yes' if rep.condition_holds else 'no'}")
    print(f"bound (tight):      {rep.bound_tight:.6g}")
    print(f"bound (simplified): {rep.bound_simplified:.6g}")
    if rep.empirical_poa is not None:
        print(f"empirical PoA:      {rep.empirical_poa:.6g}")
    if not rep.condition_holds:
        log.warning("bound condition does not hold for this instance; the bound is not guaranteed")
    return code


def cmd_simulate(args) -> int:
    raw = load_json(args.campaign)
    if not isinstance(raw, dict):
        raise InputError("campaign: expected a JSON object")
    if args.seed is not None or "seed" not in raw:
        raw["seed"] = resolve_seed(args.seed)
    try:
        config = online.CampaignConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise InputError(f"campaign: {exc}") from None
    result = online.run_campaign(config, progress=lambda d: log.info("day %d done", d))
    out = _outdir(args)
    (out / "days.csv").write_text(result.days_csv())
    (out / "summary.csv").write_text(result.summary_csv())
    (out / "profiles.csv").write_text(result.profiles_csv())
    sys.stdout.write(result.summary_csv())
    return EXIT_OK


def _read_history(path):
    hours, loads = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not {"hour", "load"} <= set(reader.fieldnames or ()):
            raise InputError(f"{path}: expected columns hour, load")
        for row_no, row in enumerate(reader, start=2):
            try:
                hours.append(int(row["hour"]))
                loads.append(float(row["load"]))
            except (TypeError, ValueError):
                raise InputError(f"row {row_no}: hour and load must be numeric") from None
    return np.array(hours), np.array(loads)


def cmd_forecast_fit(args) -> int:
    hours, loads = _read_history(args.history)
    model = forecasting.fit(hours, loads)
    text = model.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(json.dumps({"m": model.mean_reversion, "sigma": model.sigma}))
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        sizes = [int(v) for v in args.sizes.split(",")]
    except ValueError:
        raise InputError(f"--sizes: expected comma-separated integers, got {args.sizes!r}") from None
    seed = resolve_seed(args.seed)
    rows = bench.run_bench(sizes, args.T, seeds=range(seed, seed + args.repeats), eps_stop=args.eps_stop,
                           k_max=args.k_max)
    text = bench.bench_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    for algorithm in ("cbrd", "sird"):
        med = bench.median_iterations(rows, algorithm)
        if len(med) > 1:
            print(f"# {algorithm}: iterations ~ N^{bench.growth_exponent(med):.2f}")
    return EXIT_OK if all(r.converged for r in rows) else EXIT_BUDGET


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hourly-dr", description="Hourly-billing demand response games")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="compute a Nash equilibrium")
    p.add_argument("game")
    p.add_argument("-o", "--out", default=".")
    p.add_argument("--algorithm", choices=("cbrd", "sird"), default="cbrd")
    p.add_argument("--gamma", type=_gamma, default="auto")
    p.add_argument("--history", action="store_true", help="also write history.csv")
    p.add_argument("--random-start", action="store_true")
    _solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("optimal", help="compute the social optimum")
    p.add_argument("game")
    p.add_argument("-o", "--out", default=".")
    p.add_argument("--history", action="store_true")
    _solver_flags(p, eps=1e-8)
    p.set_defaults(func=cmd_optimal, **{"k_max": 200_000})

    p = sub.add_parser("poa", help="Price of Anarchy bound for an affine game")
    p.add_argument("game")
    p.add_argument("-o", "--out", default=None)
    p.add_argument("--empirical", action="store_true", help="also solve NE and optimum")
    p.add_argument("--algorithm", choices=("cbrd", "sird"), default="cbrd")
    _solver_flags(p, eps=1e-6)
    p.set_defaults(func=cmd_poa)

    p = sub.add_parser("simulate", help="run a multi-day scenario campaign")
    p.add_argument("campaign")
    p.add_argument("-o", "--out", default=".")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("forecast-fit", help="fit the load forecast model to an hourly history")
    p.add_argument("history", help="CSV with columns hour, load")
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_forecast_fit)

    p = sub.add_parser("bench", help="iterations to tolerance versus N")
    p.add_argument("--sizes", default=",".join(map(str, bench.DEFAULT_SIZES)))
    p.add_argument("-T", type=int, default=10)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("-o", "--out", default=None)
    _solver_flags(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: file not found", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        # domain validation raised below the I/O layer
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
