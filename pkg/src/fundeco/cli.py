"""Command-line entry points: run, simplex, calibrate, optimize."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import calibration as cal
from .config import load_config
from .engine import Simulation, default_workers
from .experiments import run_sweep, sample_simplex
from .stats import run_facts
from .strategies import ConfigError

EXIT_OK, EXIT_INPUT, EXIT_SIM = 0, 1, 2
MARKET_COLUMNS = ("t", "price", "fundamental_value", "dividend", "volume", "ws_nt", "ws_vi", "ws_tf",
                  "admin_position", "clearing_iters")
FUND_COLUMNS = ("t", "fund_id", "style", "wealth", "cash", "shares", "signal", "flow")
STYLE_NAMES = ("NT", "VI", "TF", "ADAPTIVE")


def _f(x) -> str:
    return repr(float(x))


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def write_market_csv(path: Path, rec) -> None:
    lines = [",".join(MARKET_COLUMNS)]
    ws = rec.wealth_shares
    for i in range(rec.days):
        lines.append(",".join((str(i + 1), _f(rec.price[i]), _f(rec.fundamental_value[i]), _f(rec.dividend[i]),
                               _f(rec.volume[i]), _f(ws[i, 0]), _f(ws[i, 1]), _f(ws[i, 2]),
                               _f(rec.admin_position[i]), str(int(rec.clearing_iters[i])))))
    path.write_text("\n".join(lines) + "\n")


def write_funds_csv(path: Path, rec) -> None:
    pan = rec.panel
    with open(path, "w") as fh:
        fh.write(",".join(FUND_COLUMNS) + "\n")
        for i in range(rec.days):
            live = np.flatnonzero(pan["active"][i])
            ids = pan["fund_id"][i][live].tolist()
            st = pan["style"][i][live].tolist()
            cols = [pan[k][i][live].tolist() for k in ("wealth", "cash", "shares", "signal", "flow")]
            t = str(i + 1)
            fh.write("".join(f"{t},{ids[j]},{STYLE_NAMES[st[j]]},{cols[0][j]!r},{cols[1][j]!r},{cols[2][j]!r},"
                             f"{cols[3][j]!r},{cols[4][j]!r}\n" for j in range(len(ids))))


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fail(out: Path, rec_or_msg, day=None) -> int:
    msg = rec_or_msg if isinstance(rec_or_msg, str) else rec_or_msg.failure
    day = day if isinstance(rec_or_msg, str) else rec_or_msg.failure_day
    _dump(out / "failure.json", {"failure": msg, "day": day})
    print(f"simulation failed: {msg}", file=sys.stderr)
    return EXIT_SIM


# ---- commands --------------------------------------------------------------------------


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    run_upd = {}
    if args.seed is not None:
        run_upd["master_seed"] = args.seed
    if args.days is not None:
        run_upd["t_max_days"] = args.days
    if run_upd:
        cfg = cfg.with_updates(run=run_upd)
    out = _out_dir(args.out)
    _dump(out / "resolved_config.json", cfg.to_dict())
    rec = Simulation(cfg, record_panel=True).run()
    write_market_csv(out / "market.csv", rec)
    write_funds_csv(out / "funds.csv", rec)
    if args.facts and rec.days > 0:
        _dump(out / "facts.json", run_facts(rec).to_dict())
    if not rec.completed:
        return _fail(out, rec)
    print(f"{rec.days} days, final price {rec.price[-1] if rec.days else rec.initial_price:.6g}")
    return EXIT_OK


def cmd_simplex(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_updates(run={"master_seed": args.seed})
    if args.points < 1 or args.reps < 1 or args.years <= 0:
        raise ConfigError("--points and --reps must be >= 1 and --years > 0")
    if args.window is not None and args.window < 1:
        raise ConfigError("--window must be >= 1")
    out = _out_dir(args.out)
    _dump(out / "resolved_config.json", cfg.to_dict())
    pts = sample_simplex(args.points, cfg.run.master_seed)
    res = run_sweep(pts, args.reps, args.years, cfg, workers=args.workers, window=args.window)
    res.write_csv(out / "sweep.csv")
    summary = res.summary()
    summary.update(window_days=res.window, failures=[list(f) for f in res.failures])
    _dump(out / "summary.json", summary)
    print(f"{args.points} points x {args.reps} reps, {summary['runs_failed']} failed runs; interior VI-dominant "
          f"{summary['vi_dominant']}/{summary['interior_completed']}, NT declining {summary['nt_declines']}/"
          f"{summary['interior_completed']}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    try:
        lags = tuple(int(x) for x in args.lags.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"--lags must be comma-separated integers, got {args.lags!r}") from None
    try:
        panel = cal.read_panel(args.data)
    except (OSError, ValueError) as e:
        raise ConfigError(str(e)) from e
    X, y, names, info = cal.build_flow_regression(panel, lags, args.min_tna, args.min_age_months, args.windows)
    res = cal.ols_fit(X, y, names)
    print(res.table())
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    doc = res.to_dict()
    doc["rows"] = info
    doc["lags_months"] = list(lags)
    _dump(out, doc)
    return EXIT_OK


def cmd_optimize(args) -> int:
    from . import optimize as opt

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_updates(run={"master_seed": args.seed})
    if args.measure not in opt.MEASURES:
        raise ConfigError(f"--measure must be one of {', '.join(opt.MEASURES)}")
    if args.budget < 1:
        raise ConfigError("--budget must be >= 1")
    out = _out_dir(args.out)
    env = opt.Environment(cfg, days=args.days, wealth_share=args.wealth_share)
    _dump(out / "resolved_config.json", cfg.to_dict())
    if args.task == "trading":
        base = opt.evaluate_schedule(np.zeros(env.days), env, args.measure)
        if base.note and not base.feasible:
            return _fail(out, base.note)
        res = opt.optimize_trading(env, args.budget, args.mode, args.measure, cfg.run.master_seed, args.workers)
    else:
        if args.mode != "static":
            raise ConfigError("the investor task supports --mode static only")
        base = opt.evaluate_investor(opt.InvestorPolicy(opt.null_policy, args.alloc_budget), env, args.measure)
        if not base.feasible:
            return _fail(out, base.note)
        res = opt.optimize_investing(env, args.budget, args.alloc_budget, args.measure, cfg.run.master_seed,
                                     args.workers)
    res.write_trace(out / "trace.csv")
    doc = {"task": args.task, "mode": args.mode, "measure": args.measure, "best": res.best,
           "best_measure": res.best_measure, "baseline_measure": base.measure,
           "base_strategies": base.base_measures}
    _dump(out / "best.json", doc)
    fmt = lambda m: "undefined" if m is None else f"{m:.6g}"  # noqa: E731
    print(f"baseline ({'cash' if args.task == 'trading' else 'null policy'}): {fmt(base.measure)}")
    for k, v in base.base_measures.items():
        print(f"base {k.upper()}: {fmt(v)}")
    print(f"optimized: {fmt(res.best_measure)} after {len(res.trace)} evaluations")
    return EXIT_OK


# ---- parser ------------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors (exit 1); exit 2 is reserved for simulation failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fundeco", description="Mutual-fund market ecology simulator.")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one market and write the output bundle")
    r.add_argument("--config")
    r.add_argument("--seed", type=int)
    r.add_argument("--days", type=int)
    r.add_argument("--out", required=True)
    r.add_argument("--facts", action="store_true", help="also write facts.json")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("simplex", help="sweep initial wealth shares over the simplex")
    s.add_argument("--points", type=int, default=50)
    s.add_argument("--reps", type=int, default=3)
    s.add_argument("--years", type=float, default=20)
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--window", type=int, default=None,
                   help="terminal averaging window in days (default: min(10000, 20%% of the run))")
    s.add_argument("--workers", type=int, default=None, help="default: $EVOLOGY_WORKERS or 1")
    s.set_defaults(func=cmd_simplex)

    c = sub.add_parser("calibrate", help="fit the flow-performance regression on a fund panel CSV")
    c.add_argument("--data", required=True)
    c.add_argument("--lags", default="120", help="comma-separated lags in months, e.g. 1,6,12,24,36,48,60,120")
    c.add_argument("--min-tna", type=float, default=15e6)
    c.add_argument("--min-age-months", type=int, default=36)
    c.add_argument("--windows", choices=("disjoint", "trailing"), default="disjoint")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_calibrate)

    o = sub.add_parser("optimize", help="search an adaptive trading strategy or an investment policy")
    o.add_argument("--task", choices=("trading", "investor"), default="trading")
    o.add_argument("--mode", choices=("static", "dynamic"), default="static")
    o.add_argument("--budget", type=int, default=200)
    o.add_argument("--measure", default="wealth_multiplier")
    o.add_argument("--config")
    o.add_argument("--seed", type=int)
    o.add_argument("--days", type=int, default=2520, help="episode length")
    o.add_argument("--wealth-share", type=float, default=0.01, help="adaptive fund's initial wealth share")
    o.add_argument("--alloc-budget", type=float, default=1e4, help="investor's gross allocation per period")
    o.add_argument("--workers", type=int, default=None)
    o.add_argument("--out", required=True)
    o.set_defaults(func=cmd_optimize)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", None) is None and hasattr(args, "workers"):
        args.workers = default_workers()
    try:
        return args.func(args)
    except (ConfigError, cal.PanelError, cal.RankDeficient) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
