"""Command-line front door: single runs, campaigns, oracle queries.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import sys

from . import experiments as xp
from . import oracle
from .engine import Configuration, EngineError, make_protocol


class _UsageError(SystemExit):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise _UsageError(1)


def _margin_arg(value: str):
    if value == "auto":
        return "auto"
    return int(value)


def _horizon_arg(value: str):
    if value.endswith("nlogn"):
        return value
    return int(value)


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--protocol", choices=["triam", "dbam", "dbamc"],
                   default="dbamc")
    p.add_argument("--model", choices=["standard", "ci"], default="ci")
    p.add_argument("-n", "--inputs", type=int, default=500,
                   help="input population (standard model: total population)")
    p.add_argument("-m", "--workers", type=int, default=500)
    p.add_argument("--margin", type=_margin_arg, default="auto",
                   help="initial input margin, or 'auto' for alpha*sqrt(N ln N)")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.0, help="leak rate")
    p.add_argument("--leak", choices=["none", "adversarial", "weak"],
                   default="none")
    p.add_argument("--leak-pool", choices=["all", "workers"], default="all")
    p.add_argument("--byz", choices=["none", "stubborn", "super"],
                   default="none")
    p.add_argument("--byz-count", type=int, default=0)
    p.add_argument("--horizon", type=_horizon_arg, default="4nlogn",
                   help="step budget: an integer or e.g. '4nlogn'")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint", type=int, default=0)
    p.add_argument("--samples", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None, help="JSON config file")


def build_parser() -> _Parser:
    parser = _Parser(prog="popdyn",
                     description="Third-state approximate-majority protocol "
                                 "simulator and experiment harness")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    for name, desc in (("run", "single seeded run, TrialRecord CSV to stdout"),
                       ("campaign", "Monte Carlo sweep from flags/config")):
        p = sub.add_parser(name, description=desc)
        _add_run_flags(p)

    p = sub.add_parser("figure2", description="3x4 trajectory grid CSVs")
    p.add_argument("--out", default="fig2_out")
    p.add_argument("--sizes", type=int, nargs="+", default=[300, 1000, 5000])
    p.add_argument("--seed", type=int, default=2024)

    p = sub.add_parser("figure3", description="success-rate-vs-m sweep CSVs")
    p.add_argument("--out", default="fig3_out")
    p.add_argument("--trials", type=int, default=3000)
    p.add_argument("--m-list", type=int, nargs="+",
                   default=list(xp.FIGURE3_M_SWEEP))
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--samples", type=int, default=1)

    p = sub.add_parser("margins", description="margin-threshold contrast study")
    p.add_argument("-n", "--inputs", type=int, default=400)
    p.add_argument("-m", "--workers", type=int, default=400)
    p.add_argument("--margins", type=int, nargs="+", required=True)
    p.add_argument("--trials", type=int, default=300)
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--out", default=None)

    p = sub.add_parser("equivalence",
                       description="weak leaks vs stubborn-Y Byzantine agents")
    p.add_argument("-N", "--population", type=int, default=1000)
    p.add_argument("--beta", type=float, default=0.002)
    p.add_argument("--factors", type=float, nargs="+", default=[1.0, 2.0, 4.0])
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--seed", type=int, default=2024)

    p = sub.add_parser("oracle", description="exact small-instance queries")
    osub = p.add_subparsers(dest="oracle_cmd", required=True)
    q = osub.add_parser("min-samples",
                        description="minimum samples for margin-1 majority")
    q.add_argument("--n", type=int, nargs="+", required=True)
    q.add_argument("--c", type=float, default=1.0)
    q = osub.add_parser("absorption",
                        description="exact absorption probabilities")
    q.add_argument("--protocol", choices=["triam", "dbam", "dbamc"],
                   default="dbam")
    q.add_argument("--x", type=int, default=0)
    q.add_argument("--y", type=int, default=0)
    q.add_argument("--b", type=int, default=0)
    q.add_argument("--ix", type=int, default=0)
    q.add_argument("--iy", type=int, default=0)

    return parser


def _cmd_run(args) -> int:
    cfg = _config_from_args(args)
    cfg.trials = 1
    result = xp.run_campaign(cfg, parallel=False)
    _report_cell_errors(result.cell_errors)
    if not result.trials:
        raise EngineError("no valid cells to run")
    _emit_rows([r.to_row() for r in result.trials], xp.TRIAL_HEADER, args.out)
    return 0


def _cmd_campaign(args) -> int:
    cfg = _config_from_args(args)
    result = xp.run_campaign(cfg)
    _report_cell_errors(result.cell_errors)
    _emit_rows([r.to_row() for r in result.trials], xp.TRIAL_HEADER, args.out)
    if args.out:
        agg_path = args.out.replace(".csv", "") + "_agg.csv"
        xp.write_csv([a.to_row() for a in result.aggregates], agg_path,
                     xp.AGGREGATE_HEADER)
    return 0


def _config_from_args(args) -> xp.ExperimentConfig:
    if args.config:
        cfg = xp.ExperimentConfig.from_json(args.config)
    else:
        cfg = xp.ExperimentConfig()
    # Flags override config-file values.
    passed = {a for a in args._argv if a.startswith("-")}

    def given(*flags):
        return any(f in passed for f in flags) or not args.config

    if given("--protocol"):
        cfg.protocol = args.protocol
    if given("-n", "--inputs"):
        cfg.n_inputs = args.inputs
    if given("-m", "--workers"):
        cfg.m_workers = args.workers
    if given("--model"):
        cfg.model = args.model
    if given("--margin", "--alpha"):
        cfg.margin = ({"auto": args.alpha} if args.margin == "auto"
                      else args.margin)
    if given("--horizon"):
        cfg.horizon = args.horizon
    if given("--trials"):
        cfg.trials = args.trials
    if given("--seed"):
        cfg.base_seed = args.seed
    if given("--checkpoint"):
        cfg.checkpoint_every = args.checkpoint
    if given("--samples"):
        cfg.samples_per_trial = args.samples
    if given("--beta", "--leak", "--leak-pool", "--byz", "--byz-count"):
        cfg.fault = {"leak_model": args.leak, "beta": args.beta,
                     "leak_pool": args.leak_pool, "byz_mode": args.byz,
                     "byz_count": args.byz_count}
    if cfg.protocol in ("dbam", "triam") and cfg.model == "ci":
        raise _usage_error(f"--protocol {cfg.protocol} requires --model standard")
    if cfg.protocol == "dbamc" and cfg.model == "standard":
        raise _usage_error("--protocol dbamc requires --model ci")
    return cfg


def _usage_error(msg: str) -> SystemExit:
    print(f"popdyn: error: {msg}", file=sys.stderr)
    return _UsageError(1)


def _report_cell_errors(errors):
    for desc, msg in errors:
        print(f"popdyn: cell skipped ({desc}): {msg}", file=sys.stderr)


def _emit_rows(rows, header, out_path):
    if out_path:
        xp.write_csv(rows, out_path, header)
    else:
        fields = header.split(",")
        sys.stdout.write(header + "\n")
        for row in rows:
            sys.stdout.write(",".join(str(xp._fmt(row[k])) for k in fields) + "\n")


def _cmd_figure2(args) -> int:
    paths = xp.figure2_campaign(args.out, sizes=args.sizes, base_seed=args.seed)
    for _, path in paths:
        print(path)
    return 0


def _cmd_figure3(args) -> int:
    xp.figure3_campaign(trials=args.trials, m_list=args.m_list,
                        base_seed=args.seed, samples_per_trial=args.samples,
                        out_dir=args.out)
    print(f"{args.out}/fig3_trials.csv")
    print(f"{args.out}/fig3_agg.csv")
    return 0


def _cmd_margins(args) -> int:
    _, aggregates = xp.margin_threshold_campaign(
        args.inputs, args.workers, sorted(args.margins), trials=args.trials,
        base_seed=args.seed)
    rows = [a.to_row() for a in aggregates]
    _emit_rows(rows, xp.AGGREGATE_HEADER, args.out)
    return 0


def _cmd_equivalence(args) -> int:
    res = xp.equivalence_campaign(args.population, args.beta,
                                  factor_list=args.factors,
                                  trials=args.trials, base_seed=args.seed)
    print("side,factor,byz_count,trials,mean_sample_error,ratio_vs_leak")
    la = res.leak_aggregate
    print(f"leak,,0,{la.trials},{la.mean_sample_error:.9g},1")
    for pair in res.pairs:
        a = pair.aggregate
        print(f"byzantine,{pair.factor:.9g},{pair.byz_count},{a.trials},"
              f"{a.mean_sample_error:.9g},{pair.mean_error_ratio:.9g}")
    return 0


def _cmd_oracle(args) -> int:
    if args.oracle_cmd == "min-samples":
        print("kind,n,c,S_min")
        for n in args.n:
            s = oracle.min_samples(n, args.c)
            print(f"min_samples,{n},{args.c:.9g},{s}")
        return 0
    spec = make_protocol(args.protocol)
    model = "ci" if args.protocol == "dbamc" else "standard"
    cfg = Configuration.from_counts(
        {"X": args.x, "Y": args.y, "B": args.b, "I_X": args.ix, "I_Y": args.iy},
        model=model)
    probs = oracle.absorption_probabilities(cfg, spec)
    print("config,class,prob")
    desc = f"X:{args.x} Y:{args.y} B:{args.b} IX:{args.ix} IY:{args.iy}"
    for cls, p in probs.items():
        print(f"{desc},{cls},{p:.9g}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "campaign": _cmd_campaign,
    "figure2": _cmd_figure2,
    "figure3": _cmd_figure3,
    "margins": _cmd_margins,
    "equivalence": _cmd_equivalence,
    "oracle": _cmd_oracle,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError:
        return 1
    args._argv = list(argv) if argv is not None else sys.argv[1:]
    try:
        return _COMMANDS[args.subcommand](args)
    except _UsageError:
        return 1
    except (EngineError, xp.ConfigError, oracle.OracleError) as exc:
        print(f"popdyn: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"popdyn: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
