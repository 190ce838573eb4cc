"""Command-line interface: ``rlsa solve``, ``rlsa bench``, ``rlsa validate``.

Exit codes: 0 success, 1 configuration error, 2 coupling-condition failure,
3 oracle failure, 4 invariant failure (``validate``).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from ..errors import (ConfigurationError, CouplingError, InstanceGenerationError,
                      InvalidArgumentError, OracleError)
from ..problems import build, default_zoo, make_affine_vi
from . import checks
from .config import build_config, load_config_file
from .runner import bench, solve_one

EXIT_CONFIG, EXIT_COUPLING, EXIT_ORACLE, EXIT_INVARIANT = 1, 2, 3, 4


def _seed_list(text):
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}") from None


def _add_run_flags(p):
    p.add_argument("--config", help="JSON experiment config; flags override its values")
    p.add_argument("--family", help="affine-vi | bilinear-minimax | nash-cournot")
    p.add_argument("--n", type=int, help="dimension (affine-vi)")
    p.add_argument("--J", type=int, help="number of constraints (affine-vi)")
    p.add_argument("--N", type=int, help="number of players (nash-cournot)")
    p.add_argument("--instance-seed", type=int, help="seed of the instance generator")
    p.add_argument("--noise", type=float, help="noise level")
    p.add_argument("--iters", type=int)
    p.add_argument("--rho", type=float, help="rho0")
    p.add_argument("--gamma", type=float, help="gamma0")
    p.add_argument("--checkpoints", help="geometric | linear:N")
    p.add_argument("--gap-method", choices=("affine", "sampled", "none"))
    p.add_argument("--check-coupling", action="store_true", help="refuse to run if the step-size coupling fails")
    p.add_argument("--timing", action="store_true", default=None,
                   help="record wall-clock ms in traces (makes them non-reproducible)")
    p.add_argument("--out", help="output directory (default: $RLSA_OUT_DIR or ./rlsa_out)")


def _overrides(args, seeds):
    return {"family": args.family, "n": args.n, "J": args.J, "N": args.N,
            "instance_seed": args.instance_seed, "noise_level": args.noise,
            "iters": args.iters, "rho0": args.rho, "gamma0": args.gamma, "seeds": seeds,
            "checkpoints": args.checkpoints, "gap_method": args.gap_method,
            "timing": args.timing, "out": args.out, "workers": getattr(args, "workers", None)}


def _load(args, seeds):
    data = load_config_file(args.config) if args.config else {}
    cfg = build_config(data, _overrides(args, seeds))
    if args.check_coupling:
        cfg.solver = replace(cfg.solver, check_coupling=True)
    return cfg


def cmd_solve(args):
    cfg = _load(args, None if args.seed is None else [args.seed])
    if len(cfg.seeds) != 1:
        raise ConfigurationError("solve runs one seed; use bench for several")
    out = cfg.out_dir()
    _, summary = solve_one(cfg, cfg.seeds[0], out)
    print(json.dumps({k: summary[k] for k in ("infeas", "gap", "lambda_norm", "wall_ms")}))
    print(f"wrote {out}/trace_seed{cfg.seeds[0]}.csv")
    return 0


def cmd_bench(args):
    cfg = _load(args, args.seeds)
    if len(cfg.seeds) < 2:
        raise ConfigurationError("bench needs at least two seeds")
    out = cfg.out_dir()
    report = bench(cfg, out)
    for metric in ("gap", "infeas"):
        fit = report[metric]
        slope = "n/a" if fit["slope"] is None else f"{fit['slope']:.4f}"
        print(f"{metric} slope over k >= {report['k_min']}: {slope}")
    print(f"wrote {out}/aggregate.csv and {out}/rate_report.json")
    return 0


def cmd_validate(args):
    if args.config or args.family:
        cfg = _load(args, None)
        instances = {cfg.descriptor.family: build(cfg.descriptor)}
    else:
        instances = default_zoo(args.noise or 0.0)
    if args.non_monotone:
        base = next(iter(instances.values())) if (args.config or args.family) else make_affine_vi(1, 2, 4)
        instances = {"non-monotone(-x)": checks.non_monotone_variant(base)}
    results = checks.run_suite(instances, states_per_instance=args.states, grid_points=args.grid_points)
    print(checks.format_table(results))
    failed = [r for r in results if not r.passed]
    if failed:
        names = sorted({f"{r.invariant} on {r.instance}" for r in failed})
        print("invariant failure: " + "; ".join(names), file=sys.stderr)
        return EXIT_INVARIANT
    return 0


def make_parser():
    parser = argparse.ArgumentParser(prog="rlsa", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="one RLSA run: trace CSV, summary JSON, descriptor")
    _add_run_flags(p)
    p.add_argument("--seed", type=int, help="replication seed (noise and index streams)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="multi-seed runs, aggregate CSV and rate report")
    _add_run_flags(p)
    p.add_argument("--seeds", type=_seed_list, help="comma-separated replication seeds")
    p.add_argument("--workers", type=int, help="parallel processes")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("validate", help="invariant suite with a pass/fail table")
    _add_run_flags(p)
    p.add_argument("--non-monotone", action="store_true",
                   help="replace the mapping by F(x) = -x; the monotonicity check must then fail")
    p.add_argument("--states", type=int, default=100, help="random (x, lambda) states per instance")
    p.add_argument("--grid-points", type=int, default=1_000_000, help="grid size for 2-D gap checks")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CouplingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COUPLING
    except (ConfigurationError, InstanceGenerationError, InvalidArgumentError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OracleError as exc:
        print(f"oracle error: {exc}", file=sys.stderr)
        return EXIT_ORACLE


if __name__ == "__main__":
    sys.exit(main())
