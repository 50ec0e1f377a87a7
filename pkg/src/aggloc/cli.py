"""Command-line interface: simulate, sweep, validate and radial subcommands.

Exit codes: 0 on success, 1 on usage or configuration errors, 2 on runtime
or solver failures.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .diagnostics import RadialProfile, radial_profile, write_radial_csv
from .experiment import (
    ConfigError,
    ExperimentConfig,
    apply_overrides,
    build_model,
    epsilon_sweep,
    load_config,
    run_case,
)
from .kernels import validate_model
from .solver import SolverError, SpeciesState

__all__ = ["cli_main", "main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; route through _UsageError so
    # the CLI can keep usage failures at exit code 1.
    def error(self, message: str):
        raise _UsageError(message)


def _parse_epsilon(text: str):
    if text == "local":
        return "local"
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected a positive number or 'local', got {text!r}"
        )
    if value <= 0:
        raise argparse.ArgumentTypeError(f"epsilon must be positive, got {text}")
    return value


def _build_parser() -> _Parser:
    parser = _Parser(prog="aggloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: _Parser) -> None:
        p.add_argument("--config", type=Path, help="TOML configuration file")
        p.add_argument("--case", type=int, choices=(1, 2, 3), help="benchmark case preset")
        p.add_argument("--grid", type=int, dest="n", help="cells per axis")
        p.add_argument("--t-end", type=float, dest="t_end", help="final time")
        p.add_argument("--out", type=Path, dest="out", help="output directory")

    p_sim = sub.add_parser("simulate", help="run one model once")
    add_common(p_sim)
    p_sim.add_argument(
        "--epsilon",
        type=_parse_epsilon,
        default="local",
        help="kernel range, or 'local' for the limit model (default: local)",
    )
    p_sim.set_defaults(handler=_cmd_simulate)

    p_sweep = sub.add_parser("sweep", help="kernel-range convergence study")
    add_common(p_sweep)
    p_sweep.set_defaults(handler=_cmd_sweep)

    p_val = sub.add_parser("validate", help="report the model hypothesis checks")
    add_common(p_val)
    p_val.set_defaults(handler=_cmd_validate)

    p_rad = sub.add_parser("radial", help="bin snapshots into radial profiles")
    p_rad.add_argument("snapshots", nargs="+", type=Path, help="snapshot CSV files")
    p_rad.add_argument("--d-lambda", type=float, dest="d_lambda", help="bin width")
    p_rad.add_argument("--lambda-max", type=float, dest="lambda_max", help="largest radius")
    p_rad.add_argument(
        "--out", type=Path, default=Path("radial.csv"), help="output CSV path"
    )
    p_rad.set_defaults(handler=_cmd_radial)
    return parser


def _resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    config = apply_overrides(
        config,
        case=getattr(args, "case", None),
        n=getattr(args, "n", None),
        t_end=getattr(args, "t_end", None),
        out_dir=str(args.out) if getattr(args, "out", None) else None,
    )
    config.validate()
    return config


def _cmd_simulate(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    result = run_case(config, args.epsilon)
    final = result.records[-1]
    print(f"run written to {result.run_dir}")
    print(f"t = {final.time:g}, species masses: "
          + ", ".join(f"{m:.6g}" for m in final.mass))
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    sweep = epsilon_sweep(config)
    print(f"convergence table written to {sweep.table_path}")
    header = "epsilon  " + "  ".join(
        f"species_{i + 1}" for i in range(config.species)
    )
    print(header)
    for row, e in enumerate(sweep.epsilons):
        print(f"{e:<8g} " + "  ".join(f"{d:.6e}" for d in sweep.distances[row]))
    if sweep.strictly_decreasing is not None:
        for i, verdict in enumerate(sweep.strictly_decreasing):
            word = "decreases strictly" if verdict else "is NOT strictly decreasing"
            print(f"species {i + 1}: distance to the local run {word}")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    report = validate_model(build_model(config, 1.0))
    n = config.species
    if report.full_rank:
        print(f"rank {report.rank} = N = {n}: full-rank hypothesis satisfied")
        print(f"left inverse residual: {report.left_inverse_error:.3e}")
    else:
        print(f"rank {report.rank} < N = {n}: full-rank hypothesis violated")
    for i, check in enumerate(report.mollifier_checks):
        print(
            f"mollifier {i + 1}: nonnegative={check.nonnegative} "
            f"normalization_error={check.normalization_error:.3e} "
            f"finite_moment={check.finite_moment}"
        )
    print(f"overall: {'pass' if report.passed else 'FAIL'}")
    return 0


def _cmd_radial(args: argparse.Namespace) -> int:
    from .grid import load_field

    loaded = []
    for path in args.snapshots:
        f, meta = load_field(path)
        loaded.append((meta.get("species", len(loaded) + 1), meta["time"], f))
    loaded.sort(key=lambda item: item[0])
    times = {t for _, t, _ in loaded}
    if len(times) > 1:
        raise ConfigError("snapshots", f"snapshots are at different times: {sorted(times)}")
    state = SpeciesState(loaded[0][1], [f for _, _, f in loaded])
    grid = state.grid
    d_lambda = args.d_lambda if args.d_lambda else 2 * grid.dx
    lambda_max = args.lambda_max if args.lambda_max else grid.half_width
    profile: RadialProfile = radial_profile(state, d_lambda, lambda_max)
    write_radial_csv(profile, args.out)
    print(f"radial profile written to {args.out}")
    return 0


def cli_main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    try:
        return args.handler(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except FileNotFoundError as err:
        missing = err.filename if err.filename else err
        print(f"cannot open: {missing}", file=sys.stderr)
        return 2
    except SolverError as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return 2
    except (RuntimeError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))
