"""Command-line front end: run scenarios, validate configs, emit plot data.

Exit codes: 0 success, 2 validation or domain error (bad config, bad
arguments), 3 solver or unexpected runtime error.  The environment
variable FK_SEED overrides the config's master_seed; the --seed flag
overrides both.
"""

from __future__ import annotations

import argparse
import os
import sys

from .errors import ConfigError, DomainError, SolverError
from .scenarios import (
    PLOT_KINDS,
    emit_plot_data,
    load_config,
    run_scenario,
    write_result,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fk",
        description="Monte Carlo scattering amplitudes with a finite "
                    "difference cross-check")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario config")
    p_run.add_argument("config", help="path to a YAML scenario config")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override master_seed (beats FK_SEED)")
    p_run.add_argument("--workers", type=int, default=1,
                       help="worker process count (default 1)")
    p_run.add_argument("--out-dir", default=None,
                       help="override the config's output directory")

    p_val = sub.add_parser("validate", help="check a config without running")
    p_val.add_argument("config", help="path to a YAML scenario config")

    p_plot = sub.add_parser("plot", help="emit plot-ready CSV from a result")
    p_plot.add_argument("result", help="path to a result.yaml")
    p_plot.add_argument("--kind", required=True,
                        help=f"one of: {', '.join(sorted(PLOT_KINDS))}")
    p_plot.add_argument("--out", default=None, help="output CSV path")
    return parser


def _resolve_seed(cfg, cli_seed):
    if cli_seed is not None:
        if cli_seed < 0:
            raise ConfigError(f"--seed must be >= 0, got {cli_seed}")
        cfg.run["master_seed"] = int(cli_seed)
        return
    env = os.environ.get("FK_SEED")
    if env is not None:
        try:
            seed = int(env)
        except ValueError:
            raise ConfigError(f"FK_SEED must be an integer, got {env!r}")
        if seed < 0:
            raise ConfigError(f"FK_SEED must be >= 0, got {seed}")
        cfg.run["master_seed"] = seed


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    _resolve_seed(cfg, args.seed)
    if args.workers < 1:
        raise ConfigError(f"--workers must be >= 1, got {args.workers}")
    if args.out_dir is not None:
        cfg.out_dir = args.out_dir
    record = run_scenario(cfg, workers=args.workers)
    path = write_result(record, cfg.out_dir)
    print(f"wrote {path}")
    for name in sorted(record.tables):
        print(f"wrote {os.path.join(cfg.out_dir, name + '.csv')}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(f"ok: scenario {cfg.scenario}, potential {cfg.potential_kind}, "
          f"seed {cfg.run['master_seed']}")
    return EXIT_OK


def _cmd_plot(args) -> int:
    out = emit_plot_data(args.result, args.kind, args.out)
    print(f"wrote {out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handler = {"run": _cmd_run, "validate": _cmd_validate,
               "plot": _cmd_plot}[args.command]
    try:
        return handler(args)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:              # noqa: BLE001 - CLI boundary
        print(f"unexpected error: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
