"""Command line entry point: ``pemsim {run,plot,validate,list-scenarios}``.

Exit codes: 0 success, 1 configuration or usage error, 2 I/O error.
"""
from __future__ import annotations

import argparse
import sys
import time
import warnings
from importlib import resources

from . import kernels
from .harness.config import ConfigError, ConfigWarning, parse_experiment_config
from .harness.io import read_table, write_outputs
from .harness.plot import emit_scatter
from .harness.runner import run_experiment
from .world import list_scenarios

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2
BUILTIN_PREFIX = "@"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit 2; usage problems are config-class errors here
        self.print_usage(sys.stderr)
        raise UsageError(message)


def builtin_configs() -> list[str]:
    root = resources.files("pemsim") / "data"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def read_config_text(ref: str) -> str:
    """A file path, or ``@name`` for a config shipped with the package."""
    if ref.startswith(BUILTIN_PREFIX):
        name = ref[len(BUILTIN_PREFIX):]
        if name not in builtin_configs():
            raise ConfigError("", f"no built-in config named {name!r}; available: {builtin_configs()}")
        return (resources.files("pemsim") / "data" / f"{name}.yaml").read_text(encoding="utf-8")
    with open(ref, encoding="utf-8") as fh:
        return fh.read()


def _load(ref: str):
    try:
        text = read_config_text(ref)
    except FileNotFoundError:
        raise ConfigError("", f"config file not found: {ref}") from None
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always", ConfigWarning)
        matrix = parse_experiment_config(text)
    for msg in matrix.warnings:
        print(f"warning: {msg}", file=sys.stderr)
    return text, matrix


def _cmd_validate(args) -> int:
    _, matrix = _load(args.config)
    print(f"ok: {len(matrix.cells)} cells x {matrix.runs_per_cell} runs = {matrix.episode_count} episodes")
    return EXIT_OK


def _cmd_run(args) -> int:
    text, matrix = _load(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed", "seed must lie in [0, 2**64)")
        matrix = type(matrix)(args.seed, matrix.runs_per_cell, matrix.policy, matrix.cells,
                              matrix.pem_vars, matrix.warnings)
    if args.parallel is not None and args.parallel < 1:
        raise ConfigError("--parallel", "must be at least 1")
    t0 = time.perf_counter()
    last = [0.0]

    def progress(done, total):
        now = time.perf_counter()
        if not args.quiet and (now - last[0] > 5.0 or done == total):
            last[0] = now
            print(f"  {done}/{total} episodes ({now - t0:.0f}s)", file=sys.stderr)

    result = run_experiment(matrix, args.parallel, progress=progress)
    manifest = write_outputs(args.out, text, matrix, result, args.seed)
    print(f"wrote {manifest['episodes']} runs over {manifest['cells']} cells to {args.out} "
          f"({time.perf_counter() - t0:.1f}s, kernels={kernels.BACKEND}, anomalies={manifest['anomalies']})")
    return EXIT_OK


def _cmd_plot(args) -> int:
    fields, rows = read_table(args.input)
    for stat in (args.x, args.y):
        if stat not in fields:
            raise ConfigError(f"--{'x' if stat == args.x else 'y'}",
                              f"column {stat!r} not in {args.input}; available: {fields}")
    if args.where:
        key, _, value = args.where.partition("=")
        if key not in fields:
            raise ConfigError("--where", f"column {key!r} not found")
        rows = [r for r in rows if r[key] == value]
    if not rows:
        raise ConfigError("--where", "empty selection")
    emit_scatter(rows, args.x, args.y, args.out, args.title)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_list(args) -> int:
    for sid, blurb, params in list_scenarios():
        joined = ", ".join(f"{k}={v:g}" for k, v in sorted(params.items()))
        print(f"{sid}  {blurb}\n      defaults: {joined}")
    print("built-in configs: " + ", ".join(BUILTIN_PREFIX + c for c in builtin_configs()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pemsim", description="Perception-error-model driving simulator and experiment harness.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    r = sub.add_parser("run", help="execute an experiment matrix")
    r.add_argument("--config", required=True, help="YAML config path, or @name for a built-in config")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--parallel", type=int, default=None,
                   help="worker processes (default: $PEMSIM_WORKERS or the CPU count)")
    r.add_argument("--seed", type=int, default=None, help="override base_seed")
    r.add_argument("--quiet", action="store_true")
    r.set_defaults(func=_cmd_run)

    pl = sub.add_parser("plot", help="density scatter of two CSV columns")
    pl.add_argument("--in", dest="input", required=True, help="runs.csv or summary.csv")
    pl.add_argument("--x", required=True)
    pl.add_argument("--y", required=True)
    pl.add_argument("--out", required=True, help="output SVG path")
    pl.add_argument("--where", default=None, help="row filter COLUMN=VALUE (exact string match)")
    pl.add_argument("--title", default=None)
    pl.set_defaults(func=_cmd_plot)

    v = sub.add_parser("validate", help="parse and validate a config without running it")
    v.add_argument("--config", required=True)
    v.set_defaults(func=_cmd_validate)

    ls = sub.add_parser("list-scenarios", help="show the scenario catalog")
    ls.set_defaults(func=_cmd_list)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_CONFIG
        return args.func(args)
    except UsageError as exc:
        print(f"pemsim: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"pemsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (KeyError, ValueError) as exc:
        print(f"pemsim: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"pemsim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
