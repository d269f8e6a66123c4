"""Command-line entry point ``aifm``.

Exit codes: 0 success, 2 validation error, 3 numeric failure, 4 I/O or
format error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import yaml

from . import presets
from .acoustics import set_workers
from .config import ExperimentConfig
from .errors import AIFMError, ConfigurationError
from .pipeline import STAGES, Run, load_report
from .sweep import sweep

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config (YAML)")
    p.add_argument("--preset", help="start from a named preset (see 'aifm preset list')")
    p.add_argument("--seed", type=int, help="random seed (unsigned 64-bit)")
    p.add_argument("--out", help="run directory")
    p.add_argument("--threads", type=int, help="worker threads (default: $AIFM_THREADS or 1)")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted-path override, e.g. inversion.iterations=20 (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aifm", description="Acoustic inversion-based flow measurement")
    sub = ap.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        _common(sub.add_parser(stage, help=f"run the pipeline up to the {stage} stage"))
    _common(sub.add_parser("run", help="run the whole pipeline"))
    sp = sub.add_parser("sweep", help="run a parameter grid")
    _common(sp)
    sp.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2,...",
                    help="values for one dotted key (repeatable); defaults to the preset's grid")
    sp.add_argument("--seeds", help="comma-separated seeds (default: the config seed)")
    pp = sub.add_parser("preset", help="list or show presets")
    psub = pp.add_subparsers(dest="action", required=True)
    psub.add_parser("list")
    show = psub.add_parser("show")
    show.add_argument("name")
    return ap


def _threads(args) -> int:
    n = args.threads
    if n is None:
        env = os.environ.get("AIFM_THREADS")
        if env:
            try:
                n = int(env)
            except ValueError:
                raise ConfigurationError(f"AIFM_THREADS must be an integer, got {env!r}") from None
    n = 1 if n is None else n
    if n < 1:
        raise ConfigurationError(f"thread count must be >= 1, got {n}")
    set_workers(n)
    return n


def _config(args) -> tuple[ExperimentConfig, dict]:
    grid = {}
    if args.preset and args.config:
        raise ConfigurationError("give either --preset or --config, not both")
    if args.preset:
        cfg, grid = presets.preset(args.preset)
    elif args.config:
        if not os.path.exists(args.config):
            raise FileNotFoundError(f"config file {args.config} not found")
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = ExperimentConfig.from_dict({})
    if args.override:
        cfg = cfg.with_overrides(args.override)
    if args.seed is not None:
        cfg = cfg.with_overrides({"seed": args.seed})
    if args.out:
        cfg = cfg.with_overrides({"output.dir": args.out})
    return cfg, grid


def _parse_grid(items) -> dict:
    grid = {}
    for item in items:
        if "=" not in item:
            raise ConfigurationError(f"grid entry '{item}' is not of the form key=v1,v2")
        key, vals = item.split("=", 1)
        grid[key.strip()] = [yaml.safe_load(v) for v in vals.split(",") if v.strip()]
    return grid


def _main(argv) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "preset":
        if args.action == "list":
            for name in presets.names():
                print(f"{name}\t{presets.describe(name)}")
        else:
            cfg, grid = presets.preset(args.name)
            print(cfg.to_yaml(), end="")
            if grid:
                print(yaml.safe_dump({"sweep": grid}, sort_keys=True), end="")
        return EXIT_OK
    _threads(args)
    cfg, grid = _config(args)
    if args.command == "sweep":
        if args.grid:
            grid = _parse_grid(args.grid)
        seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
        res = sweep(cfg, grid, cfg.output_dir, seeds)
        failed = sum(r["status"] != "ok" for r in res.rows)
        print(f"{len(res.rows)} runs ({failed} failed), {len(res.aggregates)} combinations -> {cfg.output_dir}")
        return EXIT_OK
    until = "evaluate" if args.command == "run" else args.command
    run = Run(cfg)
    out = run.execute(until)
    hits = ", ".join(f"{s}={'hit' if h else 'run'}" for s, h in run.cache_hits.items())
    print(f"{out} [{hits}]")
    if until == "evaluate":
        print(json.dumps({k: v for k, v in load_report(out).to_dict().items()
                          if k in ("re1", "re2", "re3", "re4")}, sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    try:
        return _main(sys.argv[1:] if argv is None else argv)
    except AIFMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
