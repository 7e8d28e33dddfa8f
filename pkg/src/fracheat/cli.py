"""Command-line runner: ``fracheat <experiment> [--config FILE] [--out DIR] ...``.

Exit status 0 on success, 2 for an invalid configuration, 3 for a numerical
failure; failures write a JSON error record to stderr and ``<out>/error.json``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from dataclasses import replace
from pathlib import Path

from .config import EXPERIMENTS, SECTIONS, ExperimentConfig, _section, dump_config, load_config, validate
from .core import ConfigError
from .io import SCHEMA_VERSION, jsonable

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracheat", description=__doc__.splitlines()[0])
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="INI file with [grid], [frac], [weight], [solver], [mc], [fit]")
    p.add_argument("--out", help="output directory (overrides experiment.out)")
    p.add_argument("--seed", type=int, help="master seed (overrides mc.seed)")
    p.add_argument("--workers", type=int, help="worker threads (overrides mc.workers)")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a single config value; repeatable")
    p.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg = replace(cfg, name=args.experiment)
    for item in args.set:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        lhs, value = item.split("=", 1)
        sec, key = lhs.split(".", 1)
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section {sec!r} in --set")
        parsed = _section(SECTIONS[sec], {key: value}, sec)
        cfg = replace(cfg, **{sec: replace(getattr(cfg, sec), **{key: getattr(parsed, key)})})
    if args.out:
        cfg = replace(cfg, out=args.out)
    if args.seed is not None:
        cfg = replace(cfg, mc=replace(cfg.mc, seed=args.seed))
    if args.workers is not None:
        cfg = replace(cfg, mc=replace(cfg.mc, workers=args.workers))
    return cfg


def _fail(code: int, exc: BaseException, out: str | None) -> int:
    kind = "invalid_config" if code == EXIT_CONFIG else "numerical_failure"
    record = {"schema_version": SCHEMA_VERSION, "status": "error", "kind": kind,
              "exception": type(exc).__name__, "message": str(exc)}
    if code == EXIT_NUMERIC:
        record["diagnostic"] = traceback.format_exception_only(type(exc), exc)[-1].strip()
    text = json.dumps(jsonable(record), indent=2, sort_keys=True)
    print(text, file=sys.stderr)
    if out:
        try:
            Path(out).mkdir(parents=True, exist_ok=True)
            Path(out, "error.json").write_text(text + "\n")
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = args.out
    try:
        cfg = resolve_config(args)
        out = cfg.out
        validate(cfg)
    except (ConfigError, ValueError, TypeError) as exc:
        return _fail(EXIT_CONFIG, exc, out)
    if args.print_config:
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK
    workers = cfg.mc.workers
    os.environ.setdefault("NUMBA_NUM_THREADS", str(workers))
    from .experiments import run_experiment
    try:
        payload = run_experiment(cfg, workers=workers)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc, out)
    except (ArithmeticError, RuntimeError, ValueError, TypeError, NotImplementedError) as exc:
        return _fail(EXIT_NUMERIC, exc, out)
    print(json.dumps({"status": "ok", "experiment": cfg.name, "out": cfg.out,
                      "summary": jsonable(payload["summary"])}, sort_keys=True)[:2000])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
