"""Command line entry point: ``dkplab run|validate|list-scenarios``.

Exit codes: 0 success, 1 config validation failure, 2 runtime error.
The worker count comes from ``--workers``, then ``DKPLAB_WORKERS``, then
the config's ``workers`` key, then 1.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import SCENARIOS, ConfigError, errors, load_config, validate
from .io import sha256, write_csv, write_json

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
WORKERS_ENV = "DKPLAB_WORKERS"

log = logging.getLogger("dkplab")


def resolve_workers(cli_value, cfg) -> int:
    if cli_value:
        return int(cli_value)
    env = os.environ.get(WORKERS_ENV)
    if env:
        w = int(env)
        if w < 1:
            raise ValueError(f"{WORKERS_ENV} must be positive")
        return w
    return int(cfg.get("workers", 1))


def _load_checked(path):
    """Return ``(cfg, diagnostics)``; raises ConfigError on YAML errors."""
    cfg, lines = load_config(path)
    return cfg, validate(cfg, lines)


def cmd_validate(args) -> int:
    try:
        _, diags = _load_checked(args.config)
    except ConfigError as e:
        diags = e.diagnostics
    except OSError as e:
        print(f"error: cannot read {args.config}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    for d in diags:
        print(d)
    if errors(diags):
        return EXIT_INVALID
    if not diags:
        print("ok")
    return EXIT_OK


def run_config(cfg, out_dir, workers=1, config_path=None) -> dict:
    """Run a validated config and write its artifacts; returns the manifest."""
    from .scenarios import RUNNERS

    np.random.seed(int(cfg.get("seed", 0)))
    sc = cfg["scenario"]
    t0 = time.perf_counter()
    res = RUNNERS[sc](cfg, workers=workers)
    elapsed = time.perf_counter() - t0
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for tab in res.tables:
        write_csv(out / tab.name, tab.columns, tab.rows)
        files.append(tab.name)
    write_json(out / "summary.json", {"scenario": sc, "summary": res.summary})
    files.append("summary.json")
    write_json(out / "config.json", cfg)
    files.append("config.json")
    manifest = {
        "scenario": sc,
        "description": SCENARIOS[sc],
        "version": __version__,
        "config": cfg,
        "config_path": None if config_path is None else str(config_path),
        "workers": workers,
        "timings": {"total_s": round(elapsed, 6), **res.timings},
        "files": [{"name": f, "bytes": (out / f).stat().st_size, "sha256": sha256(out / f)}
                  for f in sorted(files)],
    }
    write_json(out / "manifest.json", manifest)
    return manifest


def cmd_run(args) -> int:
    try:
        cfg, diags = _load_checked(args.config)
    except ConfigError as e:
        for d in e.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"error: cannot read {args.config}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    for d in diags:
        print(d, file=sys.stderr)
    if errors(diags):
        return EXIT_INVALID
    try:
        workers = resolve_workers(args.workers, cfg)
    except ValueError:
        print(f"error: {WORKERS_ENV} must be a positive integer", file=sys.stderr)
        return EXIT_INVALID
    out = args.output or cfg.get("output") or str(Path("runs") / Path(args.config).stem)
    try:
        man = run_config(cfg, out, workers, args.config)
    except Exception as e:  # noqa: BLE001 - surfaced with scenario context
        log.debug("run failed", exc_info=True)
        print(f"error: scenario {cfg.get('scenario')}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"{man['scenario']}: wrote {len(man['files'])} files to {out} "
          f"in {man['timings']['total_s']:.2f} s")
    return EXIT_OK


def cmd_list(args) -> int:
    for k, v in SCENARIOS.items():
        print(f"{k}  {v}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dkplab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"dkplab {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario config")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="output directory (overrides config 'output')")
    r.add_argument("-w", "--workers", type=int, help=f"worker count (default: ${WORKERS_ENV} or 1)")
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("validate", help="check a config and print diagnostics")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    ls = sub.add_parser("list-scenarios", help="list scenario ids")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
