"""Command line: ``contactshape run CONFIG`` and ``contactshape report OUTDIR``.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigurationError, build_config, load_config

log = logging.getLogger("contactshape")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _config_from_manifest(path: str, overrides):
    from .config import apply_overrides
    try:
        raw = json.loads(Path(path).read_text())["config"]
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigurationError(f"cannot read manifest {path}: {exc}") from exc
    apply_overrides(raw, overrides)
    return build_config(raw)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="contactshape", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment from an INI config or a manifest.json")
    run.add_argument("config", help="INI config file, or manifest.json with --manifest")
    run.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
    run.add_argument("--manifest", action="store_true", help="read the config echoed in a manifest.json")
    run.add_argument("--figures", action="store_true", help="render PNG figures next to the CSVs")
    rep = sub.add_parser("report", help="render figures for an existing output directory")
    rep.add_argument("outdir")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "report":
            from .report import render_figures
            for p in render_figures(Path(args.outdir)):
                print(p)
            return EXIT_OK
        if args.manifest:
            cfg = _config_from_manifest(args.config, args.overrides)
        else:
            cfg = load_config(args.config, args.overrides)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    from .experiments import run_experiment
    try:
        manifest = run_experiment(cfg, figures=args.figures)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # fail fast; nothing was written
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    log.info("wrote %s (%.1f s)", cfg.output, manifest["wall_time_s"])
    print(json.dumps(manifest["summary"], sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
