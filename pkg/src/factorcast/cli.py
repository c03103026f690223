"""Command-line entry point.

    factorcast generate  --config CFG [--out DIR]
    factorcast train     --config CFG [--variant V ...] [--seed S ...] [--jobs N] [--out DIR]
    factorcast evaluate  --config CFG [RUN_DIR ...] [--out DIR]
    factorcast reproduce EXPERIMENT [desk|full] [--jobs N] [--out DIR]

EXPERIMENT is a preset id (narma-1..4, pmsm) or a YAML config path.

``--config`` takes a YAML file or a preset name such as ``narma-1:desk``.
The output root is ``--out``, else ``$FACTORCAST_OUT/<config name>``, else
the config's output-dir.  Logs go to stderr; results go to files only.

Exit codes: 0 ok, 2 bad config, 3 I/O failure, 4 missing or stale data,
5 nothing to aggregate.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import config as config_mod
from . import experiment
from .errors import AggregationError, ConfigurationError, StaleDataError

log = logging.getLogger("factorcast")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_STALE, EXIT_EMPTY = 0, 2, 3, 4, 5
ENV_OUT = "FACTORCAST_OUT"


def load_config(spec: str) -> config_mod.ExperimentConfig:
    if not Path(spec).exists() and ":" in spec:
        name, scale = spec.split(":", 1)
        return config_mod.preset(name, scale)
    return config_mod.load(spec)


def output_root(cfg, out: str | None) -> Path:
    if out:
        return Path(out)
    env = os.environ.get(ENV_OUT)
    if env:
        return Path(env) / cfg.name
    return Path(cfg.output_dir)


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    root = output_root(cfg, args.out)
    ds = experiment.write_dataset(root, cfg)
    log.info("manifest %s", ds.manifest_hash)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    root = output_root(cfg, args.out)
    experiment.load_dataset(root, cfg)  # fail fast with exit 4
    for v in args.variant or []:
        config_mod.check_choice("--variant", v, config_mod.VARIANTS)
    runs = experiment.run_all(cfg, root, args.jobs, variants=args.variant, seeds=args.seed)
    for r in runs:
        if r["status"] != "ok":
            log.warning("%s seed %d failed: %s", r["variant"], r["seed"], r["failure"])
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    root = output_root(cfg, args.out)
    dirs = [Path(d) for d in args.runs] or sorted(p for p in (root / "runs").glob("*") if p.is_dir())
    manifest_hash = None
    mpath = root / "data" / "manifest.json"
    if mpath.exists():
        manifest_hash = experiment.load_dataset(root, cfg).manifest_hash
    runs = experiment.collect_runs(dirs, manifest_hash)
    experiment.report(runs, root / "report", cfg)
    log.info("report written to %s", root / "report")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    if Path(args.experiment).is_file():
        cfg = config_mod.load(args.experiment)
    else:
        cfg = config_mod.preset(args.experiment, args.scale)
    root = output_root(cfg, args.out)
    experiment.reproduce(cfg, root, args.jobs)
    log.info("report written to %s", root / "report")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="factorcast", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="YAML file or preset name like narma-1:desk")
        p.add_argument("--out", help="output root (overrides $FACTORCAST_OUT and output-dir)")

    p = sub.add_parser("generate", help="generate dataset CSVs and manifest")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train and evaluate (variant, seed) runs")
    common(p)
    p.add_argument("--variant", action="append", help="variant to train (repeatable; default all)")
    p.add_argument("--seed", action="append", type=int, help="seed to train (repeatable; default config seeds)")
    p.add_argument("--jobs", type=int, default=1, help="parallel runs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="aggregate run directories into report CSVs")
    common(p)
    p.add_argument("runs", nargs="*", help="run directories (default: all under <out>/runs)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("reproduce", help="full pipeline for a preset experiment")
    p.add_argument("experiment", help=f"one of {', '.join(config_mod.EXPERIMENTS)} or a YAML path")
    p.add_argument("scale", nargs="?", default="desk", help="desk (default) or full")
    p.add_argument("--jobs", type=int, default=1)
    common(p, config=False)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ConfigurationError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except StaleDataError as exc:
        log.error("data error: %s", exc)
        return EXIT_STALE
    except AggregationError as exc:
        log.error("nothing to aggregate: %s", exc)
        return EXIT_EMPTY
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
