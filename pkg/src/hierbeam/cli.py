"""Command-line entry point.

Usage::

    hierbeam VERB --config PATH [--seed N] [--output DIR]

Verbs: allocate, analyze-pf, analyze-mt, analyze-streaming, simulate,
validate. The verb must match the ``mode`` of the configuration file, so
a config cannot silently run the wrong experiment.

Exit status: 0 on success, 1 when ``validate`` finds a violation, 2 for
configuration errors, 3 for model errors such as instability, 4 for I/O
errors.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import runs
from .config import MODES, ExperimentConfig, load_config
from .elastic import critical_load_factor, mt_saturation_factor
from .errors import ConfigError, ModelError
from .streaming import StreamingModel

log = logging.getLogger("hierbeam")

EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_MODEL = 3
EXIT_IO = 4


def _metadata(cfg: ExperimentConfig, factors) -> dict:
    return {
        "mode": cfg.mode,
        "beams": list(cfg.tree.labels),
        "sweep": cfg.sweep,
        "sweep_scale": cfg.sweep_scale,
        "load_factors": factors,
        "pf_critical_load_factor": critical_load_factor(cfg.tree, cfg.traffic),
        "mt_saturation_load_factor": mt_saturation_factor(cfg.tree, cfg.traffic),
        "swept_quantity": "lambda (service rates fixed)",
        "sim": cfg.sim.to_dict() if cfg.mode == "simulate" else None,
    }


def _streaming_model(cfg: ExperimentConfig) -> StreamingModel:
    return StreamingModel(cfg.tree, cfg.xi, cfg.s, cfg.traffic)


def run(cfg: ExperimentConfig) -> int:
    """Execute a parsed configuration and write its artifacts."""
    out = Path(cfg.output)
    if cfg.mode == "validate":
        from .validate import validate
        ok, results = validate(quick=cfg.validate_quick, log=print)
        rows = [{"criterion": r.criterion, "name": r.name, "passed": r.passed, "detail": r.detail,
                 "seconds": round(r.seconds, 3)} for r in results]
        runs.write_csv(out / "validate.csv", rows, ["criterion", "name", "passed", "detail", "seconds"])
        return 0 if ok else EXIT_VALIDATION

    if cfg.mode == "allocate":
        art = runs.allocation_artifact(cfg.tree, cfg.population, cfg.alpha, cfg.maxmin_alpha)
        runs.write_json(out / "allocation.json", art)
        log.info("wrote %s", out / "allocation.json")
        return 0

    factors = runs.resolve_factors(cfg.tree, cfg.traffic, cfg.sweep, cfg.sweep_scale)
    if cfg.mode == "analyze-pf":
        name, rows, cols = "pf", runs.pf_rows(cfg.tree, cfg.traffic, factors), runs.ELASTIC_COLUMNS
    elif cfg.mode == "analyze-mt":
        rows = runs.mt_rows(cfg.tree, cfg.traffic, factors, cfg.mt_moments, cfg.sim, cfg.busy_cycles)
        name, cols = "mt", runs.ELASTIC_COLUMNS
    elif cfg.mode == "analyze-streaming":
        name, rows, cols = "streaming", runs.streaming_rows(_streaming_model(cfg), factors), runs.STREAMING_COLUMNS
    else:
        model = _streaming_model(cfg) if cfg.sim.policy == "streaming" else None
        rows = runs.simulate_rows(cfg.tree, cfg.traffic, factors, cfg.sim, model)
        name = f"sim_{cfg.sim.policy}"
        cols = (runs.STREAMING_COLUMNS + runs.STREAMING_STDERR_COLUMNS if model is not None
                else runs.ELASTIC_COLUMNS + runs.ELASTIC_STDERR_COLUMNS)
    runs.write_csv(out / f"{name}.csv", rows, cols)
    runs.write_json(out / f"{name}.meta.json", _metadata(cfg, factors))
    log.info("wrote %s (%d rows)", out / f"{name}.csv", len(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hierbeam",
                                description="Beam scheduling and flow-level performance on hierarchical codebooks.")
    p.add_argument("verb", choices=MODES)
    p.add_argument("--config", required=True, type=Path, help="experiment configuration (JSON)")
    p.add_argument("--seed", type=int, default=None, help="override the simulation seed")
    p.add_argument("--output", type=Path, default=None, help="override the output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if cfg.mode != args.verb:
            raise ConfigError(f"verb {args.verb!r} does not match the configured mode {cfg.mode!r}")
        if args.seed is not None:
            cfg.sim = dataclasses.replace(cfg.sim, seed=args.seed)
        if args.output is not None:
            cfg.output = args.output
        return run(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"hierbeam: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelError as exc:
        print(f"hierbeam: model error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except OSError as exc:
        print(f"hierbeam: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
