"""Experiment configuration files.

A configuration is a JSON object. Every key is checked; unknown keys are
an error rather than silently ignored. Relative paths are resolved against
the directory of the configuration file.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .codebook import CodebookTree, GainModel, FlowPopulation, _located_decoder, load_codebook, parse_codebook
from .elastic import TrafficModel
from .errors import ConfigError, HierBeamError
from .fixtures import reference_traffic
from .sim import SimConfig

MODES = ("allocate", "analyze-pf", "analyze-mt", "analyze-streaming", "simulate", "validate")
SWEEP_SCALES = ("absolute", "pf-critical", "mt-saturation")

_TOP_KEYS = {"mode", "codebook", "traffic", "sweep", "sweep_scale", "alpha", "maxmin_alpha", "population",
             "mt_moments", "streaming", "sim", "output", "validate"}
_SIM_KEYS = {"horizon_events", "warmup_fraction", "seed", "flow_size_distribution", "policy", "n_batches",
             "busy_cycles"}


@dataclass
class ExperimentConfig:
    mode: str
    tree: CodebookTree
    gains: GainModel | None
    traffic: TrafficModel
    sweep: list = field(default_factory=lambda: [1.0])
    sweep_scale: str = "absolute"
    alpha: object = 1.0
    maxmin_alpha: float = 16.0
    population: FlowPopulation | None = None
    mt_moments: str = "exp"
    xi: int | None = None
    s: np.ndarray | None = None
    sim: SimConfig = field(default_factory=SimConfig)
    busy_cycles: int = 10_000
    output: Path = Path("out")
    validate_quick: bool = False


def bundled_codebook() -> tuple[CodebookTree, GainModel]:
    """The 10-beam fixture codebook shipped with the package."""
    text = resources.files("hierbeam").joinpath("data/reference_codebook.json").read_text()
    return parse_codebook(text)


def _line(obj, default=None):
    return getattr(obj, "line", default)


def _vector(doc, key, n, line, integer=False):
    val = doc[key]
    if not isinstance(val, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in val):
        raise ConfigError(f"'{key}' must be a list of numbers", line)
    if len(val) != n:
        raise ConfigError(f"'{key}' has {len(val)} entries, the codebook has {n} beams", line)
    if integer and not all(float(x).is_integer() for x in val):
        raise ConfigError(f"'{key}' must contain integers", line)
    return np.array(val, dtype=np.int64 if integer else float)


def _check_keys(doc, allowed, where):
    extra = set(doc) - allowed
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}", _line(doc))


def parse_config(text: str, base_dir: Path | str = ".") -> ExperimentConfig:
    """Parse and validate a configuration document."""
    base_dir = Path(base_dir)
    try:
        doc = _located_decoder(text).decode(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, exc.lineno) from None
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object", 1)
    top = _line(doc, 1)
    _check_keys(doc, _TOP_KEYS, "configuration")

    mode = doc.get("mode")
    if mode not in MODES:
        raise ConfigError(f"'mode' must be one of {list(MODES)}", top)

    if "codebook" in doc:
        path = Path(doc["codebook"])
        path = path if path.is_absolute() else base_dir / path
        try:
            tree, gains = load_codebook(path)
        except OSError as exc:
            raise ConfigError(f"cannot read codebook {str(path)!r}: {exc.strerror}", top) from None
        except ConfigError as exc:
            raise ConfigError(f"in codebook {str(path)!r}: {exc}", top) from None
    else:
        tree, gains = bundled_codebook()
    n = tree.n

    if "traffic" in doc:
        tdoc = doc["traffic"]
        if not isinstance(tdoc, dict):
            raise ConfigError("'traffic' must be an object", top)
        tl = _line(tdoc, top)
        _check_keys(tdoc, {"lambda", "rho", "r"}, "traffic")
        if "r" not in tdoc or ("lambda" in tdoc) == ("rho" in tdoc):
            raise ConfigError("'traffic' needs 'r' and exactly one of 'lambda' or 'rho'", tl)
        r = _vector(tdoc, "r", n, tl)
        try:
            if "lambda" in tdoc:
                traffic = TrafficModel(_vector(tdoc, "lambda", n, tl), r)
            else:
                traffic = TrafficModel.from_rho(_vector(tdoc, "rho", n, tl), r)
        except ValueError as exc:
            raise ConfigError(str(exc), tl) from None
    elif "codebook" in doc:
        raise ConfigError("'traffic' is required with a custom codebook", top)
    else:
        traffic = reference_traffic()

    sweep = doc.get("sweep", [1.0])
    if (not isinstance(sweep, list) or not sweep
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) and x > 0 for x in sweep)):
        raise ConfigError("'sweep' must be a non-empty list of positive factors", top)
    scale = doc.get("sweep_scale", "absolute")
    if scale not in SWEEP_SCALES:
        raise ConfigError(f"'sweep_scale' must be one of {list(SWEEP_SCALES)}", top)

    alpha = doc.get("alpha", 1.0)
    if not (alpha == "maxmin" or (isinstance(alpha, (int, float)) and not isinstance(alpha, bool) and alpha >= 0)):
        raise ConfigError("'alpha' must be a nonnegative number or \"maxmin\"", top)
    maxmin_alpha = doc.get("maxmin_alpha", 16.0)
    if not isinstance(maxmin_alpha, (int, float)) or maxmin_alpha <= 1:
        raise ConfigError("'maxmin_alpha' must be a number above 1", top)

    population = None
    if "population" in doc:
        pdoc = doc["population"]
        if not isinstance(pdoc, dict):
            raise ConfigError("'population' must be an object", top)
        pl = _line(pdoc, top)
        _check_keys(pdoc, {"counts", "rates", "points"}, "population")
        try:
            if "points" in pdoc:
                if "counts" in pdoc or "rates" in pdoc:
                    raise ConfigError("give either 'points' or 'counts'/'rates'", pl)
                population = FlowPopulation.from_points(tree, gains, pdoc["points"])
            elif "counts" in pdoc:
                counts = _vector(pdoc, "counts", n, pl, integer=True)
                rates = _vector(pdoc, "rates", n, pl) if "rates" in pdoc else None
                population = FlowPopulation.from_counts(counts, rates)
            else:
                raise ConfigError("'population' needs 'counts' or 'points'", pl)
        except (HierBeamError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc), pl) from None
    if mode == "allocate" and population is None:
        raise ConfigError("mode 'allocate' needs a 'population'", top)

    mt_moments = doc.get("mt_moments", "exp")
    if mt_moments not in ("exp", "simulated"):
        raise ConfigError("'mt_moments' must be \"exp\" or \"simulated\"", top)

    xi = s = None
    if "streaming" in doc:
        sdoc = doc["streaming"]
        if not isinstance(sdoc, dict):
            raise ConfigError("'streaming' must be an object", top)
        sl = _line(sdoc, top)
        _check_keys(sdoc, {"xi", "s"}, "streaming")
        xi = sdoc.get("xi")
        if not isinstance(xi, int) or isinstance(xi, bool) or xi < 1:
            raise ConfigError("'xi' must be a positive integer", sl)
        s = _vector(sdoc, "s", n, sl, integer=True) if "s" in sdoc else np.ones(n, dtype=np.int64)
        if np.any(s < 1) or np.any(s > xi):
            raise ConfigError("every demand in 's' must lie in [1, xi]", sl)
    if mode == "analyze-streaming" and xi is None:
        raise ConfigError("mode 'analyze-streaming' needs a 'streaming' section", top)

    sim = SimConfig()
    busy_cycles = 10_000
    if "sim" in doc:
        sdoc = doc["sim"]
        if not isinstance(sdoc, dict):
            raise ConfigError("'sim' must be an object", top)
        sl = _line(sdoc, top)
        _check_keys(sdoc, _SIM_KEYS, "sim")
        kw = {k: sdoc[k] for k in ("horizon_events", "warmup_fraction", "seed", "policy", "n_batches") if k in sdoc}
        if "flow_size_distribution" in sdoc:
            kw["flow_sizes"] = sdoc["flow_size_distribution"]
        busy_cycles = sdoc.get("busy_cycles", busy_cycles)
        try:
            sim = SimConfig(**kw)
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"invalid 'sim' section: {exc}", sl) from None
    if mode == "simulate" and sim.policy == "streaming" and xi is None:
        raise ConfigError("streaming simulation needs a 'streaming' section", top)

    validate_quick = False
    if "validate" in doc:
        vdoc = doc["validate"]
        if not isinstance(vdoc, dict):
            raise ConfigError("'validate' must be an object", top)
        _check_keys(vdoc, {"quick"}, "validate")
        validate_quick = bool(vdoc.get("quick", False))

    out = Path(doc.get("output", "out"))
    return ExperimentConfig(mode, tree, gains, traffic, [float(x) for x in sweep], scale, alpha,
                            float(maxmin_alpha), population, mt_moments, xi, s, sim, int(busy_cycles),
                            out if out.is_absolute() else base_dir / out, validate_quick)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {str(path)!r}: {exc.strerror}") from None
    return parse_config(text, path.parent)
