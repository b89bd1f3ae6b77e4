"""Run configuration: a JSON document validated into :class:`RunConfig`.

Schema (``null`` or omitted means default)::

    {
      "command": "train" | "predict" | "active-learn" | "benchmark" | "kernel-check",
      "problem": benchmark name or null,
      "operator": {"variant": str, "dimension": int, "alpha": float,
                   "lower_bound": float, "node_count": int, "frequency_cutoff": float},
      "data": {"anchors": csv, "low": csv, "high": csv, "queries": csv, "model": json},
      "train": {"restarts": int, "seed": int, "max_iterations": int,
                "tolerance": float, "noise_floor": float,
                "freeze": [{"name": str, "value": float}, ...]},
      "eval": {"grid": [int, ...], "bounds": [[lo, hi], ...], "seeds": [int, ...],
               "budget": int, "candidates": [int, ...], "warm_start": bool,
               "pairs": int},
      "output_dir": path,
      "plot": bool
    }

Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from . import operators as ops

COMMANDS = ("train", "predict", "active-learn", "benchmark", "kernel-check")

_OPERATOR_KEYS = ("variant", "dimension", "alpha", "lower_bound", "node_count", "frequency_cutoff")
_DATA_KEYS = ("anchors", "low", "high", "queries", "model")
_TRAIN_KEYS = ("restarts", "seed", "max_iterations", "tolerance", "noise_floor", "freeze")
_EVAL_KEYS = ("grid", "bounds", "seeds", "budget", "candidates", "warm_start", "pairs")
_TOP_KEYS = ("command", "problem", "operator", "data", "train", "eval", "output_dir", "plot")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass(frozen=True)
class OperatorConfig:
    variant: str
    dimension: int = 1
    alpha: float | None = None
    lower_bound: float = 0.0
    node_count: int = ops.QuadratureSpec().node_count
    frequency_cutoff: float = ops.QuadratureSpec().frequency_cutoff

    def spec(self) -> ops.LinearOperatorSpec:
        quad = ops.QuadratureSpec(self.node_count, self.frequency_cutoff)
        return ops.LinearOperatorSpec(self.variant, self.dimension, self.lower_bound, self.alpha, quad)


@dataclass(frozen=True)
class TrainSettings:
    restarts: int | None = None  # None: the problem's default, else 10
    seed: int = 0
    max_iterations: int = 1000
    tolerance: float = 1e-6
    noise_floor: float = 1e-8
    freeze: tuple[tuple[str, float], ...] = ()


@dataclass(frozen=True)
class EvalSettings:
    grid: tuple[int, ...] | None = None
    bounds: tuple[tuple[float, float], ...] | None = None
    seeds: tuple[int, ...] | None = None
    budget: int = 20
    candidates: tuple[int, ...] | None = None
    warm_start: bool = False
    pairs: int = 20


@dataclass(frozen=True)
class RunConfig:
    command: str
    problem: str | None = None
    operator: OperatorConfig | None = None
    data: dict = field(default_factory=dict)
    train: TrainSettings = TrainSettings()
    eval: EvalSettings = EvalSettings()
    output_dir: Path = Path("out")
    plot: bool = False

    @property
    def seed(self) -> int:
        return self.train.seed


# ---------------------------------------------------------------------------
# field checkers
# ---------------------------------------------------------------------------


def _object(value, where: str, allowed) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"{where}: expected an object, got {type(value).__name__}")
    for key in value:
        if key not in allowed:
            raise ConfigError(f"{where}: unknown key {key!r} (allowed: {', '.join(allowed)})")
    return value


def _int(value, where: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{where}: must be at least {minimum}, got {value}")
    return value


def _float(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{where}: expected a finite number, got {value!r}")
    return float(value)


def _str(value, where: str) -> str:
    if not isinstance(value, str) or not value:
        raise ConfigError(f"{where}: expected a non-empty string, got {value!r}")
    return value


def _int_list(value, where: str, minimum: int = 0) -> tuple[int, ...]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where}: expected a non-empty list of integers")
    return tuple(_int(v, f"{where}[{i}]", minimum) for i, v in enumerate(value))


# ---------------------------------------------------------------------------
# sections
# ---------------------------------------------------------------------------


def _operator(raw) -> OperatorConfig:
    raw = _object(raw, "operator", _OPERATOR_KEYS)
    if "variant" not in raw:
        raise ConfigError("operator: missing required key 'variant'")
    variant = _str(raw["variant"], "operator.variant")
    if variant not in ops.VARIANTS:
        raise ConfigError(f"operator.variant: unknown operator {variant!r} (expected one of {', '.join(ops.VARIANTS)})")
    kw = {"variant": variant}
    if raw.get("dimension") is not None:
        kw["dimension"] = _int(raw["dimension"], "operator.dimension", 1)
    elif variant == "advection_diffusion_reaction":
        kw["dimension"] = 2
    if raw.get("alpha") is not None:
        kw["alpha"] = _float(raw["alpha"], "operator.alpha")
    if raw.get("lower_bound") is not None:
        kw["lower_bound"] = _float(raw["lower_bound"], "operator.lower_bound")
    if raw.get("node_count") is not None:
        kw["node_count"] = _int(raw["node_count"], "operator.node_count")
    if raw.get("frequency_cutoff") is not None:
        kw["frequency_cutoff"] = _float(raw["frequency_cutoff"], "operator.frequency_cutoff")
    cfg = OperatorConfig(**kw)
    try:
        cfg.spec()
    except ValueError as exc:
        raise ConfigError(f"operator: {exc}") from None
    return cfg


def _train(raw) -> TrainSettings:
    raw = _object(raw, "train", _TRAIN_KEYS)
    kw = {}
    for key, minimum in (("restarts", 1), ("seed", 0), ("max_iterations", 0)):
        if raw.get(key) is not None:
            kw[key] = _int(raw[key], f"train.{key}", minimum)
    for key in ("tolerance", "noise_floor"):
        if raw.get(key) is not None:
            kw[key] = _float(raw[key], f"train.{key}")
            if kw[key] <= 0:
                raise ConfigError(f"train.{key}: must be positive")
    if raw.get("freeze") is not None:
        if not isinstance(raw["freeze"], list):
            raise ConfigError("train.freeze: expected a list of {name, value} objects")
        items = []
        for i, item in enumerate(raw["freeze"]):
            where = f"train.freeze[{i}]"
            item = _object(item, where, ("name", "value"))
            if "name" not in item or "value" not in item:
                raise ConfigError(f"{where}: needs both 'name' and 'value'")
            items.append((_str(item["name"], f"{where}.name"), _float(item["value"], f"{where}.value")))
        kw["freeze"] = tuple(items)
    return TrainSettings(**kw)


def _eval(raw) -> EvalSettings:
    raw = _object(raw, "eval", _EVAL_KEYS)
    kw = {}
    if raw.get("grid") is not None:
        kw["grid"] = _int_list(raw["grid"], "eval.grid", 1)
    if raw.get("candidates") is not None:
        kw["candidates"] = _int_list(raw["candidates"], "eval.candidates", 1)
    if raw.get("seeds") is not None:
        kw["seeds"] = _int_list(raw["seeds"], "eval.seeds", 0)
    if raw.get("budget") is not None:
        kw["budget"] = _int(raw["budget"], "eval.budget", 0)
    if raw.get("pairs") is not None:
        kw["pairs"] = _int(raw["pairs"], "eval.pairs", 1)
    if raw.get("warm_start") is not None:
        if not isinstance(raw["warm_start"], bool):
            raise ConfigError(f"eval.warm_start: expected true or false, got {raw['warm_start']!r}")
        kw["warm_start"] = raw["warm_start"]
    if raw.get("bounds") is not None:
        b = raw["bounds"]
        if not isinstance(b, list) or not b:
            raise ConfigError("eval.bounds: expected a list of [lo, hi] pairs")
        pairs = []
        for i, pair in enumerate(b):
            if not isinstance(pair, list) or len(pair) != 2:
                raise ConfigError(f"eval.bounds[{i}]: expected [lo, hi]")
            lo, hi = (_float(v, f"eval.bounds[{i}]") for v in pair)
            if not lo < hi:
                raise ConfigError(f"eval.bounds[{i}]: lower bound must be below upper bound")
            pairs.append((lo, hi))
        kw["bounds"] = tuple(pairs)
    return EvalSettings(**kw)


def _resolve(path: str, base: Path | None) -> Path:
    p = Path(path)
    return p if p.is_absolute() or base is None else base / p


def config_from_dict(raw, base_dir: Path | None = None) -> RunConfig:
    """Validate a decoded config document. ``base_dir`` anchors relative paths."""
    from .benchmarks import NAMES

    raw = _object(raw, "config", _TOP_KEYS)
    if "command" not in raw:
        raise ConfigError("config: missing required key 'command'")
    command = _str(raw["command"], "command")
    if command not in COMMANDS:
        raise ConfigError(f"command: unknown command {command!r} (expected one of {', '.join(COMMANDS)})")
    kw = {"command": command}
    if raw.get("problem") is not None:
        problem = _str(raw["problem"], "problem")
        if problem not in NAMES and not (command == "benchmark" and problem == "all"):
            raise ConfigError(f"problem: unknown benchmark {problem!r} (expected one of {', '.join(NAMES)})")
        kw["problem"] = problem
    if raw.get("operator") is not None:
        kw["operator"] = _operator(raw["operator"])
    if raw.get("data") is not None:
        data = _object(raw["data"], "data", _DATA_KEYS)
        resolved = {}
        for key in _DATA_KEYS:
            if data.get(key) is None:
                continue
            path = _resolve(_str(data[key], f"data.{key}"), base_dir)
            if not path.is_file():
                raise ConfigError(f"data.{key}: file not found: {path}")
            resolved[key] = path
        kw["data"] = resolved
    if raw.get("train") is not None:
        kw["train"] = _train(raw["train"])
    if raw.get("eval") is not None:
        kw["eval"] = _eval(raw["eval"])
    if raw.get("output_dir") is not None:
        kw["output_dir"] = _resolve(_str(raw["output_dir"], "output_dir"), base_dir)
    if raw.get("plot") is not None:
        if not isinstance(raw["plot"], bool):
            raise ConfigError(f"plot: expected true or false, got {raw['plot']!r}")
        kw["plot"] = raw["plot"]
    cfg = RunConfig(**kw)
    _check_command_inputs(cfg)
    return cfg


def _check_command_inputs(cfg: RunConfig) -> None:
    has_data = any(k in cfg.data for k in ("anchors", "low", "high"))
    if cfg.command in ("active-learn", "benchmark") and cfg.problem is None:
        raise ConfigError(f"problem: required for the {cfg.command} command")
    if cfg.command == "train" and cfg.problem is None and not has_data:
        raise ConfigError("train: give either 'problem' or data.anchors/low/high")
    if cfg.command == "train" and has_data and cfg.operator is None and cfg.problem is None:
        raise ConfigError("operator: required when training on data files without a problem")
    if cfg.command == "predict" and "model" not in cfg.data and cfg.problem is None and not has_data:
        raise ConfigError("predict: give data.model, a problem, or data files to train on")
    if cfg.command == "predict" and has_data and "model" not in cfg.data \
            and cfg.operator is None and cfg.problem is None:
        raise ConfigError("operator: required when training on data files without a problem")


def parse_config(path) -> RunConfig:
    """Read and validate a JSON config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return config_from_dict(raw, path.parent)


def config_to_dict(cfg: RunConfig) -> dict:
    """Canonical document for ``cfg`` with every default filled in."""
    out = {"command": cfg.command, "problem": cfg.problem}
    if cfg.operator is None:
        out["operator"] = None
    else:
        o = cfg.operator
        out["operator"] = {"variant": o.variant, "dimension": o.dimension, "alpha": o.alpha,
                           "lower_bound": o.lower_bound, "node_count": o.node_count,
                           "frequency_cutoff": o.frequency_cutoff}
    out["data"] = {k: str(cfg.data[k]) if k in cfg.data else None for k in _DATA_KEYS}
    t = cfg.train
    out["train"] = {"restarts": t.restarts, "seed": t.seed, "max_iterations": t.max_iterations,
                    "tolerance": t.tolerance, "noise_floor": t.noise_floor,
                    "freeze": [{"name": n, "value": v} for n, v in t.freeze]}
    e = cfg.eval
    out["eval"] = {"grid": list(e.grid) if e.grid else None,
                   "bounds": [list(b) for b in e.bounds] if e.bounds else None,
                   "seeds": list(e.seeds) if e.seeds else None,
                   "budget": e.budget,
                   "candidates": list(e.candidates) if e.candidates else None,
                   "warm_start": e.warm_start,
                   "pairs": e.pairs}
    out["output_dir"] = str(cfg.output_dir)
    out["plot"] = cfg.plot
    return out


def serialize_config(cfg: RunConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2) + "\n"


def normalize_config(raw, base_dir: Path | None = None) -> dict:
    """Canonical form of a raw document: what ``config_to_dict(parse(...))`` must return."""
    return config_to_dict(config_from_dict(raw, base_dir))
