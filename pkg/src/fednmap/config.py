"""TOML run configuration: schema, overrides and conversion to :class:`RunSpec`.

Layout::

    seed = 0
    algorithm = "fednmap"          # fednmap | zhang | scaffold
    schedule = "manual"            # manual | theorem1 | theorem2

    [problem]                      # ProblemSpec fields
    [regularizer]                  # kind, nu1, nu2, lo, hi
    [fed]                          # n, Q, T, eta_a (or eta_a_over_Q), eta_s, gamma
    [sweep]                        # ns, Qs, seeds (also used by compare)
    [compare]                      # algorithms

Unknown keys are errors. Relative data paths resolve against the config file.
"""

from __future__ import annotations

import copy
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .algorithms import FedConfig
from .regularizers import Regularizer
from .simulator import ProblemSpec, RunSpec

__all__ = ["ConfigError", "ExperimentConfig", "apply_overrides", "load_config", "parse_config"]

_PATH_KEYS = ("images", "labels", "test_images", "test_labels")

SCHEMA: dict[str, dict[str, tuple[type, ...]]] = {
    "": {
        "seed": (int,), "algorithm": (str,), "schedule": (str,), "metrics_every": (int,),
        "workers": (int,), "record_draws": (bool,), "timing": (bool,),
    },
    "problem": {
        "kind": (str,), "p": (int,), "hetero": (int, float), "problem_seed": (int,),
        "noise": (str,), "sigma": (int, float), "batch_size": (int,), "images": (str,),
        "labels": (str,), "test_images": (str,), "test_labels": (str,), "limit": (int,),
        "partition": (str,), "alpha": (int, float), "hidden": (int,), "psi_star": (str,),
    },
    "regularizer": {
        "kind": (str,), "nu1": (int, float), "nu2": (int, float),
        "lo": (int, float), "hi": (int, float),
    },
    "fed": {
        "n": (int,), "Q": (int,), "T": (int,), "eta_a": (int, float),
        "eta_a_over_Q": (int, float), "eta_s": (int, float), "gamma": (int, float),
    },
    "sweep": {"ns": (list,), "Qs": (list,), "seeds": (list,)},
    "compare": {"algorithms": (list,)},
}

FED_DEFAULTS = {"n": 5, "Q": 4, "T": 100, "eta_a": 0.02, "eta_s": 1.0, "gamma": 0.05}


class ConfigError(ValueError):
    """Bad configuration; ``line``/``column`` are set for syntax errors."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


@dataclass(frozen=True)
class ExperimentConfig:
    run: RunSpec
    ns: tuple[int, ...]
    Qs: tuple[int, ...]
    seeds: tuple[int, ...]
    algorithms: tuple[str, ...]
    table: dict


def _toml_error(exc: Exception, text: str, what: str) -> ConfigError:
    msg = str(exc)
    m = re.search(r"\(at (line (\d+), column (\d+)|end of document)\)", msg)
    if m is None:
        return ConfigError(f"{what}: {msg}")
    if m.group(2):
        line, col = int(m.group(2)), int(m.group(3))
    else:
        lines = text.split("\n")
        line, col = len(lines), len(lines[-1]) + 1
    return ConfigError(f"{what}: {msg[:m.start()].strip()}", line, col)


def _check_schema(table: dict) -> None:
    for key, value in table.items():
        if isinstance(value, dict):
            if key not in SCHEMA or key == "":
                raise ConfigError(f"unknown config section {key!r}")
            for sub, v in value.items():
                _check_key(key, sub, v)
        else:
            _check_key("", key, value)


def _check_key(section: str, key: str, value: Any) -> None:
    dotted = f"{section}.{key}" if section else key
    allowed = SCHEMA[section]
    if key not in allowed:
        raise ConfigError(f"unknown config key {dotted!r}")
    types = allowed[key]
    ok = isinstance(value, types) and not (isinstance(value, bool) and bool not in types)
    if not ok:
        names = " or ".join(t.__name__ for t in types)
        raise ConfigError(f"{dotted} must be {names}, got {type(value).__name__}")


def _parse_value(text: str) -> Any:
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(table: dict, overrides: Iterable[str]) -> dict:
    """Apply ``section.key=value`` strings; values are parsed as TOML, else taken as strings."""
    out = copy.deepcopy(table)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        dotted, text = item.split("=", 1)
        dotted = dotted.strip()
        parts = dotted.split(".")
        if len(parts) == 1:
            section, key = "", parts[0]
        elif len(parts) == 2:
            section, key = parts
        else:
            raise ConfigError(f"unknown config key {dotted!r}")
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown config key {dotted!r}")
        value = _parse_value(text.strip())
        _check_key(section, key, value)
        (out.setdefault(section, {}) if section else out)[key] = value
    return out


def _resolve_paths(problem: dict, base: Path | None) -> dict:
    if base is None:
        return problem
    out = dict(problem)
    for key in _PATH_KEYS:
        if key in out and not Path(out[key]).is_absolute():
            out[key] = str((base / out[key]).resolve())
    return out


def _int_list(table: dict, key: str, default: Iterable[int], where: str) -> tuple[int, ...]:
    values = table.get(key, list(default))
    if not values or not all(isinstance(v, int) and not isinstance(v, bool) for v in values):
        raise ConfigError(f"{where}.{key} must be a nonempty list of integers")
    return tuple(values)


def build(table: dict, base: Path | None = None) -> ExperimentConfig:
    """Turn a validated table into an :class:`ExperimentConfig`."""
    _check_schema(table)
    try:
        problem = ProblemSpec(**_resolve_paths(table.get("problem", {}), base))
        reg = Regularizer.from_config(table.get("regularizer", {}))
        fed_table = dict(FED_DEFAULTS, **table.get("fed", {}))
        eta_a_over_Q = fed_table.pop("eta_a_over_Q", None)
        if eta_a_over_Q is not None and "eta_a" in table.get("fed", {}):
            raise ConfigError("set only one of fed.eta_a and fed.eta_a_over_Q")
        if eta_a_over_Q is not None:
            fed_table["eta_a"] = eta_a_over_Q / fed_table["Q"]
        fed = FedConfig(**fed_table)
        top = {k: v for k, v in table.items() if not isinstance(v, dict)}
        spec = RunSpec(problem=problem, regularizer=reg, fed=fed, eta_a_over_Q=eta_a_over_Q, **top)
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc).strip("'\"")) from exc
    sweep = table.get("sweep", {})
    compare = table.get("compare", {})
    seeds = _int_list(sweep, "seeds", [spec.seed], "sweep")
    algos = tuple(compare.get("algorithms", ["fednmap", "zhang"] + (["scaffold"] if reg.is_zero else [])))
    for a in algos:
        if a not in ("fednmap", "zhang", "scaffold"):
            raise ConfigError(f"compare.algorithms: unknown algorithm {a!r}")
    return ExperimentConfig(
        run=spec,
        ns=_int_list(sweep, "ns", [fed.n], "sweep"),
        Qs=_int_list(sweep, "Qs", [fed.Q], "sweep"),
        seeds=seeds,
        algorithms=algos,
        table=table,
    )


def parse_config(text: str, overrides: Iterable[str] = (), base: Path | None = None,
                 source: str = "<config>") -> ExperimentConfig:
    try:
        table = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise _toml_error(exc, text, source) from None
    _check_schema(table)
    return build(apply_overrides(table, overrides), base)


def load_config(path: str | Path | None, overrides: Iterable[str] = ()) -> ExperimentConfig:
    """Read ``path`` (or start from defaults when ``None``) and apply overrides."""
    if path is None:
        return parse_config("", overrides, base=Path.cwd())
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, overrides, base=path.parent, source=str(path))
