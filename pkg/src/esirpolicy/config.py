"""Run configuration: JSON file, environment overrides and command-line flags.

Example file (paths are relative to the file)::

    {
      "data": {"covid": "covid.csv", "population": "population.csv",
               "policies": "policies.csv", "factors": "factors.csv"},
      "model": {"chains": 4, "iterations": 20000, "burn_in": 10000, "thin": 10},
      "kinds": ["mask", "vaccine"],
      "alpha": 0.1,
      "span": "auto",
      "loess_degree": 1,
      "out_dir": "out"
    }

``model`` accepts every :class:`~esirpolicy.esir.EsirModelSpec` field.
Precedence, lowest first: defaults, file, environment
(``ESIRPOLICY_OUT_DIR``, ``ESIRPOLICY_SEED``), command-line flags.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .effectiveness import PolicyKind
from .errors import ConfigError
from .esir import EsirModelSpec
from .regression import DEFAULT_ALPHA

ENV_OUT_DIR = "ESIRPOLICY_OUT_DIR"
ENV_SEED = "ESIRPOLICY_SEED"
DATA_KEYS = ("covid", "population", "policies", "factors")
TOP_KEYS = {"data", "model", "kinds", "alpha", "span", "loess_degree", "out_dir", "workers"}


@dataclass(frozen=True)
class RunConfig:
    covid_csv: Optional[Path]
    population_csv: Optional[Path]
    policy_csv: Optional[Path] = None
    factors_csv: Optional[Path] = None
    out_dir: Path = Path("out")
    model: EsirModelSpec = field(default_factory=EsirModelSpec)
    kinds: tuple[str, ...] = ("mask", "vaccine")
    alpha: float = DEFAULT_ALPHA
    span: Optional[float] = None
    loess_degree: int = 1
    workers: int = 1

    @property
    def seed(self) -> int:
        return self.model.seed

    @property
    def credible_level(self) -> float:
        return self.model.credible_level

    def require(self, *names: str) -> None:
        """Check the named input files are configured and exist."""
        for name in names:
            path = getattr(self, name)
            if path is None:
                raise ConfigError(f"missing required input: {name}")
            if not Path(path).is_file():
                raise ConfigError(f"{name}: no such file {path}")

    def echo(self) -> dict[str, Any]:
        """Config as recorded in the run manifest (without the output directory)."""
        return {
            "data": {k: None if getattr(self, a) is None else str(getattr(self, a))
                     for k, a in zip(DATA_KEYS, ("covid_csv", "population_csv", "policy_csv", "factors_csv"))},
            "model": self.model.to_mapping(),
            "kinds": list(self.kinds),
            "alpha": self.alpha,
            "span": "auto" if self.span is None else self.span,
            "loess_degree": self.loess_degree,
        }


def parse_span(value) -> Optional[float]:
    if value is None or (isinstance(value, str) and value.strip().lower() == "auto"):
        return None
    try:
        span = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"span must be 'auto' or a number in (0, 1], got {value!r}") from None
    if not 0.0 < span <= 1.0:
        raise ConfigError(f"span must lie in (0, 1], got {span}")
    return span


def _kinds(values) -> tuple[str, ...]:
    try:
        return tuple(PolicyKind(v).value for v in values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path=None, overrides: Optional[dict] = None, environ=None) -> RunConfig:
    """Build a :class:`RunConfig` from an optional JSON file plus overrides.

    ``overrides`` keys: ``covid``, ``population``, ``policies``, ``factors``,
    ``out_dir``, ``seed``, ``credible_level``, ``alpha``, ``span``,
    ``loess_degree``, ``kinds``, ``workers``; ``None`` values are ignored.
    """
    environ = os.environ if environ is None else environ
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    raw: dict[str, Any] = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(raw, dict) or set(raw) - TOP_KEYS:
            raise ConfigError(f"{path}: unknown keys {sorted(set(raw) - TOP_KEYS)}")
        base = path.parent

    data = dict(raw.get("data", {}))
    if set(data) - set(DATA_KEYS):
        raise ConfigError(f"unknown data keys: {sorted(set(data) - set(DATA_KEYS))}")
    paths = {k: (base / data[k]) if data.get(k) else None for k in DATA_KEYS}
    for k in DATA_KEYS:
        if k in overrides:
            paths[k] = Path(overrides[k])

    model_map = dict(raw.get("model", {}))
    if ENV_SEED in environ:
        model_map["seed"] = environ[ENV_SEED]
    for key in ("seed", "credible_level"):
        if key in overrides:
            model_map[key] = overrides[key]
    if "seed" in model_map:
        try:
            model_map["seed"] = int(model_map["seed"])
        except (TypeError, ValueError):
            raise ConfigError(f"seed must be an integer, got {model_map['seed']!r}") from None
    model = EsirModelSpec.from_mapping(model_map)

    out_dir = base / raw["out_dir"] if "out_dir" in raw else Path("out")
    if ENV_OUT_DIR in environ:
        out_dir = Path(environ[ENV_OUT_DIR])
    if "out_dir" in overrides:
        out_dir = Path(overrides["out_dir"])

    alpha = float(overrides.get("alpha", raw.get("alpha", DEFAULT_ALPHA)))
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError("alpha must lie in [0, 1]")
    degree = int(overrides.get("loess_degree", raw.get("loess_degree", 1)))
    if degree not in (1, 2):
        raise ConfigError("loess_degree must be 1 or 2")
    workers = int(overrides.get("workers", raw.get("workers", 1)))
    return RunConfig(
        covid_csv=paths["covid"],
        population_csv=paths["population"],
        policy_csv=paths["policies"],
        factors_csv=paths["factors"],
        out_dir=out_dir,
        model=model,
        kinds=_kinds(overrides.get("kinds", raw.get("kinds", ("mask", "vaccine")))),
        alpha=alpha,
        span=parse_span(overrides.get("span", raw.get("span"))),
        loess_degree=degree,
        workers=max(1, workers),
    )


def with_model(config: RunConfig, **changes) -> RunConfig:
    return dataclasses.replace(config, model=dataclasses.replace(config.model, **changes))
