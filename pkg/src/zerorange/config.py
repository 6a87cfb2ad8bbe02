"""Experiment configuration files (JSON or YAML).

Schema::

    experiment: hydrostatic            # one of EXPERIMENTS or TOOLS
    seed: 12345
    model:                             # ModelParams fields
      N: 200
      theta: 1
      alpha: 1.0
      beta: 0.0
      lambda: 0.0                      # "lam" is accepted too
      delta: 1.0
      g: linear                        # linear | constant | capped(c) | {table: [...], tail: ...}
      diffusive: true
    numerics:                          # keyword arguments of the experiment driver
      replicas: 24
    output:
      dir: results
      format: csv                      # csv | json

The boundary type is not configurable: it follows from ``theta``
(Robin when ``theta == 1``, Neumann otherwise).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigError
from .process import ModelParams
from .rates import from_name

EXPERIMENTS = ("invariance", "oracle", "hydrostatic", "hydrodynamic", "martingale",
               "replacement", "attractiveness", "pde-convergence")
# tool modes of the CLI that share the config format but check no criteria
TOOLS = ("pde-solve", "simulate")
MODEL_KEYS = {"N", "theta", "alpha", "beta", "lam", "lambda", "delta", "g", "diffusive"}


@dataclass
class ExperimentConfig:
    experiment: str
    model: dict = field(default_factory=dict)
    numerics: dict = field(default_factory=dict)
    seed: int = 0
    out_dir: str = "results"
    out_format: str = "csv"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS + TOOLS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS + TOOLS}")
        if "kappa" in self.model or "kappa" in self.numerics:
            raise ConfigError("kappa is derived from theta and cannot be set")
        unknown = set(self.model) - MODEL_KEYS
        if unknown:
            raise ConfigError(f"unknown model keys {sorted(unknown)}")
        if "lam" in self.model and "lambda" in self.model:
            raise ConfigError("give either 'lam' or 'lambda', not both")
        if self.out_format not in ("csv", "json"):
            raise ConfigError("output format must be csv or json")
        if float(self.model.get("theta", 1.0)) < 1:
            raise ConfigError("theta must be >= 1")

    @property
    def kappa(self) -> int:
        return 1 if float(self.model.get("theta", 1.0)) == 1 else 0

    def params(self, **override) -> ModelParams:
        m = dict(self.model)
        if "lambda" in m:
            m["lam"] = m.pop("lambda")
        m.update(override)
        if "N" not in m:
            raise ConfigError("model.N is required")
        try:
            m["g"] = from_name(m.get("g", "linear"))
            return ModelParams(**m)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        out = d.pop("output", {}) or {}
        try:
            cfg = cls(experiment=d.pop("experiment"), model=d.pop("model", {}) or {},
                      numerics=d.pop("numerics", {}) or {}, seed=int(d.pop("seed", 0)),
                      out_dir=out.get("dir", "results"), out_format=out.get("format", "csv"))
        except KeyError as exc:
            raise ConfigError(f"missing key {exc}") from exc
        if d:
            raise ConfigError(f"unknown top-level keys {sorted(d)}")
        return cfg

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "seed": self.seed, "model": self.model,
                "numerics": self.numerics, "output": {"dir": self.out_dir, "format": self.out_format}}


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    text = p.read_text()
    if p.suffix in (".yaml", ".yml"):
        import yaml
        data: Any = yaml.safe_load(text)
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping")
    return ExperimentConfig.from_dict(data)


def default_config(experiment: str, seed: Optional[int] = None) -> ExperimentConfig:
    """Defaults reproducing the acceptance settings for each experiment."""
    model = {"N": 200, "theta": 1, "alpha": 1.0, "g": "linear"}
    if experiment in ("invariance", "oracle"):
        model["N"] = 20 if experiment == "invariance" else 3
        if experiment == "oracle":
            model["alpha"] = 0.5
    if experiment in ("martingale",):
        model["N"] = 100
    return ExperimentConfig(experiment, model, {}, 0 if seed is None else seed)
