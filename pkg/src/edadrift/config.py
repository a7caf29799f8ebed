"""JSON configuration schemas for the command-line subcommands.

Each subcommand has one pydantic model.  Config files and command-line flags
fill the same fields (flags win); unknown keys are rejected.  Diagnostics
carry the line of the offending key when the value came from a file.
"""

from __future__ import annotations

import json
import re
from fractions import Fraction
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .eda import EdaSpec
from .errors import InvalidSpecError
from .neutral import NeutralProcessSpec
from .stopping import StoppingRule

AlgoName = Literal["cga", "pbil", "umda", "ce", "lambda-mmas"]
StopName = Literal["absorption", "exit-middle", "margin-hit", "runaway", "horizon", "below", "above"]


class ConfigError(ValueError):
    """Configuration problem, optionally located at ``line`` of ``source``."""

    def __init__(self, message: str, source: str | None = None, line: int | None = None):
        self.source, self.line = source, line
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line else f"{source}: "
        super().__init__(where + message)


class _Schema(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = Field(0, ge=0)


class ProcessFields(_Schema):
    """Algorithm parameters; ``dim`` doubles as ``D`` for margins."""

    algo: AlgoName
    K: int | None = None
    mu: int | None = None
    lam: int | None = None
    rho: float | None = None
    schedule: list[float] | None = None
    margins: bool = False
    dim: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _required(self):
        if self.algo == "cga" and self.K is None:
            raise ValueError("cga needs K")
        if self.algo in ("pbil", "umda", "ce") and self.mu is None:
            raise ValueError(f"{self.algo} needs mu")
        if self.algo in ("pbil", "lambda-mmas") and self.rho is None:
            raise ValueError(f"{self.algo} needs rho")
        if self.algo == "ce" and not self.schedule:
            raise ValueError("ce needs schedule")
        return self

    def process_spec(self) -> NeutralProcessSpec:
        D = self.dim if self.margins else None
        if self.algo == "cga":
            return NeutralProcessSpec.cga(self.K, D)
        if self.algo == "umda":
            return NeutralProcessSpec.umda(self.mu, D)
        if self.algo == "ce":
            return NeutralProcessSpec.ce(self.mu, self.schedule, D)
        if self.algo == "lambda-mmas":
            return NeutralProcessSpec.pbil(1, self.rho, D)
        return NeutralProcessSpec.pbil(self.mu, self.rho, D)

    def eda_spec(self) -> EdaSpec:
        mu = 1 if self.algo in ("cga", "lambda-mmas") else self.mu
        lam = self.lam if self.lam is not None else mu
        rho = 1.0 if self.algo in ("umda", "cga", "ce") else self.rho
        return EdaSpec(self.algo, self.dim, mu, lam, rho, self.schedule, self.K, self.margins)


class StopFields(BaseModel):
    stop: StopName = "absorption"
    lo: float | str = "1/4"
    hi: float | str = "3/4"
    level: float | str | None = None
    c: float = 0.6
    epsilon: float = 1e-9
    horizon: int | None = None

    def stopping_rule(self) -> StoppingRule:
        if self.stop == "absorption":
            return StoppingRule.absorption()
        if self.stop == "exit-middle":
            return StoppingRule.exit_middle(as_fraction(self.lo), as_fraction(self.hi))
        if self.stop == "margin-hit":
            return StoppingRule.margin_hit()
        if self.stop == "runaway":
            return StoppingRule.runaway(self.c, self.epsilon)
        if self.stop == "horizon":
            if self.horizon is None:
                raise ValueError("stop 'horizon' needs horizon")
            return StoppingRule.at_horizon(self.horizon)
        if self.stop == "below":
            return StoppingRule.below(as_fraction(self.level if self.level is not None else "1/4"))
        return StoppingRule.above(as_fraction(self.level if self.level is not None else "3/4"))


def as_fraction(x) -> Fraction:
    """Exact value of a decimal literal or a ``"p/q"`` string."""
    return Fraction(str(x))


class SimulateConfig(ProcessFields, StopFields):
    fitness: str | None = None
    track: int = Field(0, ge=0)
    replicas: int = Field(1000, ge=1)
    budget: int | None = Field(None, ge=0)
    sweep_param: Literal["mu", "rho", "K", "lam", "dim"] | None = None
    sweep_values: list[float] | None = None

    @model_validator(mode="after")
    def _sweep(self):
        if (self.sweep_param is None) != (self.sweep_values is None):
            raise ValueError("sweep_param and sweep_values go together")
        return self


class ExactConfig(_Schema, StopFields):
    algo: Literal["cga", "umda"]
    K: int | None = None
    mu: int | None = None
    sizes: list[int] | None = None

    @model_validator(mode="after")
    def _required(self):
        key = "K" if self.algo == "cga" else "mu"
        if getattr(self, key) is None and not self.sizes:
            raise ValueError(f"{self.algo} needs {key}")
        return self

    @property
    def size(self) -> int:
        return self.K if self.algo == "cga" else self.mu


class ScalingConfig(ExactConfig):
    sizes: list[int]
    mode: Literal["exact", "montecarlo"] = "exact"
    replicas: int = Field(10000, ge=1)
    budget: int | None = Field(None, ge=0)


class TailConfig(ProcessFields):
    gamma: float = Field(0.25, gt=0, le=0.5)
    horizons: list[int]
    replicas: int = Field(10**5, ge=0)


class RunawayConfig(_Schema):
    mu: list[int]
    rho: list[float]
    c: float = 0.6
    epsilon: float = 1e-9
    replicas: int = Field(10**4, ge=1)
    budget: int | None = Field(None, ge=0)


class DominanceConfig(ProcessFields):
    fitness: str = "onemax"
    reference: str = "neutral"
    bit: int = Field(0, ge=0)
    steps: int = Field(5, ge=0)
    mode: Literal["exact", "montecarlo"] = "exact"
    replicas: int = Field(10**5, ge=1)
    alpha: float = Field(1e-3, gt=0, lt=1)


class AdviseConfig(_Schema):
    algo: Literal["cga", "pbil", "umda"]
    budget: float
    dim: int
    gamma: float = 0.25
    delta: float = 0.1
    lam: int | None = None
    rho: float = 1.0


class MomentsConfig(_Schema):
    algo: Literal["cga", "pbil"]
    K: list[int] = Field(default_factory=lambda: [2, 4, 8, 16, 32, 64])
    mu: list[int] = Field(default_factory=lambda: list(range(1, 13)))
    rho: list[str] = Field(default_factory=lambda: ["1", "1/2", "1/4", "3/10"])
    sqrt_samples: int = Field(10**6, ge=0)


SCHEMAS: dict[str, type[_Schema]] = {
    "simulate": SimulateConfig,
    "exact": ExactConfig,
    "scaling": ScalingConfig,
    "tailcheck": TailConfig,
    "runaway": RunawayConfig,
    "dominance": DominanceConfig,
    "advise": AdviseConfig,
    "moments-check": MomentsConfig,
}


def _key_line(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(str(key)), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def read_config_file(path: str) -> tuple[dict, str]:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e.strerror}", path) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON: {e.msg} (column {e.colno})", path, e.lineno) from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object", path, 1)
    return data, text


def load_config(command: str, file_values: dict, overrides: dict, source: str | None = None, text: str = ""):
    """Validate ``file_values`` updated by the non-``None`` ``overrides``."""
    schema = SCHEMAS[command]
    values = dict(file_values)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return schema.model_validate(values)
    except ValidationError as e:
        err = e.errors()[0]
        loc = err["loc"]
        field = str(loc[0]) if loc else None
        if err["type"] == "missing":
            msg = f"missing required field {field!r} (flag --{field.replace('_', '-')})"
        elif err["type"] == "extra_forbidden":
            msg = f"unknown key {field!r}"
        elif field:
            msg = f"field {field!r}: {err['msg']}"
        else:
            msg = err["msg"].removeprefix("Value error, ")
        from_file = field is not None and field in file_values and field not in {
            k for k, v in overrides.items() if v is not None
        }
        if from_file:
            raise ConfigError(msg, source, _key_line(text, field)) from None
        raise ConfigError(msg) from None


def dump_config(cfg: _Schema) -> str:
    return json.dumps(cfg.model_dump(exclude_none=True), indent=2, sort_keys=True) + "\n"


def spec_error(exc: InvalidSpecError) -> ConfigError:
    return ConfigError(f"invalid parameters: {exc}")
