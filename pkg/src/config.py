from __future__ import annotations

import logging
import tomllib
from pathlib import Path
from typing import Any, Literal, TypeVar

import orjson
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .exceptions import ConfigError
from .services.models import FilterPolicy, SynthConfig

logger = logging.getLogger(__name__)

M = TypeVar("M", bound=BaseModel)


class Settings(BaseSettings):
    # Runtime
    log_level: str = Field(default="INFO")
    threads: int = Field(default=4, ge=1)
    profile: bool = Field(default=False)

    # Labeling defaults
    lambda_default: float | Literal["auto"] = Field(default="auto")
    tau1_default: float = Field(default=0.85)
    tau2_default: float = Field(default=0.65)

    # Cross-network defaults
    realizations_default: int = Field(default=100, ge=1)

    model_config = SettingsConfigDict(
        env_prefix="SUBTYPE_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    @field_validator("lambda_default")
    @classmethod
    def _lambda_default(cls, v: float | str) -> float | str:
        if v != "auto" and not v >= 0.0:
            raise ValueError("lambda_default must be >= 0 or 'auto'")
        return v

    @field_validator("log_level")
    @classmethod
    def _upper_level(cls, v: str) -> str:
        level = str(v).strip().upper()
        if level not in logging.getLevelNamesMapping():
            raise ValueError(f"unknown log level {v!r}")
        return level


settings = Settings()


# --- Run configs -------------------------------------------------------------


def _window(v: Any) -> Any:
    """`START:END` epoch seconds (flags) or a two-item list (config documents)."""
    if isinstance(v, str):
        parts = v.split(":")
        if len(parts) != 2 or not all(p.strip().isdigit() for p in parts):
            raise ValueError(f"observation window must be START:END epoch seconds, got {v!r}")
        v = (int(parts[0]), int(parts[1]))
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(x, int) for x in v) and v[0] > v[1]:
        raise ValueError("observation window start must not exceed its end")
    return v


class RunConfig(BaseModel):
    """Fully-resolved parameters of one CLI run; recorded in the manifest."""
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    out: Path
    seed: int = Field(default=0, ge=0)


class CorpusInput(RunConfig):
    cdr: Path
    truth: Path
    has_header: bool = False
    filter: FilterPolicy = Field(default_factory=FilterPolicy)
    n_per_class: int = Field(default=10_000, ge=2)
    window: tuple[int, int] | None = None

    @field_validator("window", mode="before")
    @classmethod
    def _observation_window(cls, v: Any) -> Any:
        return _window(v)


class GenConfig(RunConfig):
    synth: SynthConfig = Field(default_factory=SynthConfig)
    compress: bool = False

    @model_validator(mode="after")
    def _share_seed(self):
        # The corpus seed is the run seed.
        object.__setattr__(self, "synth", self.synth.model_copy(update={"seed": self.seed}))
        return self


class ClassifyConfig(CorpusInput):
    portion: bool = False
    rounds: int = Field(default=50, ge=1)


class LabelConfig(CorpusInput):
    lam: float | Literal["auto"] = Field(default_factory=lambda: settings.lambda_default, alias="lambda")
    prune: bool = False
    tau1: float = Field(default_factory=lambda: settings.tau1_default)
    tau2: float = Field(default_factory=lambda: settings.tau2_default)
    lambda_sweep: str | None = None
    smoothness: Literal["degree", "calls", "duration"] = "degree"
    export_problem: bool = False
    nb_model: Path | None = None

    @field_validator("tau1", "tau2")
    @classmethod
    def _tau_range(cls, v: float) -> float:
        if not 0.5 < v <= 1.0:
            raise ValueError("pruning thresholds must lie in (0.5, 1]")
        return v

    @field_validator("lam", mode="before")
    @classmethod
    def _parse_lambda(cls, v: Any) -> Any:
        if isinstance(v, str) and v.strip().lower() == "auto":
            return "auto"
        if isinstance(v, str) and v.strip().lower() in ("inf", "infinity"):
            return float("inf")
        return v

    @field_validator("lam")
    @classmethod
    def _non_negative(cls, v: float | str) -> float | str:
        if v != "auto" and not v >= 0.0:
            raise ValueError("lambda must be >= 0, 'inf' or 'auto'")
        return v

    @field_validator("lambda_sweep")
    @classmethod
    def _sweep_format(cls, v: str | None) -> str | None:
        if v is None:
            return v
        parse_sweep(v)
        return v


class CrossnetConfig(RunConfig):
    mode: Literal["attr", "prop"] = "prop"
    sides: Path
    cross_cdr: Path | None = None
    edges: Path | None = None
    hidden_b: Path | None = None
    has_header: bool = False
    window: tuple[int, int] | None = None
    realizations: int = Field(default_factory=lambda: settings.realizations_default, ge=1)
    randomize: bool = False
    n_swaps: int | None = Field(default=None, ge=0)
    n_per_class: int = Field(default=10_000, ge=2)
    rounds: int = Field(default=50, ge=1)
    oracle_b: bool = False

    @field_validator("window", mode="before")
    @classmethod
    def _observation_window(cls, v: Any) -> Any:
        return _window(v)

    @model_validator(mode="after")
    def _inputs_for_mode(self):
        if self.mode == "attr" and self.cross_cdr is None:
            raise ValueError("--mode attr requires --cross-cdr")
        if self.mode == "prop" and self.edges is None:
            raise ValueError("--mode prop requires --edges")
        return self


class EvalConfig(RunConfig):
    predictions: Path
    truth: Path


def parse_sweep(text: str) -> tuple[float, float, int]:
    """Parse `lo:hi:steps` into a log-spaced lambda grid description."""
    try:
        lo_s, hi_s, steps_s = text.split(":")
        lo, hi, steps = float(lo_s), float(hi_s), int(steps_s)
    except ValueError:
        raise ValueError(f"lambda sweep must be lo:hi:steps, got {text!r}")
    if lo <= 0 or hi < lo or steps < 1:
        raise ValueError("lambda sweep needs 0 < lo <= hi and steps >= 1")
    return lo, hi, steps


def load_config_document(path: str | Path | None) -> dict[str, Any]:
    """Read a TOML (by extension) or JSON config document; missing path -> {}."""
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = p.read_bytes()
        doc = tomllib.loads(raw.decode("utf-8")) if p.suffix.lower() == ".toml" else orjson.loads(raw)
    except (tomllib.TOMLDecodeError, orjson.JSONDecodeError, UnicodeDecodeError) as e:
        raise ConfigError(f"cannot parse config file {p}: {e}")
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {p} must hold a table/object at top level")
    return doc


def _deep_merge(base: dict[str, Any], top: dict[str, Any]) -> dict[str, Any]:
    out = dict(base)
    for key, value in top.items():
        if value is None:
            continue
        if isinstance(value, dict):
            base_value = out.get(key)
            merged = _deep_merge(base_value if isinstance(base_value, dict) else {}, value)
            if merged or isinstance(base_value, dict):
                out[key] = merged
        else:
            out[key] = value
    return out


def resolve_run_config(model: type[M], config_file: str | Path | None, overrides: dict[str, Any]) -> M:
    """Layer explicit flags over the config document over model defaults.

    Flags left at None do not override; nested dicts merge key by key.
    """
    doc = load_config_document(config_file)
    merged = _deep_merge(doc, overrides)
    try:
        resolved = model.model_validate(merged)
    except ValidationError as e:
        raise ConfigError(f"invalid {model.__name__}: {e}")
    logger.debug("Config: resolved %s from %s", model.__name__, config_file or "flags")
    return resolved
