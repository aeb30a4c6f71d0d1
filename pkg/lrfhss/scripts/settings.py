"""Scenario configuration: flat ``key = value`` files validated into a ScenarioConfig.

Precedence, lowest first: built-in defaults, environment (``LRFHSS_WORKERS``), the file, CLI flags.

Usage:
    from scripts.settings import parse_config, read_config
    cfg = parse_config(Path("samples/configs/smoke.conf").read_text(encoding="utf-8"))
    cfg = read_config("samples/configs/smoke.conf", overrides={"iterations": 5})
"""
from __future__ import annotations

import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, NamedTuple, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, field_validator

from .acrda import AcrdaParams
from .core import RegionalParams, TransmissionParams, coding_rate_of, max_separation
from .engine import MASK64, SimTime, seconds_to_ticks
from .key_mapping import CONFIG_KEYS, LIST_KEYS, canon_key, suggest_key
from .traffic import DEFAULT_MARKOV_P, DEFAULT_MARKOV_Q, TrafficModel, canon_traffic, make_traffic

ENV_WORKERS = "LRFHSS_WORKERS"
ENV_LOG_LEVEL = "LRFHSS_LOG_LEVEL"


class ConfigError(ValueError):
    code = "invalid_config"

    def __init__(self, reason: str, key: Optional[str] = None, line: Optional[int] = None) -> None:
        self.reason = reason
        self.key = key
        self.line = line
        parts = []
        if line is not None:
            parts.append(f"line {line}")
        if key:
            parts.append(key)
        parts.append(reason)
        super().__init__(": ".join(parts))


class Scenario(NamedTuple):
    scenario_id: str
    nodes_sim: int


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    nodes_sim: List[int] = Field(default_factory=lambda: [125], min_length=1)
    grid_channels: int = 35
    grid_multiplier: int = Field(8, ge=1)
    header_copies: int = 3
    coding_rate: str = "1/3"
    payload_bytes: int = Field(20, ge=1)
    sim_time: float = Field(86400.0, gt=0)
    iterations: int = Field(100, ge=1)
    mean_interval: float = Field(900.0, gt=0)
    traffic: str = "exponential"
    drift_sigma: Optional[float] = Field(None, ge=0)
    markov_p: float = DEFAULT_MARKOV_P
    markov_q: float = DEFAULT_MARKOV_Q
    receiver: Literal["baseline", "acrda"] = "baseline"
    acrda_window: float = Field(2.0, gt=1)
    acrda_step: float = Field(0.5, gt=0)
    hop_min_separation: int = Field(0, ge=0)
    interval_anchor: Literal["end", "start"] = "end"
    master_seed: int = Field(0, ge=0, le=MASK64)
    output: str = "results.csv"
    format: Literal["csv", "json"] = "csv"
    per_node: bool = False
    trace: bool = False
    workers: int = Field(1, ge=1)

    @field_validator("nodes_sim")
    @classmethod
    def _nodes_distinct(cls, v: List[int]) -> List[int]:
        if any(n < 1 for n in v):
            raise ValueError("node counts must be >= 1")
        if len(set(v)) != len(v):
            raise ValueError("sweep entries must be distinct")
        return v

    @field_validator("grid_channels")
    @classmethod
    def _grid(cls, v: int) -> int:
        if v not in (35, 86):
            raise ValueError("grid must have 35 or 86 channels")
        return v

    @field_validator("header_copies")
    @classmethod
    def _headers(cls, v: int) -> int:
        if v not in (2, 3):
            raise ValueError("header_copies must be 2 or 3")
        return v

    @field_validator("coding_rate", mode="before")
    @classmethod
    def _coding_rate(cls, v: Any) -> str:
        cr = coding_rate_of(str(v).strip())
        return f"{cr.numerator}/{cr.denominator}"

    @field_validator("traffic", mode="before")
    @classmethod
    def _traffic(cls, v: Any) -> str:
        return canon_traffic(str(v))

    @field_validator("receiver", "interval_anchor", "format", mode="before")
    @classmethod
    def _lower(cls, v: Any) -> Any:
        return v.strip().lower() if isinstance(v, str) else v

    @field_validator("markov_p")
    @classmethod
    def _markov_p(cls, v: float) -> float:
        if not 0 < v < 1:
            raise ValueError("markov_p must be in (0, 1)")
        return v

    @field_validator("markov_q")
    @classmethod
    def _markov_q(cls, v: float) -> float:
        if not 0 < v <= 1:
            raise ValueError("markov_q must be in (0, 1]")
        return v

    @field_validator("acrda_step")
    @classmethod
    def _step_fits(cls, v: float, info: ValidationInfo) -> float:
        # every packet must fit wholly inside some window on the k * step grid
        window = info.data.get("acrda_window")
        if window is not None and window < 1 + v:
            raise ValueError(f"acrda_window ({window}) must be at least 1 + acrda_step")
        return v

    @field_validator("hop_min_separation")
    @classmethod
    def _separation_fits(cls, v: int, info: ValidationInfo) -> int:
        grid = info.data.get("grid_channels")
        if grid is not None and v > max_separation(grid):
            raise ValueError(f"hop_min_separation must be <= {max_separation(grid)} for {grid} channels")
        return v

    @field_validator("master_seed", mode="before")
    @classmethod
    def _seed(cls, v: Any) -> Any:
        # hex seeds are accepted, e.g. 0xC0FFEE
        if isinstance(v, str):
            try:
                return int(v.strip(), 0)
            except ValueError:
                raise ValueError(f"master_seed must be an unsigned 64-bit integer, got {v!r}") from None
        return v

    def region(self) -> RegionalParams:
        return RegionalParams(
            grid_channels=self.grid_channels,
            grid_multiplier=self.grid_multiplier,
            min_separation=self.hop_min_separation,
        )

    def transmission(self) -> TransmissionParams:
        return TransmissionParams(
            header_copies=self.header_copies,
            coding_rate=self.coding_rate,
            payload_bytes=self.payload_bytes,
        )

    def acrda_params(self) -> AcrdaParams:
        return AcrdaParams(window=self.acrda_window, step=self.acrda_step)

    @property
    def sigma(self) -> float:
        return self.mean_interval / 100.0 if self.drift_sigma is None else self.drift_sigma

    @property
    def sim_ticks(self) -> SimTime:
        return seconds_to_ticks(self.sim_time)

    def traffic_model(self) -> TrafficModel:
        """Fresh model instance; Markov and drift models keep per-device state, so one per node."""
        return make_traffic(self.traffic, self.mean_interval, sigma=self.sigma, p=self.markov_p, q=self.markov_q)

    def scenarios(self) -> List[Scenario]:
        return [Scenario(f"n{n}", n) for n in self.nodes_sim]


def _split_value(key: str, raw: str) -> Union[str, List[str]]:
    if key in LIST_KEYS:
        return [part.strip() for part in raw.split(",") if part.strip()]
    return raw


def _reason(err: Mapping[str, Any]) -> str:
    msg = str(err.get("msg", "invalid value"))
    return msg[len("Value error, "):] if msg.startswith("Value error, ") else msg


def _parse_lines(text: str) -> tuple[Dict[str, Any], Dict[str, int]]:
    values: Dict[str, Any] = {}
    lines: Dict[str, int] = {}
    for lineno, line in enumerate(text.lstrip("\ufeff").splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError("expected 'key = value'", line=lineno)
        raw_key, raw_value = body.split("=", 1)
        key = canon_key(raw_key)
        if not key:
            raise ConfigError("missing key", line=lineno)
        if key not in CONFIG_KEYS:
            hint = suggest_key(raw_key)
            reason = "unknown key" + (f" (did you mean '{hint}'?)" if hint else "")
            raise ConfigError(reason, key=raw_key.strip(), line=lineno)
        if key in values:
            raise ConfigError(f"duplicate key (first set on line {lines[key]})", key=key, line=lineno)
        value = raw_value.strip()
        if not value:
            raise ConfigError("missing value", key=key, line=lineno)
        values[key] = _split_value(key, value)
        lines[key] = lineno
    return values, lines


def _canon_overrides(overrides: Optional[Mapping[str, Any]]) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for raw_key, value in (overrides or {}).items():
        if value is None:
            continue
        key = canon_key(raw_key)
        if key not in CONFIG_KEYS:
            raise ConfigError("unknown key", key=raw_key)
        if isinstance(value, str):
            value = _split_value(key, value)
        out[key] = value
    return out


def env_defaults(environ: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    """Operational defaults from the environment; call ``load_dotenv`` first to honor ``.env``."""
    env = os.environ if environ is None else environ
    out: Dict[str, Any] = {}
    workers = (env.get(ENV_WORKERS) or "").strip()
    if workers:
        out["workers"] = workers
    return out


def parse_config(
    text: str,
    overrides: Optional[Mapping[str, Any]] = None,
    base: Optional[Mapping[str, Any]] = None,
) -> ScenarioConfig:
    """Validate ``text`` (and overrides on top) into a ScenarioConfig. Raises ConfigError."""
    values, lines = _parse_lines(text or "")
    merged: Dict[str, Any] = dict(_canon_overrides(base))
    merged.update(values)
    flags = _canon_overrides(overrides)
    for key in flags:
        lines.pop(key, None)
    merged.update(flags)
    try:
        return ScenarioConfig(**merged)
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = err.get("loc") or ()
        key = str(loc[0]) if loc else None
        raise ConfigError(_reason(err), key=key, line=lines.get(key) if key else None) from None


def read_config(
    path: Union[str, Path],
    overrides: Optional[Mapping[str, Any]] = None,
    base: Optional[Mapping[str, Any]] = None,
) -> ScenarioConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read config {p}: {exc.strerror or exc}") from exc
    return parse_config(text, overrides=overrides, base=base)
