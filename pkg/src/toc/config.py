"""Structured run configuration and backend wiring.

One JSON config file drives every subcommand; CLI flags override single
fields.  Paths inside the config resolve relative to the config file's own
directory so a corpus directory stays relocatable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError
from .gateway import (
    Backend,
    Gateway,
    HttpBackend,
    MockBackend,
    MODEL_ROLES,
    RetryPolicy,
)

API_KEY_ENV = "TOC_API_KEY"

BACKEND_KINDS = ("mock", "http")


@dataclass(frozen=True)
class BackendConfig:
    """How one model role is served."""

    kind: str = "mock"
    endpoint: str | None = None
    model: str | None = None
    timeout_s: float = 60.0


@dataclass(frozen=True)
class Config:
    backends: dict[str, BackendConfig] = field(default_factory=dict)
    tau: float = 0.85
    m_trials: int = 8
    band_lo: float = 0.2
    band_hi: float = 0.8
    target_rl_size: int = 2000
    seed: int = 0
    parallelism: int = 1
    strict_parsing: bool = True
    mock_table_path: str | None = None
    trial_temperature: float = 1.0
    retry_max_attempts: int = 3
    retry_base_delay_s: float = 0.5

    def validate(self) -> "Config":
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau must be in (0, 1], got {self.tau}")
        if self.m_trials < 1:
            raise ConfigError(f"m_trials must be >= 1, got {self.m_trials}")
        if self.band_lo >= self.band_hi:
            raise ConfigError(
                f"band must satisfy lo < hi, got [{self.band_lo}, {self.band_hi}]"
            )
        if self.target_rl_size < 1:
            raise ConfigError(f"target_rl_size must be >= 1, got {self.target_rl_size}")
        if self.parallelism < 1:
            raise ConfigError(f"parallelism must be >= 1, got {self.parallelism}")
        if self.retry_max_attempts < 1:
            raise ConfigError(f"retry_max_attempts must be >= 1, got {self.retry_max_attempts}")
        if self.trial_temperature < 0:
            raise ConfigError(f"trial_temperature must be >= 0, got {self.trial_temperature}")
        for role, backend in self.backends.items():
            if role not in MODEL_ROLES:
                raise ConfigError(f"unknown backend role {role!r}")
            if backend.kind not in BACKEND_KINDS:
                raise ConfigError(f"backend kind must be one of {BACKEND_KINDS}, got {backend.kind!r}")
            if backend.kind == "http":
                if not backend.endpoint:
                    raise ConfigError(f"backend {role!r} needs key 'endpoint'")
                if not backend.model:
                    raise ConfigError(f"backend {role!r} needs key 'model'")
        return self


_CONFIG_KEYS = {f.name for f in fields(Config)}
_BACKEND_KEYS = {f.name for f in fields(BackendConfig)}


def load_config(path: str | Path) -> Config:
    """Parse and validate a JSON config file; unknown keys are errors."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    for key in raw:
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
    backends = {}
    for role, entry in raw.get("backends", {}).items():
        if not isinstance(entry, dict):
            raise ConfigError(f"backend {role!r} must be a JSON object")
        for key in entry:
            if key not in _BACKEND_KEYS:
                raise ConfigError(f"unknown backend key {key!r} for role {role!r}")
        backends[role] = BackendConfig(**entry)
    values = {k: v for k, v in raw.items() if k != "backends"}
    mock_table = values.get("mock_table_path")
    if mock_table is not None and not Path(mock_table).is_absolute():
        values["mock_table_path"] = str(path.parent / mock_table)
    return Config(backends=backends, **values).validate()


def apply_overrides(config: Config, **overrides: object) -> Config:
    """Replace any non-None override fields; flags win over the file."""
    changed = {k: v for k, v in overrides.items() if v is not None}
    return replace(config, **changed).validate() if changed else config


def build_gateway(config: Config) -> Gateway:
    """Construct per-role backends; mock roles share one response table."""
    mock: MockBackend | None = None
    backends: dict[str, Backend] = {}
    for role in MODEL_ROLES:
        backend_config = config.backends.get(role, BackendConfig())
        if backend_config.kind == "mock":
            if config.mock_table_path is None:
                raise ConfigError(f"backend {role!r} is mock but config has no key 'mock_table_path'")
            if mock is None:
                try:
                    mock = MockBackend.from_file(config.mock_table_path)
                except FileNotFoundError:
                    raise ConfigError(
                        f"mock_table_path does not exist: {config.mock_table_path}"
                    ) from None
            backends[role] = mock
        else:
            backends[role] = HttpBackend(
                endpoint=backend_config.endpoint or "",
                model=backend_config.model or "",
                api_key=os.environ.get(API_KEY_ENV),
                timeout_s=backend_config.timeout_s,
            )
    return Gateway(
        backends=backends,
        retry=RetryPolicy(
            max_attempts=config.retry_max_attempts,
            base_delay_s=config.retry_base_delay_s,
        ),
        max_in_flight=config.parallelism,
    )
