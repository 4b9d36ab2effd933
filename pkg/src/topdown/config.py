"""Training configuration and the flat ``key = value`` config file format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .encoders import ENCODERS
from .schedule import ScaleSchedule


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    encoder: str = "baseline"
    batch_size: int = 16
    iterations_per_scale: int = 25_000
    fade_iterations: int = 12_500
    final_scale: int = 64
    total_iterations: int = 0  # 0: run the full schedule
    lr_g: float = 1e-3
    lr_d: float = 1e-3
    beta1: float = 0.0
    beta2: float = 0.99
    adam_eps: float = 1e-8
    lambda_gp: float = 10.0
    use_drift: bool = False
    drift_epsilon: float = 1e-3
    n_critic: int = 1
    seed: int = 0
    deterministic: bool = True
    checkpoint_every: int = 5_000
    data: str = ""
    out: str = ""
    profile: str = "paper"

    @property
    def schedule(self) -> ScaleSchedule:
        return ScaleSchedule(4, self.final_scale, self.iterations_per_scale, self.fade_iterations)

    @property
    def iterations(self) -> int:
        return self.total_iterations or self.schedule.full_length

    def validate(self) -> None:
        if self.encoder not in ENCODERS:
            raise ConfigError(f"unknown encoder {self.encoder!r}; choose from {', '.join(ENCODERS)}")
        for key in ("batch_size", "iterations_per_scale", "fade_iterations", "n_critic", "checkpoint_every"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be positive")
        if self.total_iterations < 0:
            raise ConfigError("total_iterations must be >= 0")
        if self.lr_g < 0 or self.lr_d < 0 or self.lambda_gp < 0:
            raise ConfigError("learning rates and lambda_gp must be non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must be in [0, 1)")
        try:
            self.schedule
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


PROFILES: dict[str, dict[str, Any]] = {
    "paper": dict(iterations_per_scale=25_000, fade_iterations=12_500, final_scale=64,
                  batch_size=16, checkpoint_every=5_000),
    "desk": dict(iterations_per_scale=500, fade_iterations=250, final_scale=32,
                 batch_size=16, checkpoint_every=250),
}


def profile_config(name: str, **overrides) -> TrainConfig:
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}; choose from {', '.join(PROFILES)}")
    return TrainConfig(profile=name, **{**PROFILES[name], **overrides})


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def coerce(key: str, value: str, template=TrainConfig) -> Any:
    fields = {f.name: f for f in dataclasses.fields(template)}
    if key not in fields:
        raise ConfigError(f"unknown config key {key!r}")
    kind = type(getattr(template(), key))
    if kind is bool:
        v = str(value).strip().lower()
        if v in _TRUE:
            return True
        if v in _FALSE:
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    try:
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: cannot parse {value!r} as {kind.__name__}") from exc


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def load_config_file(path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    return parse_config_text(path.read_text())


def format_config(cfg: TrainConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.to_dict().items())


def resolve_config(file_values: dict[str, str] | None = None, cli_values: dict[str, Any] | None = None,
                   profile: str | None = None) -> TrainConfig:
    """Defaults < profile < config file < command line."""
    file_values = dict(file_values or {})
    cli_values = {k: v for k, v in (cli_values or {}).items() if v is not None}
    name = cli_values.get("profile") or file_values.get("profile") or profile or "paper"
    merged: dict[str, Any] = {}
    for k, v in file_values.items():
        merged[k] = coerce(k, v)
    for k, v in cli_values.items():
        merged[k] = coerce(k, v) if isinstance(v, str) else v
    merged.pop("profile", None)
    cfg = profile_config(name, **merged)
    cfg.validate()
    return cfg


__all__ = [
    "ConfigError", "TrainConfig", "PROFILES", "profile_config", "parse_config_text",
    "load_config_file", "format_config", "resolve_config", "coerce",
]
