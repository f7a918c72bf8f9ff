"""Runtime configuration: analysis knobs, healthy ranges, seasons, service.

A single JSON config file drives the CLI and API; every parameter is
validated before anything opens or serves. Invalid config is a hard stop.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError

from .model import (
    DEFAULT_HEALTHY_RANGES,
    HealthyRange,
    Season,
    SeasonConfig,
    SeasonWindow,
    default_seasons,
)


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class AnalysisParams:
    """Tunables for episode detection and trigger attribution."""

    prolonged_window_days: int = 7  # K: days preceding an unexplained episode
    prolonged_min_unhealthy: int = 5  # M: unhealthy days within K to call it prolonged
    segment_min_run_days: int = 3  # S: pollen runs shorter than this merge away
    min_learning_episodes: int = 8  # fewer episode days than this cannot rank triggers
    learning_fraction: float = 2 / 3  # default learning share of the analyzed span
    eligibility_threshold: float = 0.20  # answer rate below this excludes the patient
    baseline_window: Literal["deployment", "learning"] = "deployment"

    def __post_init__(self):
        if self.prolonged_window_days < 1 or not (
            1 <= self.prolonged_min_unhealthy <= self.prolonged_window_days
        ):
            raise ConfigError("prolonged-exposure window requires 1 <= M <= K")
        if self.segment_min_run_days < 1:
            raise ConfigError("segment_min_run_days must be >= 1")
        if self.min_learning_episodes < 1:
            raise ConfigError("min_learning_episodes must be >= 1")
        if not (0 < self.learning_fraction < 1):
            raise ConfigError("learning_fraction must be in (0, 1)")
        if not (0 <= self.eligibility_threshold <= 1):
            raise ConfigError("eligibility_threshold must be in [0, 1]")


@dataclass(frozen=True)
class ApiConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    store_path: str = "asthmawatch.db"
    timezone: str = "UTC"
    params: AnalysisParams = field(default_factory=AnalysisParams)
    healthy_ranges: dict[str, HealthyRange] = field(
        default_factory=lambda: dict(DEFAULT_HEALTHY_RANGES)
    )
    seasons: SeasonConfig = field(default_factory=default_seasons)

    def __post_init__(self):
        if not (0 < self.port < 65536):
            raise ConfigError(f"invalid port {self.port}")
        try:
            ZoneInfo(self.timezone)
        except (ZoneInfoNotFoundError, ValueError) as exc:
            raise ConfigError(f"unknown timezone {self.timezone!r}: {exc}") from None


def _parse_seasons(raw: dict[str, Any]) -> SeasonConfig:
    windows = {}
    for name, spec in raw.items():
        try:
            season = Season(name)
            windows[season] = SeasonWindow(
                start_month=spec["start"][0],
                start_day=spec["start"][1],
                end_month=spec["end"][0],
                end_day=spec["end"][1],
            )
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad season entry {name!r}: {exc}") from None
    try:
        return SeasonConfig(windows=windows)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path | None) -> ApiConfig:
    """Load and validate a JSON config file; None yields the defaults."""
    if path is None:
        return ApiConfig()
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")

    try:
        params = AnalysisParams(**raw.get("analysis", {}))
    except TypeError as exc:
        raise ConfigError(f"bad analysis parameters: {exc}") from None

    ranges = dict(DEFAULT_HEALTHY_RANGES)
    for name, bounds in raw.get("healthy_ranges", {}).items():
        if name not in ranges:
            raise ConfigError(f"no healthy range exists for {name!r}")
        try:
            ranges[name] = HealthyRange(parameter=name, lower=bounds[0], upper=bounds[1])
        except (IndexError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad healthy range for {name!r}: {exc}") from None

    seasons = _parse_seasons(raw["seasons"]) if "seasons" in raw else default_seasons()

    try:
        return ApiConfig(
            host=raw.get("host", "127.0.0.1"),
            port=raw.get("port", 8000),
            store_path=raw.get("store_path", "asthmawatch.db"),
            timezone=raw.get("timezone", "UTC"),
            params=params,
            healthy_ranges=ranges,
            seasons=seasons,
        )
    except TypeError as exc:
        raise ConfigError(f"bad config: {exc}") from None
