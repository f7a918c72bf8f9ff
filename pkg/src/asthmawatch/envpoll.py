"""Scheduled polling of environmental sources through pluggable adapters.

Live vendor APIs are out of scope; the fixture adapter replays recorded
NDJSON traces at the native cadences (pollen every 12 h, AQI and weather
hourly, indoor air every 5 min). Missing hours stay missing: gaps are
never imputed, daily aggregation copes with partial days.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum
from pathlib import Path
from typing import Protocol

from .model import (
    EnvironmentSample,
    EnvParameter,
    IndoorAirSample,
    Observation,
    SchemaViolation,
    Stream,
)
from .store import ObservationStore

log = logging.getLogger(__name__)


class AdapterUnavailable(Exception):
    """Transient source failure; the poll interval is not consumed."""


class AdapterParseError(Exception):
    """Malformed sample from a source; dropped and logged, never stored."""


class Source(str, Enum):
    POLLEN = "pollen"
    AQI_PM25 = "aqi_pm25"
    AQI_OZONE = "aqi_ozone"
    WEATHER_TEMP_HUMIDITY = "weather_temp_humidity"
    INDOOR_AIR = "indoor_air"


DEFAULT_CADENCES: dict[Source, timedelta] = {
    Source.POLLEN: timedelta(hours=12),
    Source.AQI_PM25: timedelta(hours=1),
    Source.AQI_OZONE: timedelta(hours=1),
    Source.WEATHER_TEMP_HUMIDITY: timedelta(hours=1),
    Source.INDOOR_AIR: timedelta(minutes=5),
}

_SOURCE_PARAMETERS: dict[Source, frozenset[EnvParameter]] = {
    Source.POLLEN: frozenset({EnvParameter.POLLEN}),
    Source.AQI_PM25: frozenset({EnvParameter.PM25}),
    Source.AQI_OZONE: frozenset({EnvParameter.OZONE}),
    Source.WEATHER_TEMP_HUMIDITY: frozenset({EnvParameter.TEMPERATURE, EnvParameter.HUMIDITY}),
}


@dataclass(frozen=True)
class SourceSpec:
    """One polled source: outdoor sources are region-scoped, indoor air is
    patient-scoped."""

    source: Source
    scope: str  # region, or patient_id for indoor air
    cadence: timedelta = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.cadence is None:
            object.__setattr__(self, "cadence", DEFAULT_CADENCES[self.source])
        if self.cadence <= timedelta(0):
            raise ValueError("cadence must be positive")

    @property
    def key(self) -> tuple[str, str]:
        return (self.source.value, self.scope)


@dataclass(frozen=True)
class PollPlan:
    """next_due per source; advances by exactly one cadence per poll so a
    backlog after an outage drains one interval per tick."""

    next_due: dict[tuple[str, str], datetime] = field(default_factory=dict)

    @classmethod
    def initial(cls, specs: list[SourceSpec], start: datetime) -> "PollPlan":
        return cls(next_due={s.key: start for s in specs})


def schedule_tick(
    plan: PollPlan, specs: dict[tuple[str, str], SourceSpec], now: datetime
) -> tuple[list[SourceSpec], PollPlan]:
    """Return the sources due at `now` and the plan with each advanced one
    cadence."""
    due = []
    advanced = dict(plan.next_due)
    for key, when in sorted(plan.next_due.items()):
        if when <= now:
            spec = specs[key]
            due.append(spec)
            advanced[key] = when + spec.cadence
    return due, PollPlan(next_due=advanced)


class Adapter(Protocol):
    def fetch_new(self, spec: SourceSpec, upto: datetime) -> list[EnvironmentSample | IndoorAirSample]:
        ...


class FixtureAdapter:
    """Replays a recorded NDJSON trace, returning each sample exactly once.

    Lines are EnvironmentSample or IndoorAirSample objects sorted by
    timestamp; the cursor tracks what has been handed out per scope.
    """

    def __init__(self, path: str | Path, fail_until: datetime | None = None):
        self.path = Path(path)
        self._cursors: dict[tuple[str, str], datetime] = {}
        self.fail_until = fail_until  # simulate an outage window
        self._samples: list[EnvironmentSample | IndoorAirSample] | None = None

    def _load(self) -> list[EnvironmentSample | IndoorAirSample]:
        if self._samples is None:
            self._samples = []
            with open(self.path, encoding="utf-8") as fp:
                for lineno, line in enumerate(fp, 1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        raw = json.loads(line)
                        if "region" in raw:
                            self._samples.append(EnvironmentSample.model_validate(raw))
                        else:
                            self._samples.append(IndoorAirSample.model_validate(raw))
                    except (json.JSONDecodeError, ValueError) as exc:
                        # drop just the malformed sample; the rest of the
                        # trace stays usable
                        log.warning("%s", AdapterParseError(f"{self.path}:{lineno}: {exc}"))
            self._samples.sort(key=lambda s: s.timestamp)
        return self._samples

    def fetch_new(self, spec: SourceSpec, upto: datetime):
        if self.fail_until is not None and upto < self.fail_until:
            raise AdapterUnavailable(f"source down until {self.fail_until}")
        wanted_params = _SOURCE_PARAMETERS.get(spec.source)
        since = self._cursors.get(spec.key)
        out = []
        for s in self._load():
            if s.timestamp > upto or (since is not None and s.timestamp <= since):
                continue
            if isinstance(s, EnvironmentSample):
                if spec.source is Source.INDOOR_AIR:
                    continue
                if s.region == spec.scope and s.parameter in wanted_params:
                    out.append(s)
            else:
                if spec.source is Source.INDOOR_AIR and s.patient_id == spec.scope:
                    out.append(s)
        if out:
            self._cursors[spec.key] = max(s.timestamp for s in out)
        return out


def poll_source(
    spec: SourceSpec, adapter: Adapter, now: datetime
) -> list[EnvironmentSample | IndoorAirSample]:
    """Fetch whatever the source has produced up to `now`, tagged with the
    spec's scope. Raises AdapterUnavailable when the source is down (the
    caller must leave next_due unchanged) and logs/drops unparseable
    samples."""
    try:
        return adapter.fetch_new(spec, now)
    except AdapterParseError as exc:
        log.warning("dropped malformed sample from %s: %s", spec.source.value, exc)
        return []


class EnvPoller:
    """Ties the schedule, adapters, and store together.

    Each source polls independently; plan state is only touched inside
    run_tick, which is the single serialization point.
    """

    def __init__(
        self,
        store: ObservationStore,
        specs: list[SourceSpec],
        adapters: dict[Source, Adapter],
        start: datetime,
    ):
        self.store = store
        self.specs = {s.key: s for s in specs}
        self.adapters = adapters
        self.plan = PollPlan.initial(specs, start)

    def run_tick(self, now: datetime) -> int:
        """Poll everything due; returns the number of samples stored."""
        due, advanced = schedule_tick(self.plan, self.specs, now)
        stored = 0
        next_due = dict(advanced.next_due)
        for spec in due:
            adapter = self.adapters[spec.source]
            try:
                samples = poll_source(spec, adapter, now)
            except AdapterUnavailable as exc:
                log.info("poll of %s deferred: %s", spec.source.value, exc)
                next_due[spec.key] = self.plan.next_due[spec.key]  # retry next tick
                continue
            batch = [_sample_to_observation(s, now) for s in samples]
            self.store.upsert_batch(batch)
            stored += len(batch)
        self.plan = PollPlan(next_due=next_due)
        return stored

    def run_until(self, end: datetime, step: timedelta) -> int:
        """Drive the schedule from the earliest pending due time to `end`."""
        stored = 0
        now = min(self.plan.next_due.values())
        while now <= end:
            stored += self.run_tick(now)
            now += step
        return stored


def _sample_to_observation(sample: EnvironmentSample | IndoorAirSample, polled_at: datetime) -> Observation:
    # received_at is the poll clock, not the wall clock, so replaying the
    # same fixture and schedule reproduces the store byte for byte.
    stream = Stream.OUTDOOR_ENV if isinstance(sample, EnvironmentSample) else Stream.INDOOR_ENV
    return Observation(stream=stream, payload=sample, received_at=polled_at)


def load_poller_config(path: str | Path) -> list[SourceSpec]:
    """Adapter config: JSON list of {source, scope, cadence_minutes?}."""
    with open(path, encoding="utf-8") as fp:
        raw = json.load(fp)
    specs = []
    for entry in raw:
        try:
            source = Source(entry["source"])
            cadence = (
                timedelta(minutes=entry["cadence_minutes"])
                if "cadence_minutes" in entry
                else None
            )
            specs.append(SourceSpec(source=source, scope=entry["scope"], cadence=cadence))
        except (KeyError, ValueError) as exc:
            raise SchemaViolation(f"bad poller config entry {entry!r}: {exc}") from None
    return specs
