"""Domain types, stream schemas, and validation shared by every other module.

All timestamps are timezone-aware (RFC 3339 on the wire). Patient identifiers
are opaque random tokens; payloads are screened so no identity-bearing field
ever enters the platform.
"""

from __future__ import annotations

import json
from datetime import date, datetime, timezone
from enum import Enum
from typing import Any, Literal, Mapping, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_serializer,
    field_validator,
    model_validator,
)


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------


class ObservationRejected(Exception):
    """Base class for ingest-time rejections. `reason` is wire-safe text."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class SchemaViolation(ObservationRejected):
    pass


class IdentityLeak(ObservationRejected):
    pass


class UnknownStream(ObservationRejected):
    pass


# ---------------------------------------------------------------------------
# Enums
# ---------------------------------------------------------------------------


class Severity(str, Enum):
    MILD = "mild"
    MODERATE = "moderate"
    SEVERE = "severe"


class Slot(str, Enum):
    MORNING = "morning"
    EVENING = "evening"
    DAILY = "daily"


class Symptom(str, Enum):
    COUGH = "cough"
    WHEEZE = "wheeze"
    CHEST_TIGHTNESS = "chest_tightness"
    HARD_FAST_BREATHING = "hard_fast_breathing"
    CANT_TALK_FULL_SENTENCES = "cant_talk_full_sentences"
    NOSE_OPENS_WIDE = "nose_opens_wide"


class ActivityLimitation(str, Enum):
    NONE = "none"
    A_LITTLE = "a_little"
    HALF_DAY = "half_day"
    MOST_OF_DAY = "most_of_day"


class EnvParameter(str, Enum):
    POLLEN = "pollen"
    PM25 = "pm25"
    OZONE = "ozone"
    TEMPERATURE = "temperature"
    HUMIDITY = "humidity"


class MedicationKind(str, Enum):
    RESCUE = "rescue"
    CONTROLLER = "controller"
    ORAL_STEROID = "oral_steroid"


class Stream(str, Enum):
    QUESTIONNAIRE = "questionnaire"
    LUNG = "lung"
    OUTDOOR_ENV = "outdoor_env"
    INDOOR_ENV = "indoor_env"
    ACTIVITY_SLEEP = "activity_sleep"
    MEDICATION_EVENT = "medication_event"


class Season(str, Enum):
    WINTER = "winter"
    SPRING = "spring"
    SUMMER = "summer"
    FALL = "fall"


#: Triggers eligible for attribution, in fixed tie-break order.
TRIGGERS: tuple[str, ...] = ("pollen", "pm25", "ozone")

#: Presentation-only severity ordering for symptoms (detection treats all six
#: uniformly).
SYMPTOM_DISPLAY_ORDER: tuple[Symptom, ...] = (
    Symptom.CHEST_TIGHTNESS,
    Symptom.COUGH,
    Symptom.WHEEZE,
    Symptom.HARD_FAST_BREATHING,
    Symptom.CANT_TALK_FULL_SENTENCES,
    Symptom.NOSE_OPENS_WIDE,
)


def _require_aware(v: datetime) -> datetime:
    if v.tzinfo is None:
        raise ValueError("timestamp must be timezone-aware")
    return v


# ---------------------------------------------------------------------------
# Payload types
# ---------------------------------------------------------------------------


class PatientProfile(BaseModel):
    """Enrollment record. `patient_id` is a random token with no identity
    semantics; `region` locates the outdoor environment at zip-code granularity.
    """

    model_config = ConfigDict(extra="forbid")

    patient_id: str = Field(min_length=1)
    severity: Severity
    rescue_meds: list[str] = Field(min_length=1)
    controller_meds: list[str] = Field(min_length=1)
    oral_steroid: str | None = None
    region: str = Field(min_length=1)
    deployment_start: date
    deployment_end: date
    enrollment_months: Literal[1, 3]

    @model_validator(mode="after")
    def _check_window(self) -> "PatientProfile":
        if not self.deployment_start < self.deployment_end:
            raise ValueError("deployment_start must precede deployment_end")
        return self

    @property
    def deployment_days(self) -> int:
        # deployment_end is the last deployed day (inclusive)
        return (self.deployment_end - self.deployment_start).days + 1


class QuestionnaireResponse(BaseModel):
    """One answered questionnaire slot.

    Symptoms and medications belong to the morning/evening slots; activity
    limitation and night awakening belong to the daily slot.
    """

    model_config = ConfigDict(extra="forbid")

    patient_id: str = Field(min_length=1)
    date: date
    slot: Slot
    symptoms: set[Symptom] = Field(default_factory=set)
    rescue_count: int = Field(default=0, ge=0, le=6)
    rescue_saturated: bool = False  # true means the "6+" answer
    controller_taken: bool | None = None
    activity_limitation: ActivityLimitation | None = None
    night_awakening: bool | None = None

    @field_serializer("symptoms")
    def _sorted_symptoms(self, v: set[Symptom]) -> list[str]:
        return sorted(s.value for s in v)

    @model_validator(mode="after")
    def _check_slot_fields(self) -> "QuestionnaireResponse":
        if self.rescue_saturated and self.rescue_count != 6:
            raise ValueError("rescue_saturated requires rescue_count == 6")
        if self.slot is Slot.DAILY:
            if self.symptoms or self.rescue_count or self.controller_taken is not None:
                raise ValueError("daily slot carries only activity limitation and night awakening")
        else:
            if self.activity_limitation is not None or self.night_awakening is not None:
                raise ValueError("activity limitation and night awakening belong to the daily slot")
        return self


class LungFunctionReading(BaseModel):
    """Peak-flow meter reading: PEF in L/min, FEV1 in L."""

    model_config = ConfigDict(extra="forbid")

    patient_id: str = Field(min_length=1)
    timestamp: datetime
    pef: float = Field(gt=0)
    fev1: float = Field(gt=0)

    _aware = field_validator("timestamp")(_require_aware)


class EnvironmentSample(BaseModel):
    """Outdoor reading for one region: pollen index (0-12 scale), AQI for
    pm25/ozone, temperature in F, humidity in %RH.
    """

    model_config = ConfigDict(extra="forbid")

    region: str = Field(min_length=1)
    timestamp: datetime
    parameter: EnvParameter
    value: float

    _aware = field_validator("timestamp")(_require_aware)

    @model_validator(mode="after")
    def _check_value(self) -> "EnvironmentSample":
        p, v = self.parameter, self.value
        if p in (EnvParameter.POLLEN, EnvParameter.PM25, EnvParameter.OZONE) and v < 0:
            raise ValueError(f"{p.value} must be >= 0")
        if p is EnvParameter.HUMIDITY and not (0 <= v <= 100):
            raise ValueError("humidity must be within [0, 100]")
        return self


class IndoorAirSample(BaseModel):
    """In-home air panel. All values are non-negative except temperature."""

    model_config = ConfigDict(extra="forbid")

    patient_id: str = Field(min_length=1)
    timestamp: datetime
    temperature: float
    humidity: float = Field(ge=0)
    particulate_matter: float = Field(ge=0)
    voc: float = Field(ge=0)
    co2: float = Field(ge=0)
    global_pollution_index: float = Field(ge=0)

    _aware = field_validator("timestamp")(_require_aware)


class ActivitySleepSample(BaseModel):
    """Daily wearable summary, stored but never attributed."""

    model_config = ConfigDict(extra="forbid")

    patient_id: str = Field(min_length=1)
    date: date
    steps: int = Field(ge=0)
    sleep_minutes: int = Field(ge=0, le=1440)


class MedicationEvent(BaseModel):
    """Out-of-questionnaire medication intake event (e.g. oral steroid)."""

    model_config = ConfigDict(extra="forbid")

    patient_id: str = Field(min_length=1)
    timestamp: datetime
    medication: str = Field(min_length=1)
    kind: MedicationKind

    _aware = field_validator("timestamp")(_require_aware)


Payload = Union[
    QuestionnaireResponse,
    LungFunctionReading,
    EnvironmentSample,
    IndoorAirSample,
    ActivitySleepSample,
    MedicationEvent,
]

_PAYLOAD_TYPES: dict[Stream, type[BaseModel]] = {
    Stream.QUESTIONNAIRE: QuestionnaireResponse,
    Stream.LUNG: LungFunctionReading,
    Stream.OUTDOOR_ENV: EnvironmentSample,
    Stream.INDOOR_ENV: IndoorAirSample,
    Stream.ACTIVITY_SLEEP: ActivitySleepSample,
    Stream.MEDICATION_EVENT: MedicationEvent,
}

#: Streams whose subject is a patient token (everything but outdoor_env).
PATIENT_STREAMS = frozenset(Stream) - {Stream.OUTDOOR_ENV}


# ---------------------------------------------------------------------------
# Observation envelope
# ---------------------------------------------------------------------------


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def canonical_ts(dt: datetime) -> str:
    """UTC-normalized RFC 3339 text; lexicographic order equals instant order."""
    return dt.astimezone(timezone.utc).isoformat()


class Observation(BaseModel):
    """Universal ingestion envelope.

    The idempotency key is derived, not stored: (subject, stream, timestamp,
    qualifier) where subject is the patient token, or the region for outdoor
    environmental samples.
    """

    model_config = ConfigDict(extra="forbid")

    stream: Stream
    payload: Payload
    received_at: datetime = Field(default_factory=utc_now)

    _aware = field_validator("received_at")(_require_aware)

    @model_validator(mode="after")
    def _check_payload_type(self) -> "Observation":
        expected = _PAYLOAD_TYPES[self.stream]
        if not isinstance(self.payload, expected):
            raise ValueError(f"stream {self.stream.value} requires payload {expected.__name__}")
        return self

    @property
    def subject(self) -> str:
        if self.stream is Stream.OUTDOOR_ENV:
            return self.payload.region
        return self.payload.patient_id

    @property
    def idempotency_key(self) -> tuple[str, str, str, str]:
        p = self.payload
        if self.stream is Stream.QUESTIONNAIRE:
            ts, qual = p.date.isoformat(), p.slot.value
        elif self.stream is Stream.LUNG:
            ts, qual = canonical_ts(p.timestamp), "reading"
        elif self.stream is Stream.OUTDOOR_ENV:
            ts, qual = canonical_ts(p.timestamp), p.parameter.value
        elif self.stream is Stream.INDOOR_ENV:
            ts, qual = canonical_ts(p.timestamp), "panel"
        elif self.stream is Stream.ACTIVITY_SLEEP:
            ts, qual = p.date.isoformat(), "daily"
        else:  # medication_event
            ts, qual = canonical_ts(p.timestamp), p.medication
        return (self.subject, self.stream.value, ts, qual)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

#: Field names that would carry identity. Anonymization happens at the clinic;
#: this is defense in depth on every ingest path.
IDENTITY_DENYLIST = frozenset(
    {
        "name",
        "first_name",
        "last_name",
        "full_name",
        "patient_name",
        "address",
        "street",
        "street_address",
        "birthdate",
        "birth_date",
        "date_of_birth",
        "dob",
        "ssn",
        "mrn",
        "email",
        "phone",
        "phone_number",
    }
)


def screen_identity_keys(payload: Mapping[str, Any]) -> None:
    """Reject payload mappings holding any identity-bearing key, at any depth."""
    for key, value in payload.items():
        if isinstance(key, str) and key.lower() in IDENTITY_DENYLIST:
            raise IdentityLeak(f"identity-bearing field not allowed: {key!r}")
        if isinstance(value, Mapping):
            screen_identity_keys(value)
        elif isinstance(value, (list, tuple)):
            for item in value:
                if isinstance(item, Mapping):
                    screen_identity_keys(item)


def validate_observation(raw: Observation | Mapping[str, Any]) -> Observation:
    """Validate an incoming observation; total over all inputs.

    Returns the parsed observation, or raises exactly one of UnknownStream,
    IdentityLeak, or SchemaViolation. Identity screening runs before schema
    parsing so an identity leak is reported as such even when the payload is
    otherwise malformed.
    """
    if isinstance(raw, Observation):
        raw = observation_to_dict(raw)
    if not isinstance(raw, Mapping):
        raise SchemaViolation("observation must be a JSON object")

    stream_name = raw.get("stream")
    try:
        stream = Stream(stream_name)
    except ValueError:
        raise UnknownStream(f"unknown stream: {stream_name!r}") from None

    payload = raw.get("payload")
    if not isinstance(payload, Mapping):
        raise SchemaViolation("payload must be a JSON object")
    screen_identity_keys(payload)

    payload_type = _PAYLOAD_TYPES[stream]
    try:
        parsed = payload_type.model_validate(payload)
        return Observation(
            stream=stream,
            payload=parsed,
            **({"received_at": raw["received_at"]} if raw.get("received_at") else {}),
        )
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(x) for x in first.get("loc", ()))
        raise SchemaViolation(f"{loc or 'payload'}: {first['msg']}") from None


# ---------------------------------------------------------------------------
# Canonical NDJSON encoding
# ---------------------------------------------------------------------------


def observation_to_dict(obs: Observation) -> dict[str, Any]:
    return {
        "stream": obs.stream.value,
        "payload": obs.payload.model_dump(mode="json"),
        "received_at": obs.received_at.isoformat(),
    }


def observation_to_line(obs: Observation) -> str:
    """One canonical JSON object per line: sorted keys, compact separators."""
    return json.dumps(observation_to_dict(obs), sort_keys=True, separators=(",", ":"))


def observation_from_line(line: str) -> Observation:
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"invalid JSON: {exc}") from None
    return validate_observation(raw)


def write_ndjson(observations, fp) -> int:
    n = 0
    for obs in observations:
        fp.write(observation_to_line(obs) + "\n")
        n += 1
    return n


def read_ndjson(fp):
    for line in fp:
        line = line.strip()
        if line:
            yield observation_from_line(line)


# ---------------------------------------------------------------------------
# Healthy ranges and seasons
# ---------------------------------------------------------------------------


class HealthyRange(BaseModel):
    model_config = ConfigDict(frozen=True)

    parameter: str
    lower: float
    upper: float

    @model_validator(mode="after")
    def _ordered(self) -> "HealthyRange":
        if self.lower > self.upper:
            raise ValueError("lower must not exceed upper")
        return self


DEFAULT_HEALTHY_RANGES: dict[str, HealthyRange] = {
    "pollen": HealthyRange(parameter="pollen", lower=0.0, upper=2.4),
    "pm25": HealthyRange(parameter="pm25", lower=0.0, upper=50.0),
    "ozone": HealthyRange(parameter="ozone", lower=0.0, upper=50.0),
}


class SeasonWindow(BaseModel):
    """Inclusive month/day interval; may wrap the year end (winter does)."""

    model_config = ConfigDict(frozen=True)

    start_month: int = Field(ge=1, le=12)
    start_day: int = Field(ge=1, le=31)
    end_month: int = Field(ge=1, le=12)
    end_day: int = Field(ge=1, le=31)

    def contains(self, d: date) -> bool:
        md = (d.month, d.day)
        start = (self.start_month, self.start_day)
        end = (self.end_month, self.end_day)
        if start <= end:
            return start <= md <= end
        return md >= start or md <= end


class SeasonConfig(BaseModel):
    """Season boundaries; defaults are the meteorological seasons."""

    model_config = ConfigDict(frozen=True)

    windows: dict[Season, SeasonWindow]

    @model_validator(mode="after")
    def _partition(self) -> "SeasonConfig":
        if set(self.windows) != set(Season):
            raise ValueError("all four seasons must be configured")
        # Partition check over a leap year covers every possible month/day.
        d = date(2020, 1, 1)
        while d.year == 2020:
            hits = [s for s, w in self.windows.items() if w.contains(d)]
            if len(hits) != 1:
                raise ValueError(f"{d.month:02d}-{d.day:02d} falls in {len(hits)} seasons")
            d = date.fromordinal(d.toordinal() + 1)
        return self

    def season_of(self, d: date) -> Season:
        for season, window in self.windows.items():
            if window.contains(d):
                return season
        raise ValueError(f"no season covers {d}")  # unreachable after validation


def default_seasons() -> SeasonConfig:
    return SeasonConfig(
        windows={
            Season.WINTER: SeasonWindow(start_month=12, start_day=1, end_month=2, end_day=29),
            Season.SPRING: SeasonWindow(start_month=3, start_day=1, end_month=5, end_day=31),
            Season.SUMMER: SeasonWindow(start_month=6, start_day=1, end_month=8, end_day=31),
            Season.FALL: SeasonWindow(start_month=9, start_day=1, end_month=11, end_day=30),
        }
    )
