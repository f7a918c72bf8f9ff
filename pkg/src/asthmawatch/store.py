"""Durable, idempotent observation store with multi-rate daily aggregation.

A single embedded SQLite file is the serialization point for all writes:
one writer at a time, batches commit atomically, and readers always see a
fully applied batch. Key collisions resolve last-writer-wins by received_at
and are logged as conflicts.
"""

from __future__ import annotations

import json
import logging
import sqlite3
import threading
from datetime import date, datetime, time, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator
from zoneinfo import ZoneInfo

from pydantic import BaseModel, ConfigDict, field_serializer

from .model import (
    EnvironmentSample,
    EnvParameter,
    Observation,
    PatientProfile,
    QuestionnaireResponse,
    Slot,
    Stream,
    Symptom,
    observation_to_dict,
    observation_to_line,
    validate_observation,
)

log = logging.getLogger(__name__)


class StorageUnavailable(Exception):
    """Transient storage failure; the caller may retry the whole batch."""


class UnknownPatient(Exception):
    pass


class UpsertOutcome(Enum):
    STORED = "stored"
    DUPLICATE = "duplicate"
    CONFLICT_SUPERSEDED = "conflict_superseded"  # different payload, new write won
    CONFLICT_RETAINED = "conflict_retained"  # different payload, stored write kept

    @property
    def changed_state(self) -> bool:
        return self in (UpsertOutcome.STORED, UpsertOutcome.CONFLICT_SUPERSEDED)


# ---------------------------------------------------------------------------
# Daily fusion types
# ---------------------------------------------------------------------------


class DailyEnvAggregate(BaseModel):
    """Per-region daily envelope. Absent parameters stay None, never zero."""

    model_config = ConfigDict(frozen=True)

    region: str
    date: date
    pollen_max: float | None = None
    pm25_max: float | None = None
    ozone_max: float | None = None
    temp_min: float | None = None
    temp_max: float | None = None
    humidity_min: float | None = None
    humidity_max: float | None = None
    samples_present: dict[str, int] = {}

    def trigger_max(self, trigger: str) -> float | None:
        return {"pollen": self.pollen_max, "pm25": self.pm25_max, "ozone": self.ozone_max}[trigger]


class DayRecord(BaseModel):
    """Per-patient per-day fusion of questionnaire, lung, and environment.

    When the questionnaire went unanswered the symptom/medication fields stay
    None: nothing is inferred from silence.
    """

    model_config = ConfigDict(frozen=True)

    patient_id: str
    date: date
    answered: bool
    symptoms_union: frozenset[Symptom] | None = None
    rescue_taken: bool | None = None
    controller_asked: bool | None = None
    controller_taken: bool | None = None
    night_awakening: bool | None = None
    activity_limited: bool | None = None
    lung_readings: tuple[tuple[float, float], ...] = ()
    env: DailyEnvAggregate

    @field_serializer("symptoms_union")
    def _sorted_symptoms(self, v: frozenset[Symptom] | None) -> list[str] | None:
        return None if v is None else sorted(s.value for s in v)


def aggregate_env_samples(
    region: str, day: date, samples: Iterable[EnvironmentSample]
) -> DailyEnvAggregate:
    """Fold one day's samples into maxima (triggers) and min/max envelopes."""
    maxima: dict[EnvParameter, float] = {}
    minima: dict[EnvParameter, float] = {}
    counts: dict[str, int] = {}
    for s in samples:
        p = s.parameter
        counts[p.value] = counts.get(p.value, 0) + 1
        if p not in maxima or s.value > maxima[p]:
            maxima[p] = s.value
        if p not in minima or s.value < minima[p]:
            minima[p] = s.value
    return DailyEnvAggregate(
        region=region,
        date=day,
        pollen_max=maxima.get(EnvParameter.POLLEN),
        pm25_max=maxima.get(EnvParameter.PM25),
        ozone_max=maxima.get(EnvParameter.OZONE),
        temp_min=minima.get(EnvParameter.TEMPERATURE),
        temp_max=maxima.get(EnvParameter.TEMPERATURE),
        humidity_min=minima.get(EnvParameter.HUMIDITY),
        humidity_max=maxima.get(EnvParameter.HUMIDITY),
        samples_present=counts,
    )


def fuse_day_record(
    patient_id: str,
    day: date,
    responses: list[QuestionnaireResponse],
    lung: list[tuple[float, float]],
    env: DailyEnvAggregate,
) -> DayRecord:
    """Combine one day's questionnaire slots into a DayRecord.

    Symptoms union over the morning/evening slots; for re-answered daily
    slots the caller must pass responses ordered by received_at so the last
    one wins.
    """
    answered = bool(responses)
    if not answered:
        return DayRecord(
            patient_id=patient_id,
            date=day,
            answered=False,
            lung_readings=tuple(lung),
            env=env,
        )
    symptoms: set[Symptom] = set()
    rescue = False
    controller_asked = False
    controller_taken = False
    night_awakening: bool | None = None
    activity_limited = False
    for r in responses:
        if r.slot is Slot.DAILY:
            if r.night_awakening is not None:
                night_awakening = r.night_awakening
            if r.activity_limitation is not None:
                activity_limited = r.activity_limitation.value != "none"
        else:
            symptoms |= r.symptoms
            if r.rescue_count > 0:
                rescue = True
            if r.controller_taken is not None:
                controller_asked = True
                controller_taken = controller_taken or r.controller_taken
    return DayRecord(
        patient_id=patient_id,
        date=day,
        answered=True,
        symptoms_union=frozenset(symptoms),
        rescue_taken=rescue,
        controller_asked=controller_asked,
        controller_taken=controller_taken,
        night_awakening=night_awakening,
        activity_limited=activity_limited,
        lung_readings=tuple(lung),
        env=env,
    )


# ---------------------------------------------------------------------------
# Store
# ---------------------------------------------------------------------------

_SCHEMA = """
CREATE TABLE IF NOT EXISTS observations (
    subject     TEXT NOT NULL,
    stream      TEXT NOT NULL,
    ts          TEXT NOT NULL,
    qualifier   TEXT NOT NULL,
    payload     TEXT NOT NULL,
    received_at TEXT NOT NULL,
    PRIMARY KEY (subject, stream, ts, qualifier)
);
CREATE INDEX IF NOT EXISTS idx_obs_stream ON observations (stream, subject, ts);
CREATE TABLE IF NOT EXISTS patients (
    patient_id TEXT PRIMARY KEY,
    profile    TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS device_tokens (
    token      TEXT PRIMARY KEY,
    patient_id TEXT NOT NULL,
    expiry     TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS alerts (
    patient_id TEXT NOT NULL,
    kind       TEXT NOT NULL,
    date       TEXT NOT NULL,
    detail     TEXT NOT NULL,
    audience   TEXT NOT NULL,
    PRIMARY KEY (patient_id, kind, date, detail)
);
"""


class ObservationStore:
    """Single-writer/multi-reader embedded store.

    All access funnels through one connection guarded by a lock, so readers
    never observe a partially applied batch.
    """

    def __init__(self, path: str | Path = ":memory:", tz: str = "UTC"):
        self.path = str(path)
        self.tz = ZoneInfo(tz)
        self._lock = threading.RLock()
        try:
            self._conn = sqlite3.connect(self.path, check_same_thread=False)
            self._conn.executescript(_SCHEMA)
            self._conn.commit()
        except sqlite3.Error as exc:
            raise StorageUnavailable(str(exc)) from exc

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    # -- write path --------------------------------------------------------

    def upsert(self, obs: Observation) -> UpsertOutcome:
        return self.upsert_batch([obs])[0]

    def upsert_batch(self, batch: list[Observation]) -> list[UpsertOutcome]:
        """Apply a validated batch atomically; per-observation outcomes."""
        outcomes: list[UpsertOutcome] = []
        with self._lock:
            try:
                cur = self._conn.cursor()
                cur.execute("BEGIN")
                for obs in batch:
                    outcomes.append(self._upsert_one(cur, obs))
                self._conn.commit()
            except sqlite3.Error as exc:
                self._conn.rollback()
                raise StorageUnavailable(str(exc)) from exc
        return outcomes

    def _upsert_one(self, cur: sqlite3.Cursor, obs: Observation) -> UpsertOutcome:
        key = obs.idempotency_key
        payload_json = json.dumps(
            obs.payload.model_dump(mode="json"), sort_keys=True, separators=(",", ":")
        )
        received = obs.received_at.astimezone(timezone.utc).isoformat()
        row = cur.execute(
            "SELECT payload, received_at FROM observations"
            " WHERE subject=? AND stream=? AND ts=? AND qualifier=?",
            key,
        ).fetchone()
        if row is None:
            cur.execute(
                "INSERT INTO observations VALUES (?,?,?,?,?,?)", (*key, payload_json, received)
            )
            return UpsertOutcome.STORED
        stored_payload, stored_received = row
        if stored_payload == payload_json:
            return UpsertOutcome.DUPLICATE
        if received > stored_received:
            log.warning("conflict on %s: superseding by later received_at", key)
            cur.execute(
                "UPDATE observations SET payload=?, received_at=?"
                " WHERE subject=? AND stream=? AND ts=? AND qualifier=?",
                (payload_json, received, *key),
            )
            return UpsertOutcome.CONFLICT_SUPERSEDED
        log.warning("conflict on %s: retaining stored payload", key)
        return UpsertOutcome.CONFLICT_RETAINED

    # -- patients / tokens / alerts -----------------------------------------

    def put_patient(self, profile: PatientProfile) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT OR REPLACE INTO patients VALUES (?,?)",
                (profile.patient_id, profile.model_dump_json()),
            )
            self._conn.commit()

    def get_patient(self, patient_id: str) -> PatientProfile:
        with self._lock:
            row = self._conn.execute(
                "SELECT profile FROM patients WHERE patient_id=?", (patient_id,)
            ).fetchone()
        if row is None:
            raise UnknownPatient(patient_id)
        return PatientProfile.model_validate_json(row[0])

    def list_patients(self) -> list[PatientProfile]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT profile FROM patients ORDER BY patient_id"
            ).fetchall()
        return [PatientProfile.model_validate_json(r[0]) for r in rows]

    def put_token(self, token: str, patient_id: str, expiry: datetime) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT OR REPLACE INTO device_tokens VALUES (?,?,?)",
                (token, patient_id, expiry.astimezone(timezone.utc).isoformat()),
            )
            self._conn.commit()

    def get_token(self, token: str) -> tuple[str, datetime] | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT patient_id, expiry FROM device_tokens WHERE token=?", (token,)
            ).fetchone()
        if row is None:
            return None
        return row[0], datetime.fromisoformat(row[1])

    def record_alert(self, patient_id: str, kind: str, day: date, detail: str, audience: str) -> bool:
        """Returns True when newly recorded, False when already present."""
        with self._lock:
            cur = self._conn.execute(
                "INSERT OR IGNORE INTO alerts VALUES (?,?,?,?,?)",
                (patient_id, kind, day.isoformat(), detail, audience),
            )
            self._conn.commit()
            return cur.rowcount > 0

    def list_alerts(
        self,
        patient_id: str | None = None,
        start: date | None = None,
        end: date | None = None,
    ) -> list[dict]:
        q = "SELECT patient_id, kind, date, detail, audience FROM alerts"
        conds, args = [], []
        if patient_id is not None:
            conds.append("patient_id=?")
            args.append(patient_id)
        if start is not None:
            conds.append("date>=?")
            args.append(start.isoformat())
        if end is not None:
            conds.append("date<=?")
            args.append(end.isoformat())
        if conds:
            q += " WHERE " + " AND ".join(conds)
        q += " ORDER BY date, patient_id, kind, detail"
        with self._lock:
            rows = self._conn.execute(q, args).fetchall()
        return [
            {"patient_id": r[0], "kind": r[1], "date": r[2], "detail": r[3], "audience": r[4]}
            for r in rows
        ]

    # -- read path -----------------------------------------------------------

    def observations(
        self,
        stream: Stream | None = None,
        subject: str | None = None,
        ts_start: str | None = None,
        ts_end: str | None = None,
    ) -> list[Observation]:
        q = "SELECT stream, payload, received_at FROM observations"
        conds, args = [], []
        if stream is not None:
            conds.append("stream=?")
            args.append(stream.value)
        if subject is not None:
            conds.append("subject=?")
            args.append(subject)
        if ts_start is not None:
            conds.append("ts>=?")
            args.append(ts_start)
        if ts_end is not None:
            conds.append("ts<=?")
            args.append(ts_end)
        if conds:
            q += " WHERE " + " AND ".join(conds)
        q += " ORDER BY subject, stream, ts, qualifier"
        with self._lock:
            rows = self._conn.execute(q, args).fetchall()
        return [self._row_to_observation(*r) for r in rows]

    @staticmethod
    def _row_to_observation(stream: str, payload: str, received_at: str) -> Observation:
        return validate_observation(
            {"stream": stream, "payload": json.loads(payload), "received_at": received_at}
        )

    def local_date(self, ts: datetime) -> date:
        return ts.astimezone(self.tz).date()

    def _day_bounds_utc(self, day: date) -> tuple[str, str]:
        start = datetime.combine(day, time.min, tzinfo=self.tz)
        end = start + timedelta(days=1)
        return (
            start.astimezone(timezone.utc).isoformat(),
            end.astimezone(timezone.utc).isoformat(),
        )

    def daily_aggregate(self, region: str, day: date) -> DailyEnvAggregate:
        """Daily maxima/envelopes for one region; empty day -> all missing."""
        lo, hi = self._day_bounds_utc(day)
        with self._lock:
            rows = self._conn.execute(
                "SELECT payload FROM observations"
                " WHERE subject=? AND stream=? AND ts>=? AND ts<?",
                (region, Stream.OUTDOOR_ENV.value, lo, hi),
            ).fetchall()
        samples = [EnvironmentSample.model_validate_json(r[0]) for r in rows]
        return aggregate_env_samples(region, day, samples)

    def day_records(self, patient_id: str, start: date, end: date) -> list[DayRecord]:
        """One record per calendar day in [start, end], ordered by date."""
        profile = self.get_patient(patient_id)  # raises UnknownPatient
        lo, hi = self._day_bounds_utc(start)[0], self._day_bounds_utc(end)[1]

        responses: dict[date, list[tuple[str, QuestionnaireResponse]]] = {}
        with self._lock:
            rows = self._conn.execute(
                "SELECT payload, received_at FROM observations"
                " WHERE subject=? AND stream=? AND ts>=? AND ts<=?",
                (patient_id, Stream.QUESTIONNAIRE.value, start.isoformat(), end.isoformat()),
            ).fetchall()
        for payload, received in rows:
            r = QuestionnaireResponse.model_validate_json(payload)
            responses.setdefault(r.date, []).append((received, r))

        lung: dict[date, list[tuple[str, tuple[float, float]]]] = {}
        with self._lock:
            rows = self._conn.execute(
                "SELECT ts, payload FROM observations"
                " WHERE subject=? AND stream=? AND ts>=? AND ts<?",
                (patient_id, Stream.LUNG.value, lo, hi),
            ).fetchall()
        for ts, payload in rows:
            d = self.local_date(datetime.fromisoformat(ts))
            reading = json.loads(payload)
            lung.setdefault(d, []).append((ts, (reading["pef"], reading["fev1"])))

        records = []
        day = start
        while day <= end:
            env = self.daily_aggregate(profile.region, day)
            day_responses = [r for _, r in sorted(responses.get(day, []), key=lambda x: x[0])]
            day_lung = [v for _, v in sorted(lung.get(day, []))]
            records.append(fuse_day_record(patient_id, day, day_responses, day_lung, env))
            day += timedelta(days=1)
        return records

    def answered_days(self, patient_id: str) -> set[date]:
        profile = self.get_patient(patient_id)
        with self._lock:
            rows = self._conn.execute(
                "SELECT DISTINCT ts FROM observations WHERE subject=? AND stream=?",
                (patient_id, Stream.QUESTIONNAIRE.value),
            ).fetchall()
        days = {date.fromisoformat(r[0]) for r in rows}
        return {d for d in days if profile.deployment_start <= d <= profile.deployment_end}

    def answer_rate(self, patient_id: str) -> float:
        """Answered days over deployment days, both ends inclusive."""
        profile = self.get_patient(patient_id)
        return len(self.answered_days(patient_id)) / profile.deployment_days

    def last_answered_day(self, patient_id: str) -> date | None:
        days = self.answered_days(patient_id)
        return max(days) if days else None

    # -- export / snapshot ---------------------------------------------------

    def export_ndjson(self, fp, stream: Stream | None = None) -> int:
        n = 0
        for obs in self.observations(stream=stream):
            fp.write(observation_to_line(obs) + "\n")
            n += 1
        return n

    def import_ndjson(self, fp) -> list[UpsertOutcome]:
        batch = []
        for line in fp:
            line = line.strip()
            if line:
                batch.append(validate_observation(json.loads(line)))
        return self.upsert_batch(batch)

    def snapshot(self) -> bytes:
        """Canonical byte image of all observation rows, for equality checks."""
        with self._lock:
            rows = self._conn.execute(
                "SELECT subject, stream, ts, qualifier, payload, received_at"
                " FROM observations ORDER BY subject, stream, ts, qualifier"
            ).fetchall()
        return json.dumps(rows, sort_keys=True, separators=(",", ":")).encode()

    def count(self, stream: Stream | None = None) -> int:
        q = "SELECT COUNT(*) FROM observations"
        args: tuple = ()
        if stream is not None:
            q += " WHERE stream=?"
            args = (stream.value,)
        with self._lock:
            return self._conn.execute(q, args).fetchone()[0]
