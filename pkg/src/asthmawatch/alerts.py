"""Rule-driven alerts: trigger forecasts, controller reminders, clinician flags.

Alerts are materialized into the store and keyed by (patient, kind, detail,
date), so re-evaluating a day is idempotent. There is no push transport;
consumers poll the alerts endpoint.
"""

from __future__ import annotations

from datetime import date, timedelta
from enum import Enum
from typing import Mapping

from pydantic import BaseModel, ConfigDict

from .attribution import EmptyPeriod, InsufficientData, default_split, period_report, unhealthy
from .config import AnalysisParams
from .model import HealthyRange, MedicationKind, Stream
from .store import DailyEnvAggregate, DayRecord, ObservationStore


class AlertKind(str, Enum):
    TRIGGER_FORECAST = "trigger_forecast"
    MEDICATION_REMINDER = "medication_reminder"
    CLINICIAN_FLAG = "clinician_flag"


class Alert(BaseModel):
    model_config = ConfigDict(frozen=True)

    patient_id: str
    kind: AlertKind
    date: date
    detail: str
    audience: str  # "patient" or "clinician"


def evaluate_alerts(
    store: ObservationStore,
    patient_id: str,
    day: date,
    forecast: DailyEnvAggregate | None,
    yesterday: DayRecord | None,
    learned_triggers: list[str],
    ranges: Mapping[str, HealthyRange] | None = None,
    persist: bool = True,
) -> list[Alert]:
    """Evaluate one patient-day against every alert rule.

    A forecast warning is only ever raised for triggers the patient's own
    learning analysis ranked. Deduplication happens at persistence: the same
    evaluation twice yields the same alerts and a single stored copy.
    """
    profile = store.get_patient(patient_id)
    alerts: list[Alert] = []

    if forecast is not None:
        for trigger in learned_triggers:
            value = forecast.trigger_max(trigger)
            if value is not None and unhealthy(trigger, value, ranges):
                alerts.append(
                    Alert(
                        patient_id=patient_id,
                        kind=AlertKind.TRIGGER_FORECAST,
                        date=day,
                        detail=trigger,
                        audience="patient",
                    )
                )

    if yesterday is not None and yesterday.answered and not yesterday.controller_taken:
        alerts.append(
            Alert(
                patient_id=patient_id,
                kind=AlertKind.MEDICATION_REMINDER,
                date=day,
                detail=", ".join(profile.controller_meds),
                audience="patient",
            )
        )

    steroid_day = day - timedelta(days=1)
    for obs in store.observations(stream=Stream.MEDICATION_EVENT, subject=patient_id):
        event = obs.payload
        if event.kind is MedicationKind.ORAL_STEROID and store.local_date(event.timestamp) == steroid_day:
            alerts.append(
                Alert(
                    patient_id=patient_id,
                    kind=AlertKind.CLINICIAN_FLAG,
                    date=day,
                    detail=f"oral_steroid:{event.medication}",
                    audience="clinician",
                )
            )

    # (patient, kind, detail, date) dedup both in this batch and in the store
    unique: dict[tuple, Alert] = {
        (a.patient_id, a.kind.value, a.date, a.detail): a for a in alerts
    }
    result = list(unique.values())
    if persist:
        for a in result:
            store.record_alert(a.patient_id, a.kind.value, a.date, a.detail, a.audience)
    return result


def learned_triggers_for(
    store: ObservationStore, patient_id: str, params: AnalysisParams | None = None
) -> list[str]:
    """Major triggers from the patient's learning analysis; empty when the
    learning period cannot rank anything yet."""
    params = params or AnalysisParams()
    try:
        learning, _ = default_split(store, patient_id, params)
        report = period_report(store, patient_id, learning, params)
    except (InsufficientData, EmptyPeriod):
        return []
    if report.episode_days < params.min_learning_episodes:
        return []
    return report.major_triggers


def run_daily_alerts(
    store: ObservationStore,
    patient_id: str,
    day: date,
    forecast: DailyEnvAggregate | None,
    params: AnalysisParams | None = None,
    ranges: Mapping[str, HealthyRange] | None = None,
) -> list[Alert]:
    """Daily batch entry point: derives learned triggers and yesterday's
    record, then applies the rules."""
    yesterday_records = store.day_records(patient_id, day - timedelta(days=1), day - timedelta(days=1))
    return evaluate_alerts(
        store,
        patient_id,
        day,
        forecast,
        yesterday_records[0] if yesterday_records else None,
        learned_triggers_for(store, patient_id, params),
        ranges,
    )
