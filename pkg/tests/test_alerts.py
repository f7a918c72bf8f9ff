from __future__ import annotations

from datetime import date, datetime, time, timedelta, timezone

import pytest

from asthmawatch.alerts import AlertKind, evaluate_alerts, learned_triggers_for, run_daily_alerts
from asthmawatch.model import (
    MedicationEvent,
    MedicationKind,
    Observation,
    Slot,
    Stream,
)
from asthmawatch.store import DailyEnvAggregate, ObservationStore

from fixture_patients import build_patient_b, build_patient_c
from test_store import profile, q_obs

UTC = timezone.utc


def forecast(day: date, pollen=None, pm25=None, ozone=None) -> DailyEnvAggregate:
    return DailyEnvAggregate(region="r1", date=day, pollen_max=pollen, pm25_max=pm25, ozone_max=ozone)


@pytest.fixture
def patient(store):
    store.put_patient(profile(pid="p1", region="r1", start=date(2018, 1, 1), days=30))
    return "p1"


class TestEvaluateAlerts:
    def test_forecast_alert_for_learned_trigger(self, store, patient):
        day = date(2018, 1, 10)
        alerts = evaluate_alerts(store, patient, day, forecast(day, pollen=9.7), None, ["pollen"])
        assert [a.kind for a in alerts] == [AlertKind.TRIGGER_FORECAST]
        assert alerts[0].detail == "pollen"
        assert alerts[0].audience == "patient"

    def test_quiet_day_no_alerts(self, store, patient):
        day = date(2018, 1, 10)
        yesterday_records = None
        alerts = evaluate_alerts(store, patient, day, forecast(day, pollen=1.0, pm25=20), yesterday_records, [])
        assert alerts == []

    def test_unlearned_trigger_never_alerted(self, store, patient):
        day = date(2018, 1, 10)
        alerts = evaluate_alerts(store, patient, day, forecast(day, pollen=9.7, pm25=200), None, ["pm25"])
        assert {a.detail for a in alerts} == {"pm25"}

    def test_medication_reminder_on_noncompliant_yesterday(self, store, patient):
        day = date(2018, 1, 10)
        store.upsert(q_obs("p1", day - timedelta(days=1), Slot.MORNING, controller_taken=False))
        yesterday = store.day_records("p1", day - timedelta(days=1), day - timedelta(days=1))[0]
        alerts = evaluate_alerts(store, patient, day, None, yesterday, [])
        assert [a.kind for a in alerts] == [AlertKind.MEDICATION_REMINDER]
        assert alerts[0].detail == "montelukast"

    def test_no_reminder_when_compliant(self, store, patient):
        day = date(2018, 1, 10)
        store.upsert(q_obs("p1", day - timedelta(days=1), Slot.MORNING, controller_taken=True))
        yesterday = store.day_records("p1", day - timedelta(days=1), day - timedelta(days=1))[0]
        assert evaluate_alerts(store, patient, day, None, yesterday, []) == []

    def test_no_reminder_when_unanswered(self, store, patient):
        day = date(2018, 1, 10)
        yesterday = store.day_records("p1", day - timedelta(days=1), day - timedelta(days=1))[0]
        assert evaluate_alerts(store, patient, day, None, yesterday, []) == []

    def test_clinician_flag_on_steroid_event(self, store, patient):
        day = date(2018, 1, 10)
        event = MedicationEvent(
            patient_id="p1",
            timestamp=datetime.combine(day - timedelta(days=1), time(19), tzinfo=UTC),
            medication="prednisone",
            kind=MedicationKind.ORAL_STEROID,
        )
        store.upsert(Observation(stream=Stream.MEDICATION_EVENT, payload=event, received_at=event.timestamp))
        alerts = evaluate_alerts(store, patient, day, None, None, [])
        assert [a.kind for a in alerts] == [AlertKind.CLINICIAN_FLAG]
        assert alerts[0].audience == "clinician"
        assert "prednisone" in alerts[0].detail

    def test_idempotent_evaluation_no_duplicate_persisted(self, store, patient):
        day = date(2018, 1, 10)
        first = evaluate_alerts(store, patient, day, forecast(day, pollen=9.7), None, ["pollen"])
        second = evaluate_alerts(store, patient, day, forecast(day, pollen=9.7), None, ["pollen"])
        assert first == second
        assert len(store.list_alerts("p1")) == 1


class TestLearnedTriggers:
    def test_patient_b_learned_pm25(self):
        store = ObservationStore(":memory:")
        build_patient_b().load(store)
        assert learned_triggers_for(store, "patient-b") == ["pm25"]

    def test_silent_patient_has_none(self, store, patient):
        assert learned_triggers_for(store, "p1") == []


class TestRunDailyAlerts:
    def test_patient_c_full_day(self):
        store = ObservationStore(":memory:")
        c = build_patient_c()
        c.load(store)
        # day after the first steroid event; forecast has unhealthy pollen
        day = c.expected["steroid_days"][0] + timedelta(days=1)
        alerts = run_daily_alerts(store, "patient-c", day, forecast(day, pollen=9.7))
        kinds = {a.kind for a in alerts}
        assert AlertKind.CLINICIAN_FLAG in kinds
        assert AlertKind.TRIGGER_FORECAST in kinds  # pollen is C's learned major
        stored = store.list_alerts("patient-c")
        assert len(stored) == len(alerts)
