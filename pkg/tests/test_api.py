from __future__ import annotations

import json
from datetime import date, datetime, timedelta, timezone

import pytest
from fastapi.testclient import TestClient

from asthmawatch.api import create_app
from asthmawatch.attribution import AnalysisPeriod, default_split, period_report
from asthmawatch.config import AnalysisParams, ApiConfig
from asthmawatch.gateway import SyncGateway
from asthmawatch.model import observation_to_line
from asthmawatch.store import ObservationStore, StorageUnavailable

from fixture_patients import build_patient_a, build_patient_b, build_winter_cohort
from test_store import env_obs, profile, q_obs
from asthmawatch.model import EnvParameter, Slot, Symptom

UTC = timezone.utc
FAR_FUTURE = datetime(2100, 1, 1, tzinfo=UTC)


@pytest.fixture
def app_store():
    store = ObservationStore(":memory:")
    build_patient_b().load(store)
    SyncGateway(store).register_device("tok-b", "patient-b", FAR_FUTURE)
    return store


@pytest.fixture
def client(app_store):
    return TestClient(create_app(app_store, ApiConfig()))


class TestIngestEndpoint:
    def _lines(self, observations) -> str:
        return "\n".join(observation_to_line(o) for o in observations)

    def test_missing_token_401(self, client):
        r = client.post("/v1/observations", content="")
        assert r.status_code == 401

    def test_unknown_token_401(self, client):
        r = client.post("/v1/observations", content="", headers={"Authorization": "Bearer nope"})
        assert r.status_code == 401

    def test_batch_accepted_200(self, client):
        batch = [q_obs("patient-b", date(2018, 3, 20) + timedelta(days=i), Slot.MORNING) for i in range(3)]
        r = client.post(
            "/v1/observations", content=self._lines(batch), headers={"Authorization": "Bearer tok-b"}
        )
        assert r.status_code == 200
        assert r.json() == {"accepted": 3, "duplicates": 0, "rejected": []}

    def test_partial_rejection_207(self, client):
        good = q_obs("patient-b", date(2018, 3, 25), Slot.MORNING)
        bad = json.dumps({"stream": "questionnaire", "payload": {"patient_name": "x"}})
        body = observation_to_line(good) + "\n" + bad + "\nnot json at all"
        r = client.post("/v1/observations", content=body, headers={"Authorization": "Bearer tok-b"})
        assert r.status_code == 207
        receipt = r.json()
        assert receipt["accepted"] == 1
        assert len(receipt["rejected"]) == 2

    def test_cross_patient_rejected(self, client):
        other = q_obs("someone-else", date(2018, 3, 25), Slot.MORNING)
        r = client.post(
            "/v1/observations", content=observation_to_line(other), headers={"Authorization": "Bearer tok-b"}
        )
        assert r.status_code == 207
        assert "Unauthorized" in r.json()["rejected"][0][1]

    def test_storage_unavailable_503(self, app_store, client, monkeypatch):
        def boom(batch):
            raise StorageUnavailable("backend down")

        monkeypatch.setattr(app_store, "upsert_batch", boom)
        obs = q_obs("patient-b", date(2018, 3, 25), Slot.MORNING)
        r = client.post(
            "/v1/observations", content=observation_to_line(obs), headers={"Authorization": "Bearer tok-b"}
        )
        assert r.status_code == 503

    def test_replay_is_idempotent_through_http(self, client, app_store):
        batch = [q_obs("patient-b", date(2018, 3, 27), Slot.MORNING)]
        body = self._lines(batch)
        client.post("/v1/observations", content=body, headers={"Authorization": "Bearer tok-b"})
        before = app_store.snapshot()
        r = client.post("/v1/observations", content=body, headers={"Authorization": "Bearer tok-b"})
        assert r.json()["duplicates"] == 1
        assert app_store.snapshot() == before


class TestReadEndpoints:
    def test_list_patients(self, client):
        r = client.get("/v1/patients")
        assert r.status_code == 200
        body = r.json()
        assert body[0]["patient_id"] == "patient-b"
        assert body[0]["eligible"] is True
        assert body[0]["season"] == "winter"

    def test_timeline_day_aligned(self, client):
        # 2017-12-24 is deployment day 21: answered, episode, pm25 unhealthy
        r = client.get("/v1/patients/patient-b/timeline?from=2017-12-24&to=2017-12-28")
        assert r.status_code == 200
        days = r.json()["days"]
        assert len(days) == 5
        assert days[0]["date"] == "2017-12-24"
        assert days[0]["answered"] is True
        assert days[0]["is_episode"] is True
        assert days[0]["env"]["pm25_max"] == 80.0

    def test_timeline_unknown_patient_404(self, client):
        assert client.get("/v1/patients/ghost/timeline").status_code == 404

    def test_episodes_listing(self, client):
        r = client.get("/v1/patients/patient-b/episodes")
        flags = r.json()
        assert sum(1 for f in flags if f["is_episode"]) == 45

    def test_summary_matches_library(self, client, app_store):
        from asthmawatch.episodes import patient_summary

        r = client.get("/v1/patients/patient-b/summary")
        body = r.json()
        profile_b = app_store.get_patient("patient-b")
        lib = patient_summary(app_store, "patient-b", profile_b.deployment_start, profile_b.deployment_end)
        assert body["episode_days"] == lib.episode_days == 45
        assert body["symptom_days"] == lib.symptom_days

    def test_triggers_equal_direct_engine_call(self, client, app_store):
        r = client.get("/v1/patients/patient-b/triggers")
        assert r.status_code == 200
        body = r.json()
        learning, prediction = default_split(app_store, "patient-b", AnalysisParams())
        lib_learning = period_report(app_store, "patient-b", learning)
        assert body["learning"]["unhealthy_days"] == lib_learning.unhealthy_days
        assert body["learning"]["episode_days"] == lib_learning.episode_days == 24
        assert body["prediction"]["episode_days"] == 21
        assert body["evaluation"]["hit_days"] == 19

    def test_triggers_with_learning_end_param(self, client, app_store):
        r = client.get("/v1/patients/patient-b/triggers?learning_end=2017-12-31")
        body = r.json()
        learning, prediction = default_split(
            app_store, "patient-b", AnalysisParams(), learning_end=date(2017, 12, 31)
        )
        lib = period_report(app_store, "patient-b", learning)
        assert body["learning"]["episode_days"] == lib.episode_days

    def test_triggers_marker_out_of_range_422(self, client):
        r = client.get("/v1/patients/patient-b/triggers?learning_end=2019-06-01")
        assert r.status_code == 422

    def test_cohort_endpoint(self):
        store = ObservationStore(":memory:")
        for b in build_winter_cohort():
            b.load(store)
        client = TestClient(create_app(store, ApiConfig()))
        r = client.get("/v1/cohort/triggers?season=winter")
        assert r.status_code == 200
        assert r.json()["major_trigger_distribution"]["pm25"] == 0.8
        assert client.get("/v1/cohort/triggers?season=summer").status_code == 422

    def test_alerts_endpoint(self, client, app_store):
        from asthmawatch.alerts import run_daily_alerts
        from asthmawatch.store import DailyEnvAggregate

        day = date(2018, 1, 20)
        run_daily_alerts(
            app_store,
            "patient-b",
            day,
            DailyEnvAggregate(region="45402-B", date=day, pm25_max=120.0),
        )
        r = client.get("/v1/alerts?patient_id=patient-b")
        kinds = {a["kind"] for a in r.json()}
        assert "trigger_forecast" in kinds

    def test_config_endpoint_exposes_thresholds(self, client):
        body = client.get("/v1/config").json()
        assert body["healthy_ranges"]["pollen"] == {"lower": 0.0, "upper": 2.4}
        assert body["healthy_ranges"]["pm25"]["upper"] == 50.0
        assert body["analysis"]["prolonged_window_days"] == 7
        assert body["seasons"]["winter"]["start"] == [12, 1]

    def test_repeated_reads_byte_identical(self, client):
        first = client.get("/v1/patients/patient-b/triggers")
        second = client.get("/v1/patients/patient-b/triggers")
        assert first.content == second.content
        t1 = client.get("/v1/patients/patient-b/timeline")
        t2 = client.get("/v1/patients/patient-b/timeline")
        assert t1.content == t2.content

    def test_reads_reflect_latest_write(self, client, app_store):
        before = client.get("/v1/patients/patient-b/episodes").json()
        new_day = date(2018, 2, 10)
        app_store.upsert(q_obs("patient-b", new_day, Slot.MORNING, symptoms={Symptom.COUGH}))
        after = client.get("/v1/patients/patient-b/episodes").json()
        assert len(after) == len(before) + 1
