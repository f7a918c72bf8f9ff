"""HTTP JSON API for the dashboard and automation.

Everything under /v1 is a pure function of the latest committed store
snapshot and the query string: no endpoint recomputes with parameters other
than the service config, and identical queries between writes return
byte-identical bodies. Bulk ingest is NDJSON; everything else is JSON.
"""

from __future__ import annotations

import json
from datetime import date
from pathlib import Path

from fastapi import FastAPI, Header, Query, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import episodes
from .alerts import learned_triggers_for
from .attribution import (
    AnalysisPeriod,
    EmptyCohort,
    EmptyPeriod,
    InsufficientData,
    InsufficientEpisodes,
    assign_season,
    cohort_summary,
    default_split,
    learn_and_predict,
    period_report,
    segment_by_pollen,
)
from .config import ApiConfig
from .gateway import BatchTooLarge, SyncGateway, Unauthorized
from .model import Season
from .store import ObservationStore, StorageUnavailable, UnknownPatient


def create_app(store: ObservationStore, config: ApiConfig | None = None) -> FastAPI:
    config = config or ApiConfig()
    gateway = SyncGateway(store)
    app = FastAPI(title="asthmawatch", version="0.1.0")
    params = config.params
    ranges = config.healthy_ranges
    seasons = config.seasons

    def error(status: int, kind: str, detail: str) -> JSONResponse:
        return JSONResponse(status_code=status, content={"error": kind, "detail": detail})

    @app.exception_handler(UnknownPatient)
    async def _unknown_patient(_: Request, exc: UnknownPatient):
        return error(404, "unknown_patient", str(exc))

    @app.exception_handler(InsufficientData)
    async def _insufficient(_: Request, exc: InsufficientData):
        return error(422, "insufficient_data", str(exc))

    @app.exception_handler(EmptyPeriod)
    async def _empty_period(_: Request, exc: EmptyPeriod):
        return error(422, "empty_period", str(exc))

    @app.exception_handler(EmptyCohort)
    async def _empty_cohort(_: Request, exc: EmptyCohort):
        return error(422, "empty_cohort", str(exc))

    @app.exception_handler(StorageUnavailable)
    async def _storage(_: Request, exc: StorageUnavailable):
        return error(503, "storage_unavailable", str(exc))

    @app.post("/v1/observations")
    async def ingest(request: Request, authorization: str = Header(default="")):
        if not authorization.startswith("Bearer "):
            return error(401, "unauthorized", "missing bearer token")
        token = authorization.removeprefix("Bearer ").strip()
        try:
            patient_id = gateway.authenticate(token)
        except Unauthorized as exc:
            return error(401, "unauthorized", str(exc))

        body = (await request.body()).decode("utf-8", errors="replace")
        batch: list = []
        for line in body.splitlines():
            line = line.strip()
            if not line:
                continue
            try:
                batch.append(json.loads(line))
            except json.JSONDecodeError:
                batch.append(line)  # rejected downstream with a schema reason
        try:
            receipt = gateway.ingest_batch(patient_id, batch)
        except BatchTooLarge as exc:
            return error(413, "batch_too_large", str(exc))
        status = 207 if receipt.rejected else 200
        return JSONResponse(status_code=status, content=receipt.model_dump(mode="json"))

    @app.get("/v1/patients")
    def list_patients():
        out = []
        for profile in store.list_patients():
            rate = store.answer_rate(profile.patient_id)
            out.append(
                {
                    **profile.model_dump(mode="json"),
                    "answer_rate": rate,
                    "eligible": rate >= params.eligibility_threshold,
                    "season": assign_season(store, profile.patient_id, seasons).season.value,
                }
            )
        return out

    def _window(patient_id: str, from_: date | None, to: date | None) -> tuple[date, date]:
        profile = store.get_patient(patient_id)
        return from_ or profile.deployment_start, to or profile.deployment_end

    @app.get("/v1/patients/{patient_id}/timeline")
    def timeline(
        patient_id: str,
        from_: date | None = Query(default=None, alias="from"),
        to: date | None = Query(default=None),
    ):
        start, end = _window(patient_id, from_, to)
        baselines = episodes.patient_baselines(store, patient_id)
        days = []
        for rec in store.day_records(patient_id, start, end):
            flag = episodes.detect_episode(rec, baselines) if rec.answered else None
            days.append(
                {
                    "date": rec.date.isoformat(),
                    "answered": rec.answered,
                    "symptoms": sorted(s.value for s in rec.symptoms_union) if rec.symptoms_union else [],
                    "rescue_taken": rec.rescue_taken,
                    "controller_taken": rec.controller_taken,
                    "night_awakening": rec.night_awakening,
                    "activity_limited": rec.activity_limited,
                    "lung": [{"pef": pef, "fev1": fev1} for pef, fev1 in rec.lung_readings],
                    "env": rec.env.model_dump(mode="json"),
                    "is_episode": flag.is_episode if flag else None,
                    "reasons": sorted(flag.reasons) if flag else [],
                }
            )
        return {"patient_id": patient_id, "from": start.isoformat(), "to": end.isoformat(), "days": days}

    @app.get("/v1/patients/{patient_id}/episodes")
    def episode_list(
        patient_id: str,
        from_: date | None = Query(default=None, alias="from"),
        to: date | None = Query(default=None),
    ):
        start, end = _window(patient_id, from_, to)
        flags = episodes.episode_flags(store, patient_id, start, end)
        return [flags[d].model_dump(mode="json") for d in sorted(flags)]

    @app.get("/v1/patients/{patient_id}/summary")
    def summary(
        patient_id: str,
        from_: date | None = Query(default=None, alias="from"),
        to: date | None = Query(default=None),
    ):
        start, end = _window(patient_id, from_, to)
        report = episodes.patient_summary(store, patient_id, start, end)
        return {
            **report.model_dump(mode="json"),
            "eligible": episodes.eligibility(store, patient_id, params.eligibility_threshold),
            "answer_rate": store.answer_rate(patient_id),
        }

    @app.get("/v1/patients/{patient_id}/triggers")
    def triggers(patient_id: str, learning_end: date | None = Query(default=None)):
        learning, prediction = default_split(store, patient_id, params, learning_end)
        learning_report = period_report(store, patient_id, learning, params, ranges)
        prediction_report = period_report(store, patient_id, prediction, params, ranges)
        evaluation = None
        insufficient = None
        try:
            evaluation = learn_and_predict(
                store, patient_id, learning, prediction, params, ranges
            ).model_dump(mode="json")
        except InsufficientEpisodes as exc:
            insufficient = str(exc)
        return {
            "patient_id": patient_id,
            "learning": learning_report.model_dump(mode="json"),
            "prediction": prediction_report.model_dump(mode="json"),
            "evaluation": evaluation,
            "insufficient_reason": insufficient,
            "segments": [s.model_dump(mode="json") for s in segment_by_pollen(store, patient_id, params)],
        }

    @app.get("/v1/cohort/triggers")
    def cohort(season: Season = Query(...)):
        return cohort_summary(store, season, None, params, ranges, seasons).model_dump(mode="json")

    @app.get("/v1/alerts")
    def alerts(
        patient_id: str | None = Query(default=None),
        from_: date | None = Query(default=None, alias="from"),
        to: date | None = Query(default=None),
    ):
        return store.list_alerts(patient_id, from_, to)

    @app.get("/v1/config")
    def config_view():
        return {
            "healthy_ranges": {
                name: {"lower": r.lower, "upper": r.upper} for name, r in ranges.items()
            },
            "seasons": {
                s.value: {
                    "start": [w.start_month, w.start_day],
                    "end": [w.end_month, w.end_day],
                }
                for s, w in seasons.windows.items()
            },
            "analysis": {
                "prolonged_window_days": params.prolonged_window_days,
                "prolonged_min_unhealthy": params.prolonged_min_unhealthy,
                "segment_min_run_days": params.segment_min_run_days,
                "min_learning_episodes": params.min_learning_episodes,
                "learning_fraction": params.learning_fraction,
                "eligibility_threshold": params.eligibility_threshold,
            },
        }

    ui_dir = Path(__file__).resolve().parent.parent.parent / "frontend" / "dist"
    if ui_dir.is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
