"""Per-day asthma-episode detection and patient-level statistics.

A day counts as an episode when any criterion fires: one of the six
symptoms, night awakening, activity limitation, rescue-medication intake,
or a lung reading strictly below the patient's mean minus one standard
deviation. Unanswered days are never evaluated.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from datetime import date
from typing import Mapping

from pydantic import BaseModel, ConfigDict, field_serializer

from .model import LungFunctionReading, Stream, SYMPTOM_DISPLAY_ORDER
from .store import DayRecord, ObservationStore


class UnansweredDay(Exception):
    """Raised when detection is asked about a day with no questionnaire."""


METRICS = ("pef", "fev1")


@dataclass(frozen=True)
class LungBaseline:
    """Per-metric mean and sample (n-1) standard deviation.

    Fewer than two readings cannot define spread, so such a baseline is
    unusable and never flags anomalies.
    """

    patient_id: str
    metric: str
    mean: float | None
    sd: float | None
    n: int

    @property
    def usable(self) -> bool:
        return self.n >= 2

    def is_abnormal(self, value: float) -> bool:
        """Strictly below mean - 1 sd; 'beyond' is read as strictly below."""
        if not self.usable:
            return False
        return value < self.mean - self.sd


def lung_baseline(readings: list[LungFunctionReading], metric: str) -> LungBaseline:
    if metric not in METRICS:
        raise ValueError(f"unknown lung metric {metric!r}")
    patient_ids = {r.patient_id for r in readings}
    if len(patient_ids) > 1:
        raise ValueError("baseline readings must belong to one patient")
    values = [getattr(r, metric) for r in readings]
    if len(values) < 2:
        return LungBaseline(
            patient_id=next(iter(patient_ids), ""),
            metric=metric,
            mean=values[0] if values else None,
            sd=None,
            n=len(values),
        )
    # statistics.mean is exact for identical floats; fmean's accumulation
    # error would push a constant series strictly below its own mean.
    return LungBaseline(
        patient_id=next(iter(patient_ids)),
        metric=metric,
        mean=float(statistics.mean(values)),
        sd=statistics.stdev(values),
        n=len(values),
    )


class EpisodeFlag(BaseModel):
    model_config = ConfigDict(frozen=True)

    patient_id: str
    date: date
    is_episode: bool
    reasons: frozenset[str] = frozenset()

    @field_serializer("reasons")
    def _sorted_reasons(self, v: frozenset[str]) -> list[str]:
        return sorted(v)


def detect_episode(day: DayRecord, baselines: Mapping[str, LungBaseline]) -> EpisodeFlag:
    """Evaluate one answered day against every episode criterion.

    The reasons set lists every satisfied criterion; is_episode is true
    exactly when that set is non-empty. Symptom severity ordering plays no
    role here.
    """
    if not day.answered:
        raise UnansweredDay(f"{day.patient_id} {day.date}")
    reasons: set[str] = set()
    for symptom in day.symptoms_union or ():
        reasons.add(f"symptom:{symptom.value}")
    if day.night_awakening:
        reasons.add("night_awakening")
    if day.activity_limited:
        reasons.add("activity_limitation")
    if day.rescue_taken:
        reasons.add("rescue_medication")
    for pef, fev1 in day.lung_readings:
        pef_baseline = baselines.get("pef")
        if pef_baseline is not None and pef_baseline.is_abnormal(pef):
            reasons.add("abnormal_pef")
        fev1_baseline = baselines.get("fev1")
        if fev1_baseline is not None and fev1_baseline.is_abnormal(fev1):
            reasons.add("abnormal_fev1")
    return EpisodeFlag(
        patient_id=day.patient_id,
        date=day.date,
        is_episode=bool(reasons),
        reasons=frozenset(reasons),
    )


def deployment_lung_readings(store: ObservationStore, patient_id: str) -> list[LungFunctionReading]:
    return [
        obs.payload
        for obs in store.observations(stream=Stream.LUNG, subject=patient_id)
    ]


def patient_baselines(
    store: ObservationStore,
    patient_id: str,
    window: tuple[date, date] | None = None,
) -> dict[str, LungBaseline]:
    """Baselines over the whole deployment, or a [start, end] window."""
    readings = deployment_lung_readings(store, patient_id)
    if window is not None:
        lo, hi = window
        readings = [r for r in readings if lo <= store.local_date(r.timestamp) <= hi]
    if not readings:
        return {m: LungBaseline(patient_id, m, None, None, 0) for m in METRICS}
    return {m: lung_baseline(readings, m) for m in METRICS}


def episode_flags(
    store: ObservationStore,
    patient_id: str,
    start: date,
    end: date,
    baselines: Mapping[str, LungBaseline] | None = None,
) -> dict[date, EpisodeFlag]:
    """Flags for every answered day in [start, end]."""
    if baselines is None:
        baselines = patient_baselines(store, patient_id)
    return {
        rec.date: detect_episode(rec, baselines)
        for rec in store.day_records(patient_id, start, end)
        if rec.answered
    }


class ComplianceReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    patient_id: str
    start: date
    end: date
    answered_days: int
    asked_days: int  # answered days on which the controller question was answered
    compliant_days: int
    controller_compliance: float | None  # compliant / asked; None when never asked


def compliance(store: ObservationStore, patient_id: str, start: date, end: date) -> ComplianceReport:
    """A day is compliant when any slot that day answered the controller
    question with yes; the denominator is days the question was answered."""
    answered = asked = compliant = 0
    for rec in store.day_records(patient_id, start, end):
        if not rec.answered:
            continue
        answered += 1
        if rec.controller_asked:
            asked += 1
            if rec.controller_taken:
                compliant += 1
    return ComplianceReport(
        patient_id=patient_id,
        start=start,
        end=end,
        answered_days=answered,
        asked_days=asked,
        compliant_days=compliant,
        controller_compliance=(compliant / asked) if asked else None,
    )


def eligibility(store: ObservationStore, patient_id: str, threshold: float = 0.20) -> bool:
    """Included unless active sensing fell strictly below the threshold."""
    return store.answer_rate(patient_id) >= threshold


class PatientSummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    patient_id: str
    start: date
    end: date
    answered_days: int
    episode_days: int
    symptom_days: dict[str, int]  # keyed by symptom, in display severity order
    night_awakening_days: int
    activity_limitation_days: int
    rescue_days: int
    abnormal_lung_days: int
    compliance: ComplianceReport


def patient_summary(
    store: ObservationStore,
    patient_id: str,
    start: date,
    end: date,
) -> PatientSummary:
    """Per-criterion day counts over a range.

    Symptom counts are reported in severity order (chest tightness above
    cough and wheeze); the ordering is presentation only and never feeds
    back into detection.
    """
    baselines = patient_baselines(store, patient_id)
    symptom_days = {s.value: 0 for s in SYMPTOM_DISPLAY_ORDER}
    awakening = activity = rescue = abnormal = episodes = answered = 0
    for rec in store.day_records(patient_id, start, end):
        if not rec.answered:
            continue
        answered += 1
        flag = detect_episode(rec, baselines)
        if flag.is_episode:
            episodes += 1
        for s in rec.symptoms_union or ():
            symptom_days[s.value] += 1
        if rec.night_awakening:
            awakening += 1
        if rec.activity_limited:
            activity += 1
        if rec.rescue_taken:
            rescue += 1
        if "abnormal_pef" in flag.reasons or "abnormal_fev1" in flag.reasons:
            abnormal += 1
    return PatientSummary(
        patient_id=patient_id,
        start=start,
        end=end,
        answered_days=answered,
        episode_days=episodes,
        symptom_days=symptom_days,
        night_awakening_days=awakening,
        activity_limitation_days=activity,
        rescue_days=rescue,
        abnormal_lung_days=abnormal,
        compliance=compliance(store, patient_id, start, end),
    )
