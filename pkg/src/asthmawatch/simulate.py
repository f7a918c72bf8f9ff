"""Deterministic synthetic cohort: seasonal environment traces, patients with
planted trigger sensitivities, and a device emulator for the offline/resync
path.

Everything is a pure function of (config, seed): the same arguments always
produce byte-identical streams. The generator plants a known sensitivity
profile per patient so attribution can be scored against ground truth.
Physiological realism is a non-goal; the simulator validates the pipeline.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone

from pydantic import BaseModel

from .gateway import IngestReceipt, SyncGateway
from .model import (
    ActivityLimitation,
    EnvironmentSample,
    EnvParameter,
    IndoorAirSample,
    LungFunctionReading,
    Observation,
    PatientProfile,
    QuestionnaireResponse,
    Season,
    Severity,
    Slot,
    Stream,
    Symptom,
    TRIGGERS,
)

# Per-season shape: probability that a day's maximum breaches the healthy
# range, plus the outdoor temperature band.
SEASON_PROFILES: dict[Season, dict] = {
    Season.WINTER: {"pollen": 0.0, "pm25": 0.45, "ozone": 0.08, "temp": (0, 55), "pollen_absent": True},
    Season.SPRING: {"pollen": 0.32, "pm25": 0.30, "ozone": 0.28, "temp": (35, 75), "pollen_absent": False},
    Season.SUMMER: {"pollen": 0.25, "pm25": 0.30, "ozone": 0.35, "temp": (60, 95), "pollen_absent": False},
    Season.FALL: {"pollen": 0.33, "pm25": 0.29, "ozone": 0.25, "temp": (40, 80), "pollen_absent": False},
}

SEASON_START_DATES = {
    Season.WINTER: date(2018, 1, 8),
    Season.SPRING: date(2018, 4, 2),
    Season.SUMMER: date(2018, 7, 2),
    Season.FALL: date(2017, 9, 18),
}

_SYMPTOM_WEIGHTS = [
    (Symptom.COUGH, 0.35),
    (Symptom.WHEEZE, 0.30),
    (Symptom.CHEST_TIGHTNESS, 0.12),
    (Symptom.HARD_FAST_BREATHING, 0.10),
    (Symptom.CANT_TALK_FULL_SENTENCES, 0.07),
    (Symptom.NOSE_OPENS_WIDE, 0.06),
]


class GroundTruthPatient(BaseModel):
    """A simulated patient plus the hidden parameters that generate them."""

    profile: PatientProfile
    sensitivity: dict[str, float]  # trigger -> weight in [0, 1]
    lag_mix: float  # probability of reacting to previous-day exposure
    base_episode_rate: float
    answer_prob: float
    controller_prob: float
    seed: int

    @property
    def planted_trigger(self) -> str:
        return max(TRIGGERS, key=lambda t: self.sensitivity.get(t, 0.0))


@dataclass(frozen=True)
class FaultSchedule:
    """Offline intervals [start, end) for the emulated device."""

    intervals: tuple[tuple[datetime, datetime], ...] = ()

    def __post_init__(self):
        prev_end = None
        for start, end in self.intervals:
            if start >= end:
                raise ValueError("fault interval must have start < end")
            if prev_end is not None and start < prev_end:
                raise ValueError("fault intervals must not overlap")
            prev_end = end

    def offline_at(self, ts: datetime) -> bool:
        return any(start <= ts < end for start, end in self.intervals)


def _utc(day: date, hour: int = 0, minute: int = 0) -> datetime:
    return datetime.combine(day, time(hour, minute), tzinfo=timezone.utc)


# ---------------------------------------------------------------------------
# Environment generation
# ---------------------------------------------------------------------------


def gen_environment_days(
    season: Season, days: int, seed: int | str, region: str
) -> list[dict[str, bool]]:
    """The hidden day-level plan: which triggers breach on which days.

    Same-day co-breaches are thinned so distinct triggers stay separable;
    real pollution and pollen peaks rarely move in lockstep either.
    """
    profile = SEASON_PROFILES[season]
    rng = random.Random(f"env-plan:{seed}:{region}:{season.value}:{days}")
    plan = []
    for _ in range(days):
        breach = {t: rng.random() < profile[t] for t in TRIGGERS}
        hot = [t for t in TRIGGERS if breach[t]]
        if len(hot) > 1:
            keep = rng.choice(hot)
            for t in hot:
                if t != keep and rng.random() > 0.15:
                    breach[t] = False
        plan.append(breach)
    return plan


def gen_environment(
    season: Season,
    region: str,
    days: int,
    seed: int | str,
    start: date | None = None,
) -> list[EnvironmentSample]:
    """Hourly pm25/ozone/temperature/humidity and 12-hourly pollen traces.

    Winter pollen is identically zero; in other seasons pollen lands above
    the healthy bound on roughly the profiled fraction of days.
    """
    if days < 1:
        raise ValueError("days must be >= 1")
    start = start or SEASON_START_DATES[season]
    profile = SEASON_PROFILES[season]
    plan = gen_environment_days(season, days, seed, region)
    rng = random.Random(f"env-values:{seed}:{region}:{season.value}:{days}")
    t_lo, t_hi = profile["temp"]

    samples: list[EnvironmentSample] = []
    for i in range(days):
        day = start + timedelta(days=i)
        breach = plan[i]
        peak_start = rng.randrange(8, 18)
        for hour in range(24):
            ts = _utc(day, hour)
            for param, trigger in ((EnvParameter.PM25, "pm25"), (EnvParameter.OZONE, "ozone")):
                if breach[trigger] and peak_start <= hour < peak_start + 4:
                    value = rng.uniform(55, 140)
                else:
                    value = rng.uniform(8, 45)
                samples.append(
                    EnvironmentSample(
                        region=region, timestamp=ts, parameter=param, value=round(value, 1)
                    )
                )
            samples.append(
                EnvironmentSample(
                    region=region,
                    timestamp=ts,
                    parameter=EnvParameter.TEMPERATURE,
                    value=round(rng.uniform(t_lo, t_hi), 1),
                )
            )
            samples.append(
                EnvironmentSample(
                    region=region,
                    timestamp=ts,
                    parameter=EnvParameter.HUMIDITY,
                    value=round(rng.uniform(20, 99), 1),
                )
            )
        for hour in (0, 12):
            if profile["pollen_absent"]:
                value = 0.0
            elif breach["pollen"]:
                value = round(rng.uniform(3.0, 11.5), 1)
            else:
                # mostly detectable-but-healthy, with occasional true zeros
                value = 0.0 if rng.random() < 0.15 else round(rng.uniform(0.2, 2.4), 1)
            samples.append(
                EnvironmentSample(
                    region=region, timestamp=_utc(day, hour), parameter=EnvParameter.POLLEN, value=value
                )
            )
    return samples


def gen_indoor(patient_id: str, days: int, seed: int | str, start: date) -> list[IndoorAirSample]:
    """Five-minute indoor air panels (288 per day)."""
    rng = random.Random(f"indoor:{seed}:{patient_id}")
    samples = []
    for i in range(days):
        day = start + timedelta(days=i)
        for step in range(288):
            ts = _utc(day) + timedelta(minutes=5 * step)
            samples.append(
                IndoorAirSample(
                    patient_id=patient_id,
                    timestamp=ts,
                    temperature=round(rng.uniform(64, 78), 1),
                    humidity=round(rng.uniform(25, 60), 1),
                    particulate_matter=round(rng.uniform(0, 35), 1),
                    voc=round(rng.uniform(50, 400), 1),
                    co2=round(rng.uniform(400, 1400), 1),
                    global_pollution_index=round(rng.uniform(0, 90), 1),
                )
            )
    return samples


# ---------------------------------------------------------------------------
# Patient generation
# ---------------------------------------------------------------------------


def gen_ground_truth(
    patient_id: str,
    region: str,
    start: date,
    days: int,
    seed: int | str,
    planted_trigger: str | None = None,
) -> GroundTruthPatient:
    rng = random.Random(f"gt:{seed}:{patient_id}")
    planted = planted_trigger or rng.choice(TRIGGERS)
    # Wide separation between the planted trigger and the rest keeps the
    # recovery signal well above same-day coincidence noise.
    sensitivity = {t: round(rng.uniform(0.0, 0.05), 3) for t in TRIGGERS}
    sensitivity[planted] = round(rng.uniform(0.85, 0.98), 3)
    profile = PatientProfile(
        patient_id=patient_id,
        severity=rng.choice(list(Severity)),
        rescue_meds=["albuterol"],
        controller_meds=[rng.choice(["fluticasone", "montelukast", "budesonide"])],
        oral_steroid=None,
        region=region,
        deployment_start=start,
        deployment_end=start + timedelta(days=days - 1),
        enrollment_months=1 if days <= 45 else 3,
    )
    return GroundTruthPatient(
        profile=profile,
        sensitivity=sensitivity,
        lag_mix=round(rng.uniform(0.0, 0.3), 3),
        base_episode_rate=round(rng.uniform(0.02, 0.05), 3),
        answer_prob=round(rng.uniform(0.88, 0.97), 3),
        controller_prob=round(rng.uniform(0.3, 0.9), 3),
        seed=rng.randrange(2**31),
    )


def gen_patient_days(
    gt: GroundTruthPatient, day_breach: list[dict[str, bool]]
) -> tuple[list[Observation], set[date]]:
    """Questionnaire and lung streams for one patient over the deployment.

    Episode probability each day is base + sum of sensitivity for triggers
    unhealthy on the exposure day (previous day with probability lag_mix,
    same day otherwise). Episode days always manifest at least one detection
    criterion; non-episode days manifest none. Lung readings sit exactly on a
    personal constant except for occasional planted dips, so a dip is
    abnormal by construction and a steady trace never is.
    """
    rng = random.Random(f"days:{gt.seed}:{gt.profile.patient_id}")
    start = gt.profile.deployment_start
    days = gt.profile.deployment_days
    pef_base = round(rng.uniform(250, 400))
    fev1_base = round(rng.uniform(2.0, 3.5), 2)

    observations: list[Observation] = []
    episode_days: set[date] = set()

    for i in range(days):
        day = start + timedelta(days=i)
        p = gt.base_episode_rate
        for t in TRIGGERS:
            exposure_index = i - 1 if rng.random() < gt.lag_mix else i
            if exposure_index >= 0 and day_breach[exposure_index][t]:
                p += gt.sensitivity[t]
        episode = rng.random() < min(p, 1.0)
        answered = rng.random() < gt.answer_prob

        if episode:
            episode_days.add(day)
            k = 1 + (rng.random() < 0.45) + (rng.random() < 0.2)
            symptoms = set()
            for _ in range(k):
                r, acc = rng.random(), 0.0
                for symptom, w in _SYMPTOM_WEIGHTS:
                    acc += w
                    if r < acc:
                        symptoms.add(symptom)
                        break
            rescue = rng.randrange(1, 4) if rng.random() < 0.6 else 0
            awakening = rng.random() < 0.15
            activity = rng.random() < 0.30
            dip = rng.random() < 0.15
            if not (symptoms or rescue or awakening or activity or dip):
                symptoms = {Symptom.COUGH}
        else:
            symptoms, rescue, awakening, activity, dip = set(), 0, False, False, False

        if not answered:
            continue

        evening_symptoms = {s for s in symptoms if rng.random() < 0.5}
        morning_symptoms = symptoms - evening_symptoms or symptoms
        controller_yes = rng.random() < gt.controller_prob
        observations.append(
            _wrap(
                QuestionnaireResponse(
                    patient_id=gt.profile.patient_id,
                    date=day,
                    slot=Slot.MORNING,
                    symptoms=morning_symptoms,
                    rescue_count=min(rescue, 6),
                    rescue_saturated=False,
                    controller_taken=controller_yes,
                ),
                _utc(day, 8),
            )
        )
        observations.append(
            _wrap(
                QuestionnaireResponse(
                    patient_id=gt.profile.patient_id,
                    date=day,
                    slot=Slot.EVENING,
                    symptoms=evening_symptoms,
                    rescue_count=0,
                    controller_taken=None,
                ),
                _utc(day, 20),
            )
        )
        observations.append(
            _wrap(
                QuestionnaireResponse(
                    patient_id=gt.profile.patient_id,
                    date=day,
                    slot=Slot.DAILY,
                    activity_limitation=(
                        rng.choice([ActivityLimitation.A_LITTLE, ActivityLimitation.HALF_DAY])
                        if activity
                        else ActivityLimitation.NONE
                    ),
                    night_awakening=awakening,
                ),
                _utc(day, 21),
            )
        )
        for hour, dip_here in ((8, dip), (20, False)):
            observations.append(
                _wrap(
                    LungFunctionReading(
                        patient_id=gt.profile.patient_id,
                        timestamp=_utc(day, hour, 30),
                        pef=round(pef_base * 0.75) if dip_here else pef_base,
                        fev1=round(fev1_base * 0.75, 2) if dip_here else fev1_base,
                    ),
                    _utc(day, hour, 31),
                )
            )
    return observations, episode_days


def _wrap(payload, received_at: datetime) -> Observation:
    stream = {
        QuestionnaireResponse: Stream.QUESTIONNAIRE,
        LungFunctionReading: Stream.LUNG,
        EnvironmentSample: Stream.OUTDOOR_ENV,
        IndoorAirSample: Stream.INDOOR_ENV,
    }[type(payload)]
    return Observation(stream=stream, payload=payload, received_at=received_at)


def env_to_observations(samples: list[EnvironmentSample]) -> list[Observation]:
    return [_wrap(s, s.timestamp) for s in samples]


# ---------------------------------------------------------------------------
# Cohort assembly
# ---------------------------------------------------------------------------


class CohortFixture(BaseModel):
    season: Season
    patients: list[GroundTruthPatient]
    observations: list[Observation]  # env + questionnaire + lung, all patients
    episode_days: dict[str, list[date]]  # ground truth, per patient

    @property
    def profiles(self) -> list[PatientProfile]:
        return [gt.profile for gt in self.patients]


def gen_cohort(
    season: Season,
    n_patients: int,
    seed: int,
    days: int = 42,
    patients_per_region: int = 10,
    start: date | None = None,
) -> CohortFixture:
    """A full seeded cohort; patients share regional environment in groups."""
    start = start or SEASON_START_DATES[season]
    observations: list[Observation] = []
    patients: list[GroundTruthPatient] = []
    episode_days: dict[str, list[date]] = {}
    plans: dict[str, list[dict[str, bool]]] = {}

    for i in range(n_patients):
        region = f"region-{seed}-{i // patients_per_region:03d}"
        if region not in plans:
            plans[region] = gen_environment_days(season, days, seed, region)
            observations.extend(
                env_to_observations(gen_environment(season, region, days, seed, start))
            )
        pid = f"sim-{seed}-{i:04d}"
        gt = gen_ground_truth(pid, region, start, days, seed)
        obs, ep_days = gen_patient_days(gt, plans[region])
        observations.extend(obs)
        patients.append(gt)
        episode_days[pid] = sorted(ep_days)
    return CohortFixture(
        season=season, patients=patients, observations=observations, episode_days=episode_days
    )


# ---------------------------------------------------------------------------
# Device replay
# ---------------------------------------------------------------------------


class DeliveryLog(BaseModel):
    receipts: list[IngestReceipt]
    flushes: int
    buffered_max: int

    @property
    def total_duplicates(self) -> int:
        return sum(r.duplicates for r in self.receipts)


def replay_device(
    stream: list[Observation],
    gateway: SyncGateway,
    token: str,
    faults: FaultSchedule = FaultSchedule(),
    batch_size: int = 200,
) -> DeliveryLog:
    """Emulate a device draining its outbox through the gateway.

    While offline the outbox grows; after restoration the device re-sends its
    previous batch (at-least-once has no acknowledgement memory) and then the
    backlog. Whatever is still queued when the run ends is flushed, so the
    final store always converges to the fault-free content.
    """
    receipts: list[IngestReceipt] = []
    outbox: list[Observation] = []
    last_batch: list[Observation] = []
    buffered_max = 0
    was_offline = False
    flushes = 0

    def flush(batch: list[Observation]):
        nonlocal flushes, last_batch
        if not batch:
            return
        patient_id = gateway.authenticate(token)
        receipts.append(gateway.ingest_batch(patient_id, batch))
        last_batch = list(batch)
        flushes += 1

    for obs in sorted(stream, key=lambda o: (o.received_at, o.idempotency_key)):
        offline = faults.offline_at(obs.received_at)
        if offline:
            outbox.append(obs)
            buffered_max = max(buffered_max, len(outbox))
            was_offline = True
            continue
        if was_offline:
            if last_batch:
                flush(list(last_batch))  # redundant re-send after reconnect
            was_offline = False
        outbox.append(obs)
        if len(outbox) >= batch_size:
            flush(outbox)
            outbox = []
    if was_offline and last_batch:
        flush(list(last_batch))
    flush(outbox)
    return DeliveryLog(receipts=receipts, flushes=flushes, buffered_max=buffered_max)
