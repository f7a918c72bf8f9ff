"""Trigger analysis: healthy-range classification, per-period unhealthy-day
counts, episode-conditioned contributor counting with the same-day/previous-day
rule, learning/prediction evaluation, prolonged-exposure annotation, pollen
segmentation, season assignment, and cohort roll-ups.

Two distinct counts are easy to conflate and are both reported:
`unhealthy_days` counts every period day whose daily maximum exceeds the
healthy range (an environmental fact, independent of the questionnaire);
`contributor_days` counts only episode days where the trigger was unhealthy
the same or the previous calendar day.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Mapping

from pydantic import BaseModel, ConfigDict

from .config import AnalysisParams
from .episodes import LungBaseline, episode_flags, eligibility, patient_baselines
from .model import DEFAULT_HEALTHY_RANGES, HealthyRange, Season, SeasonConfig, TRIGGERS, default_seasons
from .store import DailyEnvAggregate, ObservationStore


class NoHealthyRange(Exception):
    """Temperature and humidity carry no published healthy band; they are
    context, never attributed."""


class EmptyPeriod(Exception):
    pass


class InsufficientEpisodes(Exception):
    """The learning period cannot rank triggers (too few episode days or no
    contributor ever unhealthy)."""


class EmptyCohort(Exception):
    pass


class InsufficientData(Exception):
    """No answered days at all; nothing can be analyzed or reported."""


def unhealthy(
    parameter: str, value: float, ranges: Mapping[str, HealthyRange] | None = None
) -> bool:
    """True when the value exceeds the healthy upper bound (strictly).

    Lower bounds are all zero, so only the high side can be breached.
    """
    ranges = ranges or DEFAULT_HEALTHY_RANGES
    if parameter not in ranges:
        raise NoHealthyRange(parameter)
    return value > ranges[parameter].upper


@dataclass(frozen=True)
class AnalysisPeriod:
    patient_id: str
    label: str  # "learning" or "prediction"
    start: date
    end: date  # inclusive

    def __post_init__(self):
        if self.start > self.end:
            raise EmptyPeriod(f"{self.label}: {self.start} > {self.end}")

    @property
    def days(self) -> list[date]:
        return [self.start + timedelta(days=i) for i in range((self.end - self.start).days + 1)]


class TriggerReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    patient_id: str
    label: str
    start: date
    end: date
    days_in_period: int
    answered_days: int
    episode_days: int
    unhealthy_days: dict[str, int]
    contributor_days: dict[str, int]
    explained_days: int
    major_triggers: list[str]
    temp_range: tuple[float, float] | None
    humidity_range: tuple[float, float] | None


def _rank_triggers(contributor_days: Mapping[str, int]) -> list[str]:
    """Strict ranking: contributor count descending, fixed order on ties."""
    return sorted(
        (t for t in TRIGGERS if contributor_days[t] > 0),
        key=lambda t: (-contributor_days[t], TRIGGERS.index(t)),
    )


def _observed_range(
    aggs: Mapping[date, DailyEnvAggregate], lo_field: str, hi_field: str
) -> tuple[float, float] | None:
    lows = [getattr(a, lo_field) for a in aggs.values() if getattr(a, lo_field) is not None]
    highs = [getattr(a, hi_field) for a in aggs.values() if getattr(a, hi_field) is not None]
    if not lows or not highs:
        return None
    return (min(lows), max(highs))


def period_aggregates(
    store: ObservationStore, region: str, period: AnalysisPeriod
) -> dict[date, DailyEnvAggregate]:
    """Daily aggregates for the period plus the day before it (the previous-day
    contributor rule may reach one day outside)."""
    days = [period.start - timedelta(days=1), *period.days]
    return {d: store.daily_aggregate(region, d) for d in days}


def _day_unhealthy(
    agg: DailyEnvAggregate | None, trigger: str, ranges: Mapping[str, HealthyRange]
) -> bool:
    if agg is None:
        return False
    value = agg.trigger_max(trigger)
    return value is not None and unhealthy(trigger, value, ranges)


def period_report(
    store: ObservationStore,
    patient_id: str,
    period: AnalysisPeriod,
    params: AnalysisParams | None = None,
    ranges: Mapping[str, HealthyRange] | None = None,
    baselines: Mapping[str, LungBaseline] | None = None,
) -> TriggerReport:
    """Count unhealthy days, episode days, and contributors for one period.

    Episode and contributor counts run over answered days only; unhealthy-day
    counts cover every day in the period. A contributor's previous-day credit
    needs no questionnaire: the environment on an unanswered day still counts.
    """
    params = params or AnalysisParams()
    ranges = ranges or DEFAULT_HEALTHY_RANGES
    profile = store.get_patient(patient_id)
    days = period.days
    if not days:
        raise EmptyPeriod(period.label)

    aggs = period_aggregates(store, profile.region, period)
    unhealthy_by_day = {
        d: {t: _day_unhealthy(aggs.get(d), t, ranges) for t in TRIGGERS} for d in aggs
    }
    unhealthy_days = {
        t: sum(1 for d in days if unhealthy_by_day[d][t]) for t in TRIGGERS
    }

    if baselines is None and params.baseline_window == "learning":
        baselines = patient_baselines(store, patient_id, window=(period.start, period.end))
    flags = episode_flags(store, patient_id, period.start, period.end, baselines=baselines)

    contributor_days = {t: 0 for t in TRIGGERS}
    explained = 0
    episode_dates = [d for d, f in flags.items() if f.is_episode]
    for d in episode_dates:
        prev = d - timedelta(days=1)
        hit = False
        for t in TRIGGERS:
            if unhealthy_by_day[d][t] or unhealthy_by_day.get(prev, {}).get(t, False):
                contributor_days[t] += 1
                hit = True
        if hit:
            explained += 1

    period_only = {d: a for d, a in aggs.items() if d >= period.start}
    return TriggerReport(
        patient_id=patient_id,
        label=period.label,
        start=period.start,
        end=period.end,
        days_in_period=len(days),
        answered_days=len(flags),
        episode_days=len(episode_dates),
        unhealthy_days=unhealthy_days,
        contributor_days=contributor_days,
        explained_days=explained,
        major_triggers=_rank_triggers(contributor_days),
        temp_range=_observed_range(period_only, "temp_min", "temp_max"),
        humidity_range=_observed_range(period_only, "humidity_min", "humidity_max"),
    )


def prolonged_exposure(
    store: ObservationStore,
    patient_id: str,
    day: date,
    trigger: str,
    params: AnalysisParams | None = None,
    ranges: Mapping[str, HealthyRange] | None = None,
) -> bool:
    """True when at least M of the K days strictly preceding `day` had the
    trigger unhealthy. Days with no data count as not unhealthy."""
    params = params or AnalysisParams()
    ranges = ranges or DEFAULT_HEALTHY_RANGES
    profile = store.get_patient(patient_id)
    window = [day - timedelta(days=i) for i in range(1, params.prolonged_window_days + 1)]
    count = sum(
        1
        for d in window
        if _day_unhealthy(store.daily_aggregate(profile.region, d), trigger, ranges)
    )
    return count >= params.prolonged_min_unhealthy


class UnexplainedDay(BaseModel):
    model_config = ConfigDict(frozen=True)

    date: date
    prolonged: dict[str, bool]  # advisory annotation per learned trigger


class PredictionEvaluation(BaseModel):
    model_config = ConfigDict(frozen=True)

    patient_id: str
    learned_triggers: list[str]
    learning: TriggerReport
    prediction: TriggerReport
    hit_days: int
    unexplained_days: list[UnexplainedDay]
    false_alarm_days: int


def learn_and_predict(
    store: ObservationStore,
    patient_id: str,
    learning: AnalysisPeriod,
    prediction: AnalysisPeriod,
    params: AnalysisParams | None = None,
    ranges: Mapping[str, HealthyRange] | None = None,
) -> PredictionEvaluation:
    """Rank triggers on the learning period, then check how well they explain
    the prediction period.

    Unexplained episode days (no learned trigger unhealthy same/previous day)
    are annotated with the prolonged-exposure heuristic; the annotation never
    changes any count.
    """
    params = params or AnalysisParams()
    ranges = ranges or DEFAULT_HEALTHY_RANGES
    if learning.end >= prediction.start:
        raise ValueError("learning period must precede the prediction period")

    baselines = None
    if params.baseline_window == "learning":
        baselines = patient_baselines(store, patient_id, window=(learning.start, learning.end))
    learning_report = period_report(store, patient_id, learning, params, ranges, baselines)
    if learning_report.episode_days < params.min_learning_episodes:
        raise InsufficientEpisodes(
            f"{learning_report.episode_days} episode days in learning;"
            f" need >= {params.min_learning_episodes}"
        )
    if not learning_report.major_triggers:
        raise InsufficientEpisodes("no trigger was ever unhealthy around an episode")
    learned = learning_report.major_triggers

    prediction_report = period_report(store, patient_id, prediction, params, ranges, baselines)
    profile = store.get_patient(patient_id)
    aggs = period_aggregates(store, profile.region, prediction)
    flags = episode_flags(store, patient_id, prediction.start, prediction.end, baselines=baselines)

    hits = 0
    unexplained: list[UnexplainedDay] = []
    false_alarms = 0
    for d in sorted(flags):
        flag = flags[d]
        same_day = {t: _day_unhealthy(aggs.get(d), t, ranges) for t in learned}
        prev = d - timedelta(days=1)
        same_or_prev = {
            t: same_day[t] or _day_unhealthy(aggs.get(prev), t, ranges) for t in learned
        }
        if flag.is_episode:
            if any(same_or_prev.values()):
                hits += 1
            else:
                unexplained.append(
                    UnexplainedDay(
                        date=d,
                        prolonged={
                            t: prolonged_exposure(store, patient_id, d, t, params, ranges)
                            for t in learned
                        },
                    )
                )
        elif any(same_day.values()):
            false_alarms += 1

    return PredictionEvaluation(
        patient_id=patient_id,
        learned_triggers=learned,
        learning=learning_report,
        prediction=prediction_report,
        hit_days=hits,
        unexplained_days=unexplained,
        false_alarm_days=false_alarms,
    )


# ---------------------------------------------------------------------------
# Pollen segmentation
# ---------------------------------------------------------------------------


class PollenSegment(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: str  # "present" or "absent"
    start: date
    end: date

    @property
    def days(self) -> int:
        return (self.end - self.start).days + 1


def _smooth_runs(runs: list[list], min_run: int) -> list[list]:
    """Merge runs shorter than min_run into their neighbours, leftmost first.

    Flipping a short run always coalesces it with its neighbours (interior
    neighbours share a class), so this terminates.
    """
    runs = [list(r) for r in runs]
    while len(runs) > 1:
        idx = next((i for i, r in enumerate(runs) if r[1] < min_run), None)
        if idx is None:
            break
        neighbor = idx - 1 if idx > 0 else idx + 1
        runs[idx][0] = runs[neighbor][0]
        merged = []
        for run in runs:
            if merged and merged[-1][0] == run[0]:
                merged[-1][1] += run[1]
            else:
                merged.append(run)
        runs = merged
    return runs


def segment_by_pollen(
    store: ObservationStore, patient_id: str, params: AnalysisParams | None = None
) -> list[PollenSegment]:
    """Split the deployment into maximal pollen-present / pollen-absent runs.

    A day is pollen-present when its daily maximum is positive; runs shorter
    than the configured minimum are absorbed into their neighbours.
    """
    params = params or AnalysisParams()
    profile = store.get_patient(patient_id)
    days = [
        profile.deployment_start + timedelta(days=i) for i in range(profile.deployment_days)
    ]
    present = [
        (store.daily_aggregate(profile.region, d).pollen_max or 0) > 0 for d in days
    ]

    runs: list[list] = []
    for flag in present:
        if runs and runs[-1][0] == flag:
            runs[-1][1] += 1
        else:
            runs.append([flag, 1])
    runs = _smooth_runs(runs, params.segment_min_run_days)

    segments = []
    cursor = 0
    for flag, length in runs:
        segments.append(
            PollenSegment(
                kind="present" if flag else "absent",
                start=days[cursor],
                end=days[cursor + length - 1],
            )
        )
        cursor += length
    return segments


# ---------------------------------------------------------------------------
# Seasons and cohort
# ---------------------------------------------------------------------------


class SeasonAssignment(BaseModel):
    model_config = ConfigDict(frozen=True)

    patient_id: str
    season: Season
    spanning: bool  # a second season covers at least a quarter of the deployment
    day_counts: dict[str, int]


def assign_season(
    store: ObservationStore, patient_id: str, seasons: SeasonConfig | None = None
) -> SeasonAssignment:
    """Season holding the majority of deployment days; ties go to the season
    encountered first."""
    seasons = seasons or default_seasons()
    profile = store.get_patient(patient_id)
    counts: dict[Season, int] = {}
    first_seen: dict[Season, int] = {}
    for i in range(profile.deployment_days):
        d = profile.deployment_start + timedelta(days=i)
        s = seasons.season_of(d)
        counts[s] = counts.get(s, 0) + 1
        first_seen.setdefault(s, i)
    winner = max(counts, key=lambda s: (counts[s], -first_seen[s]))
    total = profile.deployment_days
    spanning = any(
        counts[s] >= 0.25 * total for s in counts if s is not winner
    )
    return SeasonAssignment(
        patient_id=patient_id,
        season=winner,
        spanning=spanning,
        day_counts={s.value: c for s, c in counts.items()},
    )


def default_split(
    store: ObservationStore,
    patient_id: str,
    params: AnalysisParams | None = None,
    learning_end: date | None = None,
) -> tuple[AnalysisPeriod, AnalysisPeriod]:
    """Split the analyzed span (deployment start through the last answered
    day) into learning and prediction periods.

    Without an explicit boundary the learning period takes the first
    ceil(fraction * span) days.
    """
    params = params or AnalysisParams()
    profile = store.get_patient(patient_id)
    span_start = profile.deployment_start
    span_end = store.last_answered_day(patient_id)
    if span_end is None:
        raise InsufficientData(f"{patient_id}: no answered days")
    if learning_end is None:
        n = (span_end - span_start).days + 1
        if n < 2:
            raise InsufficientData(f"{patient_id}: analyzed span of {n} day(s) cannot be split")
        learn_days = min(math.ceil(n * params.learning_fraction), n - 1)
        learning_end = span_start + timedelta(days=learn_days - 1)
    if not (span_start <= learning_end < span_end):
        raise EmptyPeriod(
            f"learning end {learning_end} must lie within [{span_start}, {span_end})"
        )
    return (
        AnalysisPeriod(patient_id, "learning", span_start, learning_end),
        AnalysisPeriod(patient_id, "prediction", learning_end + timedelta(days=1), span_end),
    )


class CohortSummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    season: Season
    patients_analyzed: int
    identified_count: int  # patients whose learning period ranked >= 1 trigger
    major_trigger_distribution: dict[str, float]  # over identified patients
    no_episode_fraction: float  # over analyzed patients


def cohort_summary(
    store: ObservationStore,
    season: Season,
    patient_ids: list[str] | None = None,
    params: AnalysisParams | None = None,
    ranges: Mapping[str, HealthyRange] | None = None,
    seasons: SeasonConfig | None = None,
) -> CohortSummary:
    """Distribution of top-ranked major triggers across a season's eligible
    patients; patients with no episodes at all feed the no-episode fraction."""
    params = params or AnalysisParams()
    seasons = seasons or default_seasons()
    if patient_ids is None:
        patient_ids = [p.patient_id for p in store.list_patients()]

    analyzed: list[str] = []
    for pid in patient_ids:
        if not eligibility(store, pid, params.eligibility_threshold):
            continue
        if assign_season(store, pid, seasons).season is season:
            analyzed.append(pid)
    if not analyzed:
        raise EmptyCohort(season.value)

    top_trigger: dict[str, str] = {}
    no_episodes = 0
    for pid in analyzed:
        profile = store.get_patient(pid)
        span_end = store.last_answered_day(pid)
        if span_end is None:
            no_episodes += 1
            continue
        flags = episode_flags(store, pid, profile.deployment_start, span_end)
        if not any(f.is_episode for f in flags.values()):
            no_episodes += 1
            continue
        try:
            learning, _ = default_split(store, pid, params)
            report = period_report(store, pid, learning, params, ranges)
        except (InsufficientData, EmptyPeriod):
            continue
        if report.episode_days >= params.min_learning_episodes and report.major_triggers:
            top_trigger[pid] = report.major_triggers[0]

    identified = len(top_trigger)
    distribution = {
        t: sum(1 for v in top_trigger.values() if v == t) / identified
        for t in TRIGGERS
        if any(v == t for v in top_trigger.values())
    }
    return CohortSummary(
        season=season,
        patients_analyzed=len(analyzed),
        identified_count=identified,
        major_trigger_distribution=distribution,
        no_episode_fraction=no_episodes / len(analyzed),
    )
