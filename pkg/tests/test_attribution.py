from __future__ import annotations

import random
from datetime import date, datetime, time, timedelta, timezone

import pytest

from asthmawatch.attribution import (
    AnalysisPeriod,
    EmptyCohort,
    EmptyPeriod,
    InsufficientEpisodes,
    NoHealthyRange,
    assign_season,
    cohort_summary,
    default_split,
    learn_and_predict,
    period_report,
    prolonged_exposure,
    segment_by_pollen,
    unhealthy,
)
from asthmawatch.config import AnalysisParams
from asthmawatch.model import (
    EnvironmentSample,
    EnvParameter,
    Observation,
    QuestionnaireResponse,
    Season,
    SeasonConfig,
    SeasonWindow,
    Slot,
    Stream,
    Symptom,
    default_seasons,
)
from asthmawatch.store import ObservationStore

from fixture_patients import (
    build_patient_a,
    build_patient_b,
    build_patient_c,
    build_patient_d,
    build_spring_cohort,
    build_winter_cohort,
)
from test_store import env_obs, profile, q_obs

UTC = timezone.utc
PARAMS = AnalysisParams()


class TestUnhealthy:
    def test_pollen_upper_bound_inclusive_healthy(self):
        assert unhealthy("pollen", 2.4) is False
        assert unhealthy("pollen", 2.4000001) is True

    def test_pm25_above_fifty(self):
        assert unhealthy("pm25", 51) is True
        assert unhealthy("pm25", 50) is False

    def test_ozone_lower_bound(self):
        assert unhealthy("ozone", 0) is False

    def test_temperature_has_no_range(self):
        with pytest.raises(NoHealthyRange):
            unhealthy("temperature", 70)
        with pytest.raises(NoHealthyRange):
            unhealthy("humidity", 50)


def build_random_trace(seed: int):
    """A randomized 14-day patient with envelope + questionnaire streams,
    plus the raw day-level facts the brute-force oracle uses."""
    rng = random.Random(seed)
    start = date(2018, 3, 1)
    store = ObservationStore(":memory:")
    store.put_patient(profile(pid="p1", region="rx", start=start, days=16))

    facts = {}
    for i in range(-1, 15):  # include the day before the period
        d = start + timedelta(days=i)
        day_facts = {"answered": False, "symptom": False}
        for parameter, threshold, hi, lo in (
            (EnvParameter.POLLEN, 2.4, 8.0, 1.0),
            (EnvParameter.PM25, 50.0, 90.0, 20.0),
            (EnvParameter.OZONE, 50.0, 80.0, 25.0),
        ):
            if rng.random() < 0.15:
                day_facts[parameter.value] = None  # missing that day
                continue
            bad = rng.random() < 0.4
            value = hi if bad else lo
            day_facts[parameter.value] = value
            store.upsert(env_obs("rx", d, 12, parameter, value))
        if i >= 0 and rng.random() < 0.8:
            day_facts["answered"] = True
            day_facts["symptom"] = rng.random() < 0.5
            store.upsert(
                q_obs("p1", d, Slot.MORNING, symptoms={Symptom.COUGH} if day_facts["symptom"] else set())
            )
        facts[d] = day_facts
    period = AnalysisPeriod("p1", "learning", start, start + timedelta(days=13))
    return store, period, facts


def oracle_counts(period: AnalysisPeriod, facts: dict) -> dict:
    """Independent enumeration of the period rules, straight from the text."""
    thresholds = {"pollen": 2.4, "pm25": 50.0, "ozone": 50.0}

    def is_unhealthy(d: date, trigger: str) -> bool:
        f = facts.get(d)
        if f is None:
            return False
        v = f.get(trigger)
        return v is not None and v > thresholds[trigger]

    unhealthy_days = {t: 0 for t in thresholds}
    contributor_days = {t: 0 for t in thresholds}
    episode_days = 0
    explained = 0
    d = period.start
    while d <= period.end:
        for t in thresholds:
            if is_unhealthy(d, t):
                unhealthy_days[t] += 1
        f = facts[d]
        if f["answered"] and f["symptom"]:
            episode_days += 1
            hit = False
            for t in thresholds:
                if is_unhealthy(d, t) or is_unhealthy(d - timedelta(days=1), t):
                    contributor_days[t] += 1
                    hit = True
            explained += hit
        d += timedelta(days=1)
    return {
        "unhealthy_days": unhealthy_days,
        "contributor_days": contributor_days,
        "episode_days": episode_days,
        "explained_days": explained,
    }


class TestPeriodReport:
    def test_randomized_traces_match_bruteforce(self):
        order = ("pollen", "pm25", "ozone")
        for seed in range(40):
            store, period, facts = build_random_trace(seed)
            report = period_report(store, "p1", period, PARAMS)
            expected = oracle_counts(period, facts)
            assert report.unhealthy_days == expected["unhealthy_days"], f"seed {seed}"
            assert report.contributor_days == expected["contributor_days"], f"seed {seed}"
            assert report.episode_days == expected["episode_days"], f"seed {seed}"
            assert report.explained_days == expected["explained_days"], f"seed {seed}"
            for t, days in report.contributor_days.items():
                assert days <= report.episode_days
            # ranking totality: strict order restated independently
            assert report.major_triggers == sorted(
                (t for t in order if report.contributor_days[t] > 0),
                key=lambda t: (-report.contributor_days[t], order.index(t)),
            ), f"seed {seed}"

    def test_no_episodes_no_contributors(self, store):
        store.put_patient(profile(pid="p1", region="r1", start=date(2018, 3, 1), days=10))
        for i in range(10):
            store.upsert(env_obs("r1", date(2018, 3, 1) + timedelta(days=i), 12, EnvParameter.PM25, 90))
        period = AnalysisPeriod("p1", "learning", date(2018, 3, 1), date(2018, 3, 10))
        report = period_report(store, "p1", period, PARAMS)
        assert report.episode_days == 0
        assert report.contributor_days == {"pollen": 0, "pm25": 0, "ozone": 0}
        assert report.major_triggers == []

    def test_previous_day_shift_property(self):
        """Moving the only unhealthy day from the episode day to the day
        before keeps the contributor count; two days before drops it."""
        start = date(2018, 3, 5)
        episode_day = start + timedelta(days=4)

        def build(pm25_day: date):
            store = ObservationStore(":memory:")
            store.put_patient(profile(pid="p1", region="r1", start=start, days=10))
            store.upsert(env_obs("r1", pm25_day, 12, EnvParameter.PM25, 99))
            store.upsert(q_obs("p1", episode_day, Slot.MORNING, symptoms={Symptom.COUGH}))
            period = AnalysisPeriod("p1", "learning", start, start + timedelta(days=9))
            return period_report(store, "p1", period, PARAMS)

        same = build(episode_day)
        prev = build(episode_day - timedelta(days=1))
        two_before = build(episode_day - timedelta(days=2))
        assert same.contributor_days["pm25"] == 1
        assert prev.contributor_days["pm25"] == 1
        assert two_before.contributor_days["pm25"] == 0

    def test_previous_day_may_precede_period(self):
        start = date(2018, 3, 5)
        store = ObservationStore(":memory:")
        store.put_patient(profile(pid="p1", region="r1", start=start, days=10))
        # unhealthy day is the day before the period starts
        store.upsert(env_obs("r1", start - timedelta(days=1), 12, EnvParameter.PM25, 99))
        store.upsert(q_obs("p1", start, Slot.MORNING, symptoms={Symptom.COUGH}))
        period = AnalysisPeriod("p1", "learning", start, start + timedelta(days=9))
        report = period_report(store, "p1", period, PARAMS)
        assert report.contributor_days["pm25"] == 1
        assert report.unhealthy_days["pm25"] == 0  # outside the period

    def test_environment_counts_ignore_answering(self):
        # Patient-C prediction: pollen unhealthy 10 days > 5 episode days
        store = ObservationStore(":memory:")
        c = build_patient_c()
        c.load(store)
        st_, en = c.expected["prediction_period"]
        report = period_report(store, "patient-c", AnalysisPeriod("patient-c", "prediction", st_, en), PARAMS)
        assert report.unhealthy_days["pollen"] == 10
        assert report.episode_days == 5

    def test_tie_break_fixed_order(self):
        start = date(2018, 3, 5)
        store = ObservationStore(":memory:")
        store.put_patient(profile(pid="p1", region="r1", start=start, days=6))
        d = start + timedelta(days=2)
        store.upsert(env_obs("r1", d, 12, EnvParameter.PM25, 99))
        store.upsert(env_obs("r1", d, 12, EnvParameter.OZONE, 99))
        store.upsert(env_obs("r1", d, 0, EnvParameter.POLLEN, 9.0))
        store.upsert(q_obs("p1", d, Slot.MORNING, symptoms={Symptom.COUGH}))
        report = period_report(store, "p1", AnalysisPeriod("p1", "x", start, start + timedelta(days=5)), PARAMS)
        assert report.contributor_days == {"pollen": 1, "pm25": 1, "ozone": 1}
        assert report.major_triggers == ["pollen", "pm25", "ozone"]

    def test_empty_period_rejected(self):
        with pytest.raises(EmptyPeriod):
            AnalysisPeriod("p1", "learning", date(2018, 3, 5), date(2018, 3, 1))

    def test_determinism(self):
        store, period, _ = build_random_trace(7)
        assert period_report(store, "p1", period, PARAMS) == period_report(store, "p1", period, PARAMS)


class TestLearnAndPredict:
    def test_patient_b_hits_and_prolonged_unexplained(self):
        store = ObservationStore(":memory:")
        b = build_patient_b()
        b.load(store)
        learning, prediction = default_split(store, "patient-b", PARAMS)
        ev = learn_and_predict(store, "patient-b", learning, prediction, PARAMS)
        assert ev.learned_triggers == ["pm25"]
        assert ev.hit_days == 19
        assert [u.date for u in ev.unexplained_days] == b.expected["unexplained"]
        assert all(u.prolonged["pm25"] for u in ev.unexplained_days)
        assert ev.false_alarm_days == 0

    def test_zero_prediction_episodes(self):
        start = date(2018, 3, 1)
        store = ObservationStore(":memory:")
        store.put_patient(profile(pid="p1", region="r1", start=start, days=30))
        for i in range(30):
            d = start + timedelta(days=i)
            store.upsert(env_obs("r1", d, 12, EnvParameter.PM25, 90 if i < 12 else 20))
            if i < 20:
                store.upsert(q_obs("p1", d, Slot.MORNING, symptoms={Symptom.COUGH} if i < 12 else set()))
        learning = AnalysisPeriod("p1", "learning", start, start + timedelta(days=13))
        prediction = AnalysisPeriod("p1", "prediction", start + timedelta(days=14), start + timedelta(days=29))
        ev = learn_and_predict(store, "p1", learning, prediction, PARAMS)
        assert ev.hit_days == 0
        assert ev.unexplained_days == []

    def test_sparse_learning_raises(self):
        store = ObservationStore(":memory:")
        d = build_patient_d()
        d.load(store)
        learning, prediction = default_split(store, "patient-d", PARAMS)
        with pytest.raises(InsufficientEpisodes):
            learn_and_predict(store, "patient-d", learning, prediction, PARAMS)

    def test_learning_must_precede_prediction(self):
        store = ObservationStore(":memory:")
        b = build_patient_b()
        b.load(store)
        learning, prediction = default_split(store, "patient-b", PARAMS)
        with pytest.raises(ValueError):
            learn_and_predict(store, "patient-b", prediction, learning, PARAMS)


class TestProlongedExposure:
    def _store_with_window(self, pattern: list[bool]):
        start = date(2018, 3, 1)
        store = ObservationStore(":memory:")
        store.put_patient(profile(pid="p1", region="r1", start=start, days=10))
        for i, bad in enumerate(pattern):
            store.upsert(env_obs("r1", start + timedelta(days=i), 12, EnvParameter.PM25, 90 if bad else 20))
        return store, start + timedelta(days=len(pattern))

    def test_full_week_true(self):
        store, day = self._store_with_window([True] * 7)
        assert prolonged_exposure(store, "p1", day, "pm25", PARAMS) is True

    def test_clean_week_false(self):
        store, day = self._store_with_window([False] * 7)
        assert prolonged_exposure(store, "p1", day, "pm25", PARAMS) is False

    def test_exact_boundary(self):
        store, day = self._store_with_window([True] * 5 + [False] * 2)
        assert prolonged_exposure(store, "p1", day, "pm25", PARAMS) is True
        store, day = self._store_with_window([True] * 4 + [False] * 3)
        assert prolonged_exposure(store, "p1", day, "pm25", PARAMS) is False

    def test_all_window_patterns(self):
        for bits in range(128):
            pattern = [(bits >> i) & 1 == 1 for i in range(7)]
            store, day = self._store_with_window(pattern)
            expected = sum(pattern) >= PARAMS.prolonged_min_unhealthy
            assert prolonged_exposure(store, "p1", day, "pm25", PARAMS) is expected, pattern

    def test_missing_days_count_healthy(self):
        start = date(2018, 3, 1)
        store = ObservationStore(":memory:")
        store.put_patient(profile(pid="p1", region="r1", start=start, days=10))
        # only 4 of the 7 preceding days even have data, all unhealthy
        for i in range(4):
            store.upsert(env_obs("r1", start + timedelta(days=i), 12, EnvParameter.PM25, 90))
        assert prolonged_exposure(store, "p1", start + timedelta(days=7), "pm25", PARAMS) is False

    def test_configurable_m_of_k(self):
        params = AnalysisParams(prolonged_window_days=3, prolonged_min_unhealthy=2)
        store, day = self._store_with_window([False, False, False, False, True, True, False])
        # window is now the 3 preceding days: [True, True, False] -> 2 of 3
        assert prolonged_exposure(store, "p1", day, "pm25", params) is True


class TestSegmentation:
    def _store_with_pollen(self, daily_pollen: list[float]):
        start = date(2018, 2, 1)
        store = ObservationStore(":memory:")
        store.put_patient(profile(pid="p1", region="r1", start=start, days=len(daily_pollen)))
        for i, v in enumerate(daily_pollen):
            store.upsert(env_obs("r1", start + timedelta(days=i), 12, EnvParameter.POLLEN, v))
        return store

    def test_patient_a_split(self):
        store = self._store_with_pollen([0.0] * 42 + [1.5] * 49)
        segments = segment_by_pollen(store, "p1", PARAMS)
        assert [(s.kind, s.days) for s in segments] == [("absent", 42), ("present", 49)]

    def test_all_zero_single_segment(self):
        store = self._store_with_pollen([0.0] * 30)
        segments = segment_by_pollen(store, "p1", PARAMS)
        assert [(s.kind, s.days) for s in segments] == [("absent", 30)]

    def test_single_positive_day_absorbed(self):
        store = self._store_with_pollen([0.0] * 10 + [3.0] + [0.0] * 10)
        segments = segment_by_pollen(store, "p1", PARAMS)
        assert [(s.kind, s.days) for s in segments] == [("absent", 21)]

    def test_short_run_at_edge_merges_into_neighbor(self):
        store = self._store_with_pollen([2.0] * 2 + [0.0] * 12)
        segments = segment_by_pollen(store, "p1", PARAMS)
        assert [(s.kind, s.days) for s in segments] == [("absent", 14)]

    def test_missing_pollen_counts_absent(self):
        start = date(2018, 2, 1)
        store = ObservationStore(":memory:")
        store.put_patient(profile(pid="p1", region="r1", start=start, days=10))
        for i in range(5, 10):
            store.upsert(env_obs("r1", start + timedelta(days=i), 12, EnvParameter.POLLEN, 4.0))
        segments = segment_by_pollen(store, "p1", PARAMS)
        assert [(s.kind, s.days) for s in segments] == [("absent", 5), ("present", 5)]

    def test_smoothing_respects_configured_min_run(self):
        params = AnalysisParams(segment_min_run_days=1)
        store = self._store_with_pollen([0.0] * 10 + [3.0] + [0.0] * 10)
        segments = segment_by_pollen(store, "p1", params)
        assert [(s.kind, s.days) for s in segments] == [("absent", 10), ("present", 1), ("absent", 10)]


class TestSeasonAssignment:
    def test_fully_inside_winter(self, store):
        store.put_patient(profile(pid="p1", start=date(2018, 1, 2), days=28))
        assignment = assign_season(store, "p1")
        assert assignment.season is Season.WINTER
        assert assignment.spanning is False

    def test_majority_with_spanning_flag(self, store):
        # 60 winter days then 31 spring days
        store.put_patient(profile(pid="p1", start=date(2017, 12, 31), days=91))
        assignment = assign_season(store, "p1")
        assert assignment.season is Season.WINTER
        assert assignment.day_counts == {"winter": 60, "spring": 31}
        assert assignment.spanning is True

    def test_exact_tie_goes_to_earlier(self, store):
        # 10 winter days then 10 spring days
        store.put_patient(profile(pid="p1", start=date(2018, 2, 19), days=20))
        assignment = assign_season(store, "p1")
        assert assignment.day_counts == {"winter": 10, "spring": 10}
        assert assignment.season is Season.WINTER

    def test_custom_config_shifts_label(self, store):
        store.put_patient(profile(pid="p1", start=date(2018, 3, 1), days=20))
        assert assign_season(store, "p1").season is Season.SPRING
        late_spring = SeasonConfig(
            windows={
                Season.WINTER: SeasonWindow(start_month=12, start_day=1, end_month=3, end_day=25),
                Season.SPRING: SeasonWindow(start_month=3, start_day=26, end_month=5, end_day=31),
                Season.SUMMER: SeasonWindow(start_month=6, start_day=1, end_month=8, end_day=31),
                Season.FALL: SeasonWindow(start_month=9, start_day=1, end_month=11, end_day=30),
            }
        )
        assert assign_season(store, "p1", late_spring).season is Season.WINTER


class TestCohortSummary:
    def test_winter_eighty_percent_pm25(self):
        store = ObservationStore(":memory:")
        for bundle in build_winter_cohort():
            bundle.load(store)
        summary = cohort_summary(store, Season.WINTER, params=PARAMS)
        assert summary.patients_analyzed == 10
        assert summary.identified_count == 10
        assert summary.major_trigger_distribution["pm25"] == pytest.approx(0.80)
        assert summary.major_trigger_distribution["ozone"] == pytest.approx(0.20)
        assert summary.no_episode_fraction == 0.0

    def test_single_patient_full_share(self):
        store = ObservationStore(":memory:")
        bundles = build_winter_cohort()[:1]
        for b in bundles:
            b.load(store)
        summary = cohort_summary(store, Season.WINTER, params=PARAMS)
        assert summary.major_trigger_distribution == {"pm25": 1.0}

    def test_empty_cohort_raises(self, store):
        with pytest.raises(EmptyCohort):
            cohort_summary(store, Season.SUMMER, params=PARAMS)

    def test_no_episode_patients_counted(self):
        store = ObservationStore(":memory:")
        bundles = build_winter_cohort()[:4]
        for b in bundles:
            b.load(store)
        # a fifth eligible patient with answers but zero episodes
        quiet = profile(pid="quiet", region="region-q", start=date(2018, 1, 8), days=21)
        store.put_patient(quiet)
        for i in range(21):
            store.upsert(q_obs("quiet", date(2018, 1, 8) + timedelta(days=i), Slot.MORNING))
        summary = cohort_summary(store, Season.WINTER, params=PARAMS)
        assert summary.patients_analyzed == 5
        assert summary.identified_count == 4
        assert summary.no_episode_fraction == pytest.approx(0.2)

    def test_ineligible_patients_excluded(self):
        store = ObservationStore(":memory:")
        for b in build_winter_cohort()[:3]:
            b.load(store)
        silent = profile(pid="silent", region="region-x", start=date(2018, 1, 8), days=21)
        store.put_patient(silent)  # zero answers: answer rate 0 -> excluded
        summary = cohort_summary(store, Season.WINTER, params=PARAMS)
        assert summary.patients_analyzed == 3

    def test_fractions_sum_to_at_most_one(self):
        store = ObservationStore(":memory:")
        for b in build_winter_cohort():
            b.load(store)
        summary = cohort_summary(store, Season.WINTER, params=PARAMS)
        assert sum(summary.major_trigger_distribution.values()) <= 1.0 + 1e-9


class TestDefaultSplit:
    def test_two_thirds_of_analyzed_span(self):
        store = ObservationStore(":memory:")
        b = build_patient_b()
        b.load(store)
        learning, prediction = default_split(store, "patient-b", PARAMS)
        assert learning.start == b.profile.deployment_start
        assert (learning.end - learning.start).days + 1 == 42
        assert (prediction.end - prediction.start).days + 1 == 21
        assert prediction.end == b.day(63)  # last answered day, not deployment end

    def test_explicit_boundary(self):
        store = ObservationStore(":memory:")
        b = build_patient_b()
        b.load(store)
        learning, prediction = default_split(store, "patient-b", PARAMS, learning_end=b.day(28))
        assert learning.end == b.day(28)
        assert prediction.start == b.day(29)

    def test_boundary_outside_span_rejected(self):
        store = ObservationStore(":memory:")
        b = build_patient_b()
        b.load(store)
        with pytest.raises(EmptyPeriod):
            default_split(store, "patient-b", PARAMS, learning_end=b.day(91))
