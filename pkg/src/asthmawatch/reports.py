"""Markdown and CSV report emitters.

Per-patient reports carry one table per analysis block: a row per trigger
with its unhealthy-day count, an asthma-episode row, and an outdoor
temperature/humidity footer. Cohort reports tabulate the major-trigger
distribution for a season. Markdown and CSV renderings carry identical
numbers; only the framing differs.
"""

from __future__ import annotations

import csv
import io
import math
from datetime import date, timedelta
from typing import Mapping

from .attribution import (
    AnalysisPeriod,
    CohortSummary,
    InsufficientData,
    TriggerReport,
    cohort_summary,
    default_split,
    period_report,
    segment_by_pollen,
)
from .config import AnalysisParams
from .model import HealthyRange, Season, SeasonConfig
from .store import ObservationStore

_TRIGGER_LABELS = {"pollen": "Pollen", "pm25": "PM2.5", "ozone": "Ozone"}


def _fmt_range(r: tuple[float, float] | None, unit: str) -> str:
    if r is None:
        return "n/a"
    lo, hi = (int(v) if float(v).is_integer() else v for v in r)
    return f"{lo} to {hi} {unit}"


def _period_cells(reports: list[TriggerReport]) -> list[list[str]]:
    """Cell matrix shared by the Markdown and CSV renderers."""
    header = [""] + [f"{r.label.capitalize()} ({r.days_in_period} days)" for r in reports]
    rows = [header]
    for trigger in _TRIGGER_LABELS:
        rows.append(
            [_TRIGGER_LABELS[trigger]] + [str(r.unhealthy_days[trigger]) for r in reports]
        )
    rows.append(["Asthma episodes"] + [str(r.episode_days) for r in reports])
    rows.append(["Outdoor Temperature"] + [_fmt_range(r.temp_range, "F") for r in reports])
    rows.append(["Outdoor Humidity"] + [_fmt_range(r.humidity_range, "%") for r in reports])
    return rows


def _markdown_table(rows: list[list[str]]) -> str:
    out = ["| " + " | ".join(rows[0]) + " |"]
    out.append("|" + "|".join("---" for _ in rows[0]) + "|")
    for row in rows[1:]:
        out.append("| " + " | ".join(row) + " |")
    return "\n".join(out)


def _csv_table(rows: list[list[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue().rstrip("\n")


def _render(blocks: list[tuple[str, list[list[str]]]], fmt: str) -> str:
    parts = []
    for title, rows in blocks:
        if fmt == "markdown":
            parts.append(f"## {title}\n\n{_markdown_table(rows)}")
        elif fmt == "csv":
            parts.append(f"# {title}\n{_csv_table(rows)}")
        else:
            raise ValueError(f"unknown format {fmt!r}")
    return "\n\n".join(parts) + "\n"


def patient_report(
    store: ObservationStore,
    patient_id: str,
    params: AnalysisParams | None = None,
    ranges: Mapping[str, HealthyRange] | None = None,
    fmt: str = "markdown",
    learning_end: date | None = None,
    segment_learning_days: list[int] | None = None,
) -> str:
    """Learning/prediction trigger tables for one patient.

    When the deployment splits into pollen-present and pollen-absent
    segments, each segment gets its own table and its own learning/prediction
    split (override the split via segment_learning_days). Single-segment
    deployments honor learning_end.
    """
    params = params or AnalysisParams()
    last_answered = store.last_answered_day(patient_id)
    if last_answered is None:
        raise InsufficientData(f"{patient_id}: no answered days")

    segments = segment_by_pollen(store, patient_id, params)
    blocks: list[tuple[str, list[list[str]]]] = []

    if len(segments) > 1:
        for i, seg in enumerate(segments):
            seg_end = min(seg.end, last_answered)
            if seg_end < seg.start:
                continue
            n = (seg_end - seg.start).days + 1
            if segment_learning_days and i < len(segment_learning_days):
                learn_days = segment_learning_days[i]
            else:
                learn_days = math.ceil(n * params.learning_fraction)
            learn_days = max(1, min(learn_days, n - 1)) if n > 1 else 0
            if learn_days == 0:
                continue
            boundary = seg.start + timedelta(days=learn_days - 1)
            reports = [
                period_report(
                    store, patient_id, AnalysisPeriod(patient_id, "learning", seg.start, boundary),
                    params, ranges,
                ),
                period_report(
                    store,
                    patient_id,
                    AnalysisPeriod(patient_id, "prediction", boundary + timedelta(days=1), seg_end),
                    params,
                    ranges,
                ),
            ]
            title = f"Pollen {seg.kind}: {seg.start} to {seg.end} ({seg.days} days)"
            blocks.append((title, _period_cells(reports)))
    else:
        learning, prediction = default_split(store, patient_id, params, learning_end)
        reports = [
            period_report(store, patient_id, learning, params, ranges),
            period_report(store, patient_id, prediction, params, ranges),
        ]
        blocks.append((f"Patient {patient_id}", _period_cells(reports)))

    if not blocks:
        raise InsufficientData(f"{patient_id}: no analyzable segment")
    return _render(blocks, fmt)


def cohort_report(
    store: ObservationStore,
    season: Season,
    params: AnalysisParams | None = None,
    ranges: Mapping[str, HealthyRange] | None = None,
    seasons: SeasonConfig | None = None,
    fmt: str = "markdown",
) -> str:
    """Major-trigger distribution for one season's analyzed patients."""
    summary = cohort_summary(store, season, None, params, ranges, seasons)
    return _render([(f"Cohort: {season.value}", cohort_cells(summary))], fmt)


def cohort_cells(summary: CohortSummary) -> list[list[str]]:
    rows = [["", "Share of trigger-identified patients"]]
    for trigger, label in _TRIGGER_LABELS.items():
        if trigger in summary.major_trigger_distribution:
            rows.append([label, _pct(summary.major_trigger_distribution[trigger])])
    rows.append(["Patients analyzed", str(summary.patients_analyzed)])
    rows.append(["Trigger identified", str(summary.identified_count)])
    rows.append(["No episodes", _pct(summary.no_episode_fraction)])
    return rows


def _pct(fraction: float) -> str:
    pct = fraction * 100
    return f"{pct:.0f}%" if abs(pct - round(pct)) < 1e-9 else f"{pct:.1f}%"


def parse_table_numbers(rendered: str) -> list[str]:
    """All numeric cells in rendering order; lets tests compare formats."""
    numbers = []
    for token in rendered.replace("|", ",").replace("\n", ",").split(","):
        token = token.strip().rstrip("%")
        if token and all(c.isdigit() or c in ".-" for c in token):
            try:
                float(token)
            except ValueError:
                continue
            numbers.append(token)
    return numbers
