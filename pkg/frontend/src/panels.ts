// Pure panel builders: API response in, renderable cells out. No arithmetic
// happens here beyond copying; every figure on screen exists verbatim in the
// backing response, which the tests audit.

import type {
  CohortResponse,
  PredictionEvaluation,
  SummaryResponse,
  TriggerReport,
  TriggersResponse,
} from "./api.js";

const TRIGGER_LABELS: Record<string, string> = {
  pollen: "Pollen",
  pm25: "PM2.5",
  ozone: "Ozone",
};

export interface TriggerPanel {
  label: string;
  start: string;
  end: string;
  daysInPeriod: number;
  answeredDays: number;
  episodeDays: number;
  rows: { trigger: string; label: string; unhealthyDays: number; contributorDays: number }[];
  majorTriggers: string[];
  tempRange: [number, number] | null;
  humidityRange: [number, number] | null;
}

export function buildTriggerPanel(report: TriggerReport): TriggerPanel {
  return {
    label: report.label,
    start: report.start,
    end: report.end,
    daysInPeriod: report.days_in_period,
    answeredDays: report.answered_days,
    episodeDays: report.episode_days,
    rows: Object.keys(TRIGGER_LABELS).map((trigger) => ({
      trigger,
      label: TRIGGER_LABELS[trigger],
      unhealthyDays: report.unhealthy_days[trigger],
      contributorDays: report.contributor_days[trigger],
    })),
    majorTriggers: [...report.major_triggers],
    tempRange: report.temp_range,
    humidityRange: report.humidity_range,
  };
}

export interface SplitPanels {
  learning: TriggerPanel;
  prediction: TriggerPanel;
  evaluation: PredictionEvaluation | null;
  insufficientReason: string | null;
}

/** The trigger panel pair for a /triggers response at one learning end. */
export function buildSplitPanels(response: TriggersResponse): SplitPanels {
  return {
    learning: buildTriggerPanel(response.learning),
    prediction: buildTriggerPanel(response.prediction),
    evaluation: response.evaluation,
    insufficientReason: response.insufficient_reason,
  };
}

export interface CompliancePanel {
  answeredDays: number;
  askedDays: number;
  compliantDays: number;
  compliancePercent: string; // rendered, "n/a" when never asked
}

export function buildCompliancePanel(summary: SummaryResponse): CompliancePanel {
  const ratio = summary.compliance.controller_compliance;
  return {
    answeredDays: summary.compliance.answered_days,
    askedDays: summary.compliance.asked_days,
    compliantDays: summary.compliance.compliant_days,
    compliancePercent: ratio === null ? "n/a" : `${Math.round(ratio * 100)}%`,
  };
}

export interface CohortPanel {
  season: string;
  patientsAnalyzed: number;
  identifiedCount: number;
  rows: { trigger: string; label: string; share: number }[];
  noEpisodeFraction: number;
}

export function buildCohortPanel(cohort: CohortResponse): CohortPanel {
  return {
    season: cohort.season,
    patientsAnalyzed: cohort.patients_analyzed,
    identifiedCount: cohort.identified_count,
    rows: Object.entries(cohort.major_trigger_distribution).map(([trigger, share]) => ({
      trigger,
      label: TRIGGER_LABELS[trigger] ?? trigger,
      share,
    })),
    noEpisodeFraction: cohort.no_episode_fraction,
  };
}

/** Every number a trigger panel will put on screen, in render order. */
export function panelNumbers(panel: TriggerPanel): number[] {
  const numbers = [panel.daysInPeriod, panel.episodeDays];
  for (const row of panel.rows) numbers.push(row.unhealthyDays, row.contributorDays);
  return numbers;
}

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function renderTriggerPanelHtml(panel: TriggerPanel): string {
  const rows = panel.rows
    .map(
      (row) =>
        `<tr><td>${esc(row.label)}</td><td class="num">${row.unhealthyDays}</td>` +
        `<td class="num">${row.contributorDays}</td></tr>`,
    )
    .join("");
  const majors = panel.majorTriggers.map((t) => esc(TRIGGER_LABELS[t] ?? t)).join(" &gt; ") || "none";
  const footer =
    (panel.tempRange ? `Temp ${panel.tempRange[0]} to ${panel.tempRange[1]} F` : "Temp n/a") +
    " · " +
    (panel.humidityRange
      ? `Humidity ${panel.humidityRange[0]} to ${panel.humidityRange[1]} %`
      : "Humidity n/a");
  return (
    `<div class="panel trigger-panel" data-period="${esc(panel.label)}">` +
    `<h3>${esc(panel.label)} ${esc(panel.start)} to ${esc(panel.end)}` +
    ` (${panel.daysInPeriod} days)</h3>` +
    `<table><thead><tr><th></th><th>Unhealthy days</th><th>Contributor days</th></tr></thead>` +
    `<tbody>${rows}` +
    `<tr class="episodes"><td>Asthma episodes</td><td class="num" colspan="2">${panel.episodeDays}</td></tr>` +
    `</tbody></table>` +
    `<p class="majors">Major triggers: ${majors}</p>` +
    `<p class="footer">${footer}</p>` +
    `</div>`
  );
}

/** All numeric figures present in an HTML fragment, for the DOM audit.
 * Standalone numbers only: digits embedded in labels like "PM2.5" are text,
 * not figures. */
export function numbersInHtml(html: string): number[] {
  const text = html.replace(/<[^>]*>/g, " ");
  const matches = text.match(/(?<![A-Za-z0-9.])-?\d+(?:\.\d+)?(?![A-Za-z0-9.])/g) ?? [];
  return matches.map(Number);
}
