// Dashboard entry point: wires view state, the API client, and the panels
// into the page. All figures rendered here came out of /v1 responses.

import { ApiClient, ApiError, type ConfigResponse, type TimelineResponse } from "./api.js";
import { PanelQuery } from "./fetchq.js";
import {
  buildCohortPanel,
  buildCompliancePanel,
  buildSplitPanels,
  renderTriggerPanelHtml,
} from "./panels.js";
import {
  ALL_STREAMS,
  decodeState,
  defaultViewState,
  encodeState,
  toggleStream,
  type ViewState,
  withLearningEnd,
  withWindow,
} from "./state.js";
import { buildLanes, visibleLanes } from "./timeline.js";

const api = new ApiClient("");
let state: ViewState = defaultViewState();
let config: ConfigResponse | null = null;
let lastTimeline: TimelineResponse | null = null;

const timelineQuery = new PanelQuery<TimelineResponse>();
const triggersQuery = new PanelQuery<Awaited<ReturnType<typeof api.getTriggers>>>();
const summaryQuery = new PanelQuery<Awaited<ReturnType<typeof api.getSummary>>>();
const cohortQuery = new PanelQuery<Awaited<ReturnType<typeof api.getCohort>>>();
const alertsQuery = new PanelQuery<Awaited<ReturnType<typeof api.getAlerts>>>();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function showError(message: string) {
  const banner = el<HTMLDivElement>("error-banner");
  banner.textContent = message;
  banner.style.display = "block";
}

function clearError() {
  el<HTMLDivElement>("error-banner").style.display = "none";
}

function describeError(error: unknown): string {
  if (error instanceof ApiError) return `${error.kind}: ${error.message}`;
  return String(error);
}

function pushUrl() {
  const qs = encodeState(state);
  history.replaceState(null, "", qs ? `?${qs}` : location.pathname);
}

function renderTimeline() {
  const host = el<HTMLDivElement>("timeline");
  if (!lastTimeline || !config) {
    host.innerHTML = '<p class="empty">No data in this window.</p>';
    return;
  }
  if (lastTimeline.days.length === 0) {
    host.innerHTML = '<p class="empty">No days in the selected window.</p>';
    return;
  }
  const lanes = visibleLanes(buildLanes(lastTimeline.days, config), state.streams);
  const header = lastTimeline.days
    .map((d) => `<th class="${d.is_episode ? "episode" : ""}" title="${d.date}">${d.date.slice(8)}</th>`)
    .join("");
  const body = lanes
    .map((lane) => {
      const cells = lane.cells
        .map((cell) => {
          const classes = [
            cell.shaded ? "shaded" : "",
            cell.episode ? "episode" : "",
            !cell.answered ? "unanswered" : "",
          ]
            .filter(Boolean)
            .join(" ");
          const content =
            lane.kind === "event" ? (cell.active ? "●" : "") : cell.value !== null ? String(cell.value) : "·";
          return `<td class="${classes}">${content}</td>`;
        })
        .join("");
      return `<tr><th>${lane.label}</th>${cells}</tr>`;
    })
    .join("");
  host.innerHTML = `<table class="lanes"><thead><tr><th></th>${header}</tr></thead><tbody>${body}</tbody></table>`;
}

function refreshTimeline() {
  if (!state.patient) return;
  void timelineQuery.run(
    () => api.getTimeline(state.patient!, state.from ?? undefined, state.to ?? undefined),
    (response) => {
      lastTimeline = response;
      clearError();
      renderTimeline();
    },
    (error) => showError(describeError(error)),
  );
}

function refreshTriggers() {
  if (!state.patient) return;
  void triggersQuery.run(
    () => api.getTriggers(state.patient!, state.learningEnd ?? undefined),
    (response) => {
      clearError();
      const panels = buildSplitPanels(response);
      el<HTMLDivElement>("trigger-panels").innerHTML =
        renderTriggerPanelHtml(panels.learning) + renderTriggerPanelHtml(panels.prediction);
      const note = panels.evaluation
        ? `Learned: ${panels.evaluation.learned_triggers.join(", ")} — hits ${panels.evaluation.hit_days},` +
          ` unexplained ${panels.evaluation.unexplained_days.length}, false alarms ${panels.evaluation.false_alarm_days}`
        : (panels.insufficientReason ?? "");
      el<HTMLParagraphElement>("evaluation-note").textContent = note;
    },
    (error) => showError(describeError(error)),
  );
}

function refreshSummary() {
  if (!state.patient) return;
  void summaryQuery.run(
    () => api.getSummary(state.patient!),
    (summary) => {
      const compliance = buildCompliancePanel(summary);
      el<HTMLDivElement>("compliance").innerHTML =
        `<h3>Compliance</h3><p>${compliance.compliantDays} of ${compliance.askedDays} asked days` +
        ` (${compliance.compliancePercent}) · answered ${compliance.answeredDays}</p>` +
        `<p>Episode days: ${summary.episode_days} · abnormal lung days: ${summary.abnormal_lung_days}</p>`;
    },
    (error) => showError(describeError(error)),
  );
}

function refreshCohort() {
  if (!state.season) {
    el<HTMLDivElement>("cohort").innerHTML = "";
    return;
  }
  void cohortQuery.run(
    () => api.getCohort(state.season!),
    (cohort) => {
      const panel = buildCohortPanel(cohort);
      const rows = panel.rows
        .map((r) => `<tr><td>${r.label}</td><td class="num">${Math.round(r.share * 100)}%</td></tr>`)
        .join("");
      el<HTMLDivElement>("cohort").innerHTML =
        `<h3>Cohort: ${panel.season}</h3><table>${rows}</table>` +
        `<p>${panel.identifiedCount} trigger-identified of ${panel.patientsAnalyzed} analyzed;` +
        ` no episodes: ${Math.round(panel.noEpisodeFraction * 100)}%</p>`;
    },
    (error) => showError(describeError(error)),
  );
}

function refreshAlerts() {
  void alertsQuery.run(
    () => api.getAlerts(state.patient ?? undefined),
    (alerts) => {
      el<HTMLDivElement>("alerts").innerHTML =
        "<h3>Alerts</h3>" +
        (alerts.length
          ? `<ul>${alerts
              .map((a) => `<li><b>${a.date}</b> ${a.kind} — ${a.detail} (${a.audience})</li>`)
              .join("")}</ul>`
          : '<p class="empty">No alerts.</p>');
    },
    (error) => showError(describeError(error)),
  );
}

function refreshAll() {
  pushUrl();
  refreshTimeline();
  refreshTriggers();
  refreshSummary();
  refreshCohort();
  refreshAlerts();
}

function bindControls() {
  const patientSelect = el<HTMLSelectElement>("patient-select");
  patientSelect.addEventListener("change", () => {
    state = { ...state, patient: patientSelect.value || null, learningEnd: null };
    refreshAll();
  });

  const fromInput = el<HTMLInputElement>("from-input");
  const toInput = el<HTMLInputElement>("to-input");
  const applyWindow = () => {
    state = withWindow(state, fromInput.value || null, toInput.value || null);
    refreshAll();
  };
  fromInput.addEventListener("change", applyWindow);
  toInput.addEventListener("change", applyWindow);

  const markerInput = el<HTMLInputElement>("learning-end-input");
  el<HTMLButtonElement>("apply-split").addEventListener("click", () => {
    try {
      state = withLearningEnd(state, markerInput.value);
    } catch (error) {
      showError(String(error instanceof Error ? error.message : error));
      return;
    }
    refreshAll();
  });

  const seasonSelect = el<HTMLSelectElement>("season-select");
  seasonSelect.addEventListener("change", () => {
    state = { ...state, season: seasonSelect.value || null };
    refreshAll();
  });

  const streamsHost = el<HTMLDivElement>("stream-toggles");
  for (const stream of ALL_STREAMS) {
    const label = document.createElement("label");
    const box = document.createElement("input");
    box.type = "checkbox";
    box.checked = state.streams.includes(stream);
    box.dataset.stream = stream;
    box.addEventListener("change", () => {
      state = toggleStream(state, stream);
      pushUrl();
      renderTimeline(); // visibility only: no refetch
    });
    label.append(box, document.createTextNode(stream));
    streamsHost.append(label);
  }
}

function syncControls() {
  el<HTMLSelectElement>("patient-select").value = state.patient ?? "";
  el<HTMLInputElement>("from-input").value = state.from ?? "";
  el<HTMLInputElement>("to-input").value = state.to ?? "";
  el<HTMLInputElement>("learning-end-input").value = state.learningEnd ?? "";
  el<HTMLSelectElement>("season-select").value = state.season ?? "";
  for (const box of document.querySelectorAll<HTMLInputElement>("#stream-toggles input")) {
    box.checked = state.streams.includes(box.dataset.stream as (typeof ALL_STREAMS)[number]);
  }
}

async function boot() {
  state = decodeState(location.search);
  bindControls();
  try {
    config = await api.getConfig();
    const patients = await api.getPatients();
    const select = el<HTMLSelectElement>("patient-select");
    select.innerHTML =
      '<option value="">— select patient —</option>' +
      patients
        .map((p) => `<option value="${p.patient_id}">${p.patient_id} (${p.season})</option>`)
        .join("");
  } catch (error) {
    showError(describeError(error));
    return;
  }
  syncControls();
  refreshAll();
}

document.addEventListener("DOMContentLoaded", () => {
  void boot();
});
