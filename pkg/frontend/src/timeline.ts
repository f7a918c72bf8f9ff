// Day-aligned timeline lanes. Unhealthy shading thresholds come from the
// config endpoint; nothing is hard-coded client-side. Toggling a stream off
// only filters which lanes are shown; the lane data itself is untouched.

import type { ConfigResponse, TimelineDay } from "./api.js";
import type { StreamName } from "./state.js";

export interface LaneCell {
  date: string;
  answered: boolean;
  value: number | null; // numeric lanes; null for event lanes or missing data
  active: boolean; // event lanes: did the event occur
  shaded: boolean; // value exceeds the healthy upper bound
  episode: boolean;
}

export interface Lane {
  stream: StreamName;
  label: string;
  kind: "event" | "value";
  cells: LaneCell[];
}

const ENV_FIELD: Record<string, "pollen_max" | "pm25_max" | "ozone_max"> = {
  pollen: "pollen_max",
  pm25: "pm25_max",
  ozone: "ozone_max",
};

export function buildLanes(days: TimelineDay[], config: ConfigResponse): Lane[] {
  const cell = (day: TimelineDay): Omit<LaneCell, "value" | "active" | "shaded"> => ({
    date: day.date,
    answered: day.answered,
    episode: day.is_episode === true,
  });

  const lanes: Lane[] = [
    {
      stream: "symptoms",
      label: "Symptoms",
      kind: "event",
      cells: days.map((d) => ({
        ...cell(d),
        value: null,
        active: d.symptoms.length > 0,
        shaded: false,
      })),
    },
    {
      stream: "medication",
      label: "Rescue medication",
      kind: "event",
      cells: days.map((d) => ({
        ...cell(d),
        value: null,
        active: d.rescue_taken === true,
        shaded: false,
      })),
    },
    {
      stream: "lung",
      label: "PEF (min of day)",
      kind: "value",
      cells: days.map((d) => ({
        ...cell(d),
        value: d.lung.length ? Math.min(...d.lung.map((r) => r.pef)) : null,
        active: false,
        shaded: false,
      })),
    },
  ];

  for (const stream of ["pollen", "pm25", "ozone"] as const) {
    const upper = config.healthy_ranges[stream]?.upper;
    lanes.push({
      stream,
      label: stream === "pm25" ? "PM2.5" : stream === "ozone" ? "Ozone" : "Pollen",
      kind: "value",
      cells: days.map((d) => {
        const value = d.env[ENV_FIELD[stream]];
        return {
          ...cell(d),
          value,
          active: false,
          shaded: value !== null && upper !== undefined && value > upper,
        };
      }),
    });
  }
  return lanes;
}

export function visibleLanes(lanes: Lane[], streams: StreamName[]): Lane[] {
  return lanes.filter((lane) => streams.includes(lane.stream));
}

export function episodeDates(days: TimelineDay[]): string[] {
  return days.filter((d) => d.is_episode === true).map((d) => d.date);
}
