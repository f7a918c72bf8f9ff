// Shareable view state. Everything the dashboard shows is derivable from
// (state, API); the state round-trips losslessly through the URL so a
// reloaded link reproduces the same panels.

export const ALL_STREAMS = ["symptoms", "medication", "lung", "pollen", "pm25", "ozone"] as const;
export type StreamName = (typeof ALL_STREAMS)[number];

export interface ViewState {
  patient: string | null;
  from: string | null; // visible window, ISO dates
  to: string | null;
  learningEnd: string | null;
  streams: StreamName[];
  season: string | null;
}

export function defaultViewState(): ViewState {
  return {
    patient: null,
    from: null,
    to: null,
    learningEnd: null,
    streams: [...ALL_STREAMS],
    season: null,
  };
}

export function encodeState(state: ViewState): string {
  const params = new URLSearchParams();
  if (state.patient) params.set("patient", state.patient);
  if (state.from) params.set("from", state.from);
  if (state.to) params.set("to", state.to);
  if (state.learningEnd) params.set("learning_end", state.learningEnd);
  if (state.streams.length !== ALL_STREAMS.length) params.set("streams", state.streams.join(","));
  if (state.season) params.set("season", state.season);
  return params.toString();
}

export function decodeState(query: string): ViewState {
  const params = new URLSearchParams(query);
  const state = defaultViewState();
  state.patient = params.get("patient");
  state.from = params.get("from");
  state.to = params.get("to");
  state.learningEnd = params.get("learning_end");
  state.season = params.get("season");
  const streams = params.get("streams");
  if (streams !== null) {
    state.streams = streams
      .split(",")
      .filter((s): s is StreamName => (ALL_STREAMS as readonly string[]).includes(s));
  }
  return state;
}

function inWindow(day: string, state: ViewState): boolean {
  if (state.from !== null && day < state.from) return false;
  if (state.to !== null && day > state.to) return false;
  return true;
}

/** The learning-end marker must stay inside the visible window. */
export function withLearningEnd(state: ViewState, learningEnd: string): ViewState {
  if (!/^\d{4}-\d{2}-\d{2}$/.test(learningEnd)) {
    throw new RangeError(`not a date: ${learningEnd}`);
  }
  if (!inWindow(learningEnd, state)) {
    throw new RangeError(`learning end ${learningEnd} lies outside the visible window`);
  }
  return { ...state, learningEnd };
}

export function withWindow(state: ViewState, from: string | null, to: string | null): ViewState {
  const next = { ...state, from, to };
  if (next.learningEnd !== null && !inWindow(next.learningEnd, next)) {
    next.learningEnd = null; // marker no longer visible; drop rather than lie
  }
  return next;
}

/** Stream toggles never touch fetched data; they only change visibility. */
export function toggleStream(state: ViewState, stream: StreamName): ViewState {
  const streams = state.streams.includes(stream)
    ? state.streams.filter((s) => s !== stream)
    : [...state.streams, stream].sort(
        (a, b) => ALL_STREAMS.indexOf(a) - ALL_STREAMS.indexOf(b),
      );
  return { ...state, streams };
}
