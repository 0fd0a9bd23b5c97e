/**
 * Operator panel view model.
 *
 * A pure reducer turns incoming snapshots, alarms, network failures, and
 * clock ticks into one immutable UiModel. Rendering and transport never
 * touch each other; both speak only to this module, so every display rule
 * (what is shown, what is clickable) is testable without a browser.
 */

/** One PLC state snapshot as served by GET /api/state. */
export interface Snapshot {
  /** Numeric PLC program state, 1..6. */
  plc_state: number;
  /** Human-readable name for plc_state. */
  state_name: string;
  /** Light barrier and punch limit switches, by name. */
  sensors: Record<string, boolean> | null;
  /** Raw PLC command coils 0..7. */
  coils: boolean[] | null;
  order_count: number;
  cycle_count: number;
  error_code: number;
  manual_mode: boolean;
  damaged: boolean;
  /** True when the backend's own PLC poll is overdue. */
  stale: boolean;
  /** Virtual time of the last successful PLC poll; -1 before the first. */
  last_update_us: number;
  /** Virtual time the snapshot was served at. */
  t_us: number;
}

/** Health of the browser's link to the operator API. */
export type Connection = "live" | "stale" | "down";

export interface Alarm {
  t_us: number;
  text: string;
}

export interface UiModel {
  snapshot: Snapshot | null;
  connection: Connection;
  alarms: Alarm[];
  /** Wall-clock ms of the last successful snapshot delivery. */
  receivedAtMs: number;
}

export type UiAction =
  | { kind: "snapshot"; snapshot: Snapshot; atMs: number }
  | { kind: "alarm"; t_us: number; text: string }
  | { kind: "fetch_error"; atMs: number }
  | { kind: "tick"; atMs: number };

/** No data for this long (wall ms) means the connection is down. */
export const DOWN_AFTER_MS = 3000;

/** Alarms older than the newest this many entries are dropped. */
export const MAX_ALARMS = 50;

export function initialModel(): UiModel {
  return { snapshot: null, connection: "down", alarms: [], receivedAtMs: -1 };
}

/**
 * Apply one action. Out-of-order snapshots (an older last_update_us than
 * what is already shown) are ignored so a late poll response can never
 * roll the display backwards after a fresher SSE event.
 */
export function reduce(model: UiModel, action: UiAction): UiModel {
  switch (action.kind) {
    case "snapshot": {
      const current = model.snapshot;
      if (current && action.snapshot.last_update_us < current.last_update_us) {
        return model;
      }
      return classify({
        ...model,
        snapshot: action.snapshot,
        receivedAtMs: action.atMs,
      }, action.atMs);
    }
    case "alarm": {
      const alarms = [...model.alarms, { t_us: action.t_us, text: action.text }];
      return { ...model, alarms: alarms.slice(-MAX_ALARMS) };
    }
    case "fetch_error":
      return { ...model, connection: "down" };
    case "tick":
      return classify(model, action.atMs);
  }
}

function classify(model: UiModel, nowMs: number): UiModel {
  let connection: Connection;
  if (model.receivedAtMs < 0 || nowMs - model.receivedAtMs > DOWN_AFTER_MS) {
    connection = "down";
  } else if (model.snapshot && model.snapshot.stale) {
    connection = "stale";
  } else {
    connection = "live";
  }
  return model.connection === connection ? model : { ...model, connection };
}

/** Order / reset / mode commands are allowed only on a live connection. */
export function commandsEnabled(model: UiModel): boolean {
  return model.connection === "live";
}

/**
 * Manual motor buttons additionally require the PLC to be in manual mode;
 * in automatic mode the backend would reject them with 409 anyway.
 */
export function manualMotorsEnabled(model: UiModel): boolean {
  return commandsEnabled(model) && !!model.snapshot?.manual_mode;
}

/** Reset is only meaningful from the error state (6). */
export function resetVisible(model: UiModel): boolean {
  return model.snapshot?.plc_state === 6;
}
