/**
 * Operator panel rendering: three areas in plain DOM.
 *
 * - view: process state, counters, sensor lamps, connection badge, alarms
 * - order: the one production command
 * - control: e-stop (always armed), reset, manual mode and motor jogging
 *
 * render() rebuilds from the model every time; the model is small enough
 * that diffing would buy nothing.
 */
import {
  UiModel,
  commandsEnabled,
  manualMotorsEnabled,
  resetVisible,
} from "./model.js";

/** Everything a button in the panel can ask the backend to do. */
export interface PanelCallbacks {
  onOrder: () => void;
  onReset: () => void;
  onEstop: () => void;
  onManualMode: (manual: boolean) => void;
  onMotor: (motor: "conveyor" | "punch", dir: string) => void;
}

export function render(root: HTMLElement, model: UiModel, cb: PanelCallbacks): void {
  root.textContent = "";
  root.appendChild(viewArea(root.ownerDocument, model));
  root.appendChild(orderArea(root.ownerDocument, model, cb));
  root.appendChild(controlArea(root.ownerDocument, model, cb));
}

function viewArea(doc: Document, model: UiModel): HTMLElement {
  const area = section(doc, "view", "Process view");
  const snap = model.snapshot;

  const badge = doc.createElement("span");
  badge.id = "connection";
  badge.className = `badge badge-${model.connection}`;
  badge.textContent = model.connection;
  area.appendChild(badge);

  const state = doc.createElement("p");
  state.id = "plc-state";
  state.dataset["state"] = snap ? String(snap.plc_state) : "";
  state.textContent = snap
    ? `State ${snap.plc_state}: ${snap.state_name}`
    : "No data yet";
  area.appendChild(state);

  if (snap) {
    const counters = doc.createElement("p");
    counters.id = "counters";
    counters.textContent =
      `Orders ${snap.order_count} | Cycles ${snap.cycle_count}` +
      ` | Error ${snap.error_code}` +
      (snap.damaged ? " | WORKPIECE DAMAGED" : "");
    area.appendChild(counters);

    const lamps = doc.createElement("ul");
    lamps.id = "sensors";
    for (const [name, on] of Object.entries(snap.sensors ?? {})) {
      const li = doc.createElement("li");
      li.dataset["sensor"] = name;
      li.className = on ? "lamp on" : "lamp off";
      li.textContent = `${name}: ${on ? "on" : "off"}`;
      lamps.appendChild(li);
    }
    area.appendChild(lamps);
  }

  const alarms = doc.createElement("ul");
  alarms.id = "alarms";
  for (const alarm of model.alarms.slice(-5)) {
    const li = doc.createElement("li");
    li.textContent = `[${(alarm.t_us / 1e6).toFixed(1)}s] ${alarm.text}`;
    alarms.appendChild(li);
  }
  area.appendChild(alarms);
  return area;
}

function orderArea(doc: Document, model: UiModel, cb: PanelCallbacks): HTMLElement {
  const area = section(doc, "order", "Order");
  const btn = button(doc, "btn-order", "Place order", cb.onOrder);
  btn.disabled = !commandsEnabled(model);
  area.appendChild(btn);
  return area;
}

function controlArea(doc: Document, model: UiModel, cb: PanelCallbacks): HTMLElement {
  const area = section(doc, "control", "Control");

  // The e-stop must never be gated by UI state; the worst case of a
  // dead connection is a failed request, not a swallowed click.
  area.appendChild(button(doc, "btn-estop", "EMERGENCY STOP", cb.onEstop));

  if (resetVisible(model)) {
    const reset = button(doc, "btn-reset", "Reset", cb.onReset);
    reset.disabled = !commandsEnabled(model);
    area.appendChild(reset);
  }

  const manual = model.snapshot?.manual_mode ?? false;
  const mode = button(
    doc,
    "btn-mode",
    manual ? "Switch to automatic" : "Switch to manual",
    () => cb.onManualMode(!manual),
  );
  mode.disabled = !commandsEnabled(model);
  area.appendChild(mode);

  const motors = doc.createElement("div");
  motors.id = "motors";
  const jog: Array<["conveyor" | "punch", string, string]> = [
    ["conveyor", "fwd", "Conveyor fwd"],
    ["conveyor", "rev", "Conveyor rev"],
    ["conveyor", "stop", "Conveyor stop"],
    ["punch", "down", "Punch down"],
    ["punch", "up", "Punch up"],
    ["punch", "stop", "Punch stop"],
  ];
  for (const [motor, dir, label] of jog) {
    const btn = button(doc, `btn-${motor}-${dir}`, label, () => cb.onMotor(motor, dir));
    btn.disabled = !manualMotorsEnabled(model);
    motors.appendChild(btn);
  }
  area.appendChild(motors);
  return area;
}

function section(doc: Document, id: string, title: string): HTMLElement {
  const area = doc.createElement("section");
  area.id = `area-${id}`;
  const h = doc.createElement("h2");
  h.textContent = title;
  area.appendChild(h);
  return area;
}

function button(
  doc: Document,
  id: string,
  label: string,
  onClick: () => void,
): HTMLButtonElement {
  const btn = doc.createElement("button");
  btn.id = id;
  btn.textContent = label;
  btn.addEventListener("click", onClick);
  return btn;
}
