/**
 * Wire-up: one model, one client, re-render on every action.
 *
 * Serve the backend with `icsbed run baseline --bridge-http 8000` and open
 * index.html (same origin or with ?api=http://127.0.0.1:8000).
 */
import { ApiClient, startUpdates } from "./api.js";
import { UiAction, UiModel, initialModel, reduce } from "./model.js";
import { PanelCallbacks, render } from "./panels.js";

const baseUrl =
  new URLSearchParams(window.location.search).get("api") ?? "";
const client = new ApiClient(baseUrl);
const root = document.getElementById("app");
if (!root) throw new Error("missing #app element");

let model: UiModel = initialModel();

function dispatch(action: UiAction): void {
  const next = reduce(model, action);
  if (next !== model) {
    model = next;
    render(root!, model, callbacks);
  }
}

/** Command failures surface as alarms instead of vanishing into console. */
function guard(work: () => Promise<unknown>): void {
  work().catch((err: unknown) => {
    dispatch({ kind: "alarm", t_us: model.snapshot?.t_us ?? 0, text: String(err) });
  });
}

const callbacks: PanelCallbacks = {
  onOrder: () => guard(() => client.order()),
  onReset: () => guard(() => client.reset()),
  onEstop: () => guard(() => client.estop()),
  onManualMode: (manual) => guard(() => client.setManual(manual)),
  onMotor: (motor, dir) => guard(() => client.control(motor, dir)),
};

render(root, model, callbacks);
startUpdates(client, baseUrl, dispatch);
