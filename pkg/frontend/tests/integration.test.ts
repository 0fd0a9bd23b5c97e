/**
 * End-to-end against a real bridged backend: spawns `icsbed run` with the
 * HTTP bridge, drives it through the same client the panel uses, and checks
 * the operator-visible state transitions happen at interactive latency.
 */
import { spawn, ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { ApiClient, startUpdates } from "../src/api.js";
import { Snapshot, UiAction, UiModel, initialModel, reduce } from "../src/model.js";

const PORT = 8931;
const BASE = `http://127.0.0.1:${PORT}`;

let backend: ChildProcess;
const client = new ApiClient(BASE);

async function waitForBackend(timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    try {
      const snap = await client.getState();
      if (snap.last_update_us >= 0) return;
    } catch {
      // not listening yet
    }
    if (Date.now() > deadline) throw new Error("backend never came up");
    await sleep(100);
  }
}

async function waitForState(
  want: number,
  timeoutMs: number,
  read: () => Promise<Snapshot>,
): Promise<number> {
  const t0 = Date.now();
  for (;;) {
    const snap = await read();
    if (snap.plc_state === want) return Date.now() - t0;
    if (Date.now() - t0 > timeoutMs) {
      throw new Error(`state ${want} not reached in ${timeoutMs}ms (at ${snap.plc_state})`);
    }
    await sleep(40);
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

beforeAll(async () => {
  // idle plant: no scripted operator, this test is the operator
  const dir = mkdtempSync(join(tmpdir(), "hmi-e2e-"));
  const config = join(dir, "idle.json");
  writeFileSync(config, JSON.stringify({
    name: "idle", seed: 1, duration_s: 600, operator: [], attacks: [],
  }));
  backend = spawn("icsbed", ["run", config, "--bridge-http", String(PORT)], {
    stdio: ["ignore", "pipe", "pipe"],
    env: { ...process.env, ICSBED_OUT_DIR: dir },
  });
  backend.on("error", (err) => {
    throw err;
  });
  await waitForBackend();
}, 40_000);

afterAll(() => {
  backend?.kill("SIGTERM");
});

describe("operator panel against a live backend", () => {
  it("starts in state 1 with fresh sensor data", async () => {
    const snap = await client.getState();
    expect(snap.plc_state).toBe(1);
    expect(snap.stale).toBe(false);
    expect(snap.sensors).toHaveProperty("barrier_a");
  });

  it("Order moves the displayed state 1 -> 2 within 1.2 s wall", async () => {
    await client.order();
    const elapsed = await waitForState(2, 1200, () => client.getState());
    expect(elapsed).toBeLessThanOrEqual(1200);
  }, 10_000);

  it("e-stop brings the plant to error, reset returns it to init", async () => {
    await client.estop();
    await waitForState(6, 3000, () => client.getState());
    await client.reset();
    await waitForState(1, 3000, () => client.getState());
  }, 15_000);

  it("manual motor control is refused in automatic mode", async () => {
    await expect(client.control("punch", "down")).rejects.toThrow(/409/);
    await client.setManual(true);
    await sleep(600); // one HMI poll so the mode is visible
    await client.control("punch", "down");
    await sleep(600);
    await client.control("punch", "stop");
    const snap = await client.getState();
    expect(snap.manual_mode).toBe(true);
    expect(snap.sensors!["limit_upper"]).toBe(false);
    await client.setManual(false);
  }, 15_000);

  it("feeds the reducer from the live event stream", async () => {
    let model: UiModel = initialModel();
    const dispatch = (a: UiAction) => {
      model = reduce(model, a);
    };
    const stop = startUpdates(client, BASE, dispatch);
    const deadline = Date.now() + 5000;
    while (model.connection !== "live") {
      if (Date.now() > deadline) {
        stop();
        throw new Error("never went live from the event stream");
      }
      await sleep(50);
    }
    stop();
    expect(model.snapshot).not.toBeNull();
    expect(model.snapshot!.last_update_us).toBeGreaterThanOrEqual(0);
  }, 10_000);
});
