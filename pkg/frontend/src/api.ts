/**
 * HTTP client for the operator bridge.
 *
 * Live updates arrive over the server-sent event stream at /api/events.
 * If the stream drops or goes silent, a 500 ms poll of /api/state takes
 * over within two seconds while the stream reconnects with backoff; the
 * first stream message stops the poll again. Either path feeds the same
 * reducer, which dedupes by last_update_us, so overlap is harmless.
 */
import type { Snapshot, UiAction } from "./model.js";

export type FetchFn = typeof fetch;

/** Wall ms between /api/state polls while the event stream is unhealthy. */
export const POLL_INTERVAL_MS = 500;

/** Stream silence (no data, no keepalive) tolerated before polling starts. */
export const STREAM_SILENCE_MS = 1500;

const BACKOFF_START_MS = 500;
const BACKOFF_CAP_MS = 5000;

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchFn = fetch.bind(globalThis),
  ) {}

  async getState(): Promise<Snapshot> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/state`);
    if (!resp.ok) throw new Error(`GET /api/state: ${resp.status}`);
    return (await resp.json()) as Snapshot;
  }

  order(): Promise<Snapshot> {
    return this.post("/api/order");
  }

  reset(): Promise<Snapshot> {
    return this.post("/api/reset");
  }

  estop(): Promise<Snapshot> {
    return this.post("/api/estop");
  }

  setManual(manual: boolean): Promise<Snapshot> {
    return this.post("/api/mode", { manual });
  }

  control(motor: "conveyor" | "punch", dir: string): Promise<Snapshot> {
    return this.post("/api/control", { motor, dir });
  }

  private async post(path: string, body?: unknown): Promise<Snapshot> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: body === undefined ? {} : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!resp.ok) {
      const detail = await resp.text().catch(() => "");
      throw new Error(`POST ${path}: ${resp.status} ${detail}`);
    }
    return (await resp.json()) as Snapshot;
  }
}

/** Translate one raw SSE event payload into a reducer action. */
export function actionFromEvent(data: unknown, atMs: number): UiAction | null {
  if (typeof data !== "object" || data === null) return null;
  const ev = data as Record<string, unknown>;
  if (ev["kind"] === "snapshot") {
    return { kind: "snapshot", snapshot: ev as unknown as Snapshot, atMs };
  }
  if (ev["kind"] === "alarm") {
    return {
      kind: "alarm",
      t_us: Number(ev["t_us"] ?? 0),
      text: String(ev["alarm"] ?? "alarm"),
    };
  }
  return null;
}

/**
 * Split incremental SSE text into complete events, returning the leftover
 * partial tail. Comment lines (keepalives) count as traffic but yield no
 * payload.
 */
export function parseSseChunk(buffer: string): { events: string[]; rest: string } {
  const events: string[] = [];
  let rest = buffer;
  for (;;) {
    const sep = rest.indexOf("\n\n");
    if (sep < 0) break;
    const block = rest.slice(0, sep);
    rest = rest.slice(sep + 2);
    const dataLines = block
      .split("\n")
      .filter((line) => line.startsWith("data:"))
      .map((line) => line.slice(5).trimStart());
    if (dataLines.length) events.push(dataLines.join("\n"));
  }
  return { events, rest };
}

/**
 * Keep the UI fed with actions forever. Returns a stop function.
 *
 * The watchdog runs every POLL_INTERVAL_MS: when the stream has been silent
 * past STREAM_SILENCE_MS it polls /api/state directly, so the fallback is
 * delivering fresh state well inside two seconds of a stream loss.
 */
export function startUpdates(
  client: ApiClient,
  baseUrl: string,
  dispatch: (action: UiAction) => void,
  fetchFn: FetchFn = fetch.bind(globalThis),
  nowMs: () => number = () => Date.now(),
): () => void {
  let stopped = false;
  let lastTrafficMs = nowMs();
  let backoffMs = BACKOFF_START_MS;
  let abort = new AbortController();

  const streamLoop = async () => {
    while (!stopped) {
      try {
        abort = new AbortController();
        const resp = await fetchFn(`${baseUrl}/api/events`, { signal: abort.signal });
        if (!resp.ok || !resp.body) throw new Error(`stream: ${resp.status}`);
        const reader = resp.body.getReader();
        const decoder = new TextDecoder();
        let buffer = "";
        for (;;) {
          const { done, value } = await reader.read();
          if (done || stopped) break;
          lastTrafficMs = nowMs();
          backoffMs = BACKOFF_START_MS;
          buffer += decoder.decode(value, { stream: true });
          const { events, rest } = parseSseChunk(buffer);
          buffer = rest;
          for (const raw of events) {
            const action = actionFromEvent(JSON.parse(raw), nowMs());
            if (action) dispatch(action);
          }
        }
      } catch {
        // fall through to backoff; the watchdog keeps the UI fed meanwhile
      }
      if (stopped) return;
      await sleep(backoffMs);
      backoffMs = Math.min(backoffMs * 2, BACKOFF_CAP_MS);
    }
  };

  const watchdog = setInterval(async () => {
    const at = nowMs();
    dispatch({ kind: "tick", atMs: at });
    if (at - lastTrafficMs <= STREAM_SILENCE_MS) return;
    try {
      const snapshot = await client.getState();
      dispatch({ kind: "snapshot", snapshot, atMs: nowMs() });
    } catch {
      dispatch({ kind: "fetch_error", atMs: nowMs() });
    }
  }, POLL_INTERVAL_MS);

  void streamLoop();
  return () => {
    stopped = true;
    clearInterval(watchdog);
    abort.abort();
  };
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
