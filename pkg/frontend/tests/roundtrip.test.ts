/**
 * End-to-end round trip against the real service in replay-paused mode:
 * label every flagged item of the first epoch through the console
 * controllers and watch the dashboard pick up the committed epoch.
 *
 * Requires the evodetect Python package to be installed (the `evodetect`
 * entry point on PATH), which is how this repository ships.
 */

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { MetricsPoller } from "../src/dashboard.js";
import { QueueController } from "../src/queue.js";

const POLL_INTERVAL_MS = 1000;

let workDir: string;
let service: ChildProcess;
let serviceLog = "";
let baseUrl: string;
let verdictPosts = 0;

const countingFetch: typeof fetch = (input, init) => {
  if (init?.method === "POST" && String(input).endsWith("/v1/labels")) {
    verdictPosts += 1;
  }
  return fetch(input, init);
};

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = createServer();
    probe.once("error", reject);
    probe.listen(0, "127.0.0.1", () => {
      const address = probe.address();
      if (address === null || typeof address === "string") {
        reject(new Error("no port assigned"));
        return;
      }
      probe.close(() => resolve(address.port));
    });
  });
}

async function waitForService(api: ApiClient, deadlineMs: number): Promise<void> {
  const deadline = Date.now() + deadlineMs;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    try {
      await api.getStatus();
      return;
    } catch (err) {
      lastError = err;
      await new Promise((r) => setTimeout(r, 200));
    }
  }
  throw new Error(`service did not come up: ${lastError}\n--- service log ---\n${serviceLog}`);
}

beforeAll(async () => {
  workDir = mkdtempSync(join(tmpdir(), "evodetect-ui-"));
  const csvPath = join(workDir, "telemetry.csv");
  const generated = spawnSync(
    "evodetect",
    ["synth-gen", "--out", csvPath, "--seed", "3", "--epochs", "2", "--epoch-size", "40", "--d", "8"],
    { encoding: "utf8" },
  );
  if (generated.status !== 0) {
    throw new Error(`synth-gen failed: ${generated.stderr}`);
  }

  const port = await freePort();
  const configPath = join(workDir, "service.json");
  writeFileSync(
    configPath,
    JSON.stringify({
      mode: "replay",
      model: "mcl21ls",
      seed: 3,
      epoch_size: 40,
      input_csv: csvPath,
      replay_oracle: false,
      event_log: join(workDir, "events.jsonl"),
      port,
    }),
  );
  service = spawn("evodetect", ["serve", "--config", configPath], {
    stdio: ["ignore", "pipe", "pipe"],
  });
  service.stdout?.on("data", (chunk: Buffer) => (serviceLog += chunk.toString()));
  service.stderr?.on("data", (chunk: Buffer) => (serviceLog += chunk.toString()));

  baseUrl = `http://127.0.0.1:${port}`;
  await waitForService(new ApiClient(baseUrl), 30_000);
});

afterAll(async () => {
  if (service !== undefined && service.exitCode === null) {
    service.kill("SIGTERM");
    await new Promise<void>((resolve) => {
      const force = setTimeout(() => {
        service.kill("SIGKILL");
        resolve();
      }, 5000);
      service.once("exit", () => {
        clearTimeout(force);
        resolve();
      });
    });
  }
  rmSync(workDir, { recursive: true, force: true });
});

describe("console round trip (replay-paused service)", () => {
  it("labels one epoch, triggering exactly one detector update", async () => {
    const api = new ApiClient(baseUrl, countingFetch);
    const queue = new QueueController(api);

    // the first replay epoch is flagged and waiting for a human
    await queue.refresh();
    const pending = queue.snapshot().items;
    expect(pending.length).toBeGreaterThan(0);
    expect(new Set(pending.map((i) => i.epoch_index))).toEqual(new Set([0]));
    expect((await api.getMetrics()).total).toBe(0);

    // the dashboard is already watching before the last verdict lands
    const poller = new MetricsPoller(api, { intervalMs: POLL_INTERVAL_MS });
    poller.start();
    try {
      // double-click on the first item: one POST, one skip
      const first = pending[0];
      const [a, b] = await Promise.all([
        queue.submitVerdict(first.record_id, first.suggested_class),
        queue.submitVerdict(first.record_id, first.suggested_class),
      ]);
      expect(a.submitted).toBe(true);
      expect(b).toEqual({ submitted: false, reason: "duplicate_click" });

      let committed = false;
      for (const item of pending.slice(1)) {
        const outcome = await queue.submitVerdict(item.record_id, item.suggested_class);
        expect(outcome.submitted).toBe(true);
        committed = outcome.submitted && outcome.epochCommitted;
      }
      expect(committed).toBe(true); // the last verdict closed the epoch
      expect(verdictPosts).toBe(pending.length); // no duplicate verdict events

      // the newest epoch point reaches the dashboard within one poll interval
      const deadline = Date.now() + POLL_INTERVAL_MS + 500;
      while (poller.snapshot().reports.length === 0 && Date.now() < deadline) {
        await new Promise((r) => setTimeout(r, 50));
      }
      const snapshot = poller.snapshot();
      expect(snapshot.reports).toHaveLength(1);
      expect(snapshot.reports[0].partial).toBe(false);
      expect(snapshot.status?.epochs_run).toBe(1);
    } finally {
      poller.stop();
    }

    // exactly one update happened at the service, and the flagged set is settled
    const metrics = await api.getMetrics();
    expect(metrics.total).toBe(1);
    const verdictTotal = Object.values(metrics.reports[0].verdict_counts).reduce(
      (sum, count) => sum + count,
      0,
    );
    expect(verdictTotal).toBe(pending.length);
  });

  it("surfaces a verdict raced by another administrator as already verified", async () => {
    const api = new ApiClient(baseUrl, countingFetch);
    const queue = new QueueController(api);
    await queue.refresh();
    const pending = queue.snapshot().items;
    expect(pending.length).toBeGreaterThan(0); // epoch 1 auto-advanced into the queue
    const target = pending[0];

    // a colleague verifies the same record first, directly over the API
    await api.postVerdict(target.record_id, target.suggested_class);
    const direct = await api
      .postVerdict(target.record_id, target.suggested_class)
      .catch((e) => e);
    expect(direct).toBeInstanceOf(ApiError);
    expect((direct as ApiError).code).toBe("duplicate_verdict");

    // this console's click lands second and reports the race, not an error
    const outcome = await queue.submitVerdict(target.record_id, target.suggested_class);
    expect(outcome).toEqual({ submitted: false, reason: "already_verified" });
    expect(queue.snapshot().banner).toMatch(/already verified/i);

    // the stale pending entry disappears on the next refresh
    await queue.refresh();
    expect(
      queue.snapshot().items.some((i) => i.record_id === target.record_id),
    ).toBe(false);
  });
});
