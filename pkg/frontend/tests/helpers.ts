/** Shared fetch-mocking helpers for the unit suites. */

import type { EpochReport, QueueItem } from "../src/types.js";

export interface RecordedCall {
  url: string;
  method: string;
  body: unknown;
}

export type Route = (url: string, init?: RequestInit) => Response | Promise<Response>;

export function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export function errorResponse(status: number, code: string, message: string): Response {
  return jsonResponse({ detail: { code, message } }, status);
}

/**
 * A fetch stand-in that records every call and delegates to a route
 * table keyed by "METHOD /path" prefixes (query string ignored).
 */
export function mockFetch(routes: Record<string, Route>) {
  const calls: RecordedCall[] = [];
  const fetchFn = async (url: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    const body = typeof init?.body === "string" ? JSON.parse(init.body) : undefined;
    calls.push({ url, method, body });
    const path = new URL(url).pathname;
    const key = `${method} ${path}`;
    const route = routes[key];
    if (route === undefined) {
      throw new Error(`unrouted request: ${key}`);
    }
    return route(url, init);
  };
  return { fetchFn, calls };
}

export function queueItem(overrides: Partial<QueueItem> = {}): QueueItem {
  return {
    record_id: "r0",
    values: [0.2, 0.8, 0.5],
    attribute_names: ["a0", "a1", "a2"],
    suggested_class: "cpu",
    scores: { normal: -0.1, memory: 0.2, cpu: 0.7 },
    epoch_index: 0,
    status: "pending",
    verdict_class: null,
    verdict_time: null,
    ...overrides,
  };
}

export function epochReport(index: number, overrides: Partial<EpochReport> = {}): EpochReport {
  return {
    epoch_index: index,
    n: 300,
    flagged: 30,
    missed: 0,
    verdict_counts: { cpu: 20, normal: 10 },
    labeled_fraction_cumulative: 0.1 * (index + 1),
    metrics: {
      macro_sensitivity: 0.9,
      macro_specificity: 0.95,
      macro_accuracy: 0.93,
      macro_f1: 0.91,
      per_class: ["normal", "memory", "cpu", "network", "disk"].map((name, i) => ({
        class_index: i,
        class_name: name,
        sensitivity: 0.9,
        specificity: 0.95,
        accuracy: 0.93,
        f1: 0.91,
      })),
    },
    partial: false,
    auc: 0.97,
    warnings: [],
    error: null,
    ...overrides,
  };
}
