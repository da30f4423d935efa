/**
 * Poll-based metrics dashboard state.
 *
 * Every poll pulls only the epoch reports it has not seen yet
 * (GET /metrics?start=N), plus the current service status and the
 * top-ranked attributes. All numbers come from the service; the poller
 * only accumulates and reshapes them into chart series.
 */

import { ApiClient, ServiceUnreachable } from "./api.js";
import type {
  EpochReport,
  FeaturesResponse,
  PerClassMetrics,
  StatusResponse,
} from "./types.js";

export interface DashboardSnapshot {
  reports: EpochReport[];
  status: StatusResponse | null;
  features: FeaturesResponse | null;
  unreachable: boolean;
}

export interface DashboardOptions {
  intervalMs?: number;
  topK?: number;
  onUpdate?: (snapshot: DashboardSnapshot) => void;
}

export class MetricsPoller {
  private reports: EpochReport[] = [];
  private status: StatusResponse | null = null;
  private features: FeaturesResponse | null = null;
  private unreachable = false;
  private timer: ReturnType<typeof setInterval> | null = null;
  private readonly intervalMs: number;
  private readonly topK: number;
  private readonly onUpdate: (snapshot: DashboardSnapshot) => void;

  constructor(private readonly api: ApiClient, options: DashboardOptions = {}) {
    this.intervalMs = options.intervalMs ?? 2000;
    this.topK = options.topK ?? 10;
    this.onUpdate = options.onUpdate ?? (() => {});
  }

  snapshot(): DashboardSnapshot {
    return {
      reports: [...this.reports],
      status: this.status,
      features: this.features,
      unreachable: this.unreachable,
    };
  }

  /** One poll: fetch whatever is new, swallow unreachability into state. */
  async tick(): Promise<void> {
    try {
      const [status, metrics, features] = await Promise.all([
        this.api.getStatus(),
        this.api.getMetrics({ start: this.reports.length }),
        this.api.getFeatures(this.topK),
      ]);
      if (metrics.total < this.reports.length) {
        this.reports = []; // the service restarted with a shorter history
      }
      this.reports = [...this.reports, ...metrics.reports].slice(0, metrics.total);
      this.status = status;
      this.features = features;
      this.unreachable = false;
    } catch (err) {
      if (!(err instanceof ServiceUnreachable)) throw err;
      this.unreachable = true; // keep the last good data on screen
    }
    this.onUpdate(this.snapshot());
  }

  start(): void {
    if (this.timer !== null) return;
    void this.tick();
    this.timer = setInterval(() => void this.tick(), this.intervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }
}

/** True when the reports carry multiclass (macro-averaged) metrics. */
export function isMulticlass(reports: EpochReport[]): boolean {
  return reports.length > 0 && "macro_sensitivity" in reports[0].metrics;
}

/**
 * Per-epoch series for one headline metric. Multiclass reports store
 * macro averages under macro_<name>; binary reports use the bare name.
 * Epochs where the metric was undefined (empty denominator) yield null.
 */
export function metricSeries(
  reports: EpochReport[],
  metric: "sensitivity" | "specificity" | "accuracy" | "f1",
): Array<number | null> {
  return reports.map((r) => {
    const m = r.metrics;
    const value = (`macro_${metric}` in m ? m[`macro_${metric}`] : m[metric]) as
      | number
      | null
      | undefined;
    return typeof value === "number" ? value : null;
  });
}

export function aucSeries(reports: EpochReport[]): Array<number | null> {
  return reports.map((r) => r.auc);
}

export function labeledFractionSeries(reports: EpochReport[]): Array<number | null> {
  return reports.map((r) => r.labeled_fraction_cumulative);
}

export interface ClassPanel {
  className: string;
  sensitivity: Array<number | null>;
  specificity: Array<number | null>;
  f1: Array<number | null>;
}

/**
 * One panel per class for multiclass runs, in class-index order. Binary
 * runs have no per_class block and yield no panels.
 */
export function perClassPanels(reports: EpochReport[]): ClassPanel[] {
  if (reports.length === 0) return [];
  const first = reports[0].metrics["per_class"] as PerClassMetrics[] | undefined;
  if (!first) return [];
  return first.map((cls, idx) => ({
    className: cls.class_name,
    sensitivity: reports.map((r) => perClassValue(r, idx, "sensitivity")),
    specificity: reports.map((r) => perClassValue(r, idx, "specificity")),
    f1: reports.map((r) => perClassValue(r, idx, "f1")),
  }));
}

function perClassValue(
  report: EpochReport,
  classIndex: number,
  field: "sensitivity" | "specificity" | "f1",
): number | null {
  const block = report.metrics["per_class"] as PerClassMetrics[] | undefined;
  const value = block?.[classIndex]?.[field];
  return typeof value === "number" ? value : null;
}

/** Attribute names to highlight, in rank order. */
export function topAttributes(features: FeaturesResponse | null): string[] {
  return features === null ? [] : features.entries.map((e) => e.attribute);
}
