/**
 * Wire types for the evodetect service's /v1 JSON API.
 *
 * Every interface mirrors the service's response schema verbatim; the
 * console never computes or mutates record data, it only renders what
 * the service returns (single source of truth).
 */

export interface QueueItem {
  record_id: string;
  values: number[];
  attribute_names: string[];
  suggested_class: string;
  /** Per-class decision scores, keyed by class name. */
  scores: Record<string, number>;
  epoch_index: number;
  status: "pending" | "verified";
  verdict_class: string | null;
  verdict_time: number | null;
}

export interface QueueResponse {
  items: QueueItem[];
  total: number;
  page: number;
  page_size: number;
}

export interface VerdictResponse {
  record_id: string;
  status: string;
  epoch_committed: boolean;
}

export interface MissedResponse {
  record_id: string;
  status: string;
}

/** One committed epoch: counts plus the metric dict for that epoch. */
export interface EpochReport {
  epoch_index: number;
  n: number;
  flagged: number;
  missed: number;
  verdict_counts: Record<string, number>;
  labeled_fraction_cumulative: number;
  metrics: Record<string, unknown>;
  partial: boolean;
  auc: number | null;
  warnings: string[];
  error: string | null;
}

export interface MetricsResponse {
  reports: EpochReport[];
  total: number;
}

export interface FeatureEntry {
  rank: number;
  attribute: string;
  weight: number;
}

export interface FeaturesResponse {
  lam: number;
  kind: string;
  entries: FeatureEntry[];
}

export interface OpenEpochStatus {
  epoch_index: number;
  flagged: number;
  verified: number;
  pending: number;
}

export interface StatusResponse {
  mode: "live" | "replay";
  model: string;
  class_names: string[];
  attribute_names: string[];
  epoch_size: number;
  epochs_run: number;
  records_seen: number;
  verdicts_seen: number;
  labeled_fraction_cumulative: number;
  buffered: number;
  open_epoch: OpenEpochStatus | null;
  replay_exhausted: boolean;
}

/** Per-class one-vs-rest block inside a multiclass metrics dict. */
export interface PerClassMetrics {
  class_index: number;
  class_name: string;
  sensitivity: number | null;
  specificity: number | null;
  accuracy: number | null;
  f1: number | null;
}
