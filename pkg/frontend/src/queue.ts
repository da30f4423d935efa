/**
 * Review-queue controller: the administrator's verification workflow.
 *
 * Holds the pending-item list and drives verdict submission with an
 * idempotent client: each record id submits at most once no matter how
 * many times the button fires. Status changes are optimistic — the item
 * flips to verified immediately and rolls back if the service rejects
 * the verdict for any reason other than "someone already verified it".
 */

import { ApiClient, ApiError, ServiceUnreachable } from "./api.js";
import type { QueueItem } from "./types.js";

export type SubmitOutcome =
  | { submitted: true; epochCommitted: boolean }
  | { submitted: false; reason: "duplicate_click" | "already_verified" | string };

export interface QueueSnapshot {
  items: QueueItem[];
  selected: QueueItem | null;
  /** Human-readable banner; null when the last operation succeeded. */
  banner: string | null;
  /** True when the last refresh failed and the list may be stale. */
  stale: boolean;
  highlights: string[];
}

export class QueueController {
  private items: QueueItem[] = [];
  private selectedId: string | null = null;
  private banner: string | null = null;
  private stale = false;
  private highlights: string[] = [];
  /** Record ids with a verdict in flight or already submitted. */
  private readonly submitted = new Set<string>();

  constructor(
    private readonly api: ApiClient,
    private readonly onChange: (snapshot: QueueSnapshot) => void = () => {},
  ) {}

  snapshot(): QueueSnapshot {
    return {
      items: [...this.items],
      selected: this.items.find((i) => i.record_id === this.selectedId) ?? null,
      banner: this.banner,
      stale: this.stale,
      highlights: [...this.highlights],
    };
  }

  private emit(): void {
    this.onChange(this.snapshot());
  }

  /**
   * Reload the pending list. The service returns items oldest-first
   * (flag order within epoch, epochs in sequence) and the list is kept
   * verbatim, so an item verified by another administrator disappears
   * here. A network failure keeps the current list and raises a retry
   * banner instead of wiping state.
   */
  async refresh(): Promise<void> {
    try {
      const page = await this.api.getQueue({ status: "pending", pageSize: 500 });
      this.items = page.items;
      this.stale = false;
      this.banner = null;
      if (this.selectedId !== null && !this.items.some((i) => i.record_id === this.selectedId)) {
        this.selectedId = null;
      }
    } catch (err) {
      if (err instanceof ServiceUnreachable) {
        this.stale = true;
        this.banner = "Service unreachable — showing last known queue, will retry.";
      } else {
        this.banner = err instanceof Error ? err.message : String(err);
      }
    }
    this.emit();
  }

  select(recordId: string | null): void {
    this.selectedId = recordId;
    this.emit();
  }

  /** Top-ranked attribute names to highlight in the detail view. */
  setHighlights(names: string[]): void {
    this.highlights = [...names];
    this.emit();
  }

  /**
   * Submit one verdict. Repeat calls for the same record id (double
   * clicks, impatient retries) return without issuing a second POST.
   */
  async submitVerdict(recordId: string, className: string): Promise<SubmitOutcome> {
    if (this.submitted.has(recordId)) {
      return { submitted: false, reason: "duplicate_click" };
    }
    this.submitted.add(recordId);
    const index = this.items.findIndex((i) => i.record_id === recordId);
    const original = index >= 0 ? this.items[index] : null;
    if (original !== null) {
      // optimistic: the item leaves the pending list immediately
      this.items = this.items.filter((i) => i.record_id !== recordId);
      if (this.selectedId === recordId) this.selectedId = null;
      this.emit();
    }
    try {
      const response = await this.api.postVerdict(recordId, className);
      this.banner = null;
      this.emit();
      return { submitted: true, epochCommitted: response.epoch_committed };
    } catch (err) {
      if (err instanceof ApiError && err.code === "duplicate_verdict") {
        // someone else got there first; the optimistic removal stands
        this.banner = `Record ${recordId} was already verified.`;
        this.emit();
        return { submitted: false, reason: "already_verified" };
      }
      // genuine failure: roll back and allow a retry
      this.submitted.delete(recordId);
      if (original !== null && !this.items.some((i) => i.record_id === recordId)) {
        this.items = [
          ...this.items.slice(0, index),
          original,
          ...this.items.slice(index),
        ];
      }
      this.banner = err instanceof Error ? err.message : String(err);
      this.emit();
      return {
        submitted: false,
        reason: err instanceof ApiError ? err.code : "service_unreachable",
      };
    }
  }

  /** Report a record the detector passed as normal but that failed in truth. */
  async reportMissed(recordId: string, className: string): Promise<SubmitOutcome> {
    try {
      await this.api.postMissed(recordId, className);
      this.banner = null;
      this.emit();
      return { submitted: true, epochCommitted: false };
    } catch (err) {
      this.banner = err instanceof Error ? err.message : String(err);
      this.emit();
      return {
        submitted: false,
        reason: err instanceof ApiError ? err.code : "service_unreachable",
      };
    }
  }
}
