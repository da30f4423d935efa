/**
 * Browser bootstrap: wires the queue controller and metrics poller to
 * the DOM. All markup is rendered from service data; nothing here
 * computes weights or metrics.
 *
 * The service origin defaults to the page's own origin and can be
 * overridden with ?api=http://host:port for local development.
 */

import { ApiClient } from "./api.js";
import {
  aucSeries,
  isMulticlass,
  labeledFractionSeries,
  MetricsPoller,
  metricSeries,
  perClassPanels,
  topAttributes,
  type DashboardSnapshot,
} from "./dashboard.js";
import { renderLineChart, renderValueBars, type Series } from "./charts.js";
import { QueueController, type QueueSnapshot } from "./queue.js";
import type { StatusResponse } from "./types.js";

const POLL_INTERVAL_MS = 2000;
const COLORS = ["#2563eb", "#dc2626", "#059669", "#d97706", "#7c3aed"];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function apiBase(): string {
  const override = new URLSearchParams(window.location.search).get("api");
  return (override ?? window.location.origin).replace(/\/$/, "");
}

function renderStatusLine(status: StatusResponse | null, unreachable: boolean): string {
  if (status === null) return unreachable ? "service unreachable" : "connecting…";
  const open =
    status.open_epoch === null
      ? "no open epoch"
      : `epoch ${status.open_epoch.epoch_index + 1}: ${status.open_epoch.pending} pending of ${status.open_epoch.flagged} flagged`;
  const reach = unreachable ? " — connection lost, retrying" : "";
  return (
    `${status.model} · ${status.mode} mode · ${status.records_seen} records · ` +
    `${status.epochs_run} epochs committed · ${open}${reach}`
  );
}

function renderQueueList(snapshot: QueueSnapshot): string {
  if (snapshot.items.length === 0) {
    return `<p class="empty">No pending verifications.</p>`;
  }
  return snapshot.items
    .map((item) => {
      const selected = snapshot.selected?.record_id === item.record_id;
      return (
        `<button class="queue-row${selected ? " selected" : ""}" data-id="${escapeHtml(item.record_id)}">` +
        `<span class="rid">${escapeHtml(item.record_id)}</span>` +
        `<span class="badge">epoch ${item.epoch_index + 1}</span>` +
        `<span class="suggested">${escapeHtml(item.suggested_class)}</span>` +
        `</button>`
      );
    })
    .join("");
}

function renderDetail(snapshot: QueueSnapshot, classNames: string[]): string {
  const item = snapshot.selected;
  if (item === null) return `<p class="empty">Select a record to review.</p>`;
  const scores = Object.entries(item.scores)
    .map(([name, score]) => `<li>${escapeHtml(name)}: ${score.toFixed(4)}</li>`)
    .join("");
  const buttons = classNames
    .map(
      (name) =>
        `<button class="verdict-btn${name === item.suggested_class ? " suggested" : ""}" ` +
        `data-id="${escapeHtml(item.record_id)}" data-class="${escapeHtml(name)}">${escapeHtml(name)}</button>`,
    )
    .join("");
  return (
    `<h3>${escapeHtml(item.record_id)} <span class="badge">epoch ${item.epoch_index + 1}</span></h3>` +
    `<p>Suggested: <strong>${escapeHtml(item.suggested_class)}</strong></p>` +
    `<ul class="scores">${scores}</ul>` +
    renderValueBars(item.attribute_names, item.values, new Set(snapshot.highlights)) +
    `<div class="verdict-actions">${buttons}</div>`
  );
}

function renderDashboard(snapshot: DashboardSnapshot): string {
  const { reports } = snapshot;
  if (reports.length === 0) {
    return `<p class="empty">No epoch reports yet — charts appear after the first committed epoch.</p>`;
  }
  const headline: Series[] = [
    { label: "sensitivity", values: metricSeries(reports, "sensitivity"), color: COLORS[0] },
    { label: "specificity", values: metricSeries(reports, "specificity"), color: COLORS[1] },
    { label: "accuracy", values: metricSeries(reports, "accuracy"), color: COLORS[2] },
  ];
  const charts = [
    renderLineChart(isMulticlass(reports) ? "Macro metrics per epoch" : "Metrics per epoch", headline),
    renderLineChart("AUC per epoch", [{ label: "auc", values: aucSeries(reports), color: COLORS[3] }]),
    renderLineChart("Cumulative labeled fraction", [
      { label: "labeled", values: labeledFractionSeries(reports), color: COLORS[4] },
    ]),
  ];
  const panels = perClassPanels(reports).map((panel, i) =>
    renderLineChart(`Class: ${panel.className}`, [
      { label: "sensitivity", values: panel.sensitivity, color: COLORS[i % COLORS.length] },
      { label: "specificity", values: panel.specificity, color: "#64748b" },
    ]),
  );
  const ranked = topAttributes(snapshot.features);
  const rankedList =
    ranked.length === 0
      ? ""
      : `<div class="ranked"><h3>Top attributes</h3><ol>${ranked
          .map((name) => `<li>${escapeHtml(name)}</li>`)
          .join("")}</ol></div>`;
  return `<div class="charts">${charts.join("")}</div>` +
    (panels.length > 0 ? `<h3>Per-class performance</h3><div class="charts">${panels.join("")}</div>` : "") +
    rankedList;
}

function main(): void {
  const api = new ApiClient(apiBase());
  let classNames: string[] = [];

  const queue = new QueueController(api, (snapshot) => {
    el("queue-list").innerHTML = renderQueueList(snapshot);
    el("detail").innerHTML = renderDetail(snapshot, classNames);
    const banner = el("banner");
    banner.textContent = snapshot.banner ?? "";
    banner.classList.toggle("visible", snapshot.banner !== null);
  });

  const poller = new MetricsPoller(api, {
    intervalMs: POLL_INTERVAL_MS,
    onUpdate: (snapshot) => {
      el("status-line").textContent = renderStatusLine(snapshot.status, snapshot.unreachable);
      el("dashboard").innerHTML = renderDashboard(snapshot);
      classNames = snapshot.status?.class_names ?? classNames;
      queue.setHighlights(topAttributes(snapshot.features));
      void queue.refresh(); // queue rides the same poll cadence
    },
  });

  el("queue-list").addEventListener("click", (event) => {
    const row = (event.target as HTMLElement).closest<HTMLElement>(".queue-row");
    if (row?.dataset.id) queue.select(row.dataset.id);
  });

  el("detail").addEventListener("click", (event) => {
    const btn = (event.target as HTMLElement).closest<HTMLElement>(".verdict-btn");
    if (btn?.dataset.id && btn.dataset.class) {
      void queue.submitVerdict(btn.dataset.id, btn.dataset.class);
    }
  });

  el("missed-form").addEventListener("submit", (event) => {
    event.preventDefault();
    const form = event.target as HTMLFormElement;
    const recordId = (form.elements.namedItem("record_id") as HTMLInputElement).value.trim();
    const className = (form.elements.namedItem("class_name") as HTMLInputElement).value.trim();
    if (recordId !== "" && className !== "") {
      void queue.reportMissed(recordId, className).then((outcome) => {
        if (outcome.submitted) form.reset();
      });
    }
  });

  poller.start();
}

main();
