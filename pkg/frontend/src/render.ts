// HTML fragment builders. Pure string -> string so they are testable
// without a DOM; main.ts owns the actual elements.

import type {
  CacheRow,
  CapacityRow,
  SliceSummary,
} from "./derive.js";
import { fmtBytes, fmtMs, fmtRatio } from "./derive.js";
import type {
  Counters,
  EventRecord,
  HandoffReportView,
  SliceView,
} from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function bar(pct: number, tone: string): string {
  const width = Math.max(0, Math.min(100, pct)).toFixed(1);
  return `<div class="bar"><div class="fill ${tone}" style="width:${width}%"></div></div>`;
}

function capacityTone(pct: number): string {
  if (pct >= 90) return "t-red";
  if (pct >= 70) return "t-yellow";
  return "t-green";
}

export function renderCapacity(rows: CapacityRow[]): string {
  if (rows.length === 0) return `<p class="empty">no resources</p>`;
  const body = rows
    .map(
      (r) => `<tr>
  <td class="dim">${escapeHtml(r.kind)}</td>
  <td>${escapeHtml(r.id)}</td>
  <td class="num">${r.used.toFixed(2)} / ${r.total.toFixed(0)}</td>
  <td class="barcell">${bar(r.pct, capacityTone(r.pct))}</td>
  <td class="num">${r.pct.toFixed(1)}%</td>
</tr>`,
    )
    .join("");
  return `<table class="t">
<thead><tr><th>kind</th><th>resource</th><th class="num">used</th><th></th><th class="num">load</th></tr></thead>
<tbody>${body}</tbody></table>`;
}

export function renderSliceCard(slice: SliceView, summary: SliceSummary): string {
  const parts = slice.participants
    .map((p) => {
      const role = p.produce && p.consume ? "both" : p.produce ? "producer" : "consumer";
      return `<span class="chip" title="link ${escapeHtml(p.link)}">
${escapeHtml(p.pid)}<span class="dim">@${escapeHtml(p.poa)} ${role}</span></span>`;
    })
    .join(" ");
  const placement = Object.entries(slice.vnode_map)
    .map(([vn, node]) => `${escapeHtml(vn)}&rarr;${escapeHtml(node)}`)
    .join(", ");
  return `<div class="card slice">
  <div class="card-head">
    <span class="title">${escapeHtml(slice.name)}</span>
    <span class="dim">#${slice.slice_id}</span>
    <span class="badge ${slice.mobility_enabled ? "on" : "off"}">
      mobility ${slice.mobility_enabled ? "on" : "off"}</span>
  </div>
  <div class="kv">
    <span>${summary.participants} participants, ${summary.producers} producing</span>
    <span>${summary.published} published / ${summary.delivered} delivered</span>
    <span>mean delivery ${fmtMs(summary.meanDeliveryMs)}</span>
    <span>stretch ${summary.stretch === null ? "-" : summary.stretch.toFixed(3)}</span>
    <span>cache hits ${fmtRatio(summary.cacheHitRatio)}</span>
  </div>
  <div class="placement dim">${placement}</div>
  <div class="parts">${parts || '<span class="dim">nobody joined yet</span>'}</div>
</div>`;
}

export function renderCounters(totals: Counters): string {
  const cells = (Object.entries(totals) as [string, number][])
    .map(
      ([name, v]) =>
        `<div class="stat"><div class="label">${escapeHtml(name)}</div>
<div class="value">${v}</div></div>`,
    )
    .join("");
  return `<div class="stats">${cells}</div>`;
}

export function renderCaches(rows: CacheRow[]): string {
  if (rows.length === 0) return `<p class="empty">slice spans no forwarders</p>`;
  const body = rows
    .map((r) => {
      const pct = r.budget > 0 ? (100 * r.bytes) / r.budget : 0;
      return `<tr>
  <td>${escapeHtml(r.node)}</td>
  <td class="num">${r.pitSize}</td>
  <td class="num">${r.entries}</td>
  <td class="num">${fmtBytes(r.bytes)} / ${fmtBytes(r.budget)}</td>
  <td class="barcell">${bar(pct, "t-blue")}</td>
</tr>`;
    })
    .join("");
  return `<table class="t">
<thead><tr><th>node</th><th class="num">pit</th><th class="num">cached</th><th class="num">bytes</th><th></th></tr></thead>
<tbody>${body}</tbody></table>`;
}

export function renderHandoffs(reports: HandoffReportView[]): string {
  if (reports.length === 0) return `<p class="empty">no handoffs yet</p>`;
  const body = [...reports]
    .reverse()
    .map((r) => {
      const verdict = r.denied_reason
        ? `<span class="badge off">denied: ${escapeHtml(r.denied_reason)}</span>`
        : r.interests_lost > 0
          ? `<span class="badge warn">${r.interests_lost} lost</span>`
          : `<span class="badge on">lossless</span>`;
      const stretch =
        r.stretch_before === null
          ? "-"
          : `${r.stretch_before.toFixed(2)} &rarr; ${
              r.stretch_after === null ? "?" : r.stretch_after.toFixed(2)
            }`;
      return `<tr>
  <td class="num">${r.requested_at_ms.toFixed(0)}</td>
  <td>${escapeHtml(r.participant)} <span class="dim">#${r.slice}</span></td>
  <td>${escapeHtml(r.from_poa)} &rarr; ${escapeHtml(r.to_poa)}</td>
  <td class="num">${r.gap_ms.toFixed(0)}</td>
  <td class="num">${r.pending_at_detach}/${r.late_bound}</td>
  <td class="num">${stretch}</td>
  <td>${verdict}</td>
</tr>`;
    })
    .join("");
  return `<table class="t">
<thead><tr><th class="num">t (ms)</th><th>who</th><th>path</th>
<th class="num">gap</th><th class="num">pending/rebound</th>
<th class="num">stretch</th><th></th></tr></thead>
<tbody>${body}</tbody></table>`;
}

const KIND_TONES: Record<string, string> = {
  deliver: "t-green",
  publish: "t-blue",
  cmd: "t-purple",
  "cmd-error": "t-red",
  "handoff-detach": "t-yellow",
  "handoff-attach": "t-yellow",
  "drop-link-down": "t-red",
  "pit-expired": "t-orange",
  "fetch-abandoned": "t-red",
};

export function renderEvents(records: EventRecord[]): string {
  if (records.length === 0) return `<p class="empty">no events</p>`;
  const lines = records
    .map((r) => {
      const { t_ms, kind, slice, ...rest } = r;
      const tone = KIND_TONES[kind] ?? "";
      const detail = Object.entries(rest)
        .map(([k, v]) => `${escapeHtml(k)}=${escapeHtml(JSON.stringify(v))}`)
        .join(" ");
      return `<div class="ev">
  <span class="ev-t">${Number(t_ms).toFixed(3)}</span>
  <span class="ev-kind ${tone}">${escapeHtml(kind)}</span>
  <span class="ev-slice dim">${slice === undefined || slice === null ? "" : `s${slice}`}</span>
  <span class="ev-detail">${detail}</span>
</div>`;
    })
    .join("");
  return `<div class="evlist">${lines}</div>`;
}

export function renderKindCounts(counts: { kind: string; count: number }[]): string {
  return counts
    .map(
      (c) => `<span class="chip">${escapeHtml(c.kind)}
<span class="dim">${c.count}</span></span>`,
    )
    .join(" ");
}
