// Pure transforms from API documents to the rows the dashboard renders.

import type {
  Counters,
  ForwardersView,
  MetricsView,
  SliceMetrics,
  SliceView,
  ViewsDoc,
} from "./types.js";

export interface CapacityRow {
  kind: string;
  id: string;
  used: number;
  total: number;
  pct: number; // 0..100, 0 when total is 0
}

export function capacityRows(capacity: Record<string, { used: number; total: number }>): CapacityRow[] {
  const rows: CapacityRow[] = [];
  for (const [key, entry] of Object.entries(capacity)) {
    const sep = key.indexOf(":");
    rows.push({
      kind: key.slice(0, sep),
      id: key.slice(sep + 1),
      used: entry.used,
      total: entry.total,
      pct: entry.total > 0 ? (100 * entry.used) / entry.total : 0,
    });
  }
  rows.sort((x, y) => x.kind.localeCompare(y.kind) || x.id.localeCompare(y.id));
  return rows;
}

const ZERO: Counters = {
  interests_in: 0,
  interests_out: 0,
  data_in: 0,
  data_out: 0,
  cs_hits: 0,
  pit_aggregations: 0,
  drops: 0,
  nacks: 0,
  nacks_in: 0,
  nacks_out: 0,
  pit_expired: 0,
  data_drops: 0,
};

/** Sum one slice's forwarding counters across every node it spans. */
export function counterTotals(forwarders: ForwardersView, sliceId: number): Counters {
  const total: Counters = { ...ZERO };
  const key = String(sliceId);
  for (const perSlice of Object.values(forwarders)) {
    const tables = perSlice[key];
    if (!tables) continue;
    for (const name of Object.keys(total) as (keyof Counters)[]) {
      total[name] += tables.counters[name] ?? 0;
    }
  }
  return total;
}

export interface CacheRow {
  node: string;
  entries: number;
  bytes: number;
  budget: number;
  pitSize: number;
}

export function cacheRows(forwarders: ForwardersView, sliceId: number): CacheRow[] {
  const key = String(sliceId);
  const rows: CacheRow[] = [];
  for (const [node, perSlice] of Object.entries(forwarders)) {
    const tables = perSlice[key];
    if (!tables) continue;
    rows.push({
      node,
      entries: tables.cs_entries,
      bytes: tables.cs_bytes,
      budget: tables.cs_budget_bytes,
      pitSize: tables.pit_size,
    });
  }
  rows.sort((x, y) => x.node.localeCompare(y.node));
  return rows;
}

export interface SliceSummary {
  sliceId: number;
  name: string;
  mobility: boolean;
  participants: number;
  producers: number;
  published: number;
  delivered: number;
  meanDeliveryMs: number | null;
  stretch: number | null;
  cacheHitRatio: number | null; // cs_hits / interests_in across the slice
}

function metricsFor(metrics: MetricsView, sliceId: number): SliceMetrics | undefined {
  return metrics.slices[String(sliceId)];
}

export function sliceSummaries(doc: ViewsDoc): SliceSummary[] {
  return doc.slices.map((s: SliceView) => {
    const m = metricsFor(doc.metrics, s.slice_id);
    const totals = counterTotals(doc.forwarders, s.slice_id);
    return {
      sliceId: s.slice_id,
      name: s.name,
      mobility: s.mobility_enabled,
      participants: s.participants.length,
      producers: s.participants.filter((p) => p.produce).length,
      published: s.participants.reduce((n, p) => n + p.published, 0),
      delivered: m?.delivered_segments ?? 0,
      meanDeliveryMs: m?.mean_delivery_ms ?? null,
      stretch: m?.stretch_last ?? null,
      cacheHitRatio:
        totals.interests_in > 0 ? totals.cs_hits / totals.interests_in : null,
    };
  });
}

export function fmtMs(ms: number | null): string {
  if (ms === null) return "-";
  if (ms >= 1000) return `${(ms / 1000).toFixed(2)} s`;
  return `${ms.toFixed(1)} ms`;
}

export function fmtBytes(n: number): string {
  if (n >= 1_000_000) return `${(n / 1_000_000).toFixed(2)} MB`;
  if (n >= 1000) return `${(n / 1000).toFixed(1)} kB`;
  return `${n} B`;
}

export function fmtRatio(r: number | null): string {
  return r === null ? "-" : `${(100 * r).toFixed(1)}%`;
}
