// Shapes of the management API's JSON documents. Mirrors what the server
// actually emits; fields the dashboard does not render are still typed so
// the client stays honest about what it parses.

export interface NodeView {
  id: string;
  role: string;
  domain: string;
  compute_units: number;
  storage_mb: number;
}

export interface LinkView {
  id: string;
  a: string;
  b: string;
  bandwidth_mbps: number;
  latency_ms: number;
  access_type: string | null;
  admin_up: boolean;
}

export interface TopologyView {
  nodes: NodeView[];
  links: LinkView[];
}

export interface CapacityEntry {
  used: number;
  total: number;
}

export interface SiteView {
  site_id: string;
  poa: string;
  expected_participants: number;
}

export interface ParticipantView {
  pid: string;
  poa: string;
  link: string;
  produce: boolean;
  consume: boolean;
  published: number;
}

export interface SliceView {
  slice_id: number;
  name: string;
  mobility_enabled: boolean;
  sites: SiteView[];
  per_stream_kbps: number;
  latency_bound_ms: number;
  vnode_map: Record<string, string>;
  vlink_paths: Record<string, string[]>;
  nodes: string[];
  cache_budget_bytes: Record<string, number>;
  participants: ParticipantView[];
  routes: Record<string, string>;
}

export interface Counters {
  interests_in: number;
  interests_out: number;
  data_in: number;
  data_out: number;
  cs_hits: number;
  pit_aggregations: number;
  drops: number;
  nacks: number;
  nacks_in: number;
  nacks_out: number;
  pit_expired: number;
  data_drops: number;
}

export interface FibEntryView {
  prefix: string;
  nexthops: number[];
}

export interface ForwarderSliceView {
  pit_size: number;
  cs_entries: number;
  cs_bytes: number;
  cs_budget_bytes: number;
  counters: Counters;
  fib: FibEntryView[];
}

// node id -> slice id (as string) -> table state
export type ForwardersView = Record<string, Record<string, ForwarderSliceView>>;

export interface SliceMetrics {
  delivered_segments: number;
  mean_delivery_ms: number | null;
  producer_serves: Record<string, number>;
  stretch_last: number | null;
  stretch_samples: number;
}

export interface HandoffReportView {
  slice: number;
  participant: string;
  from_poa: string;
  to_poa: string;
  requested_at_ms: number;
  gap_ms: number;
  epoch: number;
  denied_reason: string | null;
  pending_at_detach: number;
  late_bound: number;
  interests_lost: number;
  ingress_updates: number;
  ingress_updates_done_at_ms: number | null;
  stretch_before: number | null;
  stretch_after: number | null;
}

export interface MetricsView {
  slices: Record<string, SliceMetrics>;
  handoffs: HandoffReportView[];
}

export interface ViewsDoc {
  schema_version: number;
  t_ms: number;
  topology: TopologyView;
  capacity: Record<string, CapacityEntry>;
  slices: SliceView[];
  forwarders: ForwardersView;
  metrics: MetricsView;
}

export interface EventRecord {
  t_ms: number;
  kind: string;
  slice?: number | null;
  [field: string]: unknown;
}

export interface EventsPage {
  next: number;
  records: EventRecord[];
}

export interface SliceTemplate {
  slice_name: string;
  sites: { site_id: string; poa_node_id: string; expected_participants: number }[];
  per_stream_kbps: number;
  latency_bound_ms: number;
  cache_window_s: number;
  mobility_enabled: boolean;
}
