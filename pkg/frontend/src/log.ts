import type { EventRecord, EventsPage } from "./types.js";

/** Incremental tail over GET /events. Keeps a bounded window of the newest
 * records plus running per-kind counts over everything it has seen. */
export class EventTail {
  private cursor = 0;
  private window: EventRecord[] = [];
  private counts = new Map<string, number>();
  private total = 0;

  constructor(private cap = 400) {}

  get next(): number {
    return this.cursor;
  }

  get seen(): number {
    return this.total;
  }

  push(page: EventsPage): void {
    // pages must be consumed in order; a stale page would double-count
    if (page.next < this.cursor) return;
    this.cursor = page.next;
    this.total += page.records.length;
    for (const r of page.records) {
      this.counts.set(r.kind, (this.counts.get(r.kind) ?? 0) + 1);
    }
    this.window.push(...page.records);
    if (this.window.length > this.cap) {
      this.window.splice(0, this.window.length - this.cap);
    }
  }

  /** Newest first, optionally narrowed to one kind or one slice. */
  records(filter?: { kind?: string; slice?: number }): EventRecord[] {
    let out = this.window;
    if (filter?.kind) out = out.filter((r) => r.kind === filter.kind);
    if (filter?.slice !== undefined) {
      out = out.filter((r) => r.slice === filter.slice);
    }
    return [...out].reverse();
  }

  kindCounts(): { kind: string; count: number }[] {
    return [...this.counts.entries()]
      .map(([kind, count]) => ({ kind, count }))
      .sort((a, b) => b.count - a.count || a.kind.localeCompare(b.kind));
  }

  reset(): void {
    this.cursor = 0;
    this.window = [];
    this.counts.clear();
    this.total = 0;
  }
}
