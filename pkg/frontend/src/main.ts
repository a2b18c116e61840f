import { ApiClient, ApiError } from "./client.js";
import {
  cacheRows,
  capacityRows,
  counterTotals,
  sliceSummaries,
} from "./derive.js";
import { EventTail } from "./log.js";
import {
  renderCaches,
  renderCapacity,
  renderCounters,
  renderEvents,
  renderHandoffs,
  renderKindCounts,
  renderSliceCard,
  escapeHtml,
} from "./render.js";
import type { ViewsDoc } from "./types.js";

const $ = <T extends HTMLElement>(sel: string): T => {
  const el = document.querySelector<T>(sel);
  if (!el) throw new Error(`missing element ${sel}`);
  return el;
};

let client = new ApiClient("http://127.0.0.1:8080");
const tail = new EventTail(400);
let selectedSlice: number | null = null;
let pollTimer: number | null = null;

function setStatus(text: string, tone: "ok" | "err" | "dim" = "dim"): void {
  const el = $("#status");
  el.textContent = text;
  el.className = `status ${tone}`;
}

async function refresh(): Promise<void> {
  let doc: ViewsDoc;
  try {
    doc = await client.views();
    const page = await client.events(tail.next, 1000);
    tail.push(page);
  } catch (err) {
    setStatus(err instanceof Error ? err.message : String(err), "err");
    return;
  }
  setStatus(`t = ${doc.t_ms.toFixed(1)} ms, ${tail.seen} events`, "ok");
  render(doc);
}

function render(doc: ViewsDoc): void {
  $("#capacity").innerHTML = renderCapacity(capacityRows(doc.capacity));

  const summaries = sliceSummaries(doc);
  $("#slices").innerHTML =
    doc.slices.length === 0
      ? `<p class="empty">no slices admitted</p>`
      : doc.slices
          .map((s, i) => renderSliceCard(s, summaries[i]))
          .join("");

  if (selectedSlice === null && doc.slices.length > 0) {
    selectedSlice = doc.slices[0].slice_id;
  }
  const picker = $<HTMLSelectElement>("#slice-pick");
  picker.innerHTML = doc.slices
    .map(
      (s) =>
        `<option value="${s.slice_id}" ${s.slice_id === selectedSlice ? "selected" : ""}>
${escapeHtml(s.name)} (#${s.slice_id})</option>`,
    )
    .join("");

  if (selectedSlice !== null) {
    $("#counters").innerHTML = renderCounters(
      counterTotals(doc.forwarders, selectedSlice),
    );
    $("#caches").innerHTML = renderCaches(
      cacheRows(doc.forwarders, selectedSlice),
    );
  }

  $("#handoffs").innerHTML = renderHandoffs(doc.metrics.handoffs);

  const kindSel = $<HTMLSelectElement>("#ev-kind");
  const current = kindSel.value;
  const kinds = tail.kindCounts();
  kindSel.innerHTML =
    `<option value="">all kinds</option>` +
    kinds
      .map(
        (k) =>
          `<option value="${escapeHtml(k.kind)}" ${k.kind === current ? "selected" : ""}>
${escapeHtml(k.kind)}</option>`,
      )
      .join("");
  $("#ev-counts").innerHTML = renderKindCounts(kinds);
  const filter: { kind?: string; slice?: number } = {};
  if (kindSel.value) filter.kind = kindSel.value;
  $("#events").innerHTML = renderEvents(tail.records(filter).slice(0, 120));
}

async function action(run: () => Promise<unknown>): Promise<void> {
  try {
    await run();
    await refresh();
  } catch (err) {
    if (err instanceof ApiError) {
      setStatus(`${err.status} ${err.message}`, "err");
    } else {
      setStatus(err instanceof Error ? err.message : String(err), "err");
    }
  }
}

function startPolling(periodMs: number): void {
  if (pollTimer !== null) window.clearInterval(pollTimer);
  pollTimer = window.setInterval(refresh, periodMs);
}

function wire(): void {
  $("#connect").addEventListener("click", () => {
    client = new ApiClient($<HTMLInputElement>("#api-url").value);
    tail.reset();
    selectedSlice = null;
    void refresh();
  });

  for (const [sel, ms] of [
    ["#adv-100", 100],
    ["#adv-1s", 1000],
    ["#adv-10s", 10_000],
  ] as const) {
    $(sel).addEventListener("click", () => void action(() => client.advance(ms)));
  }

  $("#slice-pick").addEventListener("change", (ev) => {
    selectedSlice = Number((ev.target as HTMLSelectElement).value);
    void refresh();
  });
  $("#ev-kind").addEventListener("change", () => void refresh());

  $("#join").addEventListener("click", () => {
    if (selectedSlice === null) return;
    const sid = selectedSlice;
    void action(() =>
      client.join(
        sid,
        $<HTMLInputElement>("#join-pid").value,
        $<HTMLInputElement>("#join-poa").value,
        $<HTMLSelectElement>("#join-role").value,
      ),
    );
  });

  $("#publish").addEventListener("click", () => {
    if (selectedSlice === null) return;
    const sid = selectedSlice;
    void action(() =>
      client.publish(
        sid,
        $<HTMLInputElement>("#pub-pid").value,
        Number($<HTMLInputElement>("#pub-count").value) || 1,
        Number($<HTMLInputElement>("#pub-interval").value) || 0,
      ),
    );
  });

  $("#handoff").addEventListener("click", () => {
    void action(() =>
      client.handoff(
        $<HTMLInputElement>("#ho-pid").value,
        $<HTMLInputElement>("#ho-poa").value,
        Number($<HTMLInputElement>("#ho-gap").value) || undefined,
      ),
    );
  });

  $<HTMLInputElement>("#auto").addEventListener("change", (ev) => {
    if ((ev.target as HTMLInputElement).checked) startPolling(1000);
    else if (pollTimer !== null) window.clearInterval(pollTimer);
  });

  startPolling(1000);
  void refresh();
}

wire();
