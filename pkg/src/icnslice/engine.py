"""Event-driven runtime: forwarders wired to links, stations, and apps.

One Network owns the clock, the substrate, one Forwarder per infrastructure
node, and the face tables that connect them. Applications (conference
participants, sync functions, mobility agents) attach through app faces or
through the station side of access links and advance only via clock events,
so a (seed, scenario) pair fully determines the run.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Callable

from . import config
from .clock import EventClock
from .forwarder import FaceId, Forwarder
from .names import Name
from .packets import Data, Interest, Nack, Packet, wire_size
from .substrate import CapacityLedger, LinkDown, LinkScheduler, PhysLink, Topology

AppHandler = Callable[[Packet], None]


@dataclass(frozen=True)
class Face:
    face_id: FaceId
    kind: str  # "link" | "app"
    link_id: str | None = None
    peer: str | None = None  # node on the far side of a link face
    label: str = ""


def subject_slice(pkt: Packet) -> int:
    """Slice a packet belongs to for logging and lane isolation.

    Control packets ride slice 0 but act on behalf of a user slice named
    inside their /poa/<node>/<verb>/<slice>/... name; charging them to that
    slice keeps per-slice traces independent of other slices' mobility.
    """
    if pkt.slice_id != config.CONTROL_SLICE_ID:
        return pkt.slice_id
    comps = pkt.name.components
    if len(comps) >= 4 and comps[0] == config.POA_NAMESPACE and comps[3].isdigit():
        return int(comps[3])
    return config.CONTROL_SLICE_ID


class Metrics:
    """Per-slice observability registry, fed by apps and the mobility layer."""

    def __init__(self) -> None:
        self.delivered: dict[int, int] = {}
        self.latency_sum_ms: dict[int, float] = {}
        self.segment_deliveries: dict[tuple[int, str, int], int] = {}
        self.producer_serves: dict[int, dict[str, int]] = {}
        self.stretch_samples: dict[int, list[tuple[float, float]]] = {}
        self.handoff_reports: list = []

    def forget_slice(self, slice_id: int) -> None:
        for table in (self.delivered, self.latency_sum_ms,
                      self.producer_serves, self.stretch_samples):
            table.pop(slice_id, None)
        self.segment_deliveries = {k: v for k, v in
                                   self.segment_deliveries.items()
                                   if k[0] != slice_id}

    def record_delivery(self, slice_id: int, producer: str, seq: int,
                        latency_ms: float) -> None:
        self.delivered[slice_id] = self.delivered.get(slice_id, 0) + 1
        self.latency_sum_ms[slice_id] = (
            self.latency_sum_ms.get(slice_id, 0.0) + latency_ms)
        key = (slice_id, producer, seq)
        self.segment_deliveries[key] = self.segment_deliveries.get(key, 0) + 1

    def record_serve(self, slice_id: int, producer: str) -> None:
        serves = self.producer_serves.setdefault(slice_id, {})
        serves[producer] = serves.get(producer, 0) + 1

    def record_stretch(self, slice_id: int, ratio: float, at_ms: float) -> None:
        self.stretch_samples.setdefault(slice_id, []).append((at_ms, ratio))

    def view(self) -> dict:
        slices = sorted(set(self.delivered) | set(self.producer_serves)
                        | set(self.stretch_samples))
        per_slice = {}
        for sid in slices:
            n = self.delivered.get(sid, 0)
            samples = self.stretch_samples.get(sid, [])
            per_slice[str(sid)] = {
                "delivered_segments": n,
                "mean_delivery_ms": (
                    round(self.latency_sum_ms.get(sid, 0.0) / n, 6) if n else None),
                "producer_serves": dict(sorted(
                    self.producer_serves.get(sid, {}).items())),
                "stretch_last": samples[-1][1] if samples else None,
                "stretch_samples": len(samples),
            }
        return {
            "slices": per_slice,
            "handoffs": [r.view() for r in self.handoff_reports],
        }


class Network:
    """The emulated network: substrate, forwarders, faces, and the log."""

    def __init__(self, topo: Topology, seed: int = 0) -> None:
        self.topo = topo
        self.seed = seed
        self.clock = EventClock(rng_seed=seed)
        self.scheduler = LinkScheduler(self.clock)
        self.ledger = CapacityLedger(topo)
        self.metrics = Metrics()
        self.log: list[dict] = []
        self.forwarders: dict[str, Forwarder] = {
            nid: Forwarder(nid) for nid in topo.infra_node_ids}

        self._faces: dict[str, dict[FaceId, Face]] = {n: {} for n in self.forwarders}
        self._link_face: dict[tuple[str, str], FaceId] = {}
        self._app_handlers: dict[tuple[str, FaceId], AppHandler] = {}
        self._app_ordinal: dict[tuple[str, int], int] = {}
        self._station_handlers: dict[str, list[AppHandler]] = {}
        self._rngs: dict[int, random.Random] = {}
        self._sp_cache: dict[tuple[str, str], int] = {}
        # set by the mobility layer: called with (poa_node, link, interest)
        # whenever an Interest is emitted onto an access link
        self.access_interest_hook: Callable[[str, PhysLink, Interest], None] | None = None

        for nid in self.forwarders:
            for link in self.topo.adjacency[nid]:
                if self.topo.nodes[link.peer_of(nid)].is_client:
                    continue
                fid = len(self._faces[nid]) + 1
                face = Face(fid, "link", link.link_id, link.peer_of(nid))
                self._faces[nid][fid] = face
                self._link_face[(nid, link.link_id)] = fid
            for link in sorted(self.topo.access_links(nid),
                               key=lambda l: l.link_id):
                fid = len(self._faces[nid]) + 1
                face = Face(fid, "link", link.link_id, link.peer_of(nid))
                self._faces[nid][fid] = face
                self._link_face[(nid, link.link_id)] = fid

    # -- deterministic identifiers ------------------------------------------

    def rng(self, slice_id: int) -> random.Random:
        if slice_id not in self._rngs:
            self._rngs[slice_id] = random.Random(f"{self.seed}:{slice_id}")
        return self._rngs[slice_id]

    def nonce(self, slice_id: int) -> int:
        return self.rng(slice_id).getrandbits(63)

    # -- faces ---------------------------------------------------------------

    def face(self, node_id: str, face_id: FaceId) -> Face:
        return self._faces[node_id][face_id]

    def link_face_id(self, node_id: str, link_id: str) -> FaceId:
        return self._link_face[(node_id, link_id)]

    def new_app_face(self, node_id: str, slice_id: int,
                     handler: AppHandler, label: str = "") -> FaceId:
        key = (node_id, slice_id)
        ordinal = self._app_ordinal.get(key, 0)
        self._app_ordinal[key] = ordinal + 1
        fid = 1000 + slice_id * 100 + ordinal
        self._faces[node_id][fid] = Face(fid, "app", label=label)
        self._app_handlers[(node_id, fid)] = handler
        return fid

    def remove_app_face(self, node_id: str, face_id: FaceId) -> None:
        self._faces[node_id].pop(face_id, None)
        self._app_handlers.pop((node_id, face_id), None)

    def bind_station(self, link_id: str, handler: AppHandler) -> None:
        self._station_handlers.setdefault(link_id, []).append(handler)

    def unbind_station(self, link_id: str, handler: AppHandler) -> None:
        handlers = self._station_handlers.get(link_id, [])
        if handler in handlers:
            handlers.remove(handler)

    # -- logging ---------------------------------------------------------------

    def log_record(self, kind: str, slice_id: int | None = None, **fields) -> None:
        rec = {"t_ms": round(self.clock.now, 6), "kind": kind}
        if slice_id is not None:
            rec["slice"] = slice_id
        rec.update(fields)
        self.log.append(rec)

    def log_lines(self) -> list[str]:
        return [json.dumps(rec, sort_keys=True, separators=(",", ":"))
                for rec in self.log]

    # -- packet movement --------------------------------------------------------

    def emit(self, node_id: str, face_id: FaceId, pkt: Packet) -> None:
        face = self._faces[node_id].get(face_id)
        if face is None:
            self.log_record("drop-no-face", subject_slice(pkt),
                            node=node_id, face=face_id, name=str(pkt.name))
            return
        if face.kind == "app":
            handler = self._app_handlers.get((node_id, face_id))
            if handler is None:
                self.log_record("drop-no-app", subject_slice(pkt),
                                node=node_id, name=str(pkt.name))
                return
            self.clock.schedule_at(self.clock.now, lambda: handler(pkt))
            return
        link = self.topo.links[face.link_id]
        if (link.access_type and isinstance(pkt, Interest)
                and self.access_interest_hook is not None):
            self.access_interest_hook(node_id, link, pkt)
        self._transmit(link, node_id, pkt)

    def send_from_station(self, link_id: str, pkt: Packet) -> None:
        """Push a packet from the client side of an access link."""
        link = self.topo.links[link_id]
        station = link.a if self.topo.nodes[link.a].is_client else link.b
        self._transmit(link, station, pkt)

    def _transmit(self, link: PhysLink, src: str, pkt: Packet) -> None:
        dst = link.peer_of(src)
        try:
            self.scheduler.transmit(
                link, src, wire_size(pkt), self.clock.now,
                lane=subject_slice(pkt),
                deliver=lambda: self._arrive(dst, link, pkt))
        except LinkDown:
            self.log_record("drop-link-down", subject_slice(pkt),
                            node=src, link=link.link_id, name=str(pkt.name))

    def _arrive(self, node_id: str, link: PhysLink, pkt: Packet) -> None:
        if self.topo.nodes[node_id].is_client:
            for handler in list(self._station_handlers.get(link.link_id, [])):
                handler(pkt)
            return
        if (link.access_type and isinstance(pkt, Interest)
                and pkt.ingress is None):
            # first infrastructure hop: remember where this Interest entered
            pkt = Interest(pkt.slice_id, pkt.name, pkt.nonce, pkt.lifetime_ms,
                           pkt.hop_count, ingress=node_id, trail=pkt.trail,
                           encap=pkt.encap)
        self.dispatch(node_id, self.link_face_id(node_id, link.link_id), pkt)

    def inject(self, node_id: str, face_id: FaceId, pkt: Packet) -> None:
        """Hand a packet from a local app into the node's forwarder."""
        self.dispatch(node_id, face_id, pkt)

    def dispatch(self, node_id: str, face_id: FaceId, pkt: Packet) -> None:
        fwd = self.forwarders[node_id]
        now = self.clock.now
        if isinstance(pkt, Interest):
            actions = fwd.on_interest(face_id, pkt, now)
            op = "interest"
        elif isinstance(pkt, Data):
            actions = fwd.on_data(face_id, pkt, now)
            op = "data"
        else:
            actions = fwd.on_nack(face_id, pkt, now)
            op = "nack"
        self.log_record("fwd", subject_slice(pkt), node=node_id, op=op,
                        name=str(pkt.name), outcome=actions.outcome)
        if actions.pit_expiry is not None:
            slice_id = pkt.slice_id
            self.clock.schedule_at(
                actions.pit_expiry, lambda: self._sweep(node_id, slice_id))
        for out_face, out_pkt in actions.emissions:
            self.emit(node_id, out_face, out_pkt)

    def _sweep(self, node_id: str, slice_id: int) -> None:
        fwd = self.forwarders.get(node_id)
        if fwd is None or not fwd.has_slice(slice_id):
            return
        removed, nacks = fwd.pit_sweep(self.clock.now, only_slice=slice_id)
        for sid in sorted(removed):
            self.log_record("pit-expired", sid, node=node_id,
                            count=removed[sid])
        for sid, face, nack in nacks:
            self.emit(node_id, face, nack)

    # -- monitoring ---------------------------------------------------------

    def start_snapshots(self, period_ms: float = config.SNAPSHOT_PERIOD_MS) -> None:
        def tick():
            self.snapshot_now()
            self.clock.schedule(period_ms, tick)
        self.clock.schedule(period_ms, tick)

    def snapshot_now(self) -> None:
        for nid in sorted(self.forwarders):
            fwd = self.forwarders[nid]
            for sid in sorted(fwd.tables):
                if sid == config.CONTROL_SLICE_ID:
                    continue
                tables = fwd.tables[sid]
                self.log_record(
                    "snapshot", sid, node=nid,
                    pit_size=len(tables.pit),
                    cs_entries=len(tables.cs),
                    cs_bytes=tables.cs.used_bytes,
                    counters=dict(fwd.counters[sid]))

    # -- path helpers -------------------------------------------------------

    def sp_node_count(self, a: str, b: str) -> int:
        """Node count (both endpoints included) of the fewest-hop a->b path."""
        if (a, b) in self._sp_cache:
            return self._sp_cache[(a, b)]
        seen = {a: 1}
        frontier = [a]
        while frontier and b not in seen:
            nxt: list[str] = []
            for cur in frontier:
                for link in self.topo.adjacency[cur]:
                    if link.access_type:
                        continue
                    peer = link.peer_of(cur)
                    if peer not in seen:
                        seen[peer] = seen[cur] + 1
                        nxt.append(peer)
            frontier = nxt
        if b not in seen:
            raise ValueError(f"no path {a} -> {b}")
        self._sp_cache[(a, b)] = seen[b]
        return seen[b]

    def min_latency_next_hop(self, src: str, dst: str) -> str | None:
        """First link id on the lowest-latency src->dst infrastructure path."""
        if src == dst:
            return None
        _, links = self.min_latency_path(src, dst)
        return links[0]

    def min_latency_path(self, src: str, dst: str) -> tuple[float, list[str]]:
        """Dijkstra on latency over infrastructure links; ties by node id."""
        import heapq

        dist: dict[str, float] = {src: 0.0}
        prev: dict[str, tuple[str, str]] = {}
        heap: list[tuple[float, str]] = [(0.0, src)]
        done: set[str] = set()
        while heap:
            d, cur = heapq.heappop(heap)
            if cur in done:
                continue
            done.add(cur)
            if cur == dst:
                break
            for link in sorted(self.topo.adjacency[cur], key=lambda l: l.link_id):
                if link.access_type:
                    continue
                peer = link.peer_of(cur)
                nd = d + link.latency_ms
                if peer not in dist or nd < dist[peer] - 1e-12 or (
                        abs(nd - dist[peer]) <= 1e-12
                        and (cur, link.link_id) < prev.get(peer, ("￿", ""))):
                    dist[peer] = nd
                    prev[peer] = (cur, link.link_id)
                    heapq.heappush(heap, (nd, peer))
        if dst not in dist:
            raise ValueError(f"no path {src} -> {dst}")
        links: list[str] = []
        cur = dst
        while cur != src:
            parent, lid = prev[cur]
            links.append(lid)
            cur = parent
        return dist[dst], list(reversed(links))
