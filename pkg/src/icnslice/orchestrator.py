"""Slice lifecycle pipeline: template -> service graph -> partition ->
embedding -> instantiation, plus teardown and in-place adaptation.

The load model and the greedy embedding are deliberately simple and fully
deterministic; an exhaustive oracle in the test suite checks the greedy
verdicts on the bundled fixture.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

from . import config
from .conference import SyncFunction
from .engine import Network
from .forwarder import FaceId, UnknownSlice
from .names import Name, name as make_name
from .substrate import InsufficientCapacity, Reservation, Topology


class TemplateError(ValueError):
    """Template document violates the schema or an invariant."""


class EmbeddingError(RuntimeError):
    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason  # capacity | latency | disconnected
        self.detail = detail


# --- template ---------------------------------------------------------------

@dataclass(frozen=True)
class SiteSpec:
    site_id: str
    poa_node_id: str
    expected_participants: int


@dataclass(frozen=True)
class SliceTemplate:
    slice_name: str
    sites: tuple[SiteSpec, ...]
    per_stream_kbps: int
    latency_bound_ms: float
    mobility_enabled: bool = False
    cache_window_s: float = config.DEFAULT_CACHE_WINDOW_S
    availability: str = ""
    security: str = ""


def parse_template(doc: dict) -> SliceTemplate:
    """Build a validated SliceTemplate; errors carry the offending field."""
    if not isinstance(doc, dict):
        raise TemplateError("template must be an object")

    def req(key, kind):
        if key not in doc:
            raise TemplateError(f"missing field {key!r}")
        val = doc[key]
        if kind is float and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        if not isinstance(val, kind) or isinstance(val, bool):
            raise TemplateError(f"field {key!r} must be {kind.__name__}")
        return val

    slice_name = req("slice_name", str)
    if not slice_name or "/" in slice_name:
        raise TemplateError("slice_name must be a non-empty name component")
    raw_sites = req("sites", list)
    sites = []
    for i, s in enumerate(raw_sites):
        if not isinstance(s, dict):
            raise TemplateError(f"sites[{i}] must be an object")
        for key in ("site_id", "poa_node_id"):
            if not isinstance(s.get(key), str) or not s.get(key):
                raise TemplateError(f"sites[{i}].{key} must be a string")
        parts = s.get("expected_participants")
        if not isinstance(parts, int) or isinstance(parts, bool) or parts < 1:
            raise TemplateError(
                f"sites[{i}].expected_participants must be an integer >= 1")
        sites.append(SiteSpec(s["site_id"], s["poa_node_id"], parts))
    if len(sites) < 2:
        raise TemplateError("a conference slice needs at least 2 sites")
    poas = [s.poa_node_id for s in sites]
    if len(set(poas)) != len(poas):
        raise TemplateError("site poa_node_ids must be distinct")
    if len({s.site_id for s in sites}) != len(sites):
        raise TemplateError("site_ids must be distinct")

    kbps = req("per_stream_kbps", int)
    if kbps <= 0:
        raise TemplateError("per_stream_kbps must be > 0")
    bound = req("latency_bound_ms", float)
    if bound <= 0:
        raise TemplateError("latency_bound_ms must be > 0")
    window = doc.get("cache_window_s", config.DEFAULT_CACHE_WINDOW_S)
    if isinstance(window, int) and not isinstance(window, bool):
        window = float(window)
    if not isinstance(window, float) or window <= 0:
        raise TemplateError("cache_window_s must be > 0")
    mobility = doc.get("mobility_enabled", False)
    if not isinstance(mobility, bool):
        raise TemplateError("mobility_enabled must be a boolean")

    return SliceTemplate(
        slice_name=slice_name,
        sites=tuple(sites),
        per_stream_kbps=kbps,
        latency_bound_ms=bound,
        mobility_enabled=mobility,
        cache_window_s=window,
        availability=str(doc.get("availability", "")),
        security=str(doc.get("security", "")),
    )


# --- service graph -----------------------------------------------------------

@dataclass
class VNode:
    vnode_id: str
    kind: str  # forwarder | service_function | storage
    compute_units: int
    cache_mb: float
    pin_hint: str | None = None


@dataclass
class VLink:
    vlink_id: str
    a: str
    b: str
    bandwidth_mbps: float
    latency_budget_ms: float


@dataclass
class ServiceGraph:
    vnodes: list[VNode]
    vlinks: list[VLink]

    def vnode(self, vnode_id: str) -> VNode:
        for v in self.vnodes:
            if v.vnode_id == vnode_id:
                return v
        raise KeyError(vnode_id)


SYNC_VNODE_ID = "sync"


def build_service_graph(t: SliceTemplate) -> ServiceGraph:
    """Derive virtual resources from the expected conference load.

    Worst case is all-to-all media streaming: each of the P participants
    pulls every other participant's stream once (aggregation upstream makes
    this an upper bound on real traffic).
    """
    total = sum(s.expected_participants for s in t.sites)
    kbps = t.per_stream_kbps
    vnodes: list[VNode] = []
    vlinks: list[VLink] = []
    cache_mb = t.cache_window_s * total * kbps / 8000

    for s in t.sites:
        egress = s.expected_participants * (total - 1) * kbps / 1000
        ingress = s.expected_participants * (total - s.expected_participants) \
            * kbps / 1000
        compute = max(1, math.ceil(
            max(egress, ingress) / config.MBPS_PER_COMPUTE_UNIT))
        vnodes.append(VNode(f"site-{s.site_id}", "forwarder", compute,
                            cache_mb, pin_hint=s.poa_node_id))

    sync_mbps = total * config.SYNC_STREAM_KBPS / 1000
    vnodes.append(VNode(SYNC_VNODE_ID, "service_function",
                        max(1, math.ceil(sync_mbps / config.MBPS_PER_COMPUTE_UNIT)),
                        config.SYNC_VNODE_CACHE_MB))

    for i, s in enumerate(t.sites):
        site_v = f"site-{s.site_id}"
        vlinks.append(VLink(f"vl-{s.site_id}-sync", site_v, SYNC_VNODE_ID,
                            max(config.SYNC_VLINK_MIN_MBPS,
                                s.expected_participants
                                * config.SYNC_STREAM_KBPS / 1000),
                            t.latency_bound_ms))
        for u in t.sites[i + 1:]:
            bw = s.expected_participants * u.expected_participants * kbps / 1000
            vlinks.append(VLink(f"vl-{s.site_id}-{u.site_id}", site_v,
                                f"site-{u.site_id}", bw, t.latency_bound_ms))
    return ServiceGraph(vnodes, vlinks)


# --- partitioning -----------------------------------------------------------

@dataclass
class Subgraph:
    domain_id: str
    vnode_ids: set[str]
    vlinks: list[VLink]
    border_vlinks: set[str] = field(default_factory=set)


def partition(g: ServiceGraph, topo: Topology) -> list[Subgraph]:
    """Group vnodes by the domain of their pin; cut vlinks become stubs."""
    domain_of: dict[str, str] = {}
    for v in g.vnodes:
        if v.pin_hint is not None:
            if v.pin_hint not in topo.nodes:
                raise TemplateError(f"pin {v.pin_hint!r} is not a topology node")
            domain_of[v.vnode_id] = topo.nodes[v.pin_hint].domain_id
    for v in g.vnodes:
        if v.vnode_id in domain_of:
            continue
        votes: dict[str, int] = {}
        for vl in g.vlinks:
            peer = None
            if vl.a == v.vnode_id:
                peer = vl.b
            elif vl.b == v.vnode_id:
                peer = vl.a
            if peer is not None and peer in domain_of:
                votes[domain_of[peer]] = votes.get(domain_of[peer], 0) + 1
        if votes:
            best = max(votes.values())
            domain_of[v.vnode_id] = min(d for d, n in votes.items() if n == best)
        else:
            domain_of[v.vnode_id] = min(topo.nodes[n].domain_id
                                        for n in topo.infra_node_ids)

    subs: dict[str, Subgraph] = {}
    for v in g.vnodes:
        dom = domain_of[v.vnode_id]
        subs.setdefault(dom, Subgraph(dom, set(), [])).vnode_ids.add(v.vnode_id)
    for vl in g.vlinks:
        da, db = domain_of[vl.a], domain_of[vl.b]
        subs[da].vlinks.append(vl)
        if db != da:
            subs[db].vlinks.append(vl)
            subs[da].border_vlinks.add(vl.vlink_id)
            subs[db].border_vlinks.add(vl.vlink_id)
    return [subs[d] for d in sorted(subs)]


# --- embedding ---------------------------------------------------------------

@dataclass
class AllocationMatrix:
    node_map: dict[str, str]
    link_map: dict[str, list[str]]
    reservations: list[Reservation]


def _hop_distance(topo: Topology, src: str) -> dict[str, int]:
    dist = {src: 0}
    frontier = [src]
    while frontier:
        nxt = []
        for cur in frontier:
            for link in topo.adjacency[cur]:
                if link.access_type:
                    continue
                peer = link.peer_of(cur)
                if peer not in dist:
                    dist[peer] = dist[cur] + 1
                    nxt.append(peer)
        frontier = nxt
    return dist


def _latency_dijkstra(topo: Topology, src: str, dst: str,
                      min_residual: float | None,
                      ledger) -> tuple[float, list[str]] | None:
    """Min-latency infrastructure path; optionally only links with residual
    bandwidth >= min_residual. Returns (latency, [link ids]) or None."""
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
        for link in sorted(topo.adjacency[cur], key=lambda l: l.link_id):
            if link.access_type:
                continue
            if min_residual is not None and \
                    ledger.residual("bandwidth", link.link_id) < min_residual - 1e-9:
                continue
            peer = link.peer_of(cur)
            nd = d + link.latency_ms
            if peer not in dist or nd < dist[peer] - 1e-12:
                dist[peer] = nd
                prev[peer] = (cur, link.link_id)
                heapq.heappush(heap, (nd, peer))
    if dst not in dist:
        return None
    links: list[str] = []
    cur = dst
    while cur != src:
        parent, lid = prev[cur]
        links.append(lid)
        cur = parent
    return dist[dst], list(reversed(links))


def embed(sub: Subgraph, g: ServiceGraph, topo: Topology, ledger,
          prior_map: dict[str, str] | None = None) -> AllocationMatrix:
    """Greedy node-then-path embedding with atomic rollback.

    Vnodes are placed in descending compute order on the feasible node
    nearest their pin; vlinks take the minimum-latency path that has
    residual bandwidth on every hop. Any failure releases everything this
    call reserved and raises EmbeddingError.
    """
    prior_map = prior_map or {}
    reservations: list[Reservation] = []
    node_map: dict[str, str] = {}
    link_map: dict[str, list[str]] = {}

    def rollback_and_raise(err: EmbeddingError):
        for res in reversed(reservations):
            ledger.release(res)
        raise err

    vnodes = sorted((g.vnode(vid) for vid in sub.vnode_ids),
                    key=lambda v: (-v.compute_units, v.vnode_id))
    infra = topo.infra_node_ids
    for v in vnodes:
        if v.pin_hint is not None:
            dist = _hop_distance(topo, v.pin_hint)
            candidates = sorted(infra, key=lambda n: (dist.get(n, 10 ** 9), n))
        else:
            candidates = sorted(infra)
        placed = False
        for n in candidates:
            if ledger.residual("compute", n) < v.compute_units - 1e-9:
                continue
            if ledger.residual("storage", n) < v.cache_mb - 1e-9:
                continue
            reservations.append(ledger.reserve("compute", n, v.compute_units))
            reservations.append(ledger.reserve("storage", n, v.cache_mb))
            node_map[v.vnode_id] = n
            placed = True
            break
        if not placed:
            rollback_and_raise(EmbeddingError(
                "capacity", f"no node can host {v.vnode_id}"))

    full_map = {**prior_map, **node_map}
    for vl in sorted(sub.vlinks, key=lambda l: l.vlink_id):
        if vl.a not in full_map or vl.b not in full_map:
            # border stub whose far endpoint a later subgraph will place
            continue
        src, dst = full_map[vl.a], full_map[vl.b]
        if src == dst:
            link_map[vl.vlink_id] = []
            continue
        unrestricted = _latency_dijkstra(topo, src, dst, None, ledger)
        if unrestricted is None:
            rollback_and_raise(EmbeddingError(
                "disconnected", f"no substrate path for {vl.vlink_id}"))
        if unrestricted[0] > vl.latency_budget_ms + 1e-9:
            rollback_and_raise(EmbeddingError(
                "latency",
                f"{vl.vlink_id}: best path {unrestricted[0]} ms "
                f"> budget {vl.latency_budget_ms} ms"))
        feasible = _latency_dijkstra(topo, src, dst, vl.bandwidth_mbps, ledger)
        if feasible is None or feasible[0] > vl.latency_budget_ms + 1e-9:
            rollback_and_raise(EmbeddingError(
                "capacity",
                f"{vl.vlink_id}: no path with {vl.bandwidth_mbps} Mbps free "
                f"within {vl.latency_budget_ms} ms"))
        latency, links = feasible
        for lid in links:
            try:
                reservations.append(
                    ledger.reserve("bandwidth", lid, vl.bandwidth_mbps))
            except InsufficientCapacity:  # pragma: no cover - filtered above
                rollback_and_raise(EmbeddingError("capacity", lid))
        link_map[vl.vlink_id] = links
    return AllocationMatrix(node_map, link_map, reservations)


# --- slice records and the orchestrator --------------------------------------

@dataclass
class SliceRecord:
    slice_id: int
    template: SliceTemplate
    graph: ServiceGraph
    subgraphs: list[Subgraph]
    alloc: AllocationMatrix
    slice_nodes: set[str]
    slice_links: set[str]
    sync_node: str
    sync: SyncFunction | None = None
    mobility_enabled: bool = False
    # prefix -> (target node, face id at the target)
    routes: dict[Name, tuple[str, FaceId]] = field(default_factory=dict)
    participants: dict = field(default_factory=dict)
    cache_budget_bytes: dict[str, int] = field(default_factory=dict)
    created_at: float = 0.0

    @property
    def name(self) -> str:
        return self.template.slice_name

    def sync_prefix(self) -> Name:
        return make_name("conf", self.name, "sync")

    def participant_prefix(self, pid: str) -> Name:
        return make_name("conf", self.name, pid)


class Orchestrator:
    """Owns slice records and drives the pipeline against one Network."""

    def __init__(self, net: Network):
        self.net = net
        self.slices: dict[int, SliceRecord] = {}
        self._next_id = config.CONTROL_SLICE_ID + 1

    # -- pipeline -----------------------------------------------------------

    def create(self, template: SliceTemplate) -> SliceRecord:
        topo = self.net.topo
        for s in template.sites:
            node = topo.nodes.get(s.poa_node_id)
            if node is None or node.role != "access_poa":
                raise TemplateError(
                    f"site {s.site_id!r}: {s.poa_node_id!r} is not an access PoA")
        graph = build_service_graph(template)
        subgraphs = partition(graph, topo)

        done: list[AllocationMatrix] = []
        merged_map: dict[str, str] = {}
        try:
            for sub in subgraphs:
                alloc = embed(sub, graph, topo, self.net.ledger, merged_map)
                done.append(alloc)
                merged_map.update(alloc.node_map)
        except EmbeddingError:
            for alloc in done:
                for res in reversed(alloc.reservations):
                    self.net.ledger.release(res)
            raise
        merged = AllocationMatrix(
            merged_map,
            {k: v for a in done for k, v in a.link_map.items()},
            [r for a in done for r in a.reservations])
        return self._instantiate(merged, graph, subgraphs, template)

    def _instantiate(self, alloc: AllocationMatrix, graph: ServiceGraph,
                     subgraphs: list[Subgraph],
                     template: SliceTemplate) -> SliceRecord:
        sid = self._next_id
        self._next_id += 1

        budgets: dict[str, int] = {}
        for v in graph.vnodes:
            n = alloc.node_map[v.vnode_id]
            budgets[n] = budgets.get(n, 0) + int(v.cache_mb * config.BYTES_PER_MB)
        slice_nodes = set(alloc.node_map.values())
        slice_links: set[str] = set()
        for links in alloc.link_map.values():
            slice_links.update(links)
            for lid in links:
                link = self.net.topo.links[lid]
                slice_nodes.add(link.a)
                slice_nodes.add(link.b)

        for n in sorted(slice_nodes):
            self.net.forwarders[n].provision_slice(sid, budgets.get(n, 0))

        record = SliceRecord(
            slice_id=sid, template=template, graph=graph, subgraphs=subgraphs,
            alloc=alloc, slice_nodes=slice_nodes, slice_links=slice_links,
            sync_node=alloc.node_map[SYNC_VNODE_ID],
            mobility_enabled=template.mobility_enabled,
            cache_budget_bytes=budgets, created_at=self.net.clock.now)

        record.sync = SyncFunction(self.net, sid, template.slice_name,
                                   record.sync_node)
        self.install_route_everywhere(record, record.sync_prefix(),
                                      record.sync_node, record.sync.face_id)
        self.slices[sid] = record
        self.net.log_record("slice-created", sid, name=template.slice_name,
                            nodes=sorted(slice_nodes),
                            vnode_map=dict(sorted(alloc.node_map.items())))
        return record

    def get(self, slice_id: int) -> SliceRecord:
        try:
            return self.slices[slice_id]
        except KeyError:
            raise UnknownSlice(slice_id) from None

    def teardown(self, slice_id: int) -> dict:
        record = self.get(slice_id)
        if record.sync is not None:
            self.net.remove_app_face(record.sync_node, record.sync.face_id)
        released = {"compute": 0.0, "storage_mb": 0.0, "bandwidth_mbps": 0.0}
        kind_key = {"compute": "compute", "storage": "storage_mb",
                    "bandwidth": "bandwidth_mbps"}
        for res in reversed(record.alloc.reservations):
            self.net.ledger.release(res)
            released[kind_key[res.kind]] += res.amount
        for n in sorted(record.slice_nodes):
            self.net.forwarders[n].unprovision_slice(slice_id)
        del self.slices[slice_id]
        self.net.metrics.forget_slice(slice_id)
        self.net.log_record("slice-deleted", slice_id,
                            released={k: round(v, 6)
                                      for k, v in released.items()})
        return released

    def adapt(self, slice_id: int, participants_per_site: list[int]) -> dict:
        record = self.get(slice_id)
        t = record.template
        if len(participants_per_site) != len(t.sites) or \
                any(not isinstance(p, int) or p < 1
                    for p in participants_per_site):
            raise TemplateError(
                "adapt needs one participant count >= 1 per site")
        new_t = SliceTemplate(
            t.slice_name,
            tuple(SiteSpec(s.site_id, s.poa_node_id, p)
                  for s, p in zip(t.sites, participants_per_site)),
            t.per_stream_kbps, t.latency_bound_ms, t.mobility_enabled,
            t.cache_window_s, t.availability, t.security)
        new_graph = build_service_graph(new_t)

        # deltas against the existing mapping; no migration is attempted
        ledger = self.net.ledger
        changes: list[tuple[str, str, float, float]] = []
        for v in new_graph.vnodes:
            old = record.graph.vnode(v.vnode_id)
            n = record.alloc.node_map[v.vnode_id]
            changes.append(("compute", n, float(old.compute_units),
                            float(v.compute_units)))
            changes.append(("storage", n, old.cache_mb, v.cache_mb))
        old_links = {vl.vlink_id: vl for vl in record.graph.vlinks}
        for vl in new_graph.vlinks:
            for lid in record.alloc.link_map.get(vl.vlink_id, []):
                changes.append(("bandwidth", lid,
                                old_links[vl.vlink_id].bandwidth_mbps,
                                vl.bandwidth_mbps))

        grown: list[Reservation] = []
        try:
            for kind, rid, old_amt, new_amt in changes:
                if new_amt > old_amt + 1e-12:
                    grown.append(ledger.reserve(kind, rid, new_amt - old_amt))
        except InsufficientCapacity as e:
            for res in reversed(grown):
                ledger.release(res)
            return {"status": "rejected", "reason": "capacity",
                    "detail": str(e)}

        # swap each touched reservation for one at the new amount, so the
        # record always holds exactly one live reservation per change row
        # and later adapts can find it again
        shrunk: dict[str, float] = {}
        grown_count = 0
        deltas = iter(grown)
        for kind, rid, old_amt, new_amt in changes:
            if abs(new_amt - old_amt) <= 1e-12:
                continue
            if new_amt > old_amt:
                ledger.release(next(deltas))
                grown_count += 1
            ledger.release(self._find_live(record, kind, rid, old_amt))
            record.alloc.reservations.append(
                ledger.reserve(kind, rid, new_amt))
            if new_amt < old_amt:
                key = f"{kind}:{rid}"
                shrunk[key] = round(shrunk.get(key, 0.0) + old_amt - new_amt, 6)

        budgets: dict[str, int] = {}
        for v in new_graph.vnodes:
            n = record.alloc.node_map[v.vnode_id]
            budgets[n] = budgets.get(n, 0) + int(v.cache_mb * config.BYTES_PER_MB)
        for n, budget in sorted(budgets.items()):
            self.net.forwarders[n].set_cache_budget(slice_id, budget,
                                                    self.net.clock.now)
            record.cache_budget_bytes[n] = budget
        record.template = new_t
        record.graph = new_graph
        self.net.log_record("slice-adapted", slice_id,
                            participants=participants_per_site,
                            released=shrunk, grown=grown_count)
        return {"status": "ok", "released": shrunk,
                "grown_reservations": grown_count}

    def _find_live(self, record: SliceRecord, kind: str, rid: str,
                   amount: float) -> Reservation:
        for res in record.alloc.reservations:
            if res.kind == kind and res.resource_id == rid and \
                    abs(res.amount - amount) < 1e-9:
                record.alloc.reservations.remove(res)
                return res
        raise KeyError(f"no live reservation {kind}:{rid} of {amount}")

    # -- slice-scoped routing -------------------------------------------------

    def _slice_next_hop(self, record: SliceRecord, src: str,
                        dst: str) -> str | None:
        """First link on the min-latency path inside the slice's link set."""
        if src == dst:
            return None
        topo = self.net.topo
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
            for link in sorted(topo.adjacency[cur], key=lambda l: l.link_id):
                if link.link_id not in record.slice_links:
                    continue
                peer = link.peer_of(cur)
                nd = d + link.latency_ms
                if peer not in dist or nd < dist[peer] - 1e-12:
                    dist[peer] = nd
                    prev[peer] = (cur, link.link_id)
                    heapq.heappush(heap, (nd, peer))
        if dst not in dist:
            return None
        cur = dst
        lid = None
        while cur != src:
            cur, lid = prev[cur]
        return lid

    def install_route_everywhere(self, record: SliceRecord, prefix: Name,
                                 target_node: str, target_face: FaceId) -> None:
        record.routes[prefix] = (target_node, target_face)
        for n in sorted(record.slice_nodes):
            fwd = self.net.forwarders[n]
            if n == target_node:
                fwd.install_route(record.slice_id, prefix, [target_face])
                continue
            lid = self._slice_next_hop(record, n, target_node)
            if lid is None:
                continue
            fwd.install_route(record.slice_id, prefix,
                              [self.net.link_face_id(n, lid)])

    def withdraw_route_everywhere(self, record: SliceRecord,
                                  prefix: Name) -> None:
        record.routes.pop(prefix, None)
        for n in sorted(record.slice_nodes):
            self.net.forwarders[n].withdraw_route(record.slice_id, prefix)

    def extend_slice_to(self, record: SliceRecord, node: str) -> None:
        """Stitch a node into the slice so traffic can enter or exit there.

        Transit nodes added this way carry no cache budget and reserve no
        bandwidth; they only give the slice a forwarding footprint.
        """
        if node in record.slice_nodes:
            return
        best: tuple[float, str] | None = None
        for anchor in sorted(record.slice_nodes):
            latency, _ = self.net.min_latency_path(node, anchor)
            if best is None or latency < best[0]:
                best = (latency, anchor)
        assert best is not None
        _, links = self.net.min_latency_path(node, best[1])
        new_nodes = {node}
        for lid in links:
            link = self.net.topo.links[lid]
            new_nodes.update((link.a, link.b))
            record.slice_links.add(lid)
        for n in sorted(new_nodes - record.slice_nodes):
            self.net.forwarders[n].provision_slice(record.slice_id, 0)
        record.slice_nodes.update(new_nodes)
        for prefix, (target_node, target_face) in sorted(
                record.routes.items(), key=lambda kv: str(kv[0])):
            self.install_route_everywhere(record, prefix, target_node,
                                          target_face)
        self.net.log_record("slice-extended", record.slice_id, node=node,
                            via=links)
