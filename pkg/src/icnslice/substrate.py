"""Physical resource pool: topology, capacity ledger, link transmission.

The topology document is JSON with top-level `nodes` and `links`:

    nodes: [{id, role, compute, storage_mb, domain}]
    links: [{id, a, b, bandwidth_mbps, latency_ms, access_type?}]

Roles: access_poa, edge, core, datacenter for infrastructure nodes, plus
`client` for the station stubs that terminate client-facing access links.
Client nodes carry no capacity, host no virtual nodes, and are excluded
from the core-connectivity requirement; access_type is present exactly on
links joining an access_poa to a client station, with per-type latency and
bandwidth presets applied when the document omits them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import config
from .clock import EventClock

INFRA_ROLES = ("access_poa", "edge", "core", "datacenter")
CLIENT_ROLE = "client"


class SchemaError(ValueError):
    """Document shape is wrong: missing field or wrong type."""


class ValidationError(ValueError):
    """Document parses but violates a topology invariant."""


class LinkDown(RuntimeError):
    """Transmission attempted on an administratively disabled link."""


class InsufficientCapacity(RuntimeError):
    """A reservation does not fit into the remaining capacity."""


@dataclass
class PhysNode:
    node_id: str
    role: str
    compute_capacity: int
    storage_capacity_mb: int
    domain_id: str

    @property
    def is_client(self) -> bool:
        return self.role == CLIENT_ROLE


@dataclass
class PhysLink:
    link_id: str
    a: str
    b: str
    bandwidth_mbps: float
    latency_ms: float
    access_type: str | None = None
    admin_up: bool = True

    @property
    def endpoints(self) -> tuple[str, str]:
        return (self.a, self.b)

    def peer_of(self, node_id: str) -> str:
        if node_id == self.a:
            return self.b
        if node_id == self.b:
            return self.a
        raise KeyError(f"{node_id} is not an endpoint of {self.link_id}")


class Topology:
    def __init__(self, nodes: dict[str, PhysNode], links: dict[str, PhysLink]):
        self.nodes = nodes
        self.links = links
        # adjacency over every node, link ids sorted for determinism
        self.adjacency: dict[str, list[PhysLink]] = {n: [] for n in nodes}
        for lid in sorted(links):
            link = links[lid]
            self.adjacency[link.a].append(link)
            self.adjacency[link.b].append(link)

    @property
    def infra_node_ids(self) -> list[str]:
        return sorted(n for n, node in self.nodes.items() if not node.is_client)

    def access_links(self, poa_id: str) -> list[PhysLink]:
        return [l for l in self.adjacency[poa_id] if l.access_type]

    def access_link(self, poa_id: str, access_type: str) -> PhysLink | None:
        for link in self.access_links(poa_id):
            if link.access_type == access_type:
                return link
        return None

    def infra_links(self) -> list[PhysLink]:
        return [self.links[lid] for lid in sorted(self.links)
                if not self.links[lid].access_type]


def _require(obj: dict, key: str, kind, where: str):
    if key not in obj:
        raise SchemaError(f"{where}: missing field {key!r}")
    val = obj[key]
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, kind) or isinstance(val, bool):
        raise SchemaError(f"{where}: field {key!r} must be {kind.__name__}")
    return val


def load_topology(document: str | dict) -> Topology:
    """Parse and validate a topology document (JSON text or parsed dict)."""
    if isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as e:
            raise SchemaError(f"not valid JSON: {e}") from None
    else:
        doc = document
    if not isinstance(doc, dict):
        raise SchemaError("document root must be an object")
    for key in ("nodes", "links"):
        if key not in doc or not isinstance(doc[key], list):
            raise SchemaError(f"top-level {key!r} must be a list")

    nodes: dict[str, PhysNode] = {}
    for i, nd in enumerate(doc["nodes"]):
        where = f"nodes[{i}]"
        if not isinstance(nd, dict):
            raise SchemaError(f"{where}: must be an object")
        nid = _require(nd, "id", str, where)
        role = _require(nd, "role", str, where)
        if role not in INFRA_ROLES + (CLIENT_ROLE,):
            raise SchemaError(f"{where}: unknown role {role!r}")
        if role == CLIENT_ROLE:
            node = PhysNode(nid, role, 0, 0, str(nd.get("domain", "")))
        else:
            node = PhysNode(
                nid, role,
                _require(nd, "compute", int, where),
                _require(nd, "storage_mb", int, where),
                _require(nd, "domain", str, where),
            )
        if nid in nodes:
            raise ValidationError(f"duplicate node id {nid!r}")
        nodes[nid] = node

    links: dict[str, PhysLink] = {}
    for i, ld in enumerate(doc["links"]):
        where = f"links[{i}]"
        if not isinstance(ld, dict):
            raise SchemaError(f"{where}: must be an object")
        lid = _require(ld, "id", str, where)
        a = _require(ld, "a", str, where)
        b = _require(ld, "b", str, where)
        access_type = ld.get("access_type")
        if access_type is not None and access_type not in config.ACCESS_PRESETS:
            raise SchemaError(f"{where}: unknown access_type {access_type!r}")
        if access_type and ("latency_ms" not in ld or "bandwidth_mbps" not in ld):
            preset_lat, preset_bw = config.ACCESS_PRESETS[access_type]
            ld = {**ld,
                  "latency_ms": ld.get("latency_ms", preset_lat),
                  "bandwidth_mbps": ld.get("bandwidth_mbps", preset_bw)}
        bw = _require(ld, "bandwidth_mbps", float, where)
        lat = _require(ld, "latency_ms", float, where)
        if lid in links:
            raise ValidationError(f"duplicate link id {lid!r}")
        links[lid] = PhysLink(lid, a, b, float(bw), float(lat), access_type)

    _validate(nodes, links)
    return Topology(nodes, links)


def _validate(nodes: dict[str, PhysNode], links: dict[str, PhysLink]) -> None:
    for link in links.values():
        for end in link.endpoints:
            if end not in nodes:
                raise ValidationError(
                    f"link {link.link_id!r} references unknown node {end!r}")
        if link.a == link.b:
            raise ValidationError(f"link {link.link_id!r} is a self-loop")
        if link.bandwidth_mbps <= 0:
            raise ValidationError(f"link {link.link_id!r}: bandwidth must be > 0")
        if link.latency_ms <= 0:
            raise ValidationError(f"link {link.link_id!r}: latency must be > 0")
        ends = [nodes[link.a], nodes[link.b]]
        client_ends = [n for n in ends if n.is_client]
        poa_ends = [n for n in ends if n.role == "access_poa"]
        if link.access_type:
            if len(client_ends) != 1 or len(poa_ends) != 1:
                raise ValidationError(
                    f"access link {link.link_id!r} must join one access_poa "
                    "to one client station")
        elif client_ends:
            raise ValidationError(
                f"link {link.link_id!r} touches a client node but carries "
                "no access_type")
    for node in nodes.values():
        if not node.is_client and (node.compute_capacity < 0
                                   or node.storage_capacity_mb < 0):
            raise ValidationError(f"node {node.node_id!r}: negative capacity")

    infra = [n for n in nodes.values() if not n.is_client]
    if len(infra) < 2:
        raise ValidationError("topology needs at least two connected "
                              "infrastructure nodes for multi-site slices")
    # connectivity over infrastructure nodes only, via non-access links
    adj: dict[str, set[str]] = {n.node_id: set() for n in infra}
    for link in links.values():
        if link.access_type:
            continue
        adj[link.a].add(link.b)
        adj[link.b].add(link.a)
    start = min(adj)
    seen = {start}
    frontier = [start]
    while frontier:
        cur = frontier.pop()
        for nxt in adj[cur]:
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    if seen != set(adj):
        missing = sorted(set(adj) - seen)
        raise ValidationError(f"infrastructure graph is disconnected: {missing}")


# --- capacity ledger ------------------------------------------------------

@dataclass(frozen=True)
class Reservation:
    token: int
    kind: str  # compute | storage | bandwidth
    resource_id: str
    amount: float


class CapacityLedger:
    """Admission-controlled reservations against node and link capacities.

    release() is the exact inverse of reserve(): after releasing every
    handle the snapshot equals the initial one, field by field.
    """

    def __init__(self, topo: Topology) -> None:
        self._capacity: dict[tuple[str, str], float] = {}
        self._used: dict[tuple[str, str], float] = {}
        for node in topo.nodes.values():
            if node.is_client:
                continue
            self._capacity[("compute", node.node_id)] = float(node.compute_capacity)
            self._capacity[("storage", node.node_id)] = float(node.storage_capacity_mb)
        for link in topo.links.values():
            self._capacity[("bandwidth", link.link_id)] = link.bandwidth_mbps
        for key in self._capacity:
            self._used[key] = 0.0
        self._next_token = 1
        self._live: dict[int, Reservation] = {}

    def residual(self, kind: str, resource_id: str) -> float:
        key = (kind, resource_id)
        return self._capacity[key] - self._used[key]

    def reserve(self, kind: str, resource_id: str, amount: float) -> Reservation:
        if amount <= 0:
            raise ValueError("reservation amount must be > 0")
        key = (kind, resource_id)
        if key not in self._capacity:
            raise KeyError(f"unknown resource {key}")
        if self._used[key] + amount > self._capacity[key] + 1e-9:
            raise InsufficientCapacity(
                f"{kind} on {resource_id}: need {amount}, "
                f"free {self._capacity[key] - self._used[key]}")
        self._used[key] += amount
        res = Reservation(self._next_token, kind, resource_id, amount)
        self._next_token += 1
        self._live[res.token] = res
        return res

    def release(self, res: Reservation) -> None:
        if res.token not in self._live:
            raise KeyError(f"reservation {res.token} is not live")
        del self._live[res.token]
        self._used[(res.kind, res.resource_id)] -= res.amount
        # clamp float dust so snapshots compare exactly after churn
        if abs(self._used[(res.kind, res.resource_id)]) < 1e-9:
            self._used[(res.kind, res.resource_id)] = 0.0

    def snapshot(self) -> dict[str, float]:
        return {f"{kind}:{rid}": round(used, 6)
                for (kind, rid), used in sorted(self._used.items())}

    def utilization(self) -> dict[str, dict[str, float]]:
        """Used and total per resource, keyed kind:id, for state views."""
        return {f"{kind}:{rid}": {"used": round(self._used[(kind, rid)], 6),
                                  "total": self._capacity[(kind, rid)]}
                for kind, rid in sorted(self._capacity)}


# --- link transmission ----------------------------------------------------

def serialization_delay_ms(packet_bytes: int, bandwidth_mbps: float) -> float:
    return packet_bytes * 8 / (bandwidth_mbps * 1000)


class LinkScheduler:
    """Per-link FIFO transmission with isolated per-slice lanes.

    Serialization runs at the physical link rate, but each slice queues in
    its own lane so one slice's burst never delays another slice's packets;
    this is what makes per-slice traces independent of co-resident slices.
    Within a lane, packets entering in order arrive in order.
    """

    def __init__(self, clock: EventClock) -> None:
        self._clock = clock
        # (link_id, src_node, lane) -> time the serializer frees up
        self._busy_until: dict[tuple[str, str, int], float] = {}

    def transmit(self, link: PhysLink, src_node: str, packet_bytes: int,
                 at_ms: float, lane: int, deliver) -> float:
        """Schedule delivery of a packet across `link`; returns arrival time."""
        if packet_bytes <= 0:
            raise ValueError("packet_bytes must be > 0")
        if not link.admin_up:
            raise LinkDown(link.link_id)
        key = (link.link_id, src_node, lane)
        start = max(at_ms, self._busy_until.get(key, 0.0))
        done = start + serialization_delay_ms(packet_bytes, link.bandwidth_mbps)
        self._busy_until[key] = done
        arrival = done + link.latency_ms
        self._clock.schedule_at(arrival, deliver)
        return arrival
