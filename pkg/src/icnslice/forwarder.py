"""Name-based forwarding with per-slice PIT/CS/FIB state.

Every table is scoped by slice id: no operation on one slice ever reads or
writes another slice's tables or counters. The forwarder is pure with
respect to I/O: operations return the emissions to perform and the caller
(the event engine) puts them on the wire.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .names import Name
from .packets import (Data, Interest, Nack, NACK_NO_ROUTE, NACK_NO_SLICE,
                      NACK_TIMEOUT, Packet, wire_size)

FaceId = int


class UnknownSlice(KeyError):
    """Operation addressed a slice not provisioned on this forwarder."""


@dataclass
class PitEntry:
    name: Name
    # (face, nonce) pairs awaiting the data; nonces pairwise distinct
    downstream: list[tuple[FaceId, int]]
    upstream: set[FaceId]
    expiry: float
    # provenance of the first stamped interest absorbed here, kept so a
    # re-expression after a handoff still measures the path it replaces
    ingress: str | None = None
    trail: tuple[str, ...] = ()

    def downstream_faces(self) -> list[FaceId]:
        seen: list[FaceId] = []
        for face, _ in self.downstream:
            if face not in seen:
                seen.append(face)
        return seen


@dataclass
class CsEntry:
    data: Data
    inserted_at: float
    last_hit: float

    def size_bytes(self) -> int:
        return wire_size(self.data)

    def fresh(self, now: float) -> bool:
        return self.inserted_at + self.data.freshness_ms > now


class ContentStore:
    """LRU cache bounded by a byte budget; stale entries never serve."""

    def __init__(self, budget_bytes: int) -> None:
        self.budget_bytes = budget_bytes
        self._entries: dict[Name, CsEntry] = {}
        self._bytes = 0

    @property
    def used_bytes(self) -> int:
        return self._bytes

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self) -> list[CsEntry]:
        return list(self._entries.values())

    def lookup(self, name: Name, now: float) -> Data | None:
        entry = self._entries.get(name)
        if entry is None:
            return None
        if not entry.fresh(now):
            self._evict(name)
            return None
        entry.last_hit = now
        return entry.data

    def insert(self, data: Data, now: float) -> None:
        size = wire_size(data)
        if size > self.budget_bytes:
            return  # never admit an object which alone busts the budget
        if data.name in self._entries:
            self._evict(data.name)
        # purge stale entries first, then least-recently-hit until it fits
        for stale in [n for n, e in self._entries.items() if not e.fresh(now)]:
            self._evict(stale)
        while self._bytes + size > self.budget_bytes:
            lru = min(self._entries.items(), key=lambda kv: (kv[1].last_hit, str(kv[0])))
            self._evict(lru[0])
        self._entries[data.name] = CsEntry(data, now, now)
        self._bytes += size

    def set_budget(self, budget_bytes: int, now: float) -> None:
        self.budget_bytes = budget_bytes
        while self._bytes > self.budget_bytes and self._entries:
            lru = min(self._entries.items(), key=lambda kv: (kv[1].last_hit, str(kv[0])))
            self._evict(lru[0])

    def _evict(self, name: Name) -> None:
        entry = self._entries.pop(name)
        self._bytes -= entry.size_bytes()


@dataclass
class FibEntry:
    prefix: Name
    nexthops: list[FaceId]  # priority order; forwarding uses the first


class Fib:
    """Prefix tree of FibEntry; at most one entry per prefix."""

    def __init__(self) -> None:
        self._root: dict = {"children": {}, "entry": None}

    def insert(self, prefix: Name, nexthops: list[FaceId]) -> None:
        node = self._root
        for comp in prefix.components:
            node = node["children"].setdefault(comp, {"children": {}, "entry": None})
        node["entry"] = FibEntry(prefix, list(nexthops))

    def remove(self, prefix: Name) -> bool:
        node = self._root
        for comp in prefix.components:
            node = node["children"].get(comp)
            if node is None:
                return False
        had = node["entry"] is not None
        node["entry"] = None
        return had

    def longest_prefix_match(self, name: Name) -> FibEntry | None:
        node = self._root
        best = None
        for comp in name.components:
            node = node["children"].get(comp)
            if node is None:
                break
            if node["entry"] is not None:
                best = node["entry"]
        return best

    def entries(self) -> list[FibEntry]:
        out: list[FibEntry] = []

        def walk(node):
            if node["entry"] is not None:
                out.append(node["entry"])
            for comp in sorted(node["children"]):
                walk(node["children"][comp])

        walk(self._root)
        return out


def longest_prefix_match(fib: Fib, name: Name) -> FibEntry | None:
    return fib.longest_prefix_match(name)


@dataclass
class SliceTables:
    pit: dict[Name, PitEntry] = field(default_factory=dict)
    cs: ContentStore = field(default_factory=lambda: ContentStore(0))
    fib: Fib = field(default_factory=Fib)


# `drops` counts dropped Interests only; it participates in the interest
# conservation identity. Unsolicited data has its own counter.
COUNTER_FIELDS = ("interests_in", "interests_out", "data_in", "data_out",
                  "cs_hits", "pit_aggregations", "drops", "nacks",
                  "nacks_in", "nacks_out", "pit_expired", "data_drops")


def new_counters() -> dict[str, int]:
    return {k: 0 for k in COUNTER_FIELDS}


@dataclass
class ForwardingActions:
    """What the event engine must do after one forwarder operation."""
    emissions: list[tuple[FaceId, Packet]] = field(default_factory=list)
    outcome: str = ""
    pit_expiry: float | None = None  # set when a PIT entry was created/extended


class Forwarder:
    """One node's slice-scoped forwarding state."""

    def __init__(self, node_id: str) -> None:
        self.node_id = node_id
        self.tables: dict[int, SliceTables] = {}
        self.counters: dict[int, dict[str, int]] = {}

    # -- provisioning ------------------------------------------------------

    def provision_slice(self, slice_id: int, cache_budget_bytes: int) -> None:
        if slice_id in self.tables:
            # budget may be re-stated (slice adaptation)
            self.tables[slice_id].cs.set_budget(cache_budget_bytes, 0.0)
            return
        tables = SliceTables()
        tables.cs = ContentStore(cache_budget_bytes)
        self.tables[slice_id] = tables
        self.counters[slice_id] = new_counters()

    def unprovision_slice(self, slice_id: int) -> None:
        self.tables.pop(slice_id, None)
        self.counters.pop(slice_id, None)

    def has_slice(self, slice_id: int) -> bool:
        return slice_id in self.tables

    def set_cache_budget(self, slice_id: int, budget_bytes: int, now: float) -> None:
        self._slice(slice_id).cs.set_budget(budget_bytes, now)

    def _slice(self, slice_id: int) -> SliceTables:
        try:
            return self.tables[slice_id]
        except KeyError:
            raise UnknownSlice(slice_id) from None

    def _count(self, slice_id: int, counter: str, delta: int = 1) -> None:
        self.counters[slice_id][counter] += delta

    # -- fib management ----------------------------------------------------

    def install_route(self, slice_id: int, prefix: Name, nexthops: list[FaceId]) -> None:
        self._slice(slice_id).fib.insert(prefix, nexthops)

    def withdraw_route(self, slice_id: int, prefix: Name) -> bool:
        return self._slice(slice_id).fib.remove(prefix)

    # -- data plane --------------------------------------------------------

    def on_interest(self, in_face: FaceId, interest: Interest,
                    now: float) -> ForwardingActions:
        actions = ForwardingActions()
        if interest.slice_id not in self.tables:
            actions.outcome = "nack-no-slice"
            actions.emissions.append(
                (in_face, Nack(interest.slice_id, interest.name,
                               interest.nonce, NACK_NO_SLICE)))
            return actions

        interest = interest.hopped(self.node_id)
        tables = self.tables[interest.slice_id]
        self._count(interest.slice_id, "interests_in")

        cached = tables.cs.lookup(interest.name, now)
        if cached is not None:
            self._count(interest.slice_id, "cs_hits")
            self._count(interest.slice_id, "data_out")
            actions.outcome = "cs-hit"
            actions.emissions.append((in_face, cached))
            return actions

        entry = tables.pit.get(interest.name)
        if entry is not None and entry.expiry <= now:
            # sweep event for this entry has not fired yet; expire it inline
            # so behaviour never depends on sweep scheduling
            tables.pit.pop(interest.name)
            self._count(interest.slice_id, "pit_expired")
            for face, nonce in entry.downstream:
                actions.emissions.append(
                    (face, Nack(interest.slice_id, interest.name, nonce,
                                NACK_TIMEOUT)))
            entry = None
        if entry is not None:
            if any(nonce == interest.nonce for _, nonce in entry.downstream):
                self._count(interest.slice_id, "drops")
                actions.outcome = "drop-duplicate-nonce"
                return actions
            entry.downstream.append((in_face, interest.nonce))
            entry.expiry = max(entry.expiry, now + interest.lifetime_ms)
            actions.pit_expiry = entry.expiry
            if entry.ingress is None and interest.ingress is not None:
                entry.ingress = interest.ingress
                entry.trail = interest.trail
            match = tables.fib.longest_prefix_match(interest.name)
            if match is not None and match.nexthops \
                    and match.nexthops[0] not in entry.upstream \
                    and match.nexthops[0] != in_face:
                # routes moved since the entry was created (e.g. a producer
                # re-attached locally); retry on the new nexthop instead of
                # waiting behind a path that may never answer
                entry.upstream.add(match.nexthops[0])
                self._count(interest.slice_id, "interests_out")
                actions.outcome = "forwarded"
                actions.emissions.append((match.nexthops[0], interest))
                return actions
            self._count(interest.slice_id, "pit_aggregations")
            actions.outcome = "aggregated"
            return actions

        match = tables.fib.longest_prefix_match(interest.name)
        if match is None or not match.nexthops:
            self._count(interest.slice_id, "nacks")
            self._count(interest.slice_id, "nacks_out")
            actions.outcome = "nack-no-route"
            actions.emissions.append(
                (in_face, Nack(interest.slice_id, interest.name,
                               interest.nonce, NACK_NO_ROUTE)))
            return actions

        nexthop = match.nexthops[0]
        tables.pit[interest.name] = PitEntry(
            name=interest.name,
            downstream=[(in_face, interest.nonce)],
            upstream={nexthop},
            expiry=now + interest.lifetime_ms,
            ingress=interest.ingress,
            trail=interest.trail,
        )
        self._count(interest.slice_id, "interests_out")
        actions.outcome = "forwarded"
        actions.pit_expiry = now + interest.lifetime_ms
        actions.emissions.append((nexthop, interest))
        return actions

    def on_data(self, in_face: FaceId, data: Data, now: float) -> ForwardingActions:
        actions = ForwardingActions()
        if data.slice_id not in self.tables:
            actions.outcome = "drop-no-slice"
            return actions
        tables = self.tables[data.slice_id]
        self._count(data.slice_id, "data_in")
        entry = tables.pit.pop(data.name, None)
        if entry is None:
            actions.outcome = "drop-unsolicited"
            self._count(data.slice_id, "data_drops")
            return actions
        for face in entry.downstream_faces():
            actions.emissions.append((face, data))
            self._count(data.slice_id, "data_out")
        tables.cs.insert(data, now)
        actions.outcome = "satisfied"
        return actions

    def on_nack(self, in_face: FaceId, nack: Nack, now: float) -> ForwardingActions:
        """Propagate an upstream nack to everyone waiting on the name."""
        actions = ForwardingActions()
        if nack.slice_id not in self.tables:
            actions.outcome = "drop-no-slice"
            return actions
        tables = self.tables[nack.slice_id]
        self._count(nack.slice_id, "nacks_in")
        entry = tables.pit.get(nack.name)
        # interests keep their nonce hop by hop, so a nack answering a live
        # entry always names a downstream nonce; anything else is an echo of
        # an expression this entry has already outlived
        if entry is None or \
                all(nonce != nack.nonce for _, nonce in entry.downstream):
            actions.outcome = "drop-unsolicited-nack"
            return actions
        tables.pit.pop(nack.name)
        for face, nonce in entry.downstream:
            actions.emissions.append(
                (face, Nack(nack.slice_id, nack.name, nonce, nack.reason)))
            self._count(nack.slice_id, "nacks_out")
        actions.outcome = "nack-propagated"
        return actions

    def pit_sweep(self, now: float,
                  only_slice: int | None = None) -> tuple[dict[int, int],
                                                          list[tuple[int, FaceId, Nack]]]:
        """Remove entries with expiry <= now, across all slices by default.

        Returns the per-slice removal counts and the timeout nacks to emit,
        each tagged with its slice id. Pass only_slice so that timer-driven
        sweeps stay slice-scoped and never reorder another slice's events.
        """
        removed: dict[int, int] = {}
        nacks: list[tuple[int, FaceId, Nack]] = []
        for slice_id, tables in self.tables.items():
            if only_slice is not None and slice_id != only_slice:
                continue
            expired = [n for n, e in tables.pit.items() if e.expiry <= now]
            for name in expired:
                entry = tables.pit.pop(name)
                removed[slice_id] = removed.get(slice_id, 0) + 1
                self._count(slice_id, "pit_expired")
                for face, nonce in entry.downstream:
                    nacks.append(
                        (slice_id, face, Nack(slice_id, name, nonce, NACK_TIMEOUT)))
        return removed, nacks

    def pending_entries(self, slice_id: int,
                        prefix: Name) -> list[tuple[Name, PitEntry]]:
        tables = self._slice(slice_id)
        return sorted(((n, e) for n, e in tables.pit.items()
                       if prefix.is_prefix_of(n)), key=lambda ne: str(ne[0]))
