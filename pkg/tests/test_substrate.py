"""Topology loading, capacity ledger, and the deterministic link model."""

import json

import pytest
from hypothesis import given, strategies as st

from icnslice import config, fixture_path
from icnslice.clock import EventClock
from icnslice.substrate import (
    CapacityLedger,
    InsufficientCapacity,
    LinkDown,
    LinkScheduler,
    SchemaError,
    Topology,
    ValidationError,
    load_topology,
    serialization_delay_ms,
)

from oracles import shortest_path, topo_adjacency


def doc(nodes, links):
    return {"nodes": nodes, "links": links}


def infra(nid, role="edge", compute=4, storage=1000, domain="d1"):
    return {"id": nid, "role": role, "compute": compute,
            "storage_mb": storage, "domain": domain}


def link(lid, a, b, bw=100, lat=1, access=None):
    out = {"id": lid, "a": a, "b": b, "bandwidth_mbps": bw, "latency_ms": lat}
    if access:
        out["access_type"] = access
    return out


# --- loader ----------------------------------------------------------------

def test_bundled_demo_topology_counts():
    topo = load_topology(fixture_path("demo6.json").read_text())
    assert len(topo.nodes) == 6
    assert len(topo.links) == 7
    roles = sorted(n.role for n in topo.nodes.values())
    assert roles == ["access_poa", "access_poa", "core", "datacenter",
                     "edge", "edge"]


def test_link_with_unknown_node_rejected():
    with pytest.raises(ValidationError):
        load_topology(doc([infra("a"), infra("b")],
                          [link("l1", "a", "b"), link("l2", "a", "ghost")]))


def test_single_node_rejected():
    with pytest.raises(ValidationError):
        load_topology(doc([infra("a")], []))


def test_disconnected_infra_rejected():
    with pytest.raises(ValidationError):
        load_topology(doc([infra(n) for n in "abcd"],
                          [link("l1", "a", "b"), link("l2", "c", "d")]))


def test_missing_field_is_schema_error():
    bad = doc([{"id": "a", "role": "edge", "compute": 1, "domain": "d"},
               infra("b")], [link("l1", "a", "b")])
    with pytest.raises(SchemaError):
        load_topology(bad)


def test_invalid_json_is_schema_error():
    with pytest.raises(SchemaError):
        load_topology("{nodes: ")


def test_nonpositive_capacity_rejected():
    with pytest.raises(ValidationError):
        load_topology(doc([infra("a"), infra("b")],
                          [link("l1", "a", "b", bw=0)]))
    with pytest.raises(ValidationError):
        load_topology(doc([infra("a"), infra("b")],
                          [link("l1", "a", "b", lat=0)]))


def test_access_link_requires_client_and_poa():
    nodes = [infra("p", role="access_poa"), infra("e"),
             {"id": "sta", "role": "client"}]
    ok = doc(nodes, [link("l1", "p", "e"), link("a1", "p", "sta", access="WiFi")])
    topo = load_topology(ok)
    assert topo.nodes["sta"].is_client
    assert topo.access_link("p", "WiFi").link_id == "a1"

    # client link without an access type
    with pytest.raises(ValidationError):
        load_topology(doc(nodes, [link("l1", "p", "e"),
                                  link("a1", "p", "sta")]))
    # access type on an infra-infra link
    with pytest.raises(ValidationError):
        load_topology(doc(nodes, [link("l1", "p", "e", access="WiFi"),
                                  link("a1", "p", "sta", access="WiFi")]))


def test_access_presets_fill_missing_fields():
    nodes = [infra("p", role="access_poa"), infra("e"),
             {"id": "sta", "role": "client"}]
    topo = load_topology(doc(nodes, [
        link("l1", "p", "e"),
        {"id": "a1", "a": "p", "b": "sta", "access_type": "LTE"}]))
    lat, bw = config.ACCESS_PRESETS["LTE"]
    assert topo.links["a1"].latency_ms == lat
    assert topo.links["a1"].bandwidth_mbps == bw


def test_clients_are_not_counted_as_infrastructure():
    topo = load_topology(fixture_path("demo6_access.json").read_text())
    assert len(topo.infra_node_ids) == 6
    assert all(topo.nodes[n].is_client is False for n in topo.infra_node_ids)


# --- transmission model ------------------------------------------------------

def test_serialization_plus_latency_arithmetic():
    topo = load_topology(doc([infra("a"), infra("b")],
                             [link("l1", "a", "b", bw=10, lat=5)]))
    clock = EventClock()
    sched = LinkScheduler(clock)
    got = []
    arrival = sched.transmit(topo.links["l1"], "a", 1250, at_ms=0.0, lane=1,
                             deliver=lambda: got.append(clock.now))
    assert arrival == 6.0  # 1250 B at 10 Mbps = 1.0 ms on the wire, + 5 ms
    clock.run_until(10)
    assert got == [6.0]


def test_access_type_latency_difference_is_exact():
    # identical bandwidth so only the latency presets differ
    nodes = [infra("p", role="access_poa"), infra("e"),
             {"id": "s1", "role": "client"}, {"id": "s2", "role": "client"}]
    topo = load_topology(doc(nodes, [
        link("l1", "p", "e"),
        link("a1", "p", "s1", bw=20, lat=config.ACCESS_PRESETS["LTE"][0],
             access="LTE"),
        link("a2", "p", "s2", bw=20, lat=config.ACCESS_PRESETS["Ethernet"][0],
             access="Ethernet")]))
    clock = EventClock()
    sched = LinkScheduler(clock)
    t_lte = sched.transmit(topo.links["a1"], "p", 500, 0.0, 1, lambda: None)
    t_eth = sched.transmit(topo.links["a2"], "p", 500, 0.0, 1, lambda: None)
    assert t_lte - t_eth == 49.0


def test_fifo_per_lane_queueing():
    topo = load_topology(doc([infra("a"), infra("b")],
                             [link("l1", "a", "b", bw=1, lat=2)]))
    clock = EventClock()
    sched = LinkScheduler(clock)
    # 1 Mbps: 125-byte packet = 1 ms serialization
    t1 = sched.transmit(topo.links["l1"], "a", 125, 0.0, 1, lambda: None)
    t2 = sched.transmit(topo.links["l1"], "a", 125, 0.0, 1, lambda: None)
    t3 = sched.transmit(topo.links["l1"], "a", 125, 0.5, 1, lambda: None)
    assert (t1, t2, t3) == (3.0, 4.0, 5.0)  # back-to-back serialization
    # a different lane does not queue behind lane 1
    t4 = sched.transmit(topo.links["l1"], "a", 125, 0.0, 2, lambda: None)
    assert t4 == 3.0
    # nor does the reverse direction
    t5 = sched.transmit(topo.links["l1"], "b", 125, 0.0, 1, lambda: None)
    assert t5 == 3.0


def test_transmit_on_disabled_link_raises():
    topo = load_topology(doc([infra("a"), infra("b")],
                             [link("l1", "a", "b")]))
    clock = EventClock()
    sched = LinkScheduler(clock)
    topo.links["l1"].admin_up = False
    with pytest.raises(LinkDown):
        sched.transmit(topo.links["l1"], "a", 100, 0.0, 1, lambda: None)


@given(st.integers(min_value=1, max_value=10_000),
       st.floats(min_value=0.1, max_value=1000, allow_nan=False))
def test_serialization_delay_formula(nbytes, mbps):
    assert serialization_delay_ms(nbytes, mbps) == nbytes * 8 / (mbps * 1000)


# --- capacity ledger ---------------------------------------------------------

@pytest.fixture
def small_topo() -> Topology:
    return load_topology(doc(
        [infra("a", compute=4, storage=100), infra("b", compute=2, storage=50)],
        [link("l1", "a", "b", bw=10)]))


def test_overcommit_rejected(small_topo):
    ledger = CapacityLedger(small_topo)
    ledger.reserve("compute", "a", 3)
    with pytest.raises(InsufficientCapacity):
        ledger.reserve("compute", "a", 2)


def test_release_restores_exactly(small_topo):
    ledger = CapacityLedger(small_topo)
    before = ledger.snapshot()
    r = ledger.reserve("compute", "a", 2)
    ledger.release(r)
    assert ledger.snapshot() == before
    ledger.reserve("compute", "a", 4)  # full capacity available again


def test_two_embeddings_cannot_oversubscribe_link(small_topo):
    # replay two reservation sequences against the same ledger
    ledger = CapacityLedger(small_topo)
    ledger.reserve("bandwidth", "l1", 7)
    with pytest.raises(InsufficientCapacity):
        ledger.reserve("bandwidth", "l1", 7)
    assert ledger.residual("bandwidth", "l1") == 3


@given(st.lists(st.tuples(st.sampled_from(["compute", "storage"]),
                          st.sampled_from(["a", "b"]),
                          st.floats(min_value=0.1, max_value=5)),
                max_size=30))
def test_ledger_never_oversubscribes_and_releases_invert(ops):
    topo = load_topology(doc(
        [infra("a", compute=4, storage=100), infra("b", compute=2, storage=50)],
        [link("l1", "a", "b", bw=10)]))
    ledger = CapacityLedger(topo)
    before = ledger.snapshot()
    live = []
    for kind, rid, amount in ops:
        try:
            live.append(ledger.reserve(kind, rid, amount))
        except InsufficientCapacity:
            pass
        assert ledger.residual(kind, rid) >= -1e-9
    for res in live:
        ledger.release(res)
    assert ledger.snapshot() == before


# --- event clock ---------------------------------------------------------

def test_clock_dispatches_in_time_then_insertion_order():
    clock = EventClock()
    out = []
    clock.schedule_at(5.0, lambda: out.append("b"))
    clock.schedule_at(1.0, lambda: out.append("a"))
    clock.schedule_at(5.0, lambda: out.append("c"))
    clock.run_until(10.0)
    assert out == ["a", "b", "c"]
    assert clock.now == 10.0


def test_clock_rejects_scheduling_into_the_past():
    clock = EventClock()
    clock.schedule_at(5.0, lambda: None)
    clock.run_until(6.0)
    with pytest.raises(ValueError):
        clock.schedule_at(2.0, lambda: None)


def test_clock_trace_is_reproducible():
    def run() -> list[tuple[float, int]]:
        clock = EventClock()
        trace = []

        def tick(i):
            trace.append((clock.now, i))
            if i < 20:
                clock.schedule(0.5 * (i % 3) + 0.1, lambda: tick(i + 1))

        clock.schedule_at(0.0, lambda: tick(0))
        clock.run_all()
        return trace

    assert run() == run()


# --- shortest-path sanity of the fixture (used by later admission tests) ---

def test_demo_fixture_best_poa_to_poa_latency():
    topo = load_topology(fixture_path("demo6.json").read_text())
    adj = topo_adjacency(topo)
    cost, path = shortest_path(adj, "poa1", "poa2")
    assert cost == 12.0
    assert path == ["poa1", "edge1", "core", "edge2", "poa2"]
