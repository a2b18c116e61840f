"""Producer handoff, late binding, ingress updates, and consumer movement."""

import pytest

from icnslice import config, fixture_path
from icnslice.control import EmulationServer
from icnslice.mobility import NoSuchInterface, PrefixEntry, _lb_name
from icnslice.names import Name, parse
from icnslice.packets import Interest
from icnslice.substrate import load_topology


def make_server(topology="demo6_access.json", mobility=True, seed=0):
    server = EmulationServer(
        load_topology(fixture_path(topology).read_text()), seed=seed)
    doc = {
        "slice_name": "conf",
        "sites": [
            {"site_id": "west", "poa_node_id": "poa1",
             "expected_participants": 3},
            {"site_id": "east", "poa_node_id": "poa2",
             "expected_participants": 3},
        ],
        "per_stream_kbps": 512,
        "latency_bound_ms": 50.0,
        "cache_window_s": 2.0,
        "mobility_enabled": mobility,
    }
    view = server.create_slice(doc)
    return server, view["slice_id"]


def rec(server):
    return server.record_by_name("conf")


# --- access link selection -----------------------------------------------------

def test_pick_access_link_by_type_and_preference():
    server, _ = make_server()
    mob = server.mobility
    assert mob.pick_access_link("poa2", "LTE").link_id == "a-l2"
    assert mob.pick_access_link("poa2", None).link_id == "a-e2"
    assert mob.pick_access_link("poa2", None, prefer_like="LTE").link_id == "a-l2"
    # preference is soft, an explicit type is not
    assert mob.pick_access_link("poa1", None, prefer_like="LTE").link_id == "a-e1"
    with pytest.raises(NoSuchInterface):
        mob.pick_access_link("poa1", "LTE")


# --- prefix maps and epochs -------------------------------------------------------

def test_initial_attachment_tracks_producers_only():
    server, sid = make_server()
    server.add_participant(sid, "alice", poa="poa2", role="producer")
    server.add_participant(sid, "bob", poa="poa1", role="consumer")
    record = rec(server)
    alice_key = (sid, record.participant_prefix("alice"))
    bob_key = (sid, record.participant_prefix("bob"))
    agent2 = server.mobility.agents["poa2"]
    assert agent2.maps[alice_key].current_poa == "poa2"
    assert agent2.maps[alice_key].epoch == 1
    assert bob_key not in server.mobility.agents["poa1"].maps
    assert record.participants["alice"].delivery_observer is not None
    assert record.participants["bob"].delivery_observer is None


def test_initial_attachment_noop_when_mobility_disabled():
    server, sid = make_server(mobility=False)
    server.add_participant(sid, "alice", poa="poa2", role="producer")
    assert server.mobility.agents["poa2"].maps == {}


def test_entry_for_prefers_longest_prefix():
    server, sid = make_server()
    agent = server.mobility.agents["poa1"]
    short = parse("/conf/conf/al")
    long = parse("/conf/conf/al/media")
    agent.maps[(sid, short)] = PrefixEntry("poa1", 7, 1)
    agent.maps[(sid, long)] = PrefixEntry("poa2", None, 1)
    found = agent.entry_for(sid, parse("/conf/conf/al/media/3"))
    assert found is not None and found[0] == long
    found = agent.entry_for(sid, parse("/conf/conf/al/other"))
    assert found[0] == short
    assert agent.entry_for(sid, parse("/conf/conf/zz")) is None


def test_stale_mapping_update_is_ignored():
    server, sid = make_server()
    agent = server.mobility.agents["poa1"]
    prefix = parse("/conf/conf/alice")
    agent.maps[(sid, prefix)] = PrefixEntry("poa1", 5, epoch=4)
    stale = Interest(
        config.CONTROL_SLICE_ID,
        Name(("poa", "poa1", "mu", str(sid), "3", "poa2") + prefix.components),
        nonce=1)
    agent._on_mapping_update(sid, stale)
    assert agent.maps[(sid, prefix)].current_poa == "poa1"
    assert agent.maps[(sid, prefix)].epoch == 4

    newer = Interest(
        config.CONTROL_SLICE_ID,
        Name(("poa", "poa1", "mu", str(sid), "9", "poa2") + prefix.components),
        nonce=2)
    agent._on_mapping_update(sid, newer)
    assert agent.maps[(sid, prefix)].current_poa == "poa2"
    assert agent.maps[(sid, prefix)].epoch == 9


def test_envelope_for_unprovisioned_slice_is_dropped_and_logged():
    server, sid = make_server()
    agent = server.mobility.agents["poa1"]
    inner = Interest(99, parse("/conf/ghost/x/media/0"), nonce=3)
    outer = Interest(config.CONTROL_SLICE_ID, _lb_name("poa1", 99, inner.name),
                     nonce=4, encap=inner)
    agent._on_envelope_interest(99, outer)
    assert any(r["kind"] == "lb-drop" and r["slice"] == 99
               for r in server.net.log)
    assert (99, inner.name) not in agent.tunnel_back


# --- handoff ---------------------------------------------------------------------

def run_handoff(server, sid, gap_ms=30.0):
    server.handoff(sid, "alice", to_poa="poa1", gap_ms=gap_ms)
    server.advance(3000.0)
    return server.net.metrics.handoff_reports[-1]


def test_handoff_report_timeline_and_epoch():
    server, sid = make_server()
    server.add_participant(sid, "alice", poa="poa2", role="producer")
    server.add_participant(sid, "bob", poa="poa1", role="consumer")
    server.publish(sid, "alice", count=30, interval_ms=10.0)
    server.advance(100.0)
    t0 = server.net.clock.now
    report = run_handoff(server, sid, gap_ms=30.0)

    assert report.denied_reason is None
    assert report.from_poa == "poa2" and report.to_poa == "poa1"
    assert report.epoch == 2  # join was epoch 1
    assert report.requested_at == pytest.approx(
        t0 + config.COMMAND_EPSILON_MS)
    assert report.attach_at == pytest.approx(report.requested_at + 30.0)
    assert report.notify_processed_at > report.attach_at
    assert report.interests_lost == 0
    # the old PoA repointed its map at the new one
    key = (sid, rec(server).participant_prefix("alice"))
    assert server.mobility.agents["poa2"].maps[key].current_poa == "poa1"
    assert server.mobility.agents["poa2"].maps[key].epoch == 2


def test_handoff_within_lifetime_loses_nothing():
    server, sid = make_server()
    server.add_participant(sid, "alice", poa="poa2", role="producer")
    server.add_participant(sid, "bob", poa="poa1", role="consumer")
    server.publish(sid, "alice", count=40, interval_ms=10.0)
    server.advance(150.0)
    report = run_handoff(server, sid, gap_ms=40.0)
    assert report.interests_lost == 0
    assert rec(server).participants["bob"].received["alice"] == set(range(40))


def test_late_binding_keeps_the_original_fanout():
    server, sid = make_server()
    server.add_participant(sid, "alice", poa="poa2", role="producer",
                           access_type="LTE")
    server.add_participant(sid, "c1", poa="poa1", role="consumer")
    server.add_participant(sid, "c2", poa="poa2", role="consumer",
                           access_type="Ethernet")
    server.advance(100.0)
    alice = rec(server).participants["alice"]
    alice.publish()
    alice.detach()  # both fetches will park in poa2's PIT
    server.advance(300.0)
    pit = server.net.forwarders["poa2"].pending_entries(
        sid, rec(server).participant_prefix("alice"))
    assert sum(len(e.downstream) for _, e in pit) == 2

    report = run_handoff(server, sid)
    assert report.pending_at_detach == 2
    assert report.late_bound == 2
    assert report.owed == {}
    assert report.interests_lost == 0
    assert rec(server).participants["c1"].received["alice"] == {0}
    assert rec(server).participants["c2"].received["alice"] == {0}


def test_denied_handoff_counts_pending_as_lost():
    server, sid = make_server(mobility=False)
    server.add_participant(sid, "alice", poa="poa2", role="producer",
                           access_type="LTE")
    server.add_participant(sid, "bob", poa="poa1", role="consumer")
    server.advance(100.0)
    alice = rec(server).participants["alice"]
    alice.publish()
    alice.detach()
    server.advance(300.0)

    report = run_handoff(server, sid)
    assert report.denied_reason == "MobilityDisabled"
    assert report.pending_at_detach == 1
    assert report.interests_lost == 1
    assert report.epoch == 0
    # the station reattached blind: it sits at the new PoA but no state moved
    assert alice.poa_node == "poa1"
    assert server.mobility.agents["poa1"].maps == {}
    server.advance(60_000.0)
    assert rec(server).participants["bob"].received.get("alice", set()) == set()


def test_ingress_updates_shortcut_later_traffic():
    server, sid = make_server("line4.json")
    server.add_participant(sid, "alice", poa="poa1", role="producer")
    server.add_participant(sid, "carol", poa="ingress", role="consumer")
    server.publish(sid, "alice", count=60, interval_ms=10.0)
    server.advance(200.0)

    server.handoff(sid, "alice", to_poa="poa2", gap_ms=30.0)
    server.advance(3000.0)
    report = server.net.metrics.handoff_reports[-1]
    assert report.interests_lost == 0
    assert report.ingress_updates == 1
    assert report.ingress_acks == 1
    assert report.ingress_updates_done_at is not None
    # the consumer's ingress now maps the prefix straight to the new PoA
    key = (sid, rec(server).participant_prefix("alice"))
    assert server.mobility.agents["ingress"].maps[key].current_poa == "poa2"
    assert rec(server).participants["carol"].received["alice"] == set(range(60))
    # once the shortcut is in, deliveries run at unit stretch
    assert report.stretch_after == pytest.approx(1.0)
    assert report.stretch_before > 1.0


def test_handoff_to_same_type_prefers_like_interface():
    server, sid = make_server()
    server.add_participant(sid, "alice", poa="poa1", role="producer",
                           access_type="WiFi")
    server.advance(50.0)
    server.handoff(sid, "alice", to_poa="poa2", gap_ms=10.0)
    server.advance(500.0)
    assert rec(server).participants["alice"].link_id == "a-w2"


# --- consumer movement -------------------------------------------------------------

def test_consumer_move_to_same_poa_is_a_noop():
    server, sid = make_server()
    server.add_participant(sid, "bob", poa="poa1", role="consumer")
    server.move(sid, "bob", to_poa="poa1")
    server.advance(10.0)
    assert any(r["kind"] == "move-noop" for r in server.net.log)
    assert rec(server).participants["bob"].link_id == "a-e1"


def test_consumer_move_keeps_the_stream_flowing():
    server, sid = make_server()
    server.add_participant(sid, "alice", poa="poa2", role="producer")
    server.add_participant(sid, "bob", poa="poa1", role="consumer")
    server.publish(sid, "alice", count=30, interval_ms=10.0)
    server.advance(150.0)
    server.move(sid, "bob", to_poa="poa2")
    server.advance(2000.0)
    bob = rec(server).participants["bob"]
    assert bob.poa_node == "poa2"
    assert bob.received["alice"] == set(range(30))


def test_producer_move_reroutes_for_everyone():
    server, sid = make_server()
    server.add_participant(sid, "alice", poa="poa2", role="producer")
    server.add_participant(sid, "bob", poa="poa1", role="consumer")
    server.publish(sid, "alice", count=10, interval_ms=10.0)
    server.advance(400.0)
    server.move(sid, "alice", to_poa="poa1")
    server.publish(sid, "alice", count=10, interval_ms=10.0)
    server.advance(2000.0)
    assert rec(server).participants["bob"].received["alice"] == set(range(20))
    prefix = rec(server).participant_prefix("alice")
    assert rec(server).routes[prefix][0] == "poa1"


# --- cleanup -----------------------------------------------------------------------

def test_forget_slice_clears_all_mobility_state():
    server, sid = make_server()
    server.add_participant(sid, "alice", poa="poa2", role="producer")
    server.add_participant(sid, "bob", poa="poa1", role="consumer")
    server.publish(sid, "alice", count=5, interval_ms=10.0)
    server.advance(200.0)
    server.handoff(sid, "alice", to_poa="poa1", gap_ms=10.0)
    server.advance(1000.0)
    server.delete_slice(sid)
    mob = server.mobility
    assert all(not agent.maps for agent in mob.agents.values())
    assert all(not agent.tunnel_back for agent in mob.agents.values())
    assert mob.epochs == {} and mob.active_reports == {}
    assert mob.provenance == {}
