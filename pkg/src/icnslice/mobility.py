"""Producer handoff and consumer movement.

Every access PoA owns a stable topological name under /poa/<node>. A PoA
agent on the control slice maps producer prefixes to whichever PoA currently
serves them; when a producer hands off, the old PoA tunnels pending and
late-arriving Interests to the new PoA inside control-slice envelopes and
then walks the recorded ingress PoAs so they shortcut future traffic.

Epochs are per (slice, prefix) and only ever grow; an update carrying a
stale epoch is acknowledged but changes nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import config
from .conference import Participant
from .engine import Network
from .forwarder import FaceId
from .names import Name
from .orchestrator import Orchestrator, SliceRecord
from .packets import Data, Interest, Packet
from .substrate import PhysLink


class MobilityDisabled(RuntimeError):
    def __init__(self, report: "HandoffReport"):
        super().__init__("mobility is disabled for this slice")
        self.report = report


class NoSuchInterface(ValueError):
    pass


@dataclass
class HandoffReport:
    slice_id: int
    participant: str
    from_poa: str
    to_poa: str
    requested_at: float
    gap_ms: float
    epoch: int = 0
    denied_reason: str | None = None
    pending_at_detach: int = 0
    late_bound: int = 0
    # exact media names re-expressed at the old PoA, with the downstream
    # count still owed; drained as tunneled replies come back
    owed: dict[str, int] = field(default_factory=dict)
    ingress_updates: int = 0
    ingress_acks: int = 0
    attach_at: float | None = None
    notify_processed_at: float | None = None
    ingress_updates_done_at: float | None = None
    stretch_before: float | None = None
    stretch_after: float | None = None

    @property
    def interests_lost(self) -> int:
        if self.denied_reason is not None:
            return self.pending_at_detach
        return sum(self.owed.values())

    def view(self) -> dict:
        return {
            "slice": self.slice_id,
            "participant": self.participant,
            "from_poa": self.from_poa,
            "to_poa": self.to_poa,
            "requested_at_ms": round(self.requested_at, 6),
            "gap_ms": self.gap_ms,
            "epoch": self.epoch,
            "denied_reason": self.denied_reason,
            "pending_at_detach": self.pending_at_detach,
            "late_bound": self.late_bound,
            "interests_lost": self.interests_lost,
            "ingress_updates": self.ingress_updates,
            "ingress_updates_done_at_ms": (
                round(self.ingress_updates_done_at, 6)
                if self.ingress_updates_done_at is not None else None),
            "stretch_before": self.stretch_before,
            "stretch_after": self.stretch_after,
        }


@dataclass
class PrefixEntry:
    current_poa: str
    local_face: FaceId | None  # access face when the producer is local
    epoch: int


def _lb_name(current_poa: str, slice_id: int, inner: Name) -> Name:
    return Name((config.POA_NAMESPACE, current_poa, "lb", str(slice_id))
                + inner.components)


def _ho_name(old_poa: str, slice_id: int, epoch: int, new_poa: str,
             prefix: Name) -> Name:
    return Name((config.POA_NAMESPACE, old_poa, "ho", str(slice_id),
                 str(epoch), new_poa) + prefix.components)


def _mu_name(ingress: str, slice_id: int, epoch: int, new_poa: str,
             prefix: Name) -> Name:
    return Name((config.POA_NAMESPACE, ingress, "mu", str(slice_id),
                 str(epoch), new_poa) + prefix.components)


class PoaAgent:
    """Control-slice application living on one access PoA."""

    def __init__(self, manager: "MobilityManager", node_id: str) -> None:
        self.manager = manager
        self.net = manager.net
        self.node_id = node_id
        self.maps: dict[tuple[int, Name], PrefixEntry] = {}
        # inner name -> envelope name awaiting the tunneled reply
        self.tunnel_back: dict[tuple[int, Name], Name] = {}
        self._slice_faces: dict[int, FaceId] = {}
        self.control_face = self.net.new_app_face(
            node_id, config.CONTROL_SLICE_ID, self.on_control_packet,
            label="poa-agent")

    def slice_face(self, slice_id: int) -> FaceId:
        if slice_id not in self._slice_faces:
            self._slice_faces[slice_id] = self.net.new_app_face(
                self.node_id, slice_id,
                lambda pkt, sid=slice_id: self.on_slice_packet(sid, pkt),
                label="poa-agent-tunnel")
        return self._slice_faces[slice_id]

    def entry_for(self, slice_id: int, name: Name) -> tuple[Name, PrefixEntry] | None:
        best: tuple[Name, PrefixEntry] | None = None
        for (sid, prefix), entry in self.maps.items():
            if sid == slice_id and prefix.is_prefix_of(name):
                if best is None or len(prefix.components) > len(best[0].components):
                    best = (prefix, entry)
        return best

    # -- attachment ------------------------------------------------------------

    def attach_local(self, slice_id: int, prefix: Name, access_face: FaceId,
                     epoch: int) -> None:
        self.maps[(slice_id, prefix)] = PrefixEntry(self.node_id, access_face,
                                                    epoch)
        self.net.forwarders[self.node_id].install_route(slice_id, prefix,
                                                        [access_face])

    # -- control-slice traffic ----------------------------------------------------

    def on_control_packet(self, pkt: Packet) -> None:
        comps = pkt.name.components
        if len(comps) < 4 or comps[0] != config.POA_NAMESPACE:
            return
        verb, slice_id = comps[2], int(comps[3])
        if isinstance(pkt, Interest):
            if verb == "lb":
                self._on_envelope_interest(slice_id, pkt)
            elif verb == "ho":
                self._on_handoff_notify(slice_id, pkt)
            elif verb == "mu":
                self._on_mapping_update(slice_id, pkt)
        elif isinstance(pkt, Data):
            if verb == "lb":
                self._on_envelope_data(slice_id, pkt)
            elif verb == "mu":
                self.manager.on_ingress_ack(slice_id, pkt)
            # ho acks need no action: they only clear the notify's PIT state

    def _ack(self, name: Name, payload: bytes) -> None:
        self.net.inject(self.node_id, self.control_face, Data(
            config.CONTROL_SLICE_ID, name, len(payload), payload=payload,
            freshness_ms=1.0))

    def _on_envelope_interest(self, slice_id: int, outer: Interest) -> None:
        inner = outer.encap
        if not isinstance(inner, Interest):
            return
        if not self.net.forwarders[self.node_id].has_slice(slice_id):
            self.net.log_record("lb-drop", slice_id, node=self.node_id,
                                name=str(inner.name))
            return
        self.tunnel_back[(slice_id, inner.name)] = outer.name
        merged = Interest(
            inner.slice_id, inner.name, self.net.nonce(slice_id),
            inner.lifetime_ms, hop_count=inner.hop_count + outer.hop_count,
            ingress=inner.ingress, trail=inner.trail + outer.trail)
        self.net.inject(self.node_id, self.slice_face(slice_id), merged)

    def _on_envelope_data(self, slice_id: int, outer: Data) -> None:
        inner = outer.encap
        if not isinstance(inner, Data):
            return
        self.manager.on_tunneled_reply(slice_id, self.node_id, inner)
        self.net.inject(self.node_id, self.slice_face(slice_id), inner)

    def _on_handoff_notify(self, slice_id: int, pkt: Interest) -> None:
        comps = pkt.name.components
        epoch, new_poa = int(comps[4]), comps[5]
        prefix = Name(comps[6:])
        entry = self.maps.get((slice_id, prefix))
        if entry is not None and entry.epoch >= epoch:
            self._ack(pkt.name, b"stale")
            return
        self.maps[(slice_id, prefix)] = PrefixEntry(new_poa, None, epoch)
        fwd = self.net.forwarders[self.node_id]
        fwd.install_route(slice_id, prefix, [self.slice_face(slice_id)])
        bound = self._late_bind_pending(slice_id, prefix, new_poa)
        self._ack(pkt.name, b"moved")
        self.manager.on_notify_processed(slice_id, prefix, epoch, new_poa,
                                         old_poa=self.node_id,
                                         old_epoch=entry.epoch if entry else 0,
                                         late_bound=bound)

    def _late_bind_pending(self, slice_id: int, prefix: Name,
                           new_poa: str) -> dict[str, int]:
        """Re-express every pending Interest under the prefix toward the new
        PoA, keeping the local PIT entries so the eventual Data still fans
        out to the original downstreams."""
        bound: dict[str, int] = {}
        fwd = self.net.forwarders[self.node_id]
        for pit_name, entry in fwd.pending_entries(slice_id, prefix):
            bound[str(pit_name)] = len(entry.downstream)
            fresh = Interest(slice_id, pit_name, self.net.nonce(slice_id),
                             config.DEFAULT_INTEREST_LIFETIME_MS,
                             hop_count=len(entry.trail),
                             ingress=entry.ingress, trail=entry.trail)
            self._wrap_and_send(slice_id, new_poa, fresh)
        return bound

    def _on_mapping_update(self, slice_id: int, pkt: Interest) -> None:
        comps = pkt.name.components
        epoch, new_poa = int(comps[4]), comps[5]
        prefix = Name(comps[6:])
        entry = self.maps.get((slice_id, prefix))
        if entry is not None and entry.epoch >= epoch:
            self._ack(pkt.name, b"stale")
            return
        self.maps[(slice_id, prefix)] = PrefixEntry(new_poa, None, epoch)
        if self.net.forwarders[self.node_id].has_slice(slice_id):
            self.net.forwarders[self.node_id].install_route(
                slice_id, prefix, [self.slice_face(slice_id)])
        self._ack(pkt.name, b"ok")

    # -- user-slice traffic redirected through the agent ---------------------------

    def on_slice_packet(self, slice_id: int, pkt: Packet) -> None:
        if isinstance(pkt, Interest):
            found = self.entry_for(slice_id, pkt.name)
            if found is None:
                return
            _, entry = found
            if entry.current_poa == self.node_id and entry.local_face is not None:
                self.net.emit(self.node_id, entry.local_face, pkt)
                return
            self._wrap_and_send(slice_id, entry.current_poa, pkt)
        elif isinstance(pkt, Data):
            back = self.tunnel_back.pop((slice_id, pkt.name), None)
            if back is None:
                return
            self.net.inject(self.node_id, self.control_face, Data(
                config.CONTROL_SLICE_ID, back, 0, freshness_ms=1.0,
                encap=pkt))

    def _wrap_and_send(self, slice_id: int, current_poa: str,
                       inner: Interest) -> None:
        outer = Interest(config.CONTROL_SLICE_ID,
                         _lb_name(current_poa, slice_id, inner.name),
                         self.net.nonce(slice_id), inner.lifetime_ms,
                         encap=inner)
        self.net.inject(self.node_id, self.control_face, outer)


class MobilityManager:
    """Owns the PoA agents and drives attachment, handoff, and movement."""

    def __init__(self, net: Network, orch: Orchestrator) -> None:
        self.net = net
        self.orch = orch
        self.agents: dict[str, PoaAgent] = {}
        self.epochs: dict[tuple[int, Name], int] = {}
        # (slice, prefix, epoch) -> ingress PoAs that sent us Interests
        self.provenance: dict[tuple[int, Name, int], set[str]] = {}
        self.active_reports: dict[tuple[int, Name], HandoffReport] = {}

        poas = sorted(n for n in net.topo.infra_node_ids
                      if net.topo.nodes[n].role == "access_poa")
        for nid in sorted(net.forwarders):
            net.forwarders[nid].provision_slice(config.CONTROL_SLICE_ID, 0)
        for nid in poas:
            self.agents[nid] = PoaAgent(self, nid)
        for nid in sorted(net.forwarders):
            for poa in poas:
                prefix = Name((config.POA_NAMESPACE, poa))
                if nid == poa:
                    faces = [self.agents[poa].control_face]
                else:
                    lid = self.net.min_latency_next_hop(nid, poa)
                    faces = [net.link_face_id(nid, lid)]
                net.forwarders[nid].install_route(config.CONTROL_SLICE_ID,
                                                  prefix, faces)
        net.access_interest_hook = self._on_access_emit

    # -- bookkeeping hooks -------------------------------------------------------

    def _on_access_emit(self, poa_node: str, link: PhysLink,
                        interest: Interest) -> None:
        if interest.slice_id == config.CONTROL_SLICE_ID or interest.ingress is None:
            return
        agent = self.agents.get(poa_node)
        if agent is None:
            return
        found = agent.entry_for(interest.slice_id, interest.name)
        if found is None or found[1].local_face is None:
            return
        prefix, entry = found
        self.provenance.setdefault(
            (interest.slice_id, prefix, entry.epoch), set()).add(interest.ingress)

    def observe_producer_delivery(self, interest: Interest,
                                  participant: Participant) -> None:
        if interest.ingress is None:
            return
        sid = participant.slice_id
        hops_taken = len(set(interest.trail))
        baseline = self.net.sp_node_count(interest.ingress, participant.poa_node)
        ratio = hops_taken / baseline
        now = self.net.clock.now
        self.net.metrics.record_stretch(sid, ratio, now)
        report = self.active_reports.get((sid, participant.prefix))
        if report is None or report.denied_reason is not None:
            return
        if report.stretch_before is None:
            report.stretch_before = ratio
        if report.ingress_updates_done_at is not None \
                and now > report.ingress_updates_done_at:
            report.stretch_after = ratio

    def on_tunneled_reply(self, slice_id: int, node_id: str,
                          inner: Data) -> None:
        for report in reversed(self.net.metrics.handoff_reports):
            if report.slice_id != slice_id or report.from_poa != node_id:
                continue
            count = report.owed.pop(str(inner.name), None)
            if count is not None:
                return

    def on_notify_processed(self, slice_id: int, prefix: Name, epoch: int,
                            new_poa: str, old_poa: str, old_epoch: int,
                            late_bound: dict[str, int]) -> None:
        report = self.active_reports.get((slice_id, prefix))
        now = self.net.clock.now
        if report is not None:
            report.notify_processed_at = now
            report.late_bound = sum(late_bound.values())
            report.owed.update(late_bound)
        ingresses = sorted(
            self.provenance.get((slice_id, prefix, old_epoch), set())
            - {old_poa, new_poa})
        if not ingresses:
            if report is not None:
                report.ingress_updates_done_at = now
            return
        if report is not None:
            report.ingress_updates = len(ingresses)
        agent = self.agents[old_poa]
        for ingress in ingresses:
            update = Interest(
                config.CONTROL_SLICE_ID,
                _mu_name(ingress, slice_id, epoch, new_poa, prefix),
                self.net.nonce(slice_id))
            self.net.inject(old_poa, agent.control_face, update)

    def on_ingress_ack(self, slice_id: int, ack: Data) -> None:
        comps = ack.name.components
        epoch = int(comps[4])
        prefix = Name(comps[6:])
        report = self.active_reports.get((slice_id, prefix))
        if report is None or report.epoch != epoch:
            return
        report.ingress_acks += 1
        if report.ingress_acks >= report.ingress_updates \
                and report.ingress_updates_done_at is None:
            report.ingress_updates_done_at = self.net.clock.now

    # -- management operations ---------------------------------------------------

    def pick_access_link(self, poa: str, access_type: str | None,
                         prefer_like: str | None = None) -> PhysLink:
        links = self.net.topo.access_links(poa)
        if not links:
            raise NoSuchInterface(f"{poa} has no access links")
        if access_type is not None:
            for link in sorted(links, key=lambda l: l.link_id):
                if link.access_type == access_type:
                    return link
            raise NoSuchInterface(f"{poa} has no {access_type} interface")
        if prefer_like is not None:
            for link in sorted(links, key=lambda l: l.link_id):
                if link.access_type == prefer_like:
                    return link
        return sorted(links, key=lambda l: l.link_id)[0]

    def register_initial_attachment(self, record: SliceRecord,
                                    participant: Participant) -> None:
        """Track a producer's prefix from the moment it joins."""
        if not record.mobility_enabled or not participant.produce:
            return
        agent = self.agents[participant.poa_node]
        key = (record.slice_id, participant.prefix)
        self.epochs[key] = self.epochs.get(key, 0) + 1
        access_face = self.net.link_face_id(participant.poa_node,
                                            participant.link_id)
        agent.attach_local(record.slice_id, participant.prefix, access_face,
                           self.epochs[key])
        participant.delivery_observer = self.observe_producer_delivery

    def forget_participant(self, record: SliceRecord,
                           participant: Participant) -> None:
        key = (record.slice_id, participant.prefix)
        self.active_reports.pop(key, None)
        for agent in self.agents.values():
            agent.maps.pop(key, None)

    def forget_slice(self, slice_id: int) -> None:
        for agent in self.agents.values():
            for key in [k for k in agent.maps if k[0] == slice_id]:
                del agent.maps[key]
            for key in [k for k in agent.tunnel_back if k[0] == slice_id]:
                del agent.tunnel_back[key]
        for table in (self.epochs, self.active_reports):
            for key in [k for k in table if k[0] == slice_id]:
                del table[key]
        for key in [k for k in self.provenance if k[0] == slice_id]:
            del self.provenance[key]

    def handoff(self, record: SliceRecord, participant: Participant,
                to_poa: str, access_type: str | None = None,
                gap_ms: float = config.DEFAULT_DETACH_GAP_MS) -> HandoffReport:
        net = self.net
        slice_id = record.slice_id
        from_poa = participant.poa_node
        old_link = net.topo.links[participant.link_id]
        new_link = self.pick_access_link(to_poa, access_type,
                                         prefer_like=old_link.access_type)
        report = HandoffReport(slice_id, participant.pid, from_poa, to_poa,
                               requested_at=net.clock.now, gap_ms=gap_ms)
        net.metrics.handoff_reports.append(report)

        pending = net.forwarders[from_poa].pending_entries(
            slice_id, participant.prefix)
        report.pending_at_detach = sum(len(e.downstream) for _, e in pending)
        old_link.admin_up = False
        participant.detach()
        net.log_record("handoff-detach", slice_id, participant=participant.pid,
                       from_poa=from_poa, to_poa=to_poa,
                       pending=report.pending_at_detach)

        if not record.mobility_enabled:
            report.denied_reason = "MobilityDisabled"

            def reattach_blind():
                old_link.admin_up = True
                participant.rebind(to_poa, new_link.link_id)
                net.log_record("handoff-blind-reattach", slice_id,
                               participant=participant.pid, to_poa=to_poa)

            net.clock.schedule(gap_ms, reattach_blind)
            return report

        key = (slice_id, participant.prefix)
        self.epochs[key] = self.epochs.get(key, 0) + 1
        report.epoch = self.epochs[key]
        self.active_reports[key] = report

        def complete_attach():
            old_link.admin_up = True
            self.orch.extend_slice_to(record, to_poa)
            access_face = net.link_face_id(to_poa, new_link.link_id)
            self.agents[to_poa].attach_local(slice_id, participant.prefix,
                                             access_face, report.epoch)
            participant.rebind(to_poa, new_link.link_id)
            report.attach_at = net.clock.now
            net.log_record("handoff-attach", slice_id,
                           participant=participant.pid, to_poa=to_poa,
                           epoch=report.epoch)
            notify = Interest(
                config.CONTROL_SLICE_ID,
                _ho_name(from_poa, slice_id, report.epoch, to_poa,
                         participant.prefix),
                net.nonce(slice_id))
            net.inject(to_poa, self.agents[to_poa].control_face, notify)

        net.clock.schedule(gap_ms, complete_attach)
        return report

    def consumer_move(self, record: SliceRecord, participant: Participant,
                      to_poa: str, access_type: str | None = None) -> None:
        net = self.net
        if to_poa == participant.poa_node:
            net.log_record("move-noop", record.slice_id,
                           participant=participant.pid, poa=to_poa)
            return
        old_link = net.topo.links[participant.link_id]
        new_link = self.pick_access_link(to_poa, access_type,
                                         prefer_like=old_link.access_type)
        self.orch.extend_slice_to(record, to_poa)
        participant.rebind(to_poa, new_link.link_id)
        if participant.produce:
            access_face = net.link_face_id(to_poa, new_link.link_id)
            self.orch.install_route_everywhere(record, participant.prefix,
                                               to_poa, access_face)
            if record.mobility_enabled:
                key = (record.slice_id, participant.prefix)
                self.epochs[key] = self.epochs.get(key, 0) + 1
                self.agents[to_poa].attach_local(
                    record.slice_id, participant.prefix, access_face,
                    self.epochs[key])
        net.log_record("move", record.slice_id, participant=participant.pid,
                       from_poa=old_link.peer_of(
                           old_link.a if net.topo.nodes[old_link.a].is_client
                           else old_link.b),
                       to_poa=to_poa)
        participant.re_express_outstanding()
