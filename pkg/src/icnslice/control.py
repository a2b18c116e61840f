"""Management facade: one object that owns the emulated network and exposes
every operator action as a named command.

Commands are the single entry point for both the HTTP API and scenario
scripts, so a live session and a scripted run take exactly the same code
paths. In live mode each command lands at now + a fixed epsilon; a script
schedules commands at their stated times and then drains the clock.
"""

from __future__ import annotations

import json
import threading
import time

from . import config
from .conference import (DuplicateParticipant, NotProducer, Participant,
                         UnknownParticipant)
from .engine import Network
from .forwarder import UnknownSlice
from .mobility import MobilityManager, NoSuchInterface
from .orchestrator import (Orchestrator, SliceRecord, TemplateError,
                           parse_template)
from .substrate import Topology, load_topology


class AmbiguousParticipant(RuntimeError):
    """A bare participant id matched more than one slice."""


class ScriptError(ValueError):
    def __init__(self, index: int, message: str):
        super().__init__(f"commands[{index}]: {message}")
        self.index = index


ROLES = {
    "producer": (True, False),
    "consumer": (False, True),
    "both": (True, True),
}


class EmulationServer:
    """Facade over the network, orchestrator, and mobility manager."""

    def __init__(self, topo: Topology | dict, seed: int = 0,
                 time_scale: float | None = None) -> None:
        if isinstance(topo, dict):
            topo = load_topology(topo)
        self.net = Network(topo, seed=seed)
        self.orch = Orchestrator(self.net)
        self.mobility = MobilityManager(self.net, self.orch)
        self.lock = threading.RLock()
        # None: clock moves only through scripts and explicit advances.
        # Otherwise sim ms per wall second = 1000 * time_scale.
        self.time_scale = time_scale
        self._wall_anchor = time.monotonic()
        self._sim_anchor = self.net.clock.now

    # -- time ---------------------------------------------------------------

    def _sync_clock(self) -> None:
        if self.time_scale is None or self.time_scale <= 0:
            return
        wall_ms = (time.monotonic() - self._wall_anchor) * 1000
        self.net.clock.run_until(self._sim_anchor + wall_ms * self.time_scale)

    def advance(self, ms: float) -> float:
        with self.lock:
            self.net.clock.run_until(self.net.clock.now + ms)
            return self.net.clock.now

    def _run_command(self, fn):
        """Execute fn at now + epsilon so effects order after in-flight
        events stamped at the current instant."""
        with self.lock:
            self._sync_clock()
            outcome: dict = {}

            def thunk():
                try:
                    outcome["value"] = fn()
                except Exception as e:  # re-raised on the caller's stack
                    outcome["error"] = e

            at = self.net.clock.now + config.COMMAND_EPSILON_MS
            self.net.clock.schedule_at(at, thunk)
            self.net.clock.run_until(at)
            if "error" in outcome:
                raise outcome["error"]
            return outcome.get("value")

    # -- lookups --------------------------------------------------------------

    def record_by_name(self, slice_name: str) -> SliceRecord:
        for record in self.orch.slices.values():
            if record.name == slice_name:
                return record
        raise UnknownSlice(slice_name)

    def resolve_participant(self, pid: str) -> tuple[SliceRecord, Participant]:
        hits = [(record, record.participants[pid])
                for record in self.orch.slices.values()
                if pid in record.participants]
        if not hits:
            raise UnknownParticipant(pid)
        if len(hits) > 1:
            raise AmbiguousParticipant(
                f"{pid!r} exists in slices "
                f"{sorted(r.slice_id for r, _ in hits)}; address it by slice")
        return hits[0]

    # -- commands ---------------------------------------------------------------

    def create_slice(self, template_doc: dict) -> dict:
        def run():
            template = parse_template(template_doc)
            record = self.orch.create(template)
            record.mobility_enabled = template.mobility_enabled
            self.net.log_record("cmd", record.slice_id, op="create_slice",
                                name=record.name)
            return self.slice_view(record)
        return self._run_command(run)

    def delete_slice(self, slice_id: int) -> dict:
        def run():
            record = self.orch.get(slice_id)
            self.net.log_record("cmd", slice_id, op="delete_slice",
                                name=record.name)
            for pid in sorted(record.participants):
                record.participants[pid].detach()
            self.mobility.forget_slice(slice_id)
            released = self.orch.teardown(slice_id)
            return {"slice_id": slice_id,
                    "released": {k: round(v, 6) for k, v in released.items()}}
        return self._run_command(run)

    def set_mobility(self, slice_id: int, enabled: bool) -> dict:
        def run():
            record = self.orch.get(slice_id)
            record.mobility_enabled = bool(enabled)
            self.net.log_record("cmd", slice_id, op="set_mobility",
                                enabled=bool(enabled))
            if record.mobility_enabled:
                for pid in sorted(record.participants):
                    self.mobility.register_initial_attachment(
                        record, record.participants[pid])
            return {"slice_id": slice_id, "mobility_enabled": enabled}
        return self._run_command(run)

    def add_participant(self, slice_id: int, pid: str, poa: str,
                        role: str = "both",
                        access_type: str | None = None) -> dict:
        def run():
            record = self.orch.get(slice_id)
            if pid in record.participants:
                raise DuplicateParticipant(pid)
            if role not in ROLES:
                raise TemplateError(f"unknown role {role!r}")
            node = self.net.topo.nodes.get(poa)
            if node is None or node.role != "access_poa":
                raise TemplateError(f"{poa!r} is not an access PoA")
            produce, consume = ROLES[role]
            link = self.mobility.pick_access_link(poa, access_type)
            self.orch.extend_slice_to(record, poa)
            participant = Participant(self.net, slice_id, record.name, pid,
                                      poa, link.link_id, produce, consume)
            record.participants[pid] = participant
            self.net.log_record("cmd", slice_id, op="join", participant=pid,
                                poa=poa, role=role)
            if produce:
                access_face = self.net.link_face_id(poa, link.link_id)
                self.orch.install_route_everywhere(
                    record, participant.prefix, poa, access_face)
            self.mobility.register_initial_attachment(record, participant)
            assert record.sync is not None
            record.sync.add_participant(pid)
            participant.start()
            return {"slice_id": slice_id, "participant": pid, "poa": poa,
                    "link": link.link_id, "role": role}
        return self._run_command(run)

    def remove_participant(self, slice_id: int, pid: str) -> dict:
        def run():
            record = self.orch.get(slice_id)
            participant = record.participants.pop(pid, None)
            if participant is None:
                raise UnknownParticipant(pid)
            self.net.log_record("cmd", slice_id, op="leave", participant=pid)
            participant.detach()
            assert record.sync is not None
            record.sync.remove_participant(pid)
            if participant.produce:
                self.orch.withdraw_route_everywhere(record, participant.prefix)
            self.mobility.forget_participant(record, participant)
            return {"slice_id": slice_id, "participant": pid}
        return self._run_command(run)

    def publish(self, slice_id: int, pid: str, count: int = 1,
                interval_ms: float = 0.0,
                payload_bytes: int | None = None) -> dict:
        def run():
            record = self.orch.get(slice_id)
            participant = record.participants.get(pid)
            if participant is None:
                raise UnknownParticipant(pid)
            if not participant.produce:
                raise NotProducer(pid)
            self.net.log_record("cmd", slice_id, op="publish", participant=pid,
                                count=count)
            if count == 1:
                participant.publish(payload_bytes)
            else:
                participant.publish_series(count, interval_ms, payload_bytes)
            return {"slice_id": slice_id, "participant": pid,
                    "scheduled": count}
        return self._run_command(run)

    def handoff(self, slice_id: int, pid: str, to_poa: str,
                access_type: str | None = None,
                gap_ms: float = config.DEFAULT_DETACH_GAP_MS) -> dict:
        def run():
            record = self.orch.get(slice_id)
            participant = record.participants.get(pid)
            if participant is None:
                raise UnknownParticipant(pid)
            if self.net.topo.nodes.get(to_poa) is None or \
                    self.net.topo.nodes[to_poa].role != "access_poa":
                raise TemplateError(f"{to_poa!r} is not an access PoA")
            self.net.log_record("cmd", slice_id, op="handoff", participant=pid,
                                to_poa=to_poa, gap_ms=gap_ms)
            report = self.mobility.handoff(record, participant, to_poa,
                                           access_type, gap_ms)
            return report.view()
        return self._run_command(run)

    def move(self, slice_id: int, pid: str, to_poa: str,
             access_type: str | None = None) -> dict:
        def run():
            record = self.orch.get(slice_id)
            participant = record.participants.get(pid)
            if participant is None:
                raise UnknownParticipant(pid)
            if self.net.topo.nodes.get(to_poa) is None or \
                    self.net.topo.nodes[to_poa].role != "access_poa":
                raise TemplateError(f"{to_poa!r} is not an access PoA")
            self.net.log_record("cmd", slice_id, op="move", participant=pid,
                                to_poa=to_poa)
            self.mobility.consumer_move(record, participant, to_poa,
                                        access_type)
            return {"slice_id": slice_id, "participant": pid, "poa": to_poa}
        return self._run_command(run)

    def adapt(self, slice_id: int, participants_per_site: list[int]) -> dict:
        def run():
            self.net.log_record("cmd", slice_id, op="adapt",
                                participants=list(participants_per_site))
            return self.orch.adapt(slice_id, participants_per_site)
        return self._run_command(run)

    # -- views ---------------------------------------------------------------

    def slice_view(self, record: SliceRecord) -> dict:
        return {
            "slice_id": record.slice_id,
            "name": record.name,
            "mobility_enabled": record.mobility_enabled,
            "sites": [{"site_id": s.site_id, "poa": s.poa_node_id,
                       "expected_participants": s.expected_participants}
                      for s in record.template.sites],
            "per_stream_kbps": record.template.per_stream_kbps,
            "latency_bound_ms": record.template.latency_bound_ms,
            "vnode_map": dict(sorted(record.alloc.node_map.items())),
            "vlink_paths": {k: list(v) for k, v in
                            sorted(record.alloc.link_map.items())},
            "nodes": sorted(record.slice_nodes),
            "cache_budget_bytes": dict(sorted(
                record.cache_budget_bytes.items())),
            "participants": [
                {"pid": pid, "poa": p.poa_node, "link": p.link_id,
                 "produce": p.produce, "consume": p.consume,
                 "published": p.next_seq}
                for pid, p in sorted(record.participants.items())],
            "routes": {str(prefix): target_node for prefix, (target_node, _)
                       in sorted(record.routes.items(), key=lambda kv: str(kv[0]))},
        }

    def views(self) -> dict:
        with self.lock:
            self._sync_clock()
            topo = self.net.topo
            forwarders: dict = {}
            for nid in sorted(self.net.forwarders):
                fwd = self.net.forwarders[nid]
                per_slice = {}
                for sid in sorted(fwd.tables):
                    tables = fwd.tables[sid]
                    per_slice[str(sid)] = {
                        "pit_size": len(tables.pit),
                        "cs_entries": len(tables.cs),
                        "cs_bytes": tables.cs.used_bytes,
                        "cs_budget_bytes": tables.cs.budget_bytes,
                        "counters": dict(fwd.counters[sid]),
                        "fib": [{"prefix": str(e.prefix),
                                 "nexthops": list(e.nexthops)}
                                for e in tables.fib.entries()],
                    }
                forwarders[nid] = per_slice
            return {
                "schema_version": config.VIEW_SCHEMA_VERSION,
                "t_ms": round(self.net.clock.now, 6),
                "topology": {
                    "nodes": [{"id": n.node_id, "role": n.role,
                               "domain": n.domain_id,
                               "compute_units": n.compute_capacity,
                               "storage_mb": n.storage_capacity_mb}
                              for n in sorted(topo.nodes.values(),
                                              key=lambda n: n.node_id)],
                    "links": [{"id": l.link_id, "a": l.a, "b": l.b,
                               "bandwidth_mbps": l.bandwidth_mbps,
                               "latency_ms": l.latency_ms,
                               "access_type": l.access_type,
                               "admin_up": l.admin_up}
                              for l in sorted(topo.links.values(),
                                              key=lambda l: l.link_id)],
                },
                "capacity": self.net.ledger.utilization(),
                "slices": [self.slice_view(self.orch.slices[sid])
                           for sid in sorted(self.orch.slices)],
                "forwarders": forwarders,
                "metrics": self.net.metrics.view(),
            }

    def events_after(self, cursor: int, limit: int = 500) -> dict:
        with self.lock:
            self._sync_clock()
            lines = self.net.log[cursor:cursor + limit]
            return {"next": cursor + len(lines), "records": lines}

    # -- scenario scripts -----------------------------------------------------

    def run_scenario(self, script: dict) -> dict:
        commands = self._validate_script(script)
        with self.lock:
            self.net.start_snapshots()
            for at_ms, op, args in commands:
                self.net.clock.schedule_at(
                    at_ms, lambda op=op, args=args: self._script_step(op, args))
            if commands:
                horizon = commands[-1][0] + config.SCENARIO_DRAIN_MS
            else:
                horizon = config.SCENARIO_DRAIN_MS
            horizon = float(script.get("duration_ms", horizon))
            self.net.clock.run_until(horizon)
            return {
                "t_ms": self.net.clock.now,
                "records": len(self.net.log),
                "metrics": self.net.metrics.view(),
            }

    def _validate_script(self, script: dict) -> list[tuple[float, str, dict]]:
        if not isinstance(script, dict) or \
                not isinstance(script.get("commands"), list):
            raise ScriptError(-1, "script must be {commands: [...]}")
        known = {"create_slice", "delete_slice", "set_mobility", "join",
                 "leave", "publish", "handoff", "move", "adapt"}
        out: list[tuple[float, str, dict]] = []
        last = float("-inf")
        for i, cmd in enumerate(script["commands"]):
            if not isinstance(cmd, dict):
                raise ScriptError(i, "command must be an object")
            at = cmd.get("at_ms")
            if not isinstance(at, (int, float)) or isinstance(at, bool) or at < 0:
                raise ScriptError(i, "at_ms must be a number >= 0")
            if at < last:
                raise ScriptError(i, f"at_ms {at} goes back in time")
            last = at
            op = cmd.get("op")
            if op not in known:
                raise ScriptError(i, f"unknown op {op!r}")
            args = {k: v for k, v in cmd.items() if k not in ("at_ms", "op")}
            out.append((float(at), op, args))
        return out

    def _script_step(self, op: str, args: dict) -> None:
        """Scenario commands run inline at their scheduled instant; errors
        become log records so a demo script can show rejections."""
        try:
            self._apply_script_op(op, args)
        except (TemplateError, UnknownSlice, UnknownParticipant,
                DuplicateParticipant, NotProducer, NoSuchInterface,
                AmbiguousParticipant, KeyError, ValueError) as e:
            self.net.log_record("cmd-error", None, op=op,
                                error=type(e).__name__, detail=str(e)[:200])

    def _apply_script_op(self, op: str, args: dict) -> None:
        if op == "create_slice":
            template = parse_template(args["template"])
            try:
                record = self.orch.create(template)
            except Exception:
                self.net.log_record("cmd", None, op="create_slice",
                                    name=template.slice_name)
                raise
            self.net.log_record("cmd", record.slice_id, op="create_slice",
                                name=record.name)
            return
        slice_name = args.get("slice")
        record = self.record_by_name(slice_name) if slice_name else None
        if op == "delete_slice":
            assert record is not None
            self.net.log_record("cmd", record.slice_id, op="delete_slice",
                                name=record.name)
            for pid in sorted(record.participants):
                record.participants[pid].detach()
            self.mobility.forget_slice(record.slice_id)
            self.orch.teardown(record.slice_id)
            return
        assert record is not None, f"{op} needs a slice"
        sid = record.slice_id
        if op == "set_mobility":
            record.mobility_enabled = bool(args["enabled"])
            self.net.log_record("cmd", sid, op="set_mobility",
                                enabled=record.mobility_enabled)
            if record.mobility_enabled:
                for pid in sorted(record.participants):
                    self.mobility.register_initial_attachment(
                        record, record.participants[pid])
        elif op == "join":
            pid, poa = args["participant"], args["poa"]
            role = args.get("role", "both")
            if pid in record.participants:
                raise DuplicateParticipant(pid)
            produce, consume = ROLES[role]
            link = self.mobility.pick_access_link(poa, args.get("access_type"))
            self.orch.extend_slice_to(record, poa)
            participant = Participant(self.net, sid, record.name, pid, poa,
                                      link.link_id, produce, consume)
            record.participants[pid] = participant
            self.net.log_record("cmd", sid, op="join", participant=pid,
                                poa=poa, role=role)
            if produce:
                self.orch.install_route_everywhere(
                    record, participant.prefix, poa,
                    self.net.link_face_id(poa, link.link_id))
            self.mobility.register_initial_attachment(record, participant)
            record.sync.add_participant(pid)
            participant.start()
        elif op == "leave":
            pid = args["participant"]
            participant = record.participants.pop(pid, None)
            if participant is None:
                raise UnknownParticipant(pid)
            self.net.log_record("cmd", sid, op="leave", participant=pid)
            participant.detach()
            record.sync.remove_participant(pid)
            if participant.produce:
                self.orch.withdraw_route_everywhere(record, participant.prefix)
            self.mobility.forget_participant(record, participant)
        elif op == "publish":
            participant = record.participants[args["participant"]]
            count = int(args.get("count", 1))
            self.net.log_record("cmd", sid, op="publish",
                                participant=participant.pid, count=count)
            participant.publish_series(count, float(args.get("interval_ms", 0)),
                                       args.get("payload_bytes"))
        elif op == "handoff":
            participant = record.participants[args["participant"]]
            self.net.log_record("cmd", sid, op="handoff",
                                participant=participant.pid,
                                to_poa=args["to_poa"],
                                gap_ms=args.get("gap_ms",
                                                config.DEFAULT_DETACH_GAP_MS))
            self.mobility.handoff(record, participant, args["to_poa"],
                                  args.get("access_type"),
                                  float(args.get("gap_ms",
                                                 config.DEFAULT_DETACH_GAP_MS)))
        elif op == "move":
            participant = record.participants[args["participant"]]
            self.net.log_record("cmd", sid, op="move",
                                participant=participant.pid,
                                to_poa=args["to_poa"])
            self.mobility.consumer_move(record, participant, args["to_poa"],
                                        args.get("access_type"))
        elif op == "adapt":
            self.net.log_record("cmd", sid, op="adapt",
                                participants=list(args["participants"]))
            self.orch.adapt(sid, list(args["participants"]))

    # -- persistence helpers ----------------------------------------------------

    def write_log(self, path: str) -> int:
        lines = self.net.log_lines()
        with open(path, "w") as fh:
            for line in lines:
                fh.write(line + "\n")
        return len(lines)


def run_scripted(topo_doc: dict, script: dict, seed: int = 0) -> EmulationServer:
    """One-shot scripted run; returns the finished server for inspection."""
    server = EmulationServer(topo_doc, seed=seed)
    server.run_scenario(script)
    return server


def load_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)
