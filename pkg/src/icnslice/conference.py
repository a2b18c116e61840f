"""Conference applications that run on top of a slice: a sync rendezvous
function placed inside the network and participant endpoints attached at
stations.

Producers never push media. They announce new segments to the sync function
and serve the repo when asked; consumers learn segment availability from
sync state and pull everything they are missing. Deduplication then happens
in the network (PIT aggregation, caches), not at the endpoints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from . import config
from .engine import Network
from .names import Name, name as make_name
from .packets import Data, Interest, Nack, Packet


class ConferenceError(RuntimeError):
    """Base type for participant management failures."""


class DuplicateParticipant(ConferenceError):
    pass


class UnknownParticipant(KeyError):
    pass


class NotProducer(ConferenceError):
    pass


class SyncFunction:
    """Slice-local rendezvous: tracks the roster and each member's newest
    segment and answers long-poll state Interests.

    A state Interest names the version the asker already holds. If the
    roster has moved past it the reply goes out at once; otherwise the name
    is parked until the next change, so members get push behavior out of a
    plain Interest/Data exchange. A reply always carries a version strictly
    greater than the one asked for, which keeps cached replies safe.
    """

    def __init__(self, net: Network, slice_id: int, slice_name: str,
                 node_id: str) -> None:
        self.net = net
        self.slice_id = slice_id
        self.node_id = node_id
        self.prefix = make_name("conf", slice_name, "sync")
        self.version = 0
        self.roster: dict[str, int] = {}  # participant -> newest seq, -1 none
        self._held: dict[Name, float] = {}  # long-polls awaiting a change
        self.face_id = net.new_app_face(node_id, slice_id, self.on_packet,
                                        label="sync")

    def add_participant(self, pid: str) -> None:
        if pid in self.roster:
            return
        self.roster[pid] = -1
        self._bump()

    def remove_participant(self, pid: str) -> None:
        if pid not in self.roster:
            return
        del self.roster[pid]
        self._bump()

    def _bump(self) -> None:
        self.version += 1
        now = self.net.clock.now
        held, self._held = self._held, {}
        base = len(self.prefix.components)
        for name in sorted(held, key=str):
            if held[name] <= now:
                continue
            # a parked poll names the version the asker holds; never answer
            # it with anything at or below that
            if self.version > int(name.components[base + 1]):
                self._reply_state(name)
            else:
                self._held[name] = held[name]

    def _state_payload(self) -> bytes:
        doc = {"version": self.version,
               "roster": {p: self.roster[p] for p in sorted(self.roster)}}
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()

    def _reply_state(self, name: Name) -> None:
        payload = self._state_payload()
        self.net.inject(self.node_id, self.face_id, Data(
            self.slice_id, name, len(payload), payload=payload,
            freshness_ms=config.SYNC_STATE_FRESHNESS_MS))

    def on_packet(self, pkt: Packet) -> None:
        if not isinstance(pkt, Interest):
            return
        comps = pkt.name.components
        base = len(self.prefix.components)
        verb = comps[base] if len(comps) > base else ""
        if verb == "state" and len(comps) == base + 2 and comps[base + 1].isdigit():
            asked = int(comps[base + 1])
            if self.version > asked:
                self._reply_state(pkt.name)
            else:
                self._held[pkt.name] = self.net.clock.now + pkt.lifetime_ms
        elif verb == "update" and len(comps) == base + 3 \
                and comps[base + 2].isdigit():
            pid, seq = comps[base + 1], int(comps[base + 2])
            if pid in self.roster and seq > self.roster[pid]:
                self.roster[pid] = seq
                self._bump()
            # tiny short-lived ack so the announcing Interest is satisfied
            self.net.inject(self.node_id, self.face_id, Data(
                self.slice_id, pkt.name, 2, payload=b"ok", freshness_ms=1.0))


@dataclass
class FetchState:
    producer: str
    seq: int
    sent_at: float
    attempt: int = 0


class Participant:
    """One conference member bound to the station side of an access link."""

    def __init__(self, net: Network, slice_id: int, slice_name: str,
                 pid: str, poa_node: str, link_id: str,
                 produce: bool = True, consume: bool = True,
                 segment_bytes: int = config.DEFAULT_SEGMENT_BYTES) -> None:
        self.net = net
        self.slice_id = slice_id
        self.slice_name = slice_name
        self.pid = pid
        self.poa_node = poa_node
        self.link_id = link_id
        self.produce = produce
        self.consume = consume
        self.segment_bytes = segment_bytes

        self.prefix = make_name("conf", slice_name, pid)
        self.sync_prefix = make_name("conf", slice_name, "sync")
        self.repo: dict[Name, Data] = {}
        self.next_seq = 0
        self.version = 0
        self.roster: dict[str, int] = {}
        self.requested: dict[str, int] = {}  # producer -> next seq to ask for
        self.received: dict[str, set[int]] = {}
        self.pending: dict[Name, FetchState] = {}
        self.poll_name: Name | None = None
        self._poll_gen = 0
        # set by the mobility layer; sees every Interest this producer serves
        self.delivery_observer = None
        net.bind_station(link_id, self.on_packet)

    def start(self) -> None:
        if self.consume:
            self._poll()

    def detach(self) -> None:
        self.net.unbind_station(self.link_id, self.on_packet)

    def rebind(self, new_poa: str, new_link_id: str) -> None:
        self.detach()
        self.poa_node = new_poa
        self.link_id = new_link_id
        self.net.bind_station(new_link_id, self.on_packet)

    # -- sending ---------------------------------------------------------------

    def _interest(self, name: Name,
                  lifetime_ms: float = config.DEFAULT_INTEREST_LIFETIME_MS
                  ) -> Interest:
        return Interest(self.slice_id, name, self.net.nonce(self.slice_id),
                        lifetime_ms)

    def _send(self, pkt: Packet) -> None:
        self.net.send_from_station(self.link_id, pkt)

    def publish(self, payload_bytes: int | None = None) -> int:
        if not self.produce:
            raise NotProducer(self.pid)
        seq = self.next_seq
        self.next_seq += 1
        name = self.prefix.append("media", str(seq))
        self.repo[name] = Data(self.slice_id, name,
                               payload_bytes or self.segment_bytes,
                               freshness_ms=config.DEFAULT_MEDIA_FRESHNESS_MS)
        self.net.log_record("publish", self.slice_id, participant=self.pid,
                            seq=seq)
        self._send(self._interest(
            self.sync_prefix.append("update", self.pid, str(seq))))
        return seq

    def publish_series(self, count: int, interval_ms: float,
                       payload_bytes: int | None = None) -> None:
        for i in range(count):
            self.net.clock.schedule(i * interval_ms,
                                    lambda: self.publish(payload_bytes))

    def _poll(self) -> None:
        self.poll_name = self.sync_prefix.append("state", str(self.version))
        self._poll_gen += 1
        self._send(self._interest(self.poll_name))
        gen = self._poll_gen

        # a reply or a nack both lead to a fresh poll; if neither shows up
        # the reply died in flight and nobody downstream will tell us
        def deadline():
            if self._poll_gen == gen and self.consume:
                self._poll()

        self.net.clock.schedule(_silent_loss_deadline_ms(), deadline)

    def _fetch(self, producer: str, seq: int) -> None:
        name = make_name("conf", self.slice_name, producer, "media", str(seq))
        self.pending[name] = FetchState(producer, seq, self.net.clock.now)
        self._send(self._interest(name))
        self._arm_fetch_deadline(name, self.pending[name])

    def _arm_fetch_deadline(self, name: Name, state: FetchState) -> None:
        """Recover a fetch whose Data or Nack was lost after the network
        already consumed the request: silence past the interest lifetime
        means nothing is coming."""
        sent_at, attempt = state.sent_at, state.attempt

        def deadline():
            if self.pending.get(name) is not state:
                return
            if state.sent_at != sent_at or state.attempt != attempt:
                return  # answered, nacked, or re-expressed since
            state.attempt += 1
            if state.attempt > config.FETCH_RETRY_BUDGET:
                del self.pending[name]
                self.net.log_record("fetch-abandoned", self.slice_id,
                                    participant=self.pid, name=str(name))
                return
            state.sent_at = self.net.clock.now
            self._send(self._interest(name))
            self._arm_fetch_deadline(name, state)

        self.net.clock.schedule(_silent_loss_deadline_ms(), deadline)

    def re_express_outstanding(self) -> None:
        """Re-issue everything in flight, e.g. after moving to a new PoA."""
        now = self.net.clock.now
        for fetch_name in sorted(self.pending, key=str):
            state = self.pending[fetch_name]
            state.sent_at = now
            self._send(self._interest(fetch_name))
            self._arm_fetch_deadline(fetch_name, state)
        if self.consume:
            self._poll()

    # -- receiving ---------------------------------------------------------------

    def on_packet(self, pkt: Packet) -> None:
        # stations share their link; everyone sees every packet on it and
        # keeps only what it asked for or can serve
        if isinstance(pkt, Interest):
            data = self.repo.get(pkt.name) if self.produce else None
            if data is not None:
                self.net.metrics.record_serve(self.slice_id, self.pid)
                if self.delivery_observer is not None:
                    self.delivery_observer(pkt, self)
                self._send(data)
        elif isinstance(pkt, Data):
            self._on_data(pkt)
        elif isinstance(pkt, Nack):
            self._on_nack(pkt)

    def _on_data(self, data: Data) -> None:
        if data.name == self.poll_name:
            state = json.loads(data.payload.decode())
            self.version = state["version"]
            self._apply_roster(state["roster"])
            self._poll()
            return
        fs = self.pending.pop(data.name, None)
        if fs is None:
            return
        got = self.received.setdefault(fs.producer, set())
        if fs.seq in got:
            return
        got.add(fs.seq)
        latency = self.net.clock.now - fs.sent_at
        self.net.metrics.record_delivery(self.slice_id, fs.producer, fs.seq,
                                         latency)
        self.net.log_record("deliver", self.slice_id, participant=self.pid,
                            producer=fs.producer, seq=fs.seq,
                            ms=round(latency, 6))

    def _apply_roster(self, roster: dict[str, int]) -> None:
        for fetch_name in list(self.pending):
            if self.pending[fetch_name].producer not in roster:
                del self.pending[fetch_name]
        if self.consume:
            for producer in sorted(roster):
                if producer == self.pid:
                    continue
                newest = roster[producer]
                start = self.requested.get(producer, 0)
                for seq in range(start, newest + 1):
                    self._fetch(producer, seq)
                self.requested[producer] = max(start, newest + 1)
        self.roster = dict(roster)

    def _on_nack(self, nack: Nack) -> None:
        if nack.name == self.poll_name:
            self._poll()
            return
        fs = self.pending.get(nack.name)
        if fs is None:
            return
        fs.attempt += 1
        if fs.attempt > config.FETCH_RETRY_BUDGET:
            del self.pending[nack.name]
            self.net.log_record("fetch-abandoned", self.slice_id,
                                participant=self.pid, name=str(nack.name))
            return
        delay = nack_retry_delay_ms(fs.attempt)
        fetch_name = nack.name
        sent_then = fs.sent_at

        def retry(state=fs, name=fetch_name):
            if self.pending.get(name) is not state:
                return
            if state.sent_at != sent_then:
                return  # re-expressed through another path while waiting
            if state.seq in self.received.get(state.producer, set()):
                return
            state.sent_at = self.net.clock.now
            self._send(self._interest(name))
            self._arm_fetch_deadline(name, state)

        self.net.clock.schedule(delay, retry)


def nack_retry_delay_ms(attempt: int) -> float:
    """Backoff before re-expressing a failed fetch: doubles per attempt."""
    return (config.DEFAULT_INTEREST_LIFETIME_MS
            * config.RETRY_BACKOFF_FACTOR ** (attempt - 1))


def _silent_loss_deadline_ms() -> float:
    """How long an outstanding request may stay silent before it is written
    off as lost. Longer than the interest lifetime by enough slack that any
    timeout nack still in flight wins the race."""
    return config.DEFAULT_INTEREST_LIFETIME_MS + config.REEXPRESS_SLACK_MS
