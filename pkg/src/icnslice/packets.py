"""Interest / Data / Nack packets and the wire-size model."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from . import config
from .names import Name

# Nack reasons are in-band control signals, not transport errors.
NACK_NO_ROUTE = "no-route"
NACK_NO_SLICE = "no-slice"
NACK_TIMEOUT = "timeout"


@dataclass(frozen=True)
class Interest:
    slice_id: int
    name: Name
    nonce: int
    lifetime_ms: float = config.DEFAULT_INTEREST_LIFETIME_MS
    hop_count: int = 0
    # Topological name of the access forwarder where this Interest entered
    # the network; stamped once, read by the mobility provenance log.
    ingress: str | None = None
    # Node ids visited so far; measurement metadata, not protocol state.
    trail: tuple[str, ...] = field(default=())
    # Tunneled packet when this Interest is a late-binding envelope.
    encap: "Packet | None" = None

    def hopped(self, node_id: str) -> "Interest":
        return replace(self, hop_count=self.hop_count + 1,
                       trail=self.trail + (node_id,))


@dataclass(frozen=True)
class Data:
    slice_id: int
    name: Name
    payload_len_bytes: int
    payload: bytes = b""
    signature: bytes = b""  # carried, never verified
    freshness_ms: float = config.DEFAULT_MEDIA_FRESHNESS_MS
    encap: "Packet | None" = None

    def satisfies(self, interest: Interest) -> bool:
        return (self.slice_id == interest.slice_id
                and self.name == interest.name)


@dataclass(frozen=True)
class Nack:
    slice_id: int
    name: Name
    nonce: int
    reason: str

    # Nacks are never used as envelopes; present for a uniform wire model.
    encap: "Packet | None" = None


Packet = Interest | Data | Nack


def wire_size(pkt: Packet) -> int:
    """Bytes a packet occupies on a link; payloads are size-only synthetic."""
    name_len = len(str(pkt.name))
    inner = wire_size(pkt.encap) if pkt.encap is not None else 0
    if isinstance(pkt, Data):
        return config.DATA_OVERHEAD_BYTES + name_len + pkt.payload_len_bytes + inner
    return config.INTEREST_OVERHEAD_BYTES + name_len + inner
