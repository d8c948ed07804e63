"""Link-level packet records shared by the sender, channel, and receiver paths."""

from dataclasses import dataclass
from typing import NamedTuple

PROTO_UDP = 17
# Non-IPv4 frames are kept in captures with this marker so that the receiver's
# protocol filter can reject them instead of the parser silently dropping them.
PROTO_OTHER = -1

ID_SPACE = 1 << 16
MAX_FRAG_OFFSET = (1 << 13) - 1


@dataclass(frozen=True)
class PacketRecord:
    """One captured or scheduled link-level packet.

    ``frag_offset`` is the 13-bit IPv4 fragment offset in units of 8 bytes.
    ``src_port``/``dst_port`` are only present on a datagram's first fragment
    (``frag_offset == 0``); later fragments carry no transport header.
    """

    timestamp: int  # microseconds
    src_ip: str
    dst_ip: str
    proto: int
    ip_id: int
    frag_offset: int
    more_frags: bool
    payload: bytes
    src_port: int | None = None
    dst_port: int | None = None

    def __post_init__(self):
        if not 0 <= self.ip_id < ID_SPACE:
            raise ValueError(f"ip_id out of 16-bit range: {self.ip_id}")
        if not 0 <= self.frag_offset <= MAX_FRAG_OFFSET:
            raise ValueError(f"frag_offset out of 13-bit range: {self.frag_offset}")


class ScheduledPacket(NamedTuple):
    """A packet paired with its emission time (milliseconds from start)."""

    emit_ms: float
    record: PacketRecord


# A schedule is a time-ordered sequence of scheduled packets.
PacketSchedule = list[ScheduledPacket]
