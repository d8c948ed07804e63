"""Covert sender: burst-size keying of UDP datagrams.

Each frame bit becomes one UDP datagram: a '1' carries a large random payload
(b1 bytes), a '0' a small one (b0 bytes).  Payloads are split into IPv4
fragments of frag_size bytes, so the per-datagram fragment count observed on
the wire is the modulated quantity the receiver thresholds on.
"""

import math
import random
from dataclasses import dataclass, replace

from .framing import Bits, as_bits
from .packets import ID_SPACE, PROTO_UDP, PacketRecord, PacketSchedule, ScheduledPacket

ETHER_HEADER_BYTES = 14
IPV4_HEADER_BYTES = 20
UDP_HEADER_BYTES = 8
# Per-fragment link overhead assumed by the serialization model.
WIRE_OVERHEAD_BYTES = ETHER_HEADER_BYTES + IPV4_HEADER_BYTES + UDP_HEADER_BYTES


@dataclass(frozen=True)
class ModulationParams:
    """Sender-side knobs.

    b1/b0 are the payload byte counts keying a 1 and a 0; their ratio is the
    modulation depth.  frag_size defaults to the Ethernet MTU payload limit.
    inter_bit_gap_ms and link_rate_bps drive the simulated emission timing.
    """

    b1: int = 6000
    b0: int = 1000
    frag_size: int = 1472
    receiver_ip: str = "10.0.0.2"
    receiver_port: int = 40000
    sender_ip: str = "10.0.0.1"
    sender_port: int = 50000
    inter_bit_gap_ms: float = 100.0
    link_rate_bps: float = 10_000_000.0

    def __post_init__(self):
        if self.b0 < 1:
            raise ValueError("b0 must be at least 1 byte")
        if self.b1 <= self.b0:
            raise ValueError(f"b1 ({self.b1}) must exceed b0 ({self.b0})")
        if self.frag_size < 1:
            raise ValueError("frag_size must be at least 1 byte")
        if self.inter_bit_gap_ms < 0:
            raise ValueError("inter_bit_gap_ms must be >= 0")
        if self.link_rate_bps <= 0:
            raise ValueError("link_rate_bps must be positive")

    @property
    def amplitude_ratio(self) -> float:
        return self.b1 / self.b0


@dataclass(frozen=True)
class Datagram:
    """One UDP datagram before fragmentation."""

    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    ip_id: int
    payload: bytes


def generate_payload(b: int, rng: random.Random) -> bytes:
    """Draw b uniformly random bytes from the given seeded source."""
    if b < 1:
        raise ValueError("payload size must be at least 1 byte")
    return rng.randbytes(b)


def construct_packet(params: ModulationParams, payload: bytes, ip_id: int) -> Datagram:
    """Wrap a payload in a datagram addressed per params with the given IP ID."""
    if not payload:
        raise ValueError("payload must not be empty")
    if not 0 <= ip_id < ID_SPACE:
        raise ValueError(f"ip_id out of 16-bit range: {ip_id}")
    return Datagram(
        src_ip=params.sender_ip,
        dst_ip=params.receiver_ip,
        src_port=params.sender_port,
        dst_port=params.receiver_port,
        ip_id=ip_id,
        payload=payload,
    )


def fragment_packet(d: Datagram, frag_size: int) -> list[PacketRecord]:
    """Split a datagram's payload into fragments of frag_size bytes.

    Produces ceil(len(payload) / frag_size) records sharing the datagram's
    IP ID.  Only the first fragment carries the UDP ports; all but the last
    have more_frags set.  Offsets are the payload byte position in units of 8.
    """
    if frag_size < 1:
        raise ValueError("frag_size must be at least 1 byte")
    n = math.ceil(len(d.payload) / frag_size)
    records = []
    for k in range(n):
        chunk = d.payload[k * frag_size : (k + 1) * frag_size]
        records.append(
            PacketRecord(
                timestamp=0,
                src_ip=d.src_ip,
                dst_ip=d.dst_ip,
                proto=PROTO_UDP,
                ip_id=d.ip_id,
                frag_offset=(k * frag_size) // 8,
                more_frags=k < n - 1,
                payload=chunk,
                src_port=d.src_port if k == 0 else None,
                dst_port=d.dst_port if k == 0 else None,
            )
        )
    return records


def fragment_slot_ms(params: ModulationParams) -> float:
    """Serialization time of one fragment slot.

    Every fragment is modeled as occupying a full frag_size slot on the link
    (plus header overhead) regardless of how many payload bytes it actually
    carries: per-packet cost, not per-byte cost, dominates this channel, which
    is what makes the bit-rate saturate once b0 fits a single fragment.
    """
    wire_bits = (params.frag_size + WIRE_OVERHEAD_BYTES) * 8
    return wire_bits * 1000.0 / params.link_rate_bps


def modulate(frame: Bits | str, params: ModulationParams, rng: random.Random) -> PacketSchedule:
    """Expand a frame into a timestamped fragment emission schedule.

    One datagram per frame bit, with sequential IP IDs starting from a random
    16-bit value (wrapping mod 2^16).  Emission time advances by one fragment
    slot per fragment and by inter_bit_gap_ms between consecutive bits.
    """
    bits = as_bits(frame)
    if not bits:
        raise ValueError("frame must not be empty")
    slot = fragment_slot_ms(params)
    initial_id = rng.randrange(ID_SPACE)
    schedule: PacketSchedule = []
    t = 0.0
    for i, bit in enumerate(bits):
        if i:
            t += params.inter_bit_gap_ms
        payload = generate_payload(params.b1 if bit else params.b0, rng)
        datagram = construct_packet(params, payload, (initial_id + i) % ID_SPACE)
        for frag in fragment_packet(datagram, params.frag_size):
            schedule.append(ScheduledPacket(t, replace(frag, timestamp=round(t * 1000))))
            t += slot
    return schedule


def schedule_span_ms(schedule: PacketSchedule, params: ModulationParams) -> float:
    """Busy time of a schedule: first emission to the end of the last slot."""
    if not schedule:
        raise ValueError("empty schedule has no span")
    return schedule[-1].emit_ms + fragment_slot_ms(params) - schedule[0].emit_ms


def schedule_records(schedule: PacketSchedule) -> list[PacketRecord]:
    """The packet records of a schedule, in schedule order."""
    return [sp.record for sp in schedule]
