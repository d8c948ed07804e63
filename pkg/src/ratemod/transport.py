"""Capture-file I/O and live loopback emission.

The file side reads and writes classic pcap with Ethernet/IPv4/UDP framing,
bit-exact, so captures made here interoperate with standard tooling.  The
live side replays a packet schedule over real sockets and sniffs traffic
back into PacketRecords; both directions meet in the same record type the
rest of the pipeline consumes.
"""

import socket
import struct
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

from .packets import PROTO_OTHER, PROTO_UDP, PacketRecord, PacketSchedule

PCAP_MAGIC = 0xA1B2C3D4
PCAP_VERSION = (2, 4)
PCAP_SNAPLEN = 65535
LINKTYPE_ETHERNET = 1

GLOBAL_HEADER = struct.Struct(">IHHiIII")
RECORD_HEADER = struct.Struct(">IIII")

ETHERTYPE_IPV4 = 0x0800
ETHER_HEADER_LEN = 14
# Fixed locally-administered addresses; synthetic captures have no real NICs.
SENDER_MAC = bytes.fromhex("020000000001")
RECEIVER_MAC = bytes.fromhex("020000000002")

MORE_FRAGMENTS_FLAG = 0x2000
FRAG_OFFSET_MASK = 0x1FFF

PACKET_OUTGOING = 4  # socket.PACKET_OUTGOING; absent from some builds
ETH_P_ALL = 0x0003


class PcapFormatError(ValueError):
    """The bytes do not form a readable classic pcap file."""


class BadMagicError(PcapFormatError):
    pass


class TruncatedPcapError(PcapFormatError):
    pass


@dataclass
class CaptureFile:
    """A parsed capture: link type plus records in file order."""

    link_type: int = LINKTYPE_ETHERNET
    records: list[PacketRecord] = field(default_factory=list)

    def __iter__(self) -> Iterator[PacketRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


def _ipv4_checksum(header: bytes) -> int:
    total = 0
    for (word,) in struct.iter_unpack(">H", header):
        total += word
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def ipv4_packet_bytes(record: PacketRecord) -> bytes:
    """The on-wire IPv4 packet for a record (no Ethernet header).

    A UDP header is prepended only on first fragments of UDP traffic; later
    fragments carry raw payload, exactly as IP fragmentation leaves them.
    """
    if record.proto == PROTO_OTHER:
        raise ValueError("record is not an IPv4 packet")
    if record.proto == PROTO_UDP and record.frag_offset == 0:
        if record.src_port is None or record.dst_port is None:
            raise ValueError("first UDP fragment must carry both ports")
        udp_header = struct.pack(
            ">HHHH", record.src_port, record.dst_port, 8 + len(record.payload), 0
        )
        ip_payload = udp_header + record.payload
    else:
        ip_payload = record.payload
    flags_frag = (MORE_FRAGMENTS_FLAG if record.more_frags else 0) | record.frag_offset
    header = struct.pack(
        ">BBHHHBBH4s4s",
        0x45,
        0,
        20 + len(ip_payload),
        record.ip_id,
        flags_frag,
        64,
        record.proto,
        0,
        socket.inet_aton(record.src_ip),
        socket.inet_aton(record.dst_ip),
    )
    header = header[:10] + struct.pack(">H", _ipv4_checksum(header)) + header[12:]
    return header + ip_payload


def frame_bytes(record: PacketRecord) -> bytes:
    """The full Ethernet frame for a record.

    Non-IPv4 records hold their original frame verbatim in payload and are
    written back unchanged.
    """
    if record.proto == PROTO_OTHER:
        return record.payload
    ether = RECEIVER_MAC + SENDER_MAC + struct.pack(">H", ETHERTYPE_IPV4)
    return ether + ipv4_packet_bytes(record)


def parse_frame(frame: bytes, timestamp: int) -> PacketRecord:
    """Decode one Ethernet frame into a PacketRecord.

    Anything that is not well-formed IPv4 is kept with proto marked other and
    the raw frame as payload rather than dropped, so later filters decide.
    Trailing Ethernet padding is stripped using the IP total length.
    """

    def other() -> PacketRecord:
        return PacketRecord(
            timestamp=timestamp,
            src_ip="",
            dst_ip="",
            proto=PROTO_OTHER,
            ip_id=0,
            frag_offset=0,
            more_frags=False,
            payload=frame,
        )

    if len(frame) < ETHER_HEADER_LEN + 20:
        return other()
    (ethertype,) = struct.unpack_from(">H", frame, 12)
    if ethertype != ETHERTYPE_IPV4:
        return other()
    ip = frame[ETHER_HEADER_LEN:]
    version_ihl = ip[0]
    if version_ihl >> 4 != 4:
        return other()
    ihl = (version_ihl & 0x0F) * 4
    if ihl < 20 or len(ip) < ihl:
        return other()
    total_length, ip_id, flags_frag = struct.unpack_from(">HHH", ip, 2)
    proto = ip[9]
    ip = ip[: min(total_length, len(ip))]
    src_ip = socket.inet_ntoa(frame[ETHER_HEADER_LEN + 12 : ETHER_HEADER_LEN + 16])
    dst_ip = socket.inet_ntoa(frame[ETHER_HEADER_LEN + 16 : ETHER_HEADER_LEN + 20])
    frag_offset = flags_frag & FRAG_OFFSET_MASK
    ip_payload = ip[ihl:]
    src_port = dst_port = None
    if proto == PROTO_UDP and frag_offset == 0 and len(ip_payload) >= 8:
        src_port, dst_port = struct.unpack_from(">HH", ip_payload)
        ip_payload = ip_payload[8:]
    return PacketRecord(
        timestamp=timestamp,
        src_ip=src_ip,
        dst_ip=dst_ip,
        proto=proto,
        ip_id=ip_id,
        frag_offset=frag_offset,
        more_frags=bool(flags_frag & MORE_FRAGMENTS_FLAG),
        payload=ip_payload,
        src_port=src_port,
        dst_port=dst_port,
    )


def write_pcap(records: Sequence[PacketRecord], path: str | Path) -> None:
    """Write records to path as a classic pcap file.

    On-disk fields are big-endian, so the file starts with the magic bytes
    a1 b2 c3 d4.  Record timestamps must be non-decreasing.
    """
    prev = None
    chunks = [
        GLOBAL_HEADER.pack(
            PCAP_MAGIC, *PCAP_VERSION, 0, 0, PCAP_SNAPLEN, LINKTYPE_ETHERNET
        )
    ]
    for r in records:
        if prev is not None and r.timestamp < prev:
            raise ValueError("record timestamps must be non-decreasing")
        prev = r.timestamp
        frame = frame_bytes(r)
        chunks.append(
            RECORD_HEADER.pack(
                r.timestamp // 1_000_000, r.timestamp % 1_000_000, len(frame), len(frame)
            )
        )
        chunks.append(frame)
    Path(path).write_bytes(b"".join(chunks))


def read_pcap(path: str | Path) -> CaptureFile:
    """Parse a classic pcap file in either byte order."""
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise TruncatedPcapError("file shorter than the magic number")
    (magic_be,) = struct.unpack_from(">I", data)
    if magic_be == PCAP_MAGIC:
        order = ">"
    else:
        (magic_le,) = struct.unpack_from("<I", data)
        if magic_le != PCAP_MAGIC:
            raise BadMagicError(f"bad magic: {data[:4].hex()}")
        order = "<"
    global_header = struct.Struct(order + "IHHiIII")
    record_header = struct.Struct(order + "IIII")
    if len(data) < global_header.size:
        raise TruncatedPcapError("truncated global header")
    _, _, _, _, _, _, link_type = global_header.unpack_from(data)
    capture = CaptureFile(link_type=link_type)
    pos = global_header.size
    while pos < len(data):
        if len(data) - pos < record_header.size:
            raise TruncatedPcapError("truncated record header")
        sec, usec, incl_len, _ = record_header.unpack_from(data, pos)
        pos += record_header.size
        if len(data) - pos < incl_len:
            raise TruncatedPcapError("truncated record data")
        frame = data[pos : pos + incl_len]
        pos += incl_len
        capture.records.append(parse_frame(frame, sec * 1_000_000 + usec))
    return capture


@dataclass
class SendReport:
    """What live_send actually put on the wire."""

    mode: str
    sent: list[tuple[int, int, float]] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)


def _regroup_datagrams(
    schedule: PacketSchedule,
) -> list[tuple[float, int, str, int, bytes]]:
    """Collapse a fragment schedule back into whole datagrams.

    Returns (emit_ms of first fragment, ip_id, dst_ip, dst_port, payload)
    ordered by first emission.
    """
    order: list[int] = []
    parts: dict[int, dict] = {}
    for emit_ms, r in schedule:
        entry = parts.get(r.ip_id)
        if entry is None:
            entry = parts[r.ip_id] = {"emit": emit_ms, "dst_port": None, "chunks": []}
            order.append(r.ip_id)
        if r.frag_offset == 0 and r.dst_port is not None:
            entry["dst_port"] = r.dst_port
            entry["dst_ip"] = r.dst_ip
        entry["chunks"].append((r.frag_offset, r.payload))
    out = []
    for ip_id in order:
        entry = parts[ip_id]
        if entry["dst_port"] is None:
            raise ValueError(f"datagram {ip_id} has no first fragment")
        payload = b"".join(chunk for _, chunk in sorted(entry["chunks"]))
        out.append((entry["emit"], ip_id, entry["dst_ip"], entry["dst_port"], payload))
    return out


def live_send(
    schedule: PacketSchedule,
    mode: str = "datagram",
    target: tuple[str, int] | None = None,
) -> SendReport:
    """Emit a schedule over real sockets, paced to its timestamps.

    datagram mode reassembles each ID's fragments and hands the whole
    payload to a UDP socket, leaving fragmentation to the host stack.  raw
    mode writes each fragment as-is through a raw IP socket (needs
    privileges); use it where the path MTU is too large for the host stack
    to fragment at all, loopback included.  target overrides the scheduled
    destination address and port.  Send failures are recorded per packet and
    do not abort the rest of the schedule.
    """
    if not schedule:
        raise ValueError("empty schedule")
    if mode not in ("datagram", "raw"):
        raise ValueError(f"unknown send mode: {mode}")
    report = SendReport(mode=mode)
    start = time.monotonic()

    def pace(emit_ms: float) -> float:
        delay = start + emit_ms / 1000.0 - time.monotonic()
        if delay > 0:
            time.sleep(delay)
        return (time.monotonic() - start) * 1000.0

    if mode == "datagram":
        with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
            for emit_ms, ip_id, dst_ip, dst_port, payload in _regroup_datagrams(schedule):
                if target is not None:
                    dst_ip, dst_port = target
                t_ms = pace(emit_ms)
                try:
                    sock.sendto(payload, (dst_ip, dst_port))
                except OSError as exc:
                    report.errors.append(f"id={ip_id}: {exc}")
                else:
                    report.sent.append((ip_id, 0, t_ms))
    else:
        with socket.socket(socket.AF_INET, socket.SOCK_RAW, socket.IPPROTO_RAW) as sock:
            for emit_ms, r in schedule:
                if target is not None:
                    r = replace(
                        r,
                        dst_ip=target[0],
                        dst_port=target[1] if r.dst_port is not None else None,
                    )
                t_ms = pace(emit_ms)
                try:
                    sock.sendto(ipv4_packet_bytes(r), (r.dst_ip, 0))
                except OSError as exc:
                    report.errors.append(f"id={r.ip_id} offset={r.frag_offset}: {exc}")
                else:
                    report.sent.append((r.ip_id, r.frag_offset, t_ms))
    return report


def live_capture(
    port: int | None = None,
    duration_s: float | None = None,
    max_packets: int | None = None,
    stop: threading.Event | None = None,
    ready: threading.Event | None = None,
    interface: str = "lo",
) -> CaptureFile:
    """Sniff frames on an interface into a CaptureFile (needs privileges).

    Runs until any configured bound is hit: a wall-clock duration, a packet
    budget, or an external stop event; at least one must be given.  ready is
    set once the socket is bound, so a sender thread can wait for it and
    never race the capture.  When port is given, only UDP records addressed
    to it, plus continuation fragments (which carry no port), are kept.
    Frames looped back to their own host appear on the tap twice; the
    outgoing copy is skipped so each packet is recorded once.
    """
    if duration_s is None and max_packets is None and stop is None:
        raise ValueError("need a duration, packet budget, or stop event")
    if not hasattr(socket, "AF_PACKET"):
        raise RuntimeError("packet capture needs AF_PACKET (Linux)")
    records: list[PacketRecord] = []
    sock = socket.socket(socket.AF_PACKET, socket.SOCK_RAW, socket.htons(ETH_P_ALL))
    try:
        sock.bind((interface, 0))
        sock.settimeout(0.05)
        if ready is not None:
            ready.set()
        deadline = None if duration_s is None else time.monotonic() + duration_s
        last_ts = 0
        while True:
            if stop is not None and stop.is_set():
                break
            if deadline is not None and time.monotonic() >= deadline:
                break
            if max_packets is not None and len(records) >= max_packets:
                break
            try:
                frame, addr = sock.recvfrom(PCAP_SNAPLEN)
            except TimeoutError:
                continue
            if len(addr) >= 3 and addr[2] == PACKET_OUTGOING:
                continue
            last_ts = max(last_ts, time.time_ns() // 1000)
            record = parse_frame(frame, last_ts)
            if port is not None:
                wanted = record.proto == PROTO_UDP and (
                    record.dst_port == port
                    or (record.dst_port is None and record.frag_offset > 0)
                )
                if not wanted:
                    continue
            records.append(record)
    finally:
        sock.close()
    return CaptureFile(link_type=LINKTYPE_ETHERNET, records=records)
