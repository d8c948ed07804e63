import json
import random
import socket
import struct
import threading
import time
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from ratemod.demodulator import receive_pipeline
from ratemod.framing import DEFAULT_PREAMBLE, build_frame
from ratemod.modulator import ModulationParams, modulate, schedule_records
from ratemod.packets import PROTO_OTHER, PacketRecord, ScheduledPacket
from ratemod.transport import (
    BadMagicError,
    TruncatedPcapError,
    frame_bytes,
    live_capture,
    live_send,
    read_pcap,
    write_pcap,
)

DATA_DIR = Path(__file__).parent / "data"


# ---------------------------------------------------------------------------
# Reference dissection, written straight from the classic-pcap and IPv4/UDP
# wire formats so the writer is checked against the format, not against the
# package's own reader.

REF_GLOBAL = struct.Struct(">IHHiIII")
REF_RECHDR = struct.Struct(">IIII")
REF_IPV4 = struct.Struct(">BBHHHBBH4s4s")


def ref_split_pcap(data):
    magic, vmaj, vmin, thiszone, sigfigs, snaplen, network = REF_GLOBAL.unpack(
        data[: REF_GLOBAL.size]
    )
    assert magic == 0xA1B2C3D4
    assert (vmaj, vmin) == (2, 4)
    assert (thiszone, sigfigs) == (0, 0)
    assert snaplen == 65535
    assert network == 1
    frames = []
    pos = REF_GLOBAL.size
    while pos < len(data):
        sec, usec, incl, orig = REF_RECHDR.unpack(data[pos : pos + REF_RECHDR.size])
        pos += REF_RECHDR.size
        assert incl == orig
        frames.append((sec, usec, data[pos : pos + incl]))
        pos += incl
    return frames


def ref_dissect_frame(frame):
    ethertype = int.from_bytes(frame[12:14], "big")
    assert ethertype == 0x0800
    ip = frame[14:]
    (
        version_ihl,
        tos,
        total_length,
        ip_id,
        flags_frag,
        ttl,
        proto,
        checksum,
        src,
        dst,
    ) = REF_IPV4.unpack(ip[:20])
    assert version_ihl == 0x45
    assert tos == 0 and ttl == 64
    assert total_length == len(ip)
    total = sum(struct.unpack(">10H", ip[:20]))
    total = (total & 0xFFFF) + (total >> 16)
    total = (total & 0xFFFF) + (total >> 16)
    assert total == 0xFFFF, "IPv4 header checksum must verify"
    out = {
        "ip_id": ip_id,
        "more_frags": bool(flags_frag & 0x2000),
        "frag_offset": flags_frag & 0x1FFF,
        "proto": proto,
        "src": socket.inet_ntoa(src),
        "dst": socket.inet_ntoa(dst),
    }
    body = ip[20:]
    if proto == 17 and out["frag_offset"] == 0:
        sport, dport, ulen, ucheck = struct.unpack(">HHHH", body[:8])
        assert ulen == len(body)
        assert ucheck == 0
        out.update(src_port=sport, dst_port=dport, payload=body[8:])
    else:
        out.update(src_port=None, dst_port=None, payload=body)
    return out


def test_writer_against_reference_dissection(tmp_path):
    params = ModulationParams()
    frame = build_frame(DEFAULT_PREAMBLE, (1, 0, 1))
    schedule = modulate(frame, params, random.Random(8))
    records = schedule_records(schedule)
    path = tmp_path / "ref.pcap"
    write_pcap(records, path)

    frames = ref_split_pcap(path.read_bytes())
    assert len(frames) == len(records)
    for (sec, usec, raw), rec in zip(frames, records):
        assert sec * 1_000_000 + usec == rec.timestamp
        got = ref_dissect_frame(raw)
        assert got["ip_id"] == rec.ip_id
        assert got["frag_offset"] == rec.frag_offset
        assert got["more_frags"] == rec.more_frags
        assert got["proto"] == 17
        assert got["src"] == rec.src_ip and got["dst"] == rec.dst_ip
        assert got["src_port"] == rec.src_port and got["dst_port"] == rec.dst_port
        assert got["payload"] == rec.payload


def test_five_fragment_burst_offsets_on_disk(tmp_path):
    params = ModulationParams()
    schedule = modulate((1,), params, random.Random(21))
    path = tmp_path / "one.pcap"
    write_pcap(schedule_records(schedule), path)
    frames = ref_split_pcap(path.read_bytes())
    dissected = [ref_dissect_frame(raw) for _, _, raw in frames]
    assert len(dissected) == 5
    assert len({d["ip_id"] for d in dissected}) == 1
    assert [d["frag_offset"] for d in dissected] == [0, 184, 368, 552, 736]


# ---------------------------------------------------------------------------
# Round trip


octet = st.integers(0, 255)
ip_addrs = st.tuples(octet, octet, octet, octet).map(
    lambda t: ".".join(str(x) for x in t)
)


def record_strategy():
    def build(kind, ts, src, dst, ip_id, offset, more, payload, sport, dport):
        if kind == "udp_head":
            return PacketRecord(ts, src, dst, 17, ip_id, 0, more, payload, sport, dport)
        if kind == "udp_tail":
            return PacketRecord(ts, src, dst, 17, ip_id, max(offset, 1), more, payload)
        return PacketRecord(ts, src, dst, 6, ip_id, offset, more, payload)

    return st.builds(
        build,
        st.sampled_from(["udp_head", "udp_tail", "tcp"]),
        st.integers(0, 2**40),
        ip_addrs,
        ip_addrs,
        st.integers(0, 65535),
        st.integers(0, 8191),
        st.booleans(),
        st.binary(max_size=64),
        st.integers(0, 65535),
        st.integers(0, 65535),
    )


@settings(max_examples=50, deadline=None)
@given(records=st.lists(record_strategy(), max_size=20))
def test_pcap_round_trip_field_exact(tmp_path_factory, records):
    records = sorted(records, key=lambda r: r.timestamp)
    path = tmp_path_factory.mktemp("rt") / "x.pcap"
    write_pcap(records, path)
    assert read_pcap(path).records == records


def test_empty_file_round_trip(tmp_path):
    path = tmp_path / "empty.pcap"
    write_pcap([], path)
    assert path.stat().st_size == 24
    cap = read_pcap(path)
    assert cap.records == [] and cap.link_type == 1


def test_non_ipv4_record_round_trip(tmp_path):
    arp = bytes.fromhex("ffffffffffff020000000001080600010800060400010200000000010a000001")
    rec = PacketRecord(1234, "", "", PROTO_OTHER, 0, 0, False, arp)
    path = tmp_path / "o.pcap"
    write_pcap([rec], path)
    back = read_pcap(path).records
    assert back == [rec]


def test_writer_requires_ports_on_first_udp_fragment(tmp_path):
    rec = PacketRecord(0, "1.2.3.4", "5.6.7.8", 17, 1, 0, False, b"zz")
    with pytest.raises(ValueError):
        write_pcap([rec], tmp_path / "bad.pcap")


def test_writer_rejects_time_travel(tmp_path):
    a = PacketRecord(5, "1.2.3.4", "5.6.7.8", 17, 1, 0, False, b"", 1, 2)
    b = PacketRecord(4, "1.2.3.4", "5.6.7.8", 17, 2, 0, False, b"", 1, 2)
    with pytest.raises(ValueError):
        write_pcap([a, b], tmp_path / "bad.pcap")


def test_reader_accepts_swapped_byte_order(tmp_path):
    rec = PacketRecord(3_000_007, "9.8.7.6", "1.2.3.4", 17, 42, 0, True, b"hi", 7, 9)
    frame = frame_bytes(rec)
    blob = struct.pack("<IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, 1)
    blob += struct.pack("<IIII", 3, 7, len(frame), len(frame)) + frame
    path = tmp_path / "le.pcap"
    path.write_bytes(blob)
    assert path.read_bytes()[:4] == bytes.fromhex("d4c3b2a1")
    assert read_pcap(path).records == [rec]


def test_reader_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.pcap"
    path.write_bytes(b"\xde\xad\xbe\xef" + bytes(20))
    with pytest.raises(BadMagicError):
        read_pcap(path)


def test_reader_rejects_truncation(tmp_path):
    good = tmp_path / "good.pcap"
    rec = PacketRecord(0, "1.2.3.4", "5.6.7.8", 17, 1, 184, False, b"abc")
    write_pcap([rec], good)
    blob = good.read_bytes()
    for cut in (2, 20, 30, len(blob) - 1):
        bad = tmp_path / f"cut{cut}.pcap"
        bad.write_bytes(blob[:cut])
        with pytest.raises(TruncatedPcapError):
            read_pcap(bad)


def test_reader_strips_ethernet_padding(tmp_path):
    rec = PacketRecord(0, "1.2.3.4", "5.6.7.8", 17, 5, 184, False, b"ab")
    frame = frame_bytes(rec) + b"\x00" * 18  # pad to the 60-byte minimum
    blob = struct.pack(">IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, 1)
    blob += struct.pack(">IIII", 0, 0, len(frame), len(frame)) + frame
    path = tmp_path / "pad.pcap"
    path.write_bytes(blob)
    assert read_pcap(path).records == [rec]


# ---------------------------------------------------------------------------
# Golden fixture


def load_golden():
    meta = json.loads((DATA_DIR / "golden.json").read_text())
    return DATA_DIR / "golden.pcap", meta


def test_golden_fixture_demodulates_to_committed_bits():
    path, meta = load_golden()
    cap = read_pcap(path)
    result = receive_pipeline(cap.records, meta["sender_ip"], meta["port"])
    assert "".join(map(str, result.demodulated)) == meta["frame"]
    assert "".join(map(str, result.data)) == meta["data"]


def test_golden_fixture_layout_and_reference_dissection():
    path, meta = load_golden()
    raw = path.read_bytes()
    assert raw[:4] == bytes.fromhex("a1b2c3d4")
    assert raw[:24] == struct.pack(">IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, 1)
    frames = ref_split_pcap(raw)
    assert len(frames) == meta["packets"]
    for _, _, frame in frames:
        ref_dissect_frame(frame)


# ---------------------------------------------------------------------------
# Live loopback


def _have_capture_privilege() -> bool:
    if not hasattr(socket, "AF_PACKET"):
        return False
    try:
        s = socket.socket(socket.AF_PACKET, socket.SOCK_RAW, socket.htons(3))
    except (PermissionError, OSError):
        return False
    s.close()
    return True


needs_privilege = pytest.mark.skipif(
    not _have_capture_privilege(), reason="needs raw capture privilege"
)


def _capture_during(send, port):
    ready, stop = threading.Event(), threading.Event()
    box = {}

    def run():
        box["cap"] = live_capture(port=port, stop=stop, ready=ready)

    t = threading.Thread(target=run)
    t.start()
    ready.wait(5.0)
    report = send()
    time.sleep(0.3)
    stop.set()
    t.join(5.0)
    return report, box["cap"]


def fast_params(port):
    return ModulationParams(
        receiver_ip="127.0.0.1",
        sender_ip="127.0.0.1",
        receiver_port=port,
        inter_bit_gap_ms=1.0,
    )


@needs_privilege
def test_datagram_send_is_observed_on_loopback():
    params = fast_params(41701)
    frame = build_frame(DEFAULT_PREAMBLE, (1, 0, 1, 0, 1, 0))
    schedule = modulate(frame, params, random.Random(31))
    report, cap = _capture_during(
        lambda: live_send(schedule, mode="datagram"), 41701
    )
    assert not report.errors
    assert len(report.sent) == len(frame)
    assert len(cap.records) >= len(frame)


@needs_privilege
def test_raw_send_decodes_on_loopback():
    params = fast_params(41702)
    data = (0, 1, 1, 0, 1, 0)
    schedule = modulate(build_frame(DEFAULT_PREAMBLE, data), params, random.Random(1009))
    assert all(sp.record.ip_id != 0 for sp in schedule)
    report, cap = _capture_during(lambda: live_send(schedule, mode="raw"), 41702)
    assert not report.errors
    assert len(report.sent) == len(schedule)
    result = receive_pipeline(cap.records, "127.0.0.1", 41702)
    assert result.data == data


def test_live_send_rejects_empty_and_unknown_mode():
    with pytest.raises(ValueError):
        live_send([], mode="datagram")
    schedule = modulate((1,), ModulationParams(), random.Random(0))
    with pytest.raises(ValueError):
        live_send(schedule, mode="carrier-pigeon")


def test_live_send_records_per_packet_failures():
    # 66000 bytes regroups to a datagram no UDP socket will take (EMSGSIZE),
    # so every send fails locally without touching the network.
    params = ModulationParams(b1=66000, b0=1000, inter_bit_gap_ms=0.0)
    schedule = modulate((1,), params, random.Random(2))
    report = live_send(schedule, mode="datagram", target=("127.0.0.1", 9))
    assert report.errors and report.sent == []


def test_live_send_rejects_headless_schedule():
    sched = modulate((1,), ModulationParams(), random.Random(3))
    headless = [sp for sp in sched if sp.record.frag_offset != 0]
    with pytest.raises(ValueError):
        live_send(headless, mode="datagram")


def test_live_capture_needs_a_bound():
    with pytest.raises(ValueError):
        live_capture(port=1)


@needs_privilege
def test_live_capture_on_silent_port_terminates_empty():
    cap = live_capture(port=1, duration_s=0.2)
    assert cap.records == []
