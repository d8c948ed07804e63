"""Covert receiver: recover bits from per-datagram fragment counts.

The receiver never reassembles anything.  It groups captured fragments by
IP ID, counts them, and thresholds each group count against a fraction of
the largest observed count: big groups are 1s, small groups are 0s.  Frame
alignment then comes from locating the known preamble in the bit stream.
"""

from dataclasses import dataclass
from typing import Sequence

from .framing import Bits, DEFAULT_PREAMBLE, as_bits, sync_preamble
from .packets import ID_SPACE, PROTO_UDP, PacketRecord

DEFAULT_THRESHOLD_FRACTION = 0.8

GroupCounts = list[tuple[int, int]]


class NoSignalError(RuntimeError):
    """The capture holds nothing attributable to the sender."""


class PreambleNotFoundError(RuntimeError):
    """Bits were demodulated but the preamble never appeared in them."""

    def __init__(self, message: str, demodulated: Bits, groups: GroupCounts, threshold: float):
        super().__init__(message)
        self.demodulated = demodulated
        self.groups = groups
        self.threshold = threshold


@dataclass(frozen=True)
class ReceiveResult:
    """Decoded data bits plus the diagnostics that produced them."""

    data: Bits
    demodulated: Bits
    groups: GroupCounts
    threshold: float
    sync_index: int


def filter_packets(records: Sequence[PacketRecord], sender_ip: str) -> list[PacketRecord]:
    """Keep UDP records originating from the sender, in capture order."""
    return [r for r in records if r.proto == PROTO_UDP and r.src_ip == sender_ip]


def _id_window(ids: Sequence[int]) -> list[int]:
    """Contiguous 16-bit ID range covering ids, allowing one wraparound.

    The plain [min, max] range is used unless it spans more than half the ID
    space, in which case the wrapped interpretation (low ids shifted up by
    2^16) is tried and the tighter of the two wins.
    """
    distinct = sorted(set(ids))
    lo, hi = distinct[0], distinct[-1]
    if hi - lo <= ID_SPACE // 2:
        return list(range(lo, hi + 1))
    shifted = sorted(i + ID_SPACE if i < ID_SPACE // 2 else i for i in distinct)
    if shifted[-1] - shifted[0] < hi - lo:
        return [i % ID_SPACE for i in range(shifted[0], shifted[-1] + 1)]
    return list(range(lo, hi + 1))


def count_by_id(records: Sequence[PacketRecord], port: int) -> GroupCounts:
    """Fragment count per IP ID for the flow addressed to port.

    A group is every record sharing an IP ID.  Head fragments (offset 0)
    addressed to another port are not counted: they belong to a different
    flow that happens to reuse the ID.  Continuation fragments carry no port
    and are always counted.  The result covers the contiguous ID range of
    the flow's own head fragments, mod 2^16; IDs inside that range with no
    surviving records appear with count 0, so a fully lost datagram stays a
    group instead of shifting every later bit.  The range is then widened
    over adjacent IDs that still have continuation fragments, which recovers
    datagrams at either end of the ID run whose head was lost.
    """
    heads_at: dict[int, int] = {}
    tails_at: dict[int, int] = {}
    for r in records:
        if r.frag_offset == 0 and r.dst_port is not None:
            if r.dst_port == port:
                heads_at[r.ip_id] = heads_at.get(r.ip_id, 0) + 1
        else:
            tails_at[r.ip_id] = tails_at.get(r.ip_id, 0) + 1
    if not heads_at:
        return []
    window = _id_window(list(heads_at))
    in_window = set(window)
    while len(in_window) < ID_SPACE:
        prev = (window[0] - 1) % ID_SPACE
        if prev in in_window or tails_at.get(prev, 0) == 0:
            break
        window.insert(0, prev)
        in_window.add(prev)
    while len(in_window) < ID_SPACE:
        nxt = (window[-1] + 1) % ID_SPACE
        if nxt in in_window or tails_at.get(nxt, 0) == 0:
            break
        window.append(nxt)
        in_window.add(nxt)
    return [(i, heads_at.get(i, 0) + tails_at.get(i, 0)) for i in window]


def demodulation_threshold(
    counts: GroupCounts, threshold_fraction: float = DEFAULT_THRESHOLD_FRACTION
) -> float:
    """The count cutoff for calling a group a 1: fraction of the peak count."""
    if not 0.0 < threshold_fraction <= 1.0:
        raise ValueError("threshold_fraction must be in (0, 1]")
    if not counts:
        raise ValueError("no group counts to demodulate")
    peak = max(c for _, c in counts)
    if peak <= 0:
        raise NoSignalError("every group count is zero")
    return threshold_fraction * peak


def demodulate(
    counts: GroupCounts, threshold_fraction: float = DEFAULT_THRESHOLD_FRACTION
) -> Bits:
    """Threshold group counts into bits: a group at or above the cutoff is a 1."""
    threshold = demodulation_threshold(counts, threshold_fraction)
    return tuple(1 if c >= threshold else 0 for _, c in counts)


def receive_pipeline(
    records: Sequence[PacketRecord],
    sender_ip: str,
    port: int,
    preamble: Bits | str = DEFAULT_PREAMBLE,
    threshold_fraction: float = DEFAULT_THRESHOLD_FRACTION,
) -> ReceiveResult:
    """Full receive chain: filter, group, threshold, preamble sync.

    Raises NoSignalError when nothing from the sender reaches the port and
    PreambleNotFoundError (carrying the raw bit stream) when thresholding
    produced bits but alignment failed.
    """
    pattern = as_bits(preamble)
    matching = filter_packets(records, sender_ip)
    if not matching:
        raise NoSignalError("no matching packets")
    groups = count_by_id(matching, port)
    if not groups:
        raise NoSignalError(f"no head fragments addressed to port {port}")
    demodulated = demodulate(groups, threshold_fraction)
    threshold = demodulation_threshold(groups, threshold_fraction)
    sync = sync_preamble(demodulated, pattern)
    if sync is None:
        raise PreambleNotFoundError("preamble not found", demodulated, groups, threshold)
    return ReceiveResult(
        data=demodulated[sync:],
        demodulated=demodulated,
        groups=groups,
        threshold=threshold,
        sync_index=sync,
    )
