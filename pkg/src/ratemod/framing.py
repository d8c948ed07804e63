"""Bit-level framing: preamble + data frames, synchronization, and BER."""

from collections.abc import Iterable, Sequence

Bits = tuple[int, ...]

# 16-bit default preamble, 0xB5B7 rendered most-significant-bit first.
# Chosen for low autocorrelation so a false sync inside random data is unlikely.
DEFAULT_PREAMBLE: Bits = tuple(int(c) for c in format(0xB5B7, "016b"))


def as_bits(value: Iterable[int] | str) -> Bits:
    """Coerce a bit string like ``"1010"`` or an iterable of 0/1 ints to Bits."""
    if isinstance(value, str):
        bits = tuple(int(c) for c in value)
    else:
        bits = tuple(int(b) for b in value)
    for b in bits:
        if b not in (0, 1):
            raise ValueError(f"bitstream may only contain 0 and 1, got {b}")
    return bits


def build_frame(preamble: Iterable[int] | str, data: Iterable[int] | str) -> Bits:
    """Prefix the data bits with the preamble bits."""
    p = as_bits(preamble)
    d = as_bits(data)
    if not p:
        raise ValueError("preamble must not be empty")
    if not d:
        raise ValueError("frame data must not be empty")
    return p + d


def sync_preamble(demodulated: Iterable[int] | str, preamble: Iterable[int] | str) -> int | None:
    """Locate the preamble in a demodulated stream.

    Returns the index immediately after the end of the preamble's first
    occurrence, i.e. where the data region begins, or None when the preamble
    does not occur (including when it is longer than the stream).
    """
    stream = as_bits(demodulated)
    p = as_bits(preamble)
    if not p:
        raise ValueError("preamble must not be empty")
    if len(p) > len(stream):
        return None
    # Strings make the subsequence search trivial; streams are short.
    idx = "".join(map(str, stream)).find("".join(map(str, p)))
    if idx < 0:
        return None
    return idx + len(p)


def ber(sent: Iterable[int] | str, received: Iterable[int] | str) -> float:
    """Bit error rate between a sent and a received stream.

    Compared position-by-position over the overlapping prefix; any length
    difference is counted entirely as errors (impairments can delete trailing
    bits), and the total is normalized by the longer length.
    """
    s = as_bits(sent)
    r = as_bits(received)
    if not s and not r:
        raise ValueError("ber is undefined for two empty streams")
    errors = sum(a != b for a, b in zip(s, r)) + abs(len(s) - len(r))
    return errors / max(len(s), len(r))


def bits_from_bytes(data: bytes) -> Bits:
    """Expand bytes to bits, most significant bit first."""
    return tuple((byte >> shift) & 1 for byte in data for shift in range(7, -1, -1))


def bits_to_bytes(bits: Iterable[int] | str) -> bytes:
    """Pack bits (MSB first) back into bytes; length must be a multiple of 8."""
    b = as_bits(bits)
    if len(b) % 8 != 0:
        raise ValueError(f"bit length {len(b)} is not a multiple of 8")
    out = bytearray()
    for i in range(0, len(b), 8):
        byte = 0
        for bit in b[i : i + 8]:
            byte = (byte << 1) | bit
        out.append(byte)
    return bytes(out)
