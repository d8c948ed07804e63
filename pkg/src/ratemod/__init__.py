"""Throughput-modulation covert channel toolkit.

Bits ride on how much a sender transmits, not on what: a 1 is a large UDP
datagram, a 0 a small one, and the receiver recovers the stream by counting
IP fragments per datagram.  The package bundles the sender, the receiver,
an impairment channel, pcap transport, and a measurement harness.
"""

from .channel import (
    BscModel,
    ImpairmentConfig,
    apply_impairments,
    binary_entropy,
    bsc_transmit,
    channel_capacity,
    invert_capacity,
)
from .demodulator import (
    NoSignalError,
    PreambleNotFoundError,
    ReceiveResult,
    count_by_id,
    demodulate,
    filter_packets,
    receive_pipeline,
)
from .framing import (
    DEFAULT_PREAMBLE,
    Bits,
    as_bits,
    ber,
    bits_from_bytes,
    bits_to_bytes,
    build_frame,
    sync_preamble,
)
from .harness import (
    ExperimentConfig,
    ExperimentReport,
    TrialResult,
    coexistence_check,
    run_experiment,
    run_trial,
    sweep_ar,
    sweep_capacity,
)
from .modulator import (
    Datagram,
    ModulationParams,
    construct_packet,
    fragment_packet,
    fragment_slot_ms,
    generate_payload,
    modulate,
    schedule_records,
    schedule_span_ms,
)
from .packets import PacketRecord, PacketSchedule, ScheduledPacket
from .transport import (
    BadMagicError,
    CaptureFile,
    PcapFormatError,
    SendReport,
    TruncatedPcapError,
    live_capture,
    live_send,
    read_pcap,
    write_pcap,
)

__version__ = "0.1.0"

__all__ = [
    "BadMagicError",
    "Bits",
    "BscModel",
    "CaptureFile",
    "Datagram",
    "DEFAULT_PREAMBLE",
    "ExperimentConfig",
    "ExperimentReport",
    "ImpairmentConfig",
    "ModulationParams",
    "NoSignalError",
    "PacketRecord",
    "PacketSchedule",
    "PcapFormatError",
    "PreambleNotFoundError",
    "ReceiveResult",
    "ScheduledPacket",
    "SendReport",
    "TrialResult",
    "TruncatedPcapError",
    "apply_impairments",
    "as_bits",
    "ber",
    "binary_entropy",
    "bits_from_bytes",
    "bits_to_bytes",
    "bsc_transmit",
    "build_frame",
    "channel_capacity",
    "coexistence_check",
    "construct_packet",
    "count_by_id",
    "demodulate",
    "filter_packets",
    "fragment_packet",
    "fragment_slot_ms",
    "generate_payload",
    "invert_capacity",
    "live_capture",
    "live_send",
    "modulate",
    "read_pcap",
    "receive_pipeline",
    "run_experiment",
    "run_trial",
    "schedule_records",
    "schedule_span_ms",
    "sweep_ar",
    "sweep_capacity",
    "sync_preamble",
    "write_pcap",
]
