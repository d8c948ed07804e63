"""Command-line front end.

Subcommands cover the whole toolkit: live send/capture, pcap demodulation,
in-process simulation, parameter sweeps, and the capacity formula.  Every
command honors --seed (default from RATEMOD_SEED) and ends its output with
one JSON line summarizing the result, so runs are easy to script against.
Relative output paths land under RATEMOD_OUT_DIR when that is set.
"""

import argparse
import json
import os
import random
import sys
from pathlib import Path

from .channel import ImpairmentConfig, channel_capacity, invert_capacity
from .demodulator import NoSignalError, PreambleNotFoundError, receive_pipeline
from .framing import DEFAULT_PREAMBLE, bits_from_bytes, build_frame
from .harness import (
    ExperimentConfig,
    coexistence_check,
    run_experiment,
    sweep_ar,
    sweep_capacity,
    trial_artifacts,
    write_ar_csv,
    write_capacity_csv,
    write_coexistence_csv,
    write_experiment_csv,
)
from .modulator import ModulationParams, modulate, schedule_records
from .transport import live_capture, live_send, read_pcap, write_pcap

DEFAULT_AR_GRID = (6.0, 4.5, 3.0, 2.0)
DEFAULT_B1_GRID = (6000, 4000)
DEFAULT_LOSS_GRID = (0.01, 0.02, 0.05, 0.10, 0.15)
DEFAULT_DROP_GRID = (21, 51, 101, 201, 301)


def _default_seed() -> int:
    return int(os.environ.get("RATEMOD_SEED", "0"))


def _out_path(p: str) -> str:
    base = os.environ.get("RATEMOD_OUT_DIR")
    if base and not os.path.isabs(p):
        return os.path.join(base, p)
    return p


def _emit(summary: dict) -> None:
    print(json.dumps(summary, sort_keys=True))


def _bits_str(bits) -> str:
    return "".join(str(b) for b in bits)


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _add_params_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--b1", type=int, default=6000, help="payload bytes keying a 1")
    p.add_argument("--b0", type=int, default=1000, help="payload bytes keying a 0")
    p.add_argument("--ar", type=float, default=None, help="derive b0 as round(b1/ar)")
    p.add_argument("--frag-size", type=int, default=1472)
    p.add_argument("--gap-ms", type=float, default=100.0, help="pause between bits")
    p.add_argument("--link-rate", type=float, default=10_000_000.0, help="bits/second")


def _params_from(args) -> ModulationParams:
    b0 = round(args.b1 / args.ar) if args.ar is not None else args.b0
    return ModulationParams(
        b1=args.b1,
        b0=b0,
        frag_size=args.frag_size,
        inter_bit_gap_ms=args.gap_ms,
        link_rate_bps=args.link_rate,
    )


def _add_impairment_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--loss", type=float, default=0.0, help="loss probability [0,1]")
    p.add_argument("--drop", type=int, default=0, help="drop every N-th packet")
    p.add_argument("--delay", type=float, default=0.0, help="delay ms")
    p.add_argument("--jitter", type=float, default=0.0, help="jitter ms")
    p.add_argument("--corrupt", type=float, default=0.0, help="corruption probability")


def _impairments_from(args, seed: int) -> ImpairmentConfig:
    return ImpairmentConfig(
        loss_prob=args.loss,
        drop_every=args.drop,
        delay_ms=args.delay,
        jitter_ms=args.jitter,
        corrupt_prob=args.corrupt,
        seed=seed,
    )


def _cmd_simulate(args) -> int:
    cfg = ExperimentConfig(
        params=_params_from(args),
        impairments=_impairments_from(args, args.seed),
        min_frame_bits=args.bits,
        max_frame_bits=args.bits,
        trials=args.trials,
        seed=args.seed,
    )
    report = run_experiment(cfg)
    summary = {
        "command": "simulate",
        "trials": cfg.trials,
        "frame_bits": args.bits,
        "ber_mean": report.ber_mean,
        "bitrate_mean": report.bitrate_mean,
        "capacity": report.capacity,
        "seed": args.seed,
    }
    if args.out_csv:
        path = _out_path(args.out_csv)
        write_experiment_csv(report, path)
        summary["csv"] = path
    if args.emit_pcap:
        frame, data, _, impaired = trial_artifacts(cfg, 0)
        path = _out_path(args.emit_pcap)
        write_pcap(schedule_records(impaired), path)
        summary.update(
            pcap=path,
            frame=_bits_str(frame),
            data=_bits_str(data),
            sender_ip=cfg.params.sender_ip,
            port=cfg.params.receiver_port,
        )
    _emit(summary)
    return 0


def _cmd_demod(args) -> int:
    capture = read_pcap(args.pcap)
    try:
        result = receive_pipeline(
            capture.records,
            args.sender_ip,
            args.port,
            threshold_fraction=args.threshold,
        )
    except (NoSignalError, PreambleNotFoundError) as exc:
        _emit({"command": "demod", "error": str(exc)})
        return 1
    _emit(
        {
            "command": "demod",
            "data": _bits_str(result.data),
            "demodulated": _bits_str(result.demodulated),
            "sync_index": result.sync_index,
            "threshold": result.threshold,
            "groups": len(result.groups),
        }
    )
    return 0


def _cmd_send(args) -> int:
    if args.payload_file:
        payload = Path(args.payload_file).read_bytes()
    else:
        payload = bytes.fromhex(args.payload_hex)
    if not payload:
        print("empty payload", file=sys.stderr)
        return 1
    frame = build_frame(DEFAULT_PREAMBLE, bits_from_bytes(payload))
    schedule = modulate(frame, _params_from(args), random.Random(args.seed))
    report = live_send(schedule, mode=args.mode, target=(args.target_ip, args.target_port))
    _emit(
        {
            "command": "send",
            "mode": report.mode,
            "frame_bits": len(frame),
            "packets_sent": len(report.sent),
            "errors": report.errors[:5],
            "error_count": len(report.errors),
        }
    )
    return 0 if not report.errors else 1


def _cmd_capture(args) -> int:
    capture = live_capture(
        port=args.port,
        duration_s=args.duration,
        max_packets=args.max_packets,
        interface=args.interface,
    )
    path = _out_path(args.out)
    write_pcap(capture.records, path)
    _emit({"command": "capture", "packets": len(capture), "out": path})
    return 0


def _cmd_sweep(args) -> int:
    base = ExperimentConfig(
        params=_params_from(args),
        impairments=_impairments_from(args, args.seed),
        trials=args.trials,
        seed=args.seed,
    )
    path = _out_path(args.out)
    if args.kind == "ar":
        b1s = _int_list(args.b1_grid)
        ars = _float_list(args.ar_grid)
        cells = sweep_ar(b1s, ars, base)
        write_ar_csv(cells, path)
    elif args.kind in ("loss", "drop"):
        if args.values:
            values = _float_list(args.values) if args.kind == "loss" else _int_list(args.values)
        else:
            values = list(DEFAULT_LOSS_GRID if args.kind == "loss" else DEFAULT_DROP_GRID)
        cells = sweep_capacity(args.kind, values, base)
        write_capacity_csv(cells, path)
    else:
        cells = coexistence_check(base, args.background_rate)
        write_coexistence_csv(cells, path)
    _emit({"command": "sweep", "kind": args.kind, "rows": len(cells), "out": path})
    return 0


def _cmd_capacity(args) -> int:
    if args.p is not None:
        _emit({"command": "capacity", "p": args.p, "capacity": channel_capacity(args.p)})
    else:
        p = invert_capacity(args.invert)
        _emit({"command": "capacity", "capacity": args.invert, "p": p})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ratemod",
        description="Throughput-modulation covert channel toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="in-process end-to-end run")
    p.add_argument("--bits", type=int, default=48, help="frame length incl. preamble")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, default=_default_seed())
    _add_params_args(p)
    _add_impairment_args(p)
    p.add_argument("--out-csv", default=None, help="write per-trial rows here")
    p.add_argument("--emit-pcap", default=None, help="write trial 0's capture here")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("demod", help="decode a pcap capture")
    p.add_argument("--pcap", required=True)
    p.add_argument("--sender-ip", default="10.0.0.1")
    p.add_argument("--port", type=int, default=40000)
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.set_defaults(fn=_cmd_demod)

    p = sub.add_parser("send", help="live transmit a payload")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--payload-hex")
    group.add_argument("--payload-file")
    p.add_argument("--target-ip", default="127.0.0.1")
    p.add_argument("--target-port", type=int, default=40000)
    p.add_argument("--mode", choices=("datagram", "raw"), default="datagram")
    p.add_argument("--seed", type=int, default=_default_seed())
    _add_params_args(p)
    p.set_defaults(fn=_cmd_send)

    p = sub.add_parser("capture", help="record live traffic to a pcap")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--max-packets", type=int, default=None)
    p.add_argument("--interface", default="lo")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.set_defaults(fn=_cmd_capture)

    p = sub.add_parser("sweep", help="parameter grids to CSV")
    p.add_argument("--kind", choices=("ar", "loss", "drop", "coexist"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trials", type=int, default=40)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--b1-grid", default=",".join(str(v) for v in DEFAULT_B1_GRID))
    p.add_argument("--ar-grid", default=",".join(str(v) for v in DEFAULT_AR_GRID))
    p.add_argument("--values", default=None, help="comma-separated knob values")
    p.add_argument("--background-rate", type=float, default=10_000_000.0)
    _add_params_args(p)
    _add_impairment_args(p)
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("capacity", help="evaluate or invert the capacity formula")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--p", type=float, help="crossover probability")
    group.add_argument("--invert", type=float, help="capacity to solve for p")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.set_defaults(fn=_cmd_capacity)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
