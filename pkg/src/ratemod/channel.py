"""Channel impairments and the binary-symmetric-channel view of the link.

apply_impairments degrades a packet schedule the way a lossy, jittery path
would; the BSC helpers translate observed bit error rates into capacity
numbers so different operating points can be compared in bits per channel use.
"""

import math
import random
from dataclasses import dataclass, replace
from typing import Sequence

from .packets import PacketSchedule, ScheduledPacket


@dataclass(frozen=True)
class ImpairmentConfig:
    """Path degradation knobs.

    loss_prob: independent per-packet drop probability.
    drop_every: periodic drop; every N-th packet of the original schedule is
        removed (1-based position, 0 disables).
    delay_ms/jitter_ms: constant shift plus uniform(-jitter, +jitter) noise,
        clamped so no packet moves before t=0.
    corrupt_prob: per-packet chance of one payload byte being overwritten.
    """

    loss_prob: float = 0.0
    drop_every: int = 0
    delay_ms: float = 0.0
    jitter_ms: float = 0.0
    corrupt_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError("loss_prob must be in [0, 1]")
        if self.drop_every != 0 and self.drop_every < 2:
            raise ValueError("drop_every must be 0 (off) or >= 2")
        if self.delay_ms < 0:
            raise ValueError("delay_ms must be >= 0")
        if self.jitter_ms < 0:
            raise ValueError("jitter_ms must be >= 0")
        if not 0.0 <= self.corrupt_prob <= 1.0:
            raise ValueError("corrupt_prob must be in [0, 1]")


def apply_impairments(schedule: PacketSchedule, cfg: ImpairmentConfig) -> PacketSchedule:
    """Run a schedule through loss, periodic drop, delay/jitter, corruption.

    Stages apply in that fixed order and consume randomness from a single
    generator seeded by cfg.seed, so a given (schedule, cfg) pair always
    yields the same output.  Periodic drop counts positions in the original
    schedule, not the loss survivors.  The delay stage re-sorts by adjusted
    time; the sort is stable, so equal-time packets keep their order.
    """
    rng = random.Random(cfg.seed)

    survivors: list[tuple[float, ScheduledPacket]] = []
    for pos, sp in enumerate(schedule, start=1):
        lost = cfg.loss_prob > 0.0 and rng.random() < cfg.loss_prob
        dropped = cfg.drop_every > 0 and pos % cfg.drop_every == 0
        if not (lost or dropped):
            survivors.append((sp.emit_ms, sp))

    delayed: list[ScheduledPacket] = []
    for emit_ms, sp in survivors:
        t = emit_ms + cfg.delay_ms
        if cfg.jitter_ms > 0.0:
            t += rng.uniform(-cfg.jitter_ms, cfg.jitter_ms)
        t = max(t, 0.0)
        delayed.append(ScheduledPacket(t, replace(sp.record, timestamp=round(t * 1000))))
    delayed.sort(key=lambda sp: sp.emit_ms)

    out: PacketSchedule = []
    for sp in delayed:
        if cfg.corrupt_prob > 0.0 and rng.random() < cfg.corrupt_prob and sp.record.payload:
            idx = rng.randrange(len(sp.record.payload))
            mutated = bytearray(sp.record.payload)
            mutated[idx] = rng.randrange(256)
            sp = ScheduledPacket(sp.emit_ms, replace(sp.record, payload=bytes(mutated)))
        out.append(sp)
    return out


@dataclass(frozen=True)
class BscModel:
    """Memoryless binary symmetric channel with crossover probability p."""

    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("crossover probability must be in [0, 1]")

    @property
    def capacity(self) -> float:
        return channel_capacity(self.p)


def bsc_transmit(bits: Sequence[int], model: BscModel, rng: random.Random) -> tuple[int, ...]:
    """Flip each bit independently with probability model.p."""
    return tuple(b ^ 1 if rng.random() < model.p else b for b in bits)


def binary_entropy(p: float) -> float:
    """H(p) = -p*log2(p) - (1-p)*log2(1-p), with H(0) = H(1) = 0."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("probability must be in [0, 1]")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def channel_capacity(p: float) -> float:
    """BSC capacity C = 1 - H(p) in bits per channel use."""
    return 1.0 - binary_entropy(p)


def invert_capacity(c: float, tol: float = 1e-9) -> float:
    """Crossover probability p in [0, 0.5] with channel_capacity(p) == c.

    Capacity decreases monotonically from 1 at p=0 to 0 at p=0.5, so simple
    bisection converges; 60 halvings of [0, 0.5] land well inside tol.
    """
    if not 0.0 <= c <= 1.0:
        raise ValueError("capacity must be in [0, 1]")
    lo, hi = 0.0, 0.5
    for _ in range(60):
        mid = (lo + hi) / 2.0
        if channel_capacity(mid) > c:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return (lo + hi) / 2.0
