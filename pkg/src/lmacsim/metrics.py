"""Four-mode time accounting, energy and end-to-end delay statistics."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional


class Mode(str, enum.Enum):
    SLEEP = "Sleep"
    IDLE = "Idle"
    TX = "Tx"
    RX = "Rx"

    def __str__(self):
        return self.value


LISTENING = (Mode.IDLE, Mode.RX)


class AccountingError(RuntimeError):
    """Internal consistency fault in mode or delivery bookkeeping."""


@dataclass(frozen=True)
class Powers:
    tx: float = 0.060
    rx: float = 0.045
    idle: float = 0.045
    sleep: float = 9e-5

    def of(self, mode: Mode) -> float:
        return {Mode.TX: self.tx, Mode.RX: self.rx,
                Mode.IDLE: self.idle, Mode.SLEEP: self.sleep}[mode]


class EnergyLedger:
    """Per-node accumulated time in each radio mode."""

    def __init__(self, n_nodes: int, powers: Powers = Powers()):
        self.powers = powers
        self.times = [{m: 0.0 for m in Mode} for _ in range(n_nodes)]
        self._last_end = [0.0] * n_nodes

    def record_mode(self, node: int, mode: Mode, from_t: float, to_t: float) -> None:
        if to_t < from_t:
            raise AccountingError(f"node {node}: interval [{from_t}, {to_t}) runs backwards")
        if from_t < self._last_end[node] - 1e-12:
            raise AccountingError(
                f"node {node}: interval starting {from_t} overlaps previous end {self._last_end[node]}")
        self.times[node][mode] += to_t - from_t
        self._last_end[node] = to_t

    def total_time(self, node: int) -> float:
        return math.fsum(self.times[node].values())

    def energy(self, node: int) -> float:
        t = self.times[node]
        p = self.powers
        return (p.sleep * t[Mode.SLEEP] + p.idle * t[Mode.IDLE]
                + p.tx * t[Mode.TX] + p.rx * t[Mode.RX])

    def awake_fraction(self, node: int) -> float:
        t = self.times[node]
        total = self.total_time(node)
        if total <= 0:
            return 0.0
        return (t[Mode.IDLE] + t[Mode.TX] + t[Mode.RX]) / total


def nearest_rank(sorted_values: list[float], pct: float) -> float:
    rank = max(1, math.ceil(pct / 100.0 * len(sorted_values)))
    return sorted_values[rank - 1]


class DelayStats:
    def __init__(self):
        self.delays: dict[int, float] = {}

    def record_delivery(self, packet_id: int, generated_at: float, delivered_at: float) -> float:
        if packet_id in self.delays:
            raise AccountingError(f"packet {packet_id} delivered twice")
        if delivered_at < generated_at:
            raise AccountingError(f"packet {packet_id} delivered before it was generated")
        d = delivered_at - generated_at
        self.delays[packet_id] = d
        return d

    def finalize(self) -> tuple[Optional[float], Optional[float], Optional[float]]:
        """(mean, p95, max) of recorded delays; all None when nothing was delivered."""
        if not self.delays:
            return None, None, None
        vals = sorted(self.delays.values())
        return math.fsum(vals) / len(vals), nearest_rank(vals, 95), vals[-1]


@dataclass(frozen=True)
class SummaryReport:
    protocol: str
    seed: int
    n_nodes: int
    rate: float
    sim_time: float
    node_energy: tuple
    awake_fraction: tuple
    generated: int
    delivered: int
    dropped: int
    queued: int
    collisions: int
    delay_mean: Optional[float]
    delay_p95: Optional[float]
    delay_max: Optional[float]
    mode_times: tuple = field(repr=False, default=())

    @property
    def energy_total(self) -> float:
        return math.fsum(self.node_energy)

    @property
    def energy_per_delivered(self) -> Optional[float]:
        return self.energy_total / self.delivered if self.delivered else None

    @property
    def awake_fraction_mean(self) -> float:
        return math.fsum(self.awake_fraction) / len(self.awake_fraction) if self.awake_fraction else 0.0


def build_report(*, protocol: str, seed: int, rate: float, sim_time: float,
                 ledger: EnergyLedger, delays: DelayStats, generated: int,
                 dropped: int, collisions: int) -> SummaryReport:
    n = len(ledger.times)
    mean, p95, mx = delays.finalize()
    delivered = len(delays.delays)
    return SummaryReport(
        protocol=protocol, seed=seed, n_nodes=n, rate=rate, sim_time=sim_time,
        node_energy=tuple(ledger.energy(i) for i in range(n)),
        awake_fraction=tuple(ledger.awake_fraction(i) for i in range(n)),
        generated=generated, delivered=delivered, dropped=dropped,
        queued=generated - delivered - dropped, collisions=collisions,
        delay_mean=mean, delay_p95=p95, delay_max=mx,
        mode_times=tuple(dict(t) for t in ledger.times),
    )
