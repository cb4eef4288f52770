"""Comparison MACs: always-on CSMA/CA and a globally synchronised duty cycle."""
from __future__ import annotations

from .engine import EventKind, NodeState
from .mac import ContentionMac
from .metrics import Mode


class CsmaMac(ContentionMac):
    """Radios never sleep; queued packets contend immediately."""

    name = "csma"

    def setup(self) -> None:
        for node in self.sim.nodes:
            self.sim.set_mode(node, Mode.IDLE)

    def _kick(self, node: NodeState) -> None:
        if node.intra_queue and not self.has_pending(node):
            self.start_backoff(node)

    def on_packet(self, node: NodeState) -> None:
        self._kick(node)

    def after_success(self, node: NodeState) -> None:
        self._kick(node)

    def after_failure(self, node: NodeState) -> None:
        self._kick(node)

    def after_grant_sent(self, node: NodeState) -> None:
        self._kick(node)


class DutyCycleMac(ContentionMac):
    """S-MAC-like periodic listen/sleep on one network-wide schedule.

    Every node listens during ``[k*T, k*T + listen)`` with ``T = listen + sleep``
    and sleeps otherwise. A data/ack exchange must fit inside one listen window.
    """

    name = "dutycycle"

    def __init__(self, sim):
        super().__init__(sim)
        self.listen = sim.cfg.duty_listen
        self.period = sim.cfg.duty_listen + sim.cfg.duty_sleep
        self.window_end = 0.0
        self.listening = False

    @property
    def duty_cycle(self) -> float:
        return self.listen / self.period

    def setup(self) -> None:
        self.sim.schedule(0.0, EventKind.SLOT_START, "listen", self._on_window_start, 0)

    def _on_window_start(self, ev) -> None:
        k = ev.payload
        start = k * self.period
        self.window_end = start + self.listen
        self.listening = True
        sim = self.sim
        sim.schedule(self.window_end, EventKind.SLOT_END, "listen", self._on_window_end, k)
        sim.schedule((k + 1) * self.period, EventKind.SLOT_START, "listen",
                     self._on_window_start, k + 1)
        for node in sim.nodes:
            sim.set_mode(node, Mode.IDLE)
            if node.intra_queue:
                self.start_backoff(node)

    def _on_window_end(self, ev) -> None:
        self.listening = False
        for node in self.sim.nodes:
            self.cancel_timers(node)
            node.locked = None
            self.sim.set_mode(node, Mode.SLEEP)

    def _kick(self, node: NodeState) -> None:
        if self.listening and node.intra_queue and not self.has_pending(node):
            self.start_backoff(node)

    def may_transmit(self, node: NodeState) -> bool:
        return self.sim.now + self.exchange < self.window_end

    def exchange_deadline(self, node: NodeState) -> float:
        return self.window_end

    def on_packet(self, node: NodeState) -> None:
        self._kick(node)

    def after_success(self, node: NodeState) -> None:
        self._kick(node)

    def after_failure(self, node: NodeState) -> None:
        if self.listening:
            self._kick(node)

    def after_grant_sent(self, node: NodeState) -> None:
        self._kick(node)
