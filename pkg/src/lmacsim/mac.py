"""Backoff, carrier sense and data/grant exchange shared by every MAC."""
from __future__ import annotations

import math
from typing import Optional

from .engine import (DATA, GRANT, Deferral, Event, EventKind, Frame, NodeState,
                     Outcome, Simulator, TransmissionRecord)
from .metrics import Mode

# wait past the expected grant end before declaring it missing
GRANT_SLACK = 1e-5


class ContentionMac:
    """Slotted binary-exponential backoff with carrier sense and a grant/ack.

    Subclasses decide when nodes are awake and when an exchange may start by
    overriding the hook methods at the bottom of the class.
    """

    name = "base"

    def __init__(self, sim: Simulator):
        self.sim = sim
        cfg = sim.cfg
        self.mini_slot = cfg.mini_slot
        self.cw_min = cfg.cw_min
        self.cw_max = cfg.cw_max
        self.retry_limit = cfg.retry_limit
        self.exchange = sim.data_duration + sim.grant_duration + GRANT_SLACK

    # ---- backoff ---------------------------------------------------------

    def start_backoff(self, node: NodeState, busy: bool = False) -> None:
        w = self.contention_window(node)
        b = self.sim.rng.randrange(w) + (1 if busy else 0)
        node.backoff_ev = self.sim.schedule(self.sim.now + b * self.mini_slot,
                                            EventKind.BACKOFF_EXPIRY, node.id, self._on_backoff)

    def _on_backoff(self, ev: Event) -> None:
        node = self.sim.nodes[ev.subject]
        if node.backoff_ev is not ev:
            return
        node.backoff_ev = None
        if node.awaiting is not None:
            return
        if node.mode is not Mode.IDLE or self.sim.channel.carrier_sense(node.id, self.sim.now):
            self.start_backoff(node, busy=True)
            return
        queue = self.service_queue(node)
        if not queue or not self.may_transmit(node):
            return
        packet = queue[0]
        nh = self.sim.routes[node.id][packet.dst]
        frame = Frame(self.sim.new_frame_id(), node.id, nh, DATA, packet.size, packet)
        try:
            self.sim.begin_transmission(node, frame, self.exchange_deadline(node))
        except Deferral:
            return
        node.awaiting = frame
        node.awaiting_queue = queue

    def has_pending(self, node: NodeState) -> bool:
        return (node.backoff_ev is not None or node.awaiting is not None
                or node.mode is Mode.TX)

    # ---- engine callbacks ------------------------------------------------

    def on_header(self, node: NodeState, rec: TransmissionRecord) -> None:
        self.sim.lock(node, rec)

    def on_tx_end(self, node: NodeState, rec: TransmissionRecord) -> None:
        if rec.frame.kind == DATA:
            node.timer_ev = self.sim.schedule(
                rec.end + self.sim.grant_duration + GRANT_SLACK, EventKind.TIMER,
                node.id, self._on_grant_timeout, rec.frame.id)
        else:
            self.after_grant_sent(node)

    def on_frame_end(self, node: NodeState, rec: TransmissionRecord, outcome: Outcome) -> None:
        f = rec.frame
        if outcome is not Outcome.DELIVERED or f.dst != node.id:
            self.after_reception_failed(node, rec, outcome)
            return
        if f.kind == DATA:
            if self.accept_data(node, rec):
                self.sim.deliver_hop(node, f.packet)
                self.send_grant(node, rec)
        elif f.kind == GRANT and node.awaiting is not None and f.ack_of == node.awaiting.id:
            self._exchange_done(node, success=True)

    def send_grant(self, node: NodeState, rec: TransmissionRecord) -> None:
        g = Frame(self.sim.new_frame_id(), node.id, rec.tx_node, GRANT,
                  self.sim.cfg.grant_size, ack_of=rec.frame.id)
        self.sim.begin_transmission(node, g)

    def _on_grant_timeout(self, ev: Event) -> None:
        node = self.sim.nodes[ev.subject]
        if node.timer_ev is not ev:
            return
        self._exchange_done(node, success=False)

    def _exchange_done(self, node: NodeState, success: bool) -> None:
        node.timer_ev = None
        queue = node.awaiting_queue
        node.awaiting = None
        node.awaiting_queue = None
        if success:
            packet = queue.popleft()
            self.sim.release(node, packet, success=True)
            node.retries = 0
            node.cw = self.cw_min
            self._tidy(node)
            self.after_success(node)
            return
        node.retries += 1
        node.cw = min(2 * node.cw, self.cw_max)
        if node.retries > self.retry_limit:
            packet = queue.popleft()
            self.sim.release(node, packet, success=False)
            self.sim.note(f"drop={packet.id}@{node.id}")
            node.retries = 0
            node.cw = self.cw_min
            self._tidy(node)
        self.after_failure(node)

    def _tidy(self, node: NodeState) -> None:
        pass

    def cancel_timers(self, node: NodeState) -> None:
        node.backoff_ev = None
        node.timer_ev = None
        if node.awaiting is not None:
            # an exchange cut short counts as an unanswered attempt
            self._exchange_done(node, success=False)

    # ---- hooks -----------------------------------------------------------

    def setup(self) -> None:
        raise NotImplementedError

    def classify_and_enqueue(self, node: NodeState, packet, next_hop: int) -> None:
        node.intra_queue.append(packet)

    def on_packet(self, node: NodeState) -> None:
        pass

    def contention_window(self, node: NodeState) -> int:
        return node.cw

    def service_queue(self, node: NodeState):
        return node.intra_queue

    def may_transmit(self, node: NodeState) -> bool:
        return True

    def exchange_deadline(self, node: NodeState) -> float:
        return math.inf

    def accept_data(self, node: NodeState, rec: TransmissionRecord) -> bool:
        return True

    def after_success(self, node: NodeState) -> None:
        pass

    def after_failure(self, node: NodeState) -> None:
        pass

    def after_grant_sent(self, node: NodeState) -> None:
        pass

    def after_reception_failed(self, node: NodeState, rec: TransmissionRecord,
                               outcome: Optional[Outcome]) -> None:
        pass
