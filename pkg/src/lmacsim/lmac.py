"""L-MAC node behaviour.

Each block owns one inter-block slot, in which its nodes listen for frames
from neighbouring blocks, and one intra-block slot, in which they contend
among themselves with CSMA/CA. Everything else is slept through unless the
node has traffic for a neighbouring block whose inter slot is running.

Inside an inter slot the first node of the block to hear a data frame
addressed to it claims the slot (first-in first-receive), receives the frame
and answers with a grant; every other block member that overhears the
exchange goes to sleep. If nothing arrives before ``theta`` of the slot has
elapsed the whole block sleeps.
"""
from __future__ import annotations

import logging
import math
from collections import deque
from typing import Optional, Sequence

from .engine import (DATA, GRANT, EventKind, NodeState, Outcome, Simulator,
                     TransmissionRecord)
from .geometry import are_adjacent
from .mac import GRANT_SLACK, ContentionMac
from .metrics import Mode
from .schedule import INTER, build_superframe, default_schedule

log = logging.getLogger(__name__)

RX = "rx"        # own block's inter slot
TX = "tx"        # neighbouring block's inter slot, with traffic for it
INTRA = "intra"  # own block's intra slot


def compute_routes(neighbors: Sequence[Sequence[int]]) -> list[list[Optional[int]]]:
    """Minimum-hop next-hop table, ``routes[src][dst]``; None marks unreachable pairs.

    BFS runs once per destination. Among equally short next hops the lowest
    node id wins.
    """
    n = len(neighbors)
    routes: list[list[Optional[int]]] = [[None] * n for _ in range(n)]
    for dst in range(n):
        dist = [-1] * n
        dist[dst] = 0
        frontier = deque([dst])
        while frontier:
            u = frontier.popleft()
            for v in neighbors[u]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    frontier.append(v)
        for src in range(n):
            if src == dst or dist[src] < 0:
                continue
            routes[src][dst] = min(v for v in neighbors[src] if dist[v] == dist[src] - 1)
    return routes


class LmacMac(ContentionMac):
    name = "lmac"

    def __init__(self, sim: Simulator):
        super().__init__(sim)
        cfg = sim.cfg
        self.schedule = default_schedule(sim.grid, cfg.slot_duration)
        self.layout = build_superframe(self.schedule)
        self.theta = cfg.theta
        self.slot_duration = cfg.slot_duration
        # senders must start before the receivers' theta timeout
        self.inter_window = max(1, math.ceil(cfg.theta * cfg.slot_duration / cfg.mini_slot - 1e-9))
        self.block_nodes: dict = {}
        for node in sim.nodes:
            self.block_nodes.setdefault(node.block, []).append(node)
        self.claims: dict = {}
        self.slot_index = 0
        self.slot_start = 0.0
        self.slot_end = 0.0
        self.theta_deadline = 0.0
        self.nonadjacent_hops = 0
        self._warned = False

    def setup(self) -> None:
        self.sim.schedule(0.0, EventKind.SLOT_START, 1, self._on_slot_start, 0)

    # ---- classification --------------------------------------------------

    def classify_and_enqueue(self, node: NodeState, packet, next_hop: int) -> None:
        nb = self.sim.nodes[next_hop].block
        if nb == node.block:
            node.intra_queue.append(packet)
            return
        if not are_adjacent(nb, node.block):
            self.nonadjacent_hops += 1
            if not self._warned:
                self._warned = True
                log.warning("next hop %d of node %d lies in non-adjacent block %s: "
                            "block side is smaller than the radio range", next_hop, node.id, tuple(nb))
        node.inter_queues.setdefault(nb, deque()).append(packet)

    def service_queue(self, node: NodeState):
        if node.role == TX:
            return node.inter_queues.get(node.target)
        if node.role == INTRA:
            return node.intra_queue
        return None

    def _tidy(self, node: NodeState) -> None:
        for b in [b for b, q in node.inter_queues.items() if not q]:
            del node.inter_queues[b]

    # ---- slot boundaries ---------------------------------------------------

    def _on_slot_start(self, ev) -> None:
        k = ev.payload
        sd = self.slot_duration
        n = len(self.layout.slots)
        desc = self.layout.slots[k % n]
        self.slot_index = desc.index
        self.slot_start = k * sd
        self.slot_end = (k + 1) * sd
        self.theta_deadline = self.slot_start + self.theta * sd
        sim = self.sim
        sim.schedule(self.slot_end, EventKind.SLOT_END, desc.index, self._on_slot_end, k)
        sim.schedule(self.slot_end, EventKind.SLOT_START, self.layout.slots[(k + 1) % n].index,
                     self._on_slot_start, k + 1)
        owners = desc.owners
        if not owners:
            return
        if desc.kind == INTER:
            self.claims = {}
            for node in sim.nodes:
                if node.block in owners:
                    node.role = RX
                    sim.set_mode(node, Mode.IDLE)
                    continue
                target = self._target(node, owners)
                if target is not None:
                    node.role = TX
                    node.target = target
                    sim.set_mode(node, Mode.IDLE)
                    self.start_backoff(node)
            sim.schedule(self.theta_deadline, EventKind.THETA_TIMEOUT, desc.index,
                         self._on_theta, k)
        else:
            for b in sorted(owners):
                for node in self.block_nodes.get(b, ()):
                    node.role = INTRA
                    node.slot_failed = False
                    sim.set_mode(node, Mode.IDLE)
                    if node.intra_queue:
                        self.start_backoff(node)

    @staticmethod
    def _target(node: NodeState, owners):
        if not node.inter_queues:
            return None
        for b in sorted(node.inter_queues):
            if b in owners and node.inter_queues[b]:
                return b
        return None

    def _on_slot_end(self, ev) -> None:
        for node in self.sim.nodes:
            if node.role is None and node.mode is Mode.SLEEP:
                continue
            self.cancel_timers(node)
            node.role = None
            node.target = None
            node.locked = None
            self.sim.set_mode(node, Mode.SLEEP)

    def _on_theta(self, ev) -> None:
        for node in self.sim.nodes:
            if node.role == RX and node.mode is Mode.IDLE:
                self.sleep_remainder(node)

    def sleep_remainder(self, node: NodeState) -> None:
        node.backoff_ev = None
        node.timer_ev = None
        node.role = None
        node.target = None
        self.sim.set_mode(node, Mode.SLEEP)

    def _nav(self, node: NodeState, rec: TransmissionRecord) -> None:
        """Sleep through an overheard exchange, then resume listening."""
        node.backoff_ev = None
        self.sim.set_mode(node, Mode.SLEEP)
        wake = rec.end
        if rec.frame.kind == DATA:
            wake += self.sim.grant_duration + GRANT_SLACK
        node.timer_ev = self.sim.schedule(wake, EventKind.TIMER, node.id, self._on_nav_end)

    def _on_nav_end(self, ev) -> None:
        node = self.sim.nodes[ev.subject]
        if node.timer_ev is not ev:
            return
        node.timer_ev = None
        self.sim.set_mode(node, Mode.IDLE)
        self._resume(node)

    def _resume(self, node: NodeState) -> None:
        if node.mode is not Mode.IDLE or self.has_pending(node):
            return
        if node.role == INTRA and node.intra_queue and not node.slot_failed:
            self.start_backoff(node)
        elif node.role == TX and node.inter_queues.get(node.target):
            self.start_backoff(node)

    # ---- contention hooks ----------------------------------------------------

    def contention_window(self, node: NodeState) -> int:
        if node.role == TX:
            return min(node.cw, self.inter_window)
        return node.cw

    def may_transmit(self, node: NodeState) -> bool:
        now = self.sim.now
        fits = now + self.exchange < self.slot_end
        if node.role == TX:
            if now < self.theta_deadline and fits:
                return True
            self.sleep_remainder(node)
            return False
        if node.role == INTRA:
            if fits:
                return True
            node.slot_failed = True
            return False
        return False

    def exchange_deadline(self, node: NodeState) -> float:
        return self.slot_end

    def on_packet(self, node: NodeState) -> None:
        if node.role == INTRA:
            self._resume(node)

    # ---- receiving -------------------------------------------------------

    def on_header(self, node: NodeState, rec: TransmissionRecord) -> None:
        f = rec.frame
        role = node.role
        if role == RX:
            if f.kind == DATA and f.dst == node.id and node.block not in self.claims:
                self.claims[node.block] = [node.id, False]
                self.sim.lock(node, rec)
            else:
                self.sleep_remainder(node)
            return
        if node.awaiting is not None or f.dst == node.id:
            self.sim.lock(node, rec)
            return
        if role == TX:
            nodes = self.sim.nodes
            peer = f.dst if f.kind == DATA else f.src
            if 0 <= peer < len(nodes) and nodes[peer].block == node.target:
                # someone else already holds the target block's slot
                self.sleep_remainder(node)
                return
            self._nav(node, rec)
            return
        if role == INTRA:
            self._nav(node, rec)
            return
        self.sim.lock(node, rec)

    def accept_data(self, node: NodeState, rec: TransmissionRecord) -> bool:
        if node.role == RX:
            claim = self.claims.get(node.block)
            if claim is None or claim[0] != node.id:
                return False
            claim[1] = True
            return True
        return node.role == INTRA

    def after_reception_failed(self, node, rec, outcome) -> None:
        if node.role == RX:
            claim = self.claims.get(node.block)
            if claim is not None and claim[0] == node.id and not claim[1]:
                del self.claims[node.block]
            if self.sim.now >= self.theta_deadline:
                self.sleep_remainder(node)
        elif node.role == INTRA:
            self._resume(node)
        elif node.role == TX and node.awaiting is None:
            self._resume(node)

    def after_grant_sent(self, node: NodeState) -> None:
        if node.role == RX:
            self.sleep_remainder(node)
        else:
            self._resume(node)

    def after_success(self, node: NodeState) -> None:
        if node.role == TX:
            # one reception per block per inter slot
            self.sleep_remainder(node)
        else:
            self._resume(node)

    def after_failure(self, node: NodeState) -> None:
        if node.role == TX:
            self.sleep_remainder(node)
        elif node.role == INTRA:
            node.slot_failed = True
