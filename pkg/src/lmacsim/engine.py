"""Deterministic discrete-event core: event queue, unit-disk channel, run loop."""
from __future__ import annotations

import enum
import heapq
import itertools
import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .config import ScenarioConfig
from .geometry import BlockGrid, BlockId, Position, block_of, connectivity
from .metrics import (LISTENING, DelayStats, EnergyLedger, Mode, Powers,
                      SummaryReport, build_report)

DATA = "Data"
GRANT = "Grant"
BROADCAST = -1


class EventKind(str, enum.Enum):
    SLOT_START = "SlotStart"
    SLOT_END = "SlotEnd"
    TX_START = "TxStart"
    TX_END = "TxEnd"
    BACKOFF_EXPIRY = "BackoffExpiry"
    THETA_TIMEOUT = "ThetaTimeout"
    PACKET_GENERATION = "PacketGeneration"
    TIMER = "TimerGeneric"

    def __str__(self):
        return self.value


class Outcome(str, enum.Enum):
    DELIVERED = "Delivered"
    COLLIDED = "Collided"
    INAUDIBLE = "Inaudible"

    def __str__(self):
        return self.value


class SimulationComplete(Exception):
    """Raised when the event queue runs dry."""


class Deferral(Exception):
    """A frame would not finish before its deadline; the caller must retry later."""


@dataclass(eq=False)
class Event:
    time: float
    seq: int
    kind: EventKind
    subject: Any = None
    payload: Any = None
    callback: Optional[Callable[["Event"], None]] = field(default=None, repr=False)


class EventQueue:
    """Min-heap of events ordered by (time, seq)."""

    def __init__(self):
        self._heap: list = []
        self._seq = itertools.count()
        self._last_time = -math.inf

    def __len__(self):
        return len(self._heap)

    def next_seq(self) -> int:
        return next(self._seq)

    def push(self, event: Event) -> Event:
        heapq.heappush(self._heap, (event.time, event.seq, event))
        return event

    def schedule(self, time: float, kind: EventKind, subject=None, payload=None,
                 callback=None) -> Event:
        return self.push(Event(time, self.next_seq(), kind, subject, payload, callback))

    def peek_time(self) -> float:
        return self._heap[0][0] if self._heap else math.inf

    def pop(self) -> Event:
        if not self._heap:
            raise SimulationComplete()
        t, _, ev = heapq.heappop(self._heap)
        if t < self._last_time:
            raise RuntimeError(f"event at {t} popped after {self._last_time}")
        self._last_time = t
        return ev


@dataclass(eq=False)
class Packet:
    id: int
    src: int
    dst: int
    created: float
    size: int
    hops: list = field(default_factory=list)
    copies: int = 0
    delivered: bool = False
    lost: bool = False


@dataclass(eq=False)
class Frame:
    id: int
    src: int
    dst: int
    kind: str
    size: int
    packet: Optional[Packet] = None
    ack_of: Optional[int] = None


@dataclass(eq=False)
class TransmissionRecord:
    frame: Frame
    tx_node: int
    start: float
    end: float
    listeners: set = field(default_factory=set)
    collided_at: set = field(default_factory=set)

    @property
    def id(self) -> int:
        return self.frame.id


class Channel:
    """Unit-disk, no-capture shared medium.

    A receiver hears a transmission iff it is within range of the sender. Any
    positive-length overlap of two audible transmissions at a receiver ruins
    both there. Reception also needs the receiver to listen (Idle or Rx) over
    the whole frame; nodes that sleep or transmit are dropped from
    ``listeners`` as soon as they change mode.
    """

    def __init__(self, positions: list[Position], range_m: float, keep_history: bool = False):
        self.positions = list(positions)
        self.range = range_m
        self.neighbors = connectivity(self.positions, range_m)
        self.nbr_sets = [frozenset(n) for n in self.neighbors]
        self.active: dict[int, TransmissionRecord] = {}
        self._listening: list[set] = [set() for _ in self.positions]
        self.history: Optional[list] = [] if keep_history else None

    def audible(self, tx: int, rx: int) -> bool:
        return rx in self.nbr_sets[tx]

    def carrier_sense(self, node: int, t: float) -> bool:
        """True (busy) iff an in-range transmission covers instant ``t``."""
        heard = self.nbr_sets[node]
        for rec in self.active.values():
            if rec.tx_node in heard and rec.start <= t < rec.end:
                return True
        return False

    def start(self, rec: TransmissionRecord, modes: list) -> list[int]:
        """Register a new transmission; return receivers that caught a clean start."""
        t = rec.start
        overlapping = [q for q in self.active.values() if q.end > t]
        clean = []
        for j in self.neighbors[rec.tx_node]:
            listening = modes[j] in LISTENING
            if listening:
                rec.listeners.add(j)
                self._listening[j].add(rec.id)
            heard = self.nbr_sets[j]
            hit = False
            for q in overlapping:
                if q.tx_node in heard:
                    rec.collided_at.add(j)
                    q.collided_at.add(j)
                    hit = True
            if listening and not hit:
                clean.append(j)
        self.active[rec.id] = rec
        if self.history is not None:
            self.history.append(rec)
        return clean

    def stop_listening(self, node: int) -> None:
        ids = self._listening[node]
        for rid in ids:
            rec = self.active.get(rid)
            if rec is not None:
                rec.listeners.discard(node)
        ids.clear()

    def resolve_reception(self, rx: int, rec: TransmissionRecord) -> Outcome:
        if not self.audible(rec.tx_node, rx) or rx not in rec.listeners:
            return Outcome.INAUDIBLE
        if rx in rec.collided_at:
            return Outcome.COLLIDED
        return Outcome.DELIVERED

    def finish(self, rec: TransmissionRecord) -> dict[int, Outcome]:
        del self.active[rec.id]
        out = {j: self.resolve_reception(j, rec) for j in self.neighbors[rec.tx_node]}
        for j in rec.listeners:
            self._listening[j].discard(rec.id)
        return out

    def clean_start_at(self, node: int, t: float) -> Optional[TransmissionRecord]:
        """An audible transmission starting exactly at ``t`` that ``node`` can still lock onto."""
        heard = self.nbr_sets[node]
        found = None
        for rec in self.active.values():
            if rec.tx_node in heard and rec.end > t:
                if rec.start != t or node not in rec.listeners or node in rec.collided_at:
                    return None
                found = rec
        return found


@dataclass(eq=False)
class NodeState:
    id: int
    position: Position
    block: BlockId
    mode: Mode = Mode.SLEEP
    since: float = 0.0
    # single FIFO for slotless protocols; same-block next hops under L-MAC
    intra_queue: deque = field(default_factory=deque)
    # L-MAC only: next-hop block -> FIFO
    inter_queues: dict = field(default_factory=dict)
    cw: int = 8
    retries: int = 0
    locked: Optional[TransmissionRecord] = None
    awaiting: Optional[Frame] = None
    awaiting_queue: Optional[deque] = None
    backoff_ev: Optional[Event] = None
    timer_ev: Optional[Event] = None
    role: Optional[str] = None
    target: Optional[BlockId] = None
    slot_failed: bool = False
    seen: set = field(default_factory=set)
    enqueued: int = 0
    forwarded: int = 0
    dropped: int = 0

    def queued(self) -> int:
        return len(self.intra_queue) + sum(len(q) for q in self.inter_queues.values())


class Simulator:
    """Owns time, randomness, nodes and the channel; a MAC object drives behaviour."""

    def __init__(self, cfg: ScenarioConfig, positions: Optional[list[Position]] = None,
                 keep_history: bool = False):
        self.cfg = cfg.validate()
        self.rng = random.Random(cfg.seed)
        self.grid = BlockGrid.covering(cfg.area_width, cfg.area_height, cfg.block_side)
        if positions is None:
            positions = [Position(self.rng.uniform(0, cfg.area_width),
                                  self.rng.uniform(0, cfg.area_height))
                         for _ in range(cfg.n_nodes)]
        elif len(positions) != cfg.n_nodes:
            raise ValueError("positions must match n_nodes")
        self.nodes = [NodeState(i, p, block_of(self.grid, p), cw=cfg.cw_min)
                      for i, p in enumerate(positions)]
        self.channel = Channel(positions, cfg.tx_range, keep_history=keep_history)
        self.ledger = EnergyLedger(cfg.n_nodes, Powers(cfg.p_tx, cfg.p_rx, cfg.p_idle, cfg.p_sleep))
        self.delays = DelayStats()
        self.queue = EventQueue()
        self.now = 0.0
        self.data_duration = cfg.data_duration
        self.grant_duration = cfg.grant_duration
        self.packets: list[Packet] = []
        self.lost = 0
        self.collisions = 0
        self.no_route = 0
        self._frame_ids = itertools.count()
        self.routes: list[list[Optional[int]]] = []
        self.flows: list[tuple[int, int]] = []
        self.mac = None
        self.tracing = cfg.trace
        self.trace: list = []
        self._open: list = []
        self.finished = False

    # ---- scheduling ------------------------------------------------------

    def schedule(self, time: float, kind: EventKind, subject=None, callback=None, payload=None) -> Event:
        if time < self.now - 1e-12:
            raise RuntimeError(f"{kind} scheduled at {time} before now={self.now}")
        return self.queue.schedule(time, kind, subject, payload, callback)

    def new_frame_id(self) -> int:
        return next(self._frame_ids)

    # ---- tracing ---------------------------------------------------------

    def _trace_open(self, time, seq, kind, subject):
        rec = [time, seq, str(kind), subject, []]
        self.trace.append(rec)
        self._open.append(rec)

    def _trace_close(self):
        self._open.pop()

    def note(self, token: str) -> None:
        if self.tracing and self._open:
            self._open[-1][4].append(token)

    def trace_lines(self) -> list[str]:
        """Trace as tab-separated ``time seq kind subject detail`` lines."""
        return [f"{t!r}\t{s}\t{k}\t{subj}\t{' '.join(d)}" for t, s, k, subj, d in self.trace]

    # ---- radio -----------------------------------------------------------

    def set_mode(self, node: NodeState, mode: Mode) -> None:
        old = node.mode
        if old is mode:
            return
        self.ledger.record_mode(node.id, old, node.since, self.now)
        if old in LISTENING and mode not in LISTENING:
            self.channel.stop_listening(node.id)
        node.mode = mode
        node.since = self.now
        if self.tracing:
            self.note(f"m={node.id}:{mode.value}")

    def begin_transmission(self, node: NodeState, frame: Frame, deadline: float = math.inf) -> TransmissionRecord:
        if node.mode is Mode.TX:
            raise RuntimeError(f"node {node.id} is already transmitting")
        end = self.now + 8 * frame.size / self.cfg.bitrate
        if end > deadline + 1e-12:
            raise Deferral(f"frame {frame.id} would end at {end} after {deadline}")
        node.locked = None
        rec = TransmissionRecord(frame, node.id, self.now, end)
        if self.tracing:
            self._trace_open(self.now, self.queue.next_seq(), EventKind.TX_START, node.id)
            pkt = frame.packet.id if frame.packet is not None else -1
            self.note(f"f={frame.id} k={frame.kind} src={frame.src} dst={frame.dst} pkt={pkt} "
                      f"start={rec.start!r} end={end!r}")
        self.set_mode(node, Mode.TX)
        clean = self.channel.start(rec, [n.mode for n in self.nodes])
        self.schedule(end, EventKind.TX_END, node.id, self._on_tx_end, rec)
        for j in clean:
            other = self.nodes[j]
            if other.mode is Mode.IDLE and other.locked is None:
                self.mac.on_header(other, rec)
        if self.tracing:
            self._trace_close()
        return rec

    def lock(self, node: NodeState, rec: TransmissionRecord) -> None:
        node.locked = rec
        self.set_mode(node, Mode.RX)

    def _on_tx_end(self, ev: Event) -> None:
        rec: TransmissionRecord = ev.payload
        outcomes = self.channel.finish(rec)
        f = rec.frame
        dst_out = outcomes.get(f.dst)
        if dst_out is Outcome.COLLIDED:
            self.collisions += 1
        if self.tracing:
            self.note(f"f={f.id} k={f.kind} src={f.src} dst={f.dst} start={rec.start!r} "
                      f"end={rec.end!r} out={dst_out.value if dst_out else 'None'}")
        tx = self.nodes[rec.tx_node]
        self.set_mode(tx, Mode.IDLE)
        self.mac.on_tx_end(tx, rec)
        for j in sorted(outcomes):
            node = self.nodes[j]
            if node.locked is rec:
                node.locked = None
                self.set_mode(node, Mode.IDLE)
                self.mac.on_frame_end(node, rec, outcomes[j])
                if node.mode is Mode.IDLE and node.locked is None:
                    late = self.channel.clean_start_at(j, self.now)
                    if late is not None:
                        self.mac.on_header(node, late)

    # ---- packets ---------------------------------------------------------

    def enqueue(self, node: NodeState, packet: Packet) -> bool:
        nh = self.routes[node.id][packet.dst]
        if nh is None:
            self.no_route += 1
            if packet.copies == 0 and not packet.delivered:
                packet.lost = True
                self.lost += 1
            return False
        packet.copies += 1
        node.enqueued += 1
        self.mac.classify_and_enqueue(node, packet, nh)
        self.mac.on_packet(node)
        return True

    def release(self, node: NodeState, packet: Packet, success: bool) -> None:
        """Account for a packet leaving ``node``'s queue."""
        packet.copies -= 1
        if success:
            node.forwarded += 1
        else:
            node.dropped += 1
        if packet.copies == 0 and not packet.delivered and not packet.lost:
            packet.lost = True
            self.lost += 1

    def deliver_hop(self, node: NodeState, packet: Packet) -> bool:
        """Hand a received data packet to ``node``; False for duplicates."""
        if packet.id in node.seen:
            return False
        node.seen.add(packet.id)
        packet.hops.append(node.id)
        self.note(f"acc={packet.id}@{node.id}")
        if packet.dst == node.id:
            self.delays.record_delivery(packet.id, packet.created, self.now)
            packet.delivered = True
        else:
            self.enqueue(node, packet)
        return True

    def inject(self, src: int, dst: int, at: float) -> Event:
        """Schedule a single packet from ``src`` to ``dst`` at time ``at``."""
        return self.schedule(at, EventKind.PACKET_GENERATION, src, self._on_generate,
                             (src, dst, False))

    def _on_generate(self, ev: Event) -> None:
        src, dst, recurring = ev.payload
        pkt = Packet(len(self.packets), src, dst, self.now, self.cfg.packet_size, [src])
        self.packets.append(pkt)
        node = self.nodes[src]
        node.seen.add(pkt.id)
        self.note(f"pkt={pkt.id} dst={dst}")
        self.enqueue(node, pkt)
        if recurring:
            self._schedule_generation(src, dst)

    def _schedule_generation(self, src: int, dst: int) -> None:
        t = self.now + self.rng.expovariate(self.cfg.rate)
        if t < self.cfg.sim_time:
            self.schedule(t, EventKind.PACKET_GENERATION, src, self._on_generate, (src, dst, True))

    # ---- top level -------------------------------------------------------

    def setup(self, mac, routes, flows) -> None:
        self.mac = mac
        self.routes = routes
        self.flows = flows
        if self.tracing:
            self._trace_open(0.0, self.queue.next_seq(), EventKind.TIMER, "init")
            self.note("m=" + ",".join(f"{n.id}:{n.mode.value}" for n in self.nodes))
        mac.setup()
        if self.tracing:
            self._trace_close()
        if self.cfg.rate > 0:
            for src, dst in flows:
                self._schedule_generation(src, dst)

    def run(self) -> SummaryReport:
        end = self.cfg.sim_time
        queue = self.queue
        tracing = self.tracing
        while True:
            if queue.peek_time() >= end:
                break
            try:
                ev = queue.pop()
            except SimulationComplete:
                break
            self.now = ev.time
            if tracing:
                self._trace_open(ev.time, ev.seq, ev.kind, ev.subject)
                ev.callback(ev)
                self._trace_close()
            else:
                ev.callback(ev)
        self.now = end
        for node in self.nodes:
            self.ledger.record_mode(node.id, node.mode, node.since, end)
            node.since = end
        self.finished = True
        return self.report()

    def report(self) -> SummaryReport:
        return build_report(
            protocol=self.cfg.protocol, seed=self.cfg.seed, rate=self.cfg.rate,
            sim_time=self.cfg.sim_time, ledger=self.ledger, delays=self.delays,
            generated=len(self.packets), dropped=self.lost, collisions=self.collisions)


def pick_flows(cfg: ScenarioConfig, rng: random.Random, routes) -> list[tuple[int, int]]:
    """Source/destination pairs; pairs without a route are skipped."""
    n = cfg.n_nodes

    def reachable(i):
        return [j for j in range(n) if j != i and routes[i][j] is not None]

    flows = []
    if cfg.pattern == "sink":
        for i in range(n):
            if i != cfg.sink and routes[i][cfg.sink] is not None:
                flows.append((i, cfg.sink))
    elif cfg.flows == 0:
        for i in range(n):
            cand = reachable(i)
            if cand:
                flows.append((i, rng.choice(cand)))
    else:
        for _ in range(cfg.flows):
            i = rng.randrange(n)
            cand = reachable(i)
            if cand:
                flows.append((i, rng.choice(cand)))
    return flows


def build(cfg: ScenarioConfig, positions=None, keep_history: bool = False) -> Simulator:
    """Assemble a ready-to-run simulator for ``cfg.protocol``."""
    from .baselines import CsmaMac, DutyCycleMac
    from .lmac import LmacMac, compute_routes

    sim = Simulator(cfg, positions, keep_history=keep_history)
    routes = compute_routes(sim.channel.neighbors)
    flows = pick_flows(cfg, sim.rng, routes)
    mac_cls = {"lmac": LmacMac, "csma": CsmaMac, "dutycycle": DutyCycleMac}[cfg.protocol]
    sim.setup(mac_cls(sim), routes, flows)
    return sim


def run(cfg: ScenarioConfig, positions=None) -> tuple[SummaryReport, Optional[list[str]]]:
    sim = build(cfg, positions)
    report = sim.run()
    return report, (sim.trace_lines() if cfg.trace else None)
