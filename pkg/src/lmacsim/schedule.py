"""Inter/intra-block slot assignment, superframe layout and reuse verification."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple

from .geometry import BlockGrid, BlockId, min_block_distance

INTER = "Inter"
INTRA = "Intra"


@dataclass(frozen=True)
class SlotSchedule:
    n_inter: int
    n_intra: int
    inter_slot: Mapping[BlockId, int]
    intra_slot: Mapping[BlockId, int]
    slot_duration: float = 0.05

    def __post_init__(self):
        if self.slot_duration <= 0:
            raise ValueError("slot_duration must be positive")
        if set(self.inter_slot) != set(self.intra_slot):
            raise ValueError("every block needs both an inter and an intra slot")
        for b, s in self.inter_slot.items():
            if not 1 <= s <= self.n_inter:
                raise ValueError(f"inter slot {s} of {b} outside [1, {self.n_inter}]")
        for b, s in self.intra_slot.items():
            if not self.n_inter < s <= self.n_inter + self.n_intra:
                raise ValueError(f"intra slot {s} of {b} outside the intra range")

    @property
    def n_slots(self) -> int:
        return self.n_inter + self.n_intra


def assign_inter_slots(grid: BlockGrid) -> dict[BlockId, int]:
    """3x3 tiling: blocks sharing a slot are a multiple of three apart on both axes."""
    return {b: 3 * (b.row % 3) + (b.col % 3) + 1 for b in grid.blocks()}


def assign_intra_slots(grid: BlockGrid, offset: int) -> dict[BlockId, int]:
    """2x2 tiling numbered after ``offset``; same-slot blocks are never adjacent."""
    return {b: offset + 2 * (b.row % 2) + (b.col % 2) + 1 for b in grid.blocks()}


def default_schedule(grid: BlockGrid, slot_duration: float = 0.05) -> SlotSchedule:
    inter = assign_inter_slots(grid)
    n_inter = max(inter.values())
    intra = assign_intra_slots(grid, n_inter)
    return SlotSchedule(n_inter, max(intra.values()) - n_inter, inter, intra, slot_duration)


class Violation(NamedTuple):
    kind: str  # "InterInter" | "IntraIntra"
    a: BlockId
    b: BlockId
    witness: float
    required: float


def _same_slot_pairs(slots: Mapping[BlockId, int]) -> Iterable[tuple[BlockId, BlockId]]:
    groups: dict[int, list[BlockId]] = {}
    for b in sorted(slots):
        groups.setdefault(slots[b], []).append(b)
    for s in sorted(groups):
        members = groups[s]
        for i, a in enumerate(members):
            for b in members[i + 1:]:
                yield a, b


def verify_schedule(grid: BlockGrid, sched: SlotSchedule, range_m: float) -> list[Violation]:
    """List every reuse pair that can interfere under the unit-disk model.

    For a shared inter slot the sender may sit anywhere in a block adjacent to
    the receiving block, so each such sender block must stay at least
    ``range_m`` away from the other receiving block (checked both ways).
    Intra pairs must themselves be ``range_m`` apart.
    """
    missing = [b for b in grid.blocks() if b not in sched.inter_slot]
    if missing:
        raise ValueError(f"schedule does not cover blocks {missing[:4]}")
    out: list[Violation] = []
    for a, b in _same_slot_pairs(sched.inter_slot):
        worst = math.inf
        for rx, other in ((a, b), (b, a)):
            for s in grid.neighbors(rx):
                worst = min(worst, min_block_distance(grid, s, other))
        if worst < range_m:
            out.append(Violation("InterInter", a, b, worst, range_m))
    for a, b in _same_slot_pairs(sched.intra_slot):
        d = min_block_distance(grid, a, b)
        if d < range_m:
            out.append(Violation("IntraIntra", a, b, d, range_m))
    return out


@dataclass(frozen=True)
class SlotInfo:
    index: int
    kind: str
    owners: frozenset
    start: float
    end: float


@dataclass(frozen=True)
class SlotDescriptor:
    index: int
    kind: str
    owners: frozenset


@dataclass(frozen=True)
class SuperframeLayout:
    slots: tuple
    slot_duration: float

    @property
    def frame_duration(self) -> float:
        return len(self.slots) * self.slot_duration

    def descriptor(self, index: int) -> SlotDescriptor:
        return self.slots[index - 1]


def build_superframe(sched: SlotSchedule) -> SuperframeLayout:
    owners: dict[int, set] = {i: set() for i in range(1, sched.n_slots + 1)}
    for b, s in sched.inter_slot.items():
        owners[s].add(b)
    for b, s in sched.intra_slot.items():
        owners[s].add(b)
    slots = tuple(
        SlotDescriptor(i, INTER if i <= sched.n_inter else INTRA, frozenset(owners[i]))
        for i in range(1, sched.n_slots + 1)
    )
    return SuperframeLayout(slots, sched.slot_duration)


def slot_at(layout: SuperframeLayout, t: float) -> SlotInfo:
    """Descriptor and absolute bounds of the slot containing instant ``t``.

    A boundary instant belongs to the slot that starts there.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    n = len(layout.slots)
    sd = layout.slot_duration
    # integer slot counter avoids drift from repeated modulo on floats
    k = int(math.floor(t / sd + 1e-9))
    if (k + 1) * sd <= t:
        k += 1
    elif k * sd > t:
        k -= 1
    desc = layout.slots[k % n]
    return SlotInfo(desc.index, desc.kind, desc.owners, k * sd, (k + 1) * sd)


def load_schedule_file(path, grid: BlockGrid, slot_duration: float) -> SlotSchedule:
    """Read a schedule written as ``row,col,inter_slot,intra_slot`` lines.

    Blank lines, ``#`` comments and a header line starting with ``row`` are skipped.
    """
    inter: dict[BlockId, int] = {}
    intra: dict[BlockId, int] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line or line.lower().startswith("row"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected row,col,inter,intra")
            r, c, si, sa = (int(p) for p in parts)
            b = BlockId(r, c)
            if not grid.contains(b):
                raise ValueError(f"{path}:{lineno}: block {tuple(b)} outside grid")
            inter[b] = si
            intra[b] = sa
    missing = [tuple(b) for b in grid.blocks() if b not in inter]
    if missing:
        raise ValueError(f"{path}: no slots given for blocks {missing}")
    n_inter = max(inter.values())
    return SlotSchedule(n_inter, max(intra.values()) - n_inter, inter, intra, slot_duration)
