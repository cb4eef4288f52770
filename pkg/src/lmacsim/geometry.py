"""Block grid over the deployment area and unit-disk connectivity."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence


class Position(NamedTuple):
    x: float
    y: float


class BlockId(NamedTuple):
    row: int
    col: int


class OutsideGridError(ValueError):
    """A position falls outside the rectangle covered by the block grid."""


@dataclass(frozen=True)
class BlockGrid:
    side: float
    rows: int
    cols: int
    origin: Position = Position(0.0, 0.0)

    def __post_init__(self):
        if self.side <= 0:
            raise ValueError("block side must be positive")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid needs at least one block")

    @classmethod
    def covering(cls, width: float, height: float, side: float,
                 origin: Position = Position(0.0, 0.0)) -> "BlockGrid":
        """Smallest grid of ``side``-sized blocks covering a width x height area."""
        if side <= 0:
            raise ValueError("block side must be positive")
        # tolerate float noise so 800/200 stays 4 blocks
        cols = max(1, math.ceil(width / side - 1e-9))
        rows = max(1, math.ceil(height / side - 1e-9))
        return cls(side=side, rows=rows, cols=cols, origin=origin)

    @property
    def width(self) -> float:
        return self.cols * self.side

    @property
    def height(self) -> float:
        return self.rows * self.side

    def blocks(self) -> list[BlockId]:
        return [BlockId(r, c) for r in range(self.rows) for c in range(self.cols)]

    def contains(self, b: BlockId) -> bool:
        return 0 <= b.row < self.rows and 0 <= b.col < self.cols

    def neighbors(self, b: BlockId) -> list[BlockId]:
        """The in-grid 8-neighbourhood of ``b``."""
        out = []
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                n = BlockId(b.row + dr, b.col + dc)
                if self.contains(n):
                    out.append(n)
        return out

    def rect(self, b: BlockId) -> tuple[float, float, float, float]:
        """Closed rectangle (x0, y0, x1, y1) of a block."""
        x0 = self.origin.x + b.col * self.side
        y0 = self.origin.y + b.row * self.side
        return x0, y0, x0 + self.side, y0 + self.side


def block_of(grid: BlockGrid, p: Position) -> BlockId:
    """Block containing ``p``.

    Blocks are half-open, so a point on a shared edge belongs to the block
    above/right of it; points on the far boundary of the grid clamp into the
    last row/column.
    """
    fx = (p.x - grid.origin.x) / grid.side
    fy = (p.y - grid.origin.y) / grid.side
    if fx < 0 or fy < 0 or fx > grid.cols or fy > grid.rows:
        raise OutsideGridError(f"position {tuple(p)} outside {grid.cols}x{grid.rows} grid")
    col = min(int(math.floor(fx)), grid.cols - 1)
    row = min(int(math.floor(fy)), grid.rows - 1)
    return BlockId(row, col)


def chebyshev_distance(a: BlockId, b: BlockId) -> int:
    return max(abs(a.row - b.row), abs(a.col - b.col))


def are_adjacent(a: BlockId, b: BlockId) -> bool:
    return chebyshev_distance(a, b) == 1


def min_block_distance(grid: BlockGrid, a: BlockId, b: BlockId) -> float:
    """Minimum Euclidean distance between the closed rectangles of two blocks."""
    gap_c = max(0, abs(a.col - b.col) - 1)
    gap_r = max(0, abs(a.row - b.row) - 1)
    return grid.side * math.hypot(gap_c, gap_r)


def distance(p: Position, q: Position) -> float:
    return math.hypot(p.x - q.x, p.y - q.y)


def connectivity(nodes: Sequence[Position], range_m: float) -> list[list[int]]:
    """Unit-disk adjacency lists; i and j are linked iff their distance is < range_m."""
    if range_m <= 0:
        raise ValueError("range must be positive")
    n = len(nodes)
    adj: list[list[int]] = [[] for _ in range(n)]
    for i in range(n):
        pi = nodes[i]
        for j in range(i + 1, n):
            if distance(pi, nodes[j]) < range_m:
                adj[i].append(j)
                adj[j].append(i)
    return adj
