"""Back-and-forth coverage of one planar subregion.

Laps run along x and advance along y. When a sweep is blocked and no
uncovered lap start is adjacent, the vehicle relocates over already-known
safe cells to the nearest uncovered cell (breadth-first) and resumes.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError, DomainError
from .occupancy import SAFE, Subregion, SymbolicMap, neighbors4


@dataclass
class LapPlan:
    waypoints: list[tuple[float, float]]
    lap_width: float
    covered: list[tuple[int, int]] = field(default_factory=list)
    cells: list[tuple[int, int]] = field(default_factory=list)

    def length(self) -> float:
        return sum(
            math.dist(a, b) for a, b in zip(self.waypoints, self.waypoints[1:])
        )

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y"])
            for x, y in self.waypoints:
                w.writerow([f"{x:.6f}", f"{y:.6f}"])

    @staticmethod
    def read_csv(path: str | Path) -> list[tuple[float, float]]:
        with open(path, newline="") as fh:
            return [(float(r["x"]), float(r["y"])) for r in csv.DictReader(fh)]


def _lap_cells(w: float, cell_size: float) -> int:
    k = w / cell_size
    if k < 1 or not math.isclose(k, round(k)):
        raise ConfigurationError(f"lap width {w} must be a whole multiple (>= 1) of the cell size {cell_size}")
    return int(round(k))


def compress(cells: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Drop interior cells of straight runs, keeping the corners."""
    if len(cells) <= 2:
        return list(cells)
    out = [cells[0]]
    for prev, cur, nxt in zip(cells, cells[1:], cells[2:]):
        d1 = (cur[0] - prev[0], cur[1] - prev[1])
        d2 = (nxt[0] - cur[0], nxt[1] - cur[1])
        if d1 != d2:
            out.append(cur)
    out.append(cells[-1])
    return out


def bfs_path(start, goal_test, passable, shape):
    """Shortest 4-connected path from ``start`` to the first cell satisfying ``goal_test``."""
    prev = {start: None}
    queue = deque([start])
    while queue:
        c = queue.popleft()
        if goal_test(c):
            path = []
            while c is not None:
                path.append(c)
                c = prev[c]
            return path[::-1]
        for n in neighbors4(c, shape):
            if n not in prev and passable(n):
                prev[n] = c
                queue.append(n)
    return None


def cover_subregion(sym: SymbolicMap, subregion: Subregion, start, w: float) -> LapPlan:
    tiling = sym.tiling
    k = _lap_cells(w, tiling.cell_size)
    reach = k // 2
    region = {c for c in subregion.cells if sym.labels[c] == SAFE}
    if not region:
        raise DomainError("subregion has no safe cells to cover")

    sx, sy = start

    def start_key(c):
        x, y = tiling.center(c)
        return ((x - sx) ** 2 + (y - sy) ** 2, c)

    cur = min(region, key=start_key)
    covered: set = set()
    order: list = []
    path = [cur]

    def mark(c):
        for d in range(-reach, reach + 1):
            cc = (c[0] + d, c[1])
            if cc in region and cc not in covered:
                covered.add(cc)
                order.append(cc)

    mark(cur)
    direction = 1
    while len(covered) < len(region):
        nxt = (cur[0], cur[1] + direction)
        if nxt in region and nxt not in covered:
            cur = nxt
            path.append(cur)
            mark(cur)
            continue

        advanced = False
        for sign in (1, -1):
            line = [(cur[0] + sign * s, cur[1]) for s in range(1, k + 1)]
            if all(c in region for c in line) and line[-1] not in covered:
                for c in line:
                    path.append(c)
                    mark(c)
                cur = line[-1]
                direction = -direction
                advanced = True
                break
        if advanced:
            continue

        route = bfs_path(cur, lambda c: c not in covered, lambda c: c in region, tiling.shape)
        assert route is not None, "uncovered safe cells unreachable inside a connected subregion"
        for c in route[1:]:
            path.append(c)
            mark(c)
        cur = route[-1]
        fwd = (cur[0], cur[1] + direction)
        back = (cur[0], cur[1] - direction)
        if not (fwd in region and fwd not in covered) and back in region and back not in covered:
            direction = -direction

    waypoints = [tiling.center(c) for c in compress(path)]
    return LapPlan(waypoints, w, order, path)
