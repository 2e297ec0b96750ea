"""Per-plane probabilistic occupancy maps and the symbolic maps derived from them.

Cells are addressed ``(iy, ix)``: rows advance along +y, columns along +x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, DomainError

UNEXPLORED, SAFE, THREAT = 0, 1, 2
LABEL_CHARS = "UST"


@dataclass(frozen=True)
class Tiling:
    cell_size: float
    nx: int
    ny: int
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.cell_size <= 0 or self.nx < 1 or self.ny < 1:
            raise ConfigurationError("tiling needs a positive cell size and at least one cell")

    @classmethod
    def covering(cls, extent_x: float, extent_y: float, cell_size: float) -> "Tiling":
        nx = int(round(extent_x / cell_size))
        ny = int(round(extent_y / cell_size))
        if not (math.isclose(nx * cell_size, extent_x) and math.isclose(ny * cell_size, extent_y)):
            raise ConfigurationError(f"cell size {cell_size} does not divide the scene extent")
        return cls(cell_size, nx, ny)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    def cells_of(self, x, y):
        """Vectorised cell lookup; returns ``(iy, ix, inside)``."""
        fx = (np.asarray(x, dtype=float) - self.origin[0]) / self.cell_size
        fy = (np.asarray(y, dtype=float) - self.origin[1]) / self.cell_size
        ix = np.floor(fx).astype(np.intp)
        iy = np.floor(fy).astype(np.intp)
        inside = (ix >= 0) & (ix < self.nx) & (iy >= 0) & (iy < self.ny)
        return np.where(inside, iy, 0), np.where(inside, ix, 0), inside

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        iy, ix, inside = self.cells_of(x, y)
        if not inside:
            raise DomainError(f"point ({x}, {y}) is off the tiling")
        return int(iy), int(ix)

    def center(self, cell: tuple[int, int]) -> tuple[float, float]:
        iy, ix = cell
        return (
            self.origin[0] + (ix + 0.5) * self.cell_size,
            self.origin[1] + (iy + 0.5) * self.cell_size,
        )

    def in_bounds(self, cell: tuple[int, int]) -> bool:
        return 0 <= cell[0] < self.ny and 0 <= cell[1] < self.nx


def neighbors4(cell: tuple[int, int], shape: tuple[int, int]):
    iy, ix = cell
    ny, nx = shape
    if ix + 1 < nx:
        yield (iy, ix + 1)
    if ix > 0:
        yield (iy, ix - 1)
    if iy + 1 < ny:
        yield (iy + 1, ix)
    if iy > 0:
        yield (iy - 1, ix)


@dataclass
class ProbOccupancyGrid:
    """Log-odds occupancy over a tiling.

    The state is an integer net count ``N_occ - N_free`` per cell, so the
    log odds ``net * l_occ`` are exact and independent of reading order.
    Cells filled in by closing are pinned at the threat level.
    """

    tiling: Tiling
    l_occ: float
    log_base: float = 10.0
    net: np.ndarray = field(default=None, repr=False)
    readings: np.ndarray = field(default=None, repr=False)
    forced: np.ndarray = field(default=None, repr=False)
    threat_probability: float = 0.9

    def __post_init__(self):
        if self.l_occ <= 0:
            raise ConfigurationError("l_occ must be positive")
        if self.net is None:
            self.net = np.zeros(self.tiling.shape, dtype=np.int64)
        if self.readings is None:
            self.readings = np.zeros(self.tiling.shape, dtype=np.int64)
        if self.forced is None:
            self.forced = np.zeros(self.tiling.shape, dtype=bool)

    @property
    def l_free(self) -> float:
        return -self.l_occ

    @property
    def log_odds(self) -> np.ndarray:
        lo = self.net * self.l_occ
        if self.forced.any():
            level = math.log(self.threat_probability / (1 - self.threat_probability), self.log_base)
            lo = np.where(self.forced, level, lo)
        return lo

    def probability(self) -> np.ndarray:
        return 1.0 / (1.0 + np.power(self.log_base, -self.log_odds))

    @property
    def explored(self) -> np.ndarray:
        return self.readings > 0

    def copy(self) -> "ProbOccupancyGrid":
        return ProbOccupancyGrid(
            self.tiling,
            self.l_occ,
            self.log_base,
            self.net.copy(),
            self.readings.copy(),
            self.forced.copy(),
            self.threat_probability,
        )

    def update(self, cells, occupied) -> "ProbOccupancyGrid":
        """Add one reading per ``(cells[k], occupied[k])``; in place, returns self."""
        cells = np.asarray(cells, dtype=np.intp).reshape(-1, 2)
        occupied = np.asarray(occupied, dtype=bool).reshape(-1)
        if len(cells) != len(occupied):
            raise ValueError("cells and occupied readings differ in length")
        if len(cells) == 0:
            return self
        iy, ix = cells[:, 0], cells[:, 1]
        if (iy < 0).any() or (iy >= self.tiling.ny).any() or (ix < 0).any() or (ix >= self.tiling.nx).any():
            raise DomainError("evidence cell index outside the tiling")
        flat = iy * self.tiling.nx + ix
        n = self.tiling.size
        delta = np.bincount(flat, weights=np.where(occupied, 1, -1), minlength=n)
        self.net += delta.astype(np.int64).reshape(self.tiling.shape)
        self.readings += np.bincount(flat, minlength=n).reshape(self.tiling.shape)
        return self

    def to_pgm(self, path: str | Path) -> None:
        write_pgm(path, np.round(self.probability() * 255).astype(np.uint8))


def update(grid: ProbOccupancyGrid, evidence) -> ProbOccupancyGrid:
    """Apply a scan's plane evidence, given as ``[((iy, ix), occupied), ...]``."""
    evidence = list(evidence)
    if not evidence:
        return grid
    cells = [c for c, _ in evidence]
    occ = [o for _, o in evidence]
    return grid.update(cells, occ)


def compute_l_occ(spec, w: float, delta_h: float, v: float, log_base: float = 10.0,
                  target_probability: float = 0.9) -> float:
    """Per-reading log odds so that one full cell traversal yields ``target_probability``."""
    from .sensor import beams_per_cell

    if min(w, delta_h, v, spec.sample_interval) <= 0:
        raise ConfigurationError("w, delta_h, v and the sample interval must be positive")
    b_total = (w / v) / spec.sample_interval * beams_per_cell(spec, w, delta_h)
    return math.log(target_probability / (1 - target_probability), log_base) / b_total


def binary_closing(mask: np.ndarray, element_size: int) -> np.ndarray:
    """Closing of ``mask`` as a subset of the unbounded plane, cropped back.

    Cells outside the grid count as free, which keeps the result a superset
    of the input and makes the operation idempotent up to the border.
    """
    rad = element_size // 2
    pad = 2 * rad
    padded = np.pad(mask.astype(bool), pad, constant_values=False)
    element = np.ones((element_size, element_size), dtype=bool)
    closed = ndimage.binary_closing(padded, structure=element)
    return closed[pad:pad + mask.shape[0], pad:pad + mask.shape[1]]


def close(grid: ProbOccupancyGrid, element_size: int = 3, p_threat: float = 0.2) -> ProbOccupancyGrid:
    if element_size < 3 or element_size % 2 == 0:
        raise ConfigurationError(f"structuring element size must be odd and >= 3, got {element_size}")
    high = grid.probability() > p_threat
    closed = binary_closing(high, element_size)
    out = grid.copy()
    out.forced |= closed & ~high
    return out


@dataclass
class SymbolicMap:
    labels: np.ndarray
    tiling: Tiling
    p_threat: float = 0.2

    @property
    def safe(self) -> np.ndarray:
        return self.labels == SAFE

    def label(self, cell: tuple[int, int]) -> str:
        return LABEL_CHARS[self.labels[cell]]

    def is_safe(self, cell: tuple[int, int]) -> bool:
        return self.tiling.in_bounds(cell) and self.labels[cell] == SAFE

    def to_ascii(self) -> str:
        return "\n".join("".join(LABEL_CHARS[v] for v in row) for row in self.labels) + "\n"

    @classmethod
    def from_ascii(cls, text: str, tiling: Tiling, p_threat: float = 0.2) -> "SymbolicMap":
        rows = [r for r in text.splitlines() if r.strip()]
        labels = np.array([[LABEL_CHARS.index(ch) for ch in r.strip()] for r in rows], dtype=np.int8)
        if labels.shape != tiling.shape:
            raise ValueError(f"symbolic grid shape {labels.shape} does not match tiling {tiling.shape}")
        return cls(labels, tiling, p_threat)

    @classmethod
    def all_safe(cls, tiling: Tiling, p_threat: float = 0.2) -> "SymbolicMap":
        return cls(np.full(tiling.shape, SAFE, dtype=np.int8), tiling, p_threat)


def encode(grid: ProbOccupancyGrid, explored_mask=None, p_threat: float = 0.2) -> SymbolicMap:
    if explored_mask is None:
        explored_mask = grid.explored
    threat = grid.probability() > p_threat
    labels = np.full(grid.tiling.shape, UNEXPLORED, dtype=np.int8)
    labels[explored_mask & threat] = THREAT
    labels[explored_mask & ~threat] = SAFE
    return SymbolicMap(labels, grid.tiling, p_threat)


@dataclass(frozen=True)
class Subregion:
    cells: frozenset
    centroid: tuple[float, float]

    @classmethod
    def from_cells(cls, cells, tiling: Tiling) -> "Subregion":
        cells = frozenset((int(a), int(b)) for a, b in cells)
        if not cells:
            raise DomainError("a subregion needs at least one cell")
        centers = np.array([tiling.center(c) for c in cells])
        cx, cy = centers.mean(axis=0)
        return cls(cells, (float(cx), float(cy)))

    def __len__(self) -> int:
        return len(self.cells)

    def entry_cell(self, tiling: Tiling) -> tuple[int, int]:
        """Member cell closest to the centroid (ties broken by index)."""
        cx, cy = self.centroid

        def key(c):
            x, y = tiling.center(c)
            return ((x - cx) ** 2 + (y - cy) ** 2, c)

        return min(self.cells, key=key)

    def mask(self, shape: tuple[int, int]) -> np.ndarray:
        m = np.zeros(shape, dtype=bool)
        idx = np.array(sorted(self.cells))
        m[idx[:, 0], idx[:, 1]] = True
        return m


def connected_components(cells, shape: tuple[int, int]) -> list[list[tuple[int, int]]]:
    """4-connected components of a cell set, seeded in row-major order."""
    members = set(cells)
    seen = set()
    comps = []
    for seed in sorted(members):
        if seed in seen:
            continue
        seen.add(seed)
        stack = [seed]
        comp = []
        while stack:
            c = stack.pop()
            comp.append(c)
            for n in neighbors4(c, shape):
                if n in members and n not in seen:
                    seen.add(n)
                    stack.append(n)
        comps.append(comp)
    return comps


def extract_subregions(sym: SymbolicMap, min_cells: int = 1) -> list[Subregion]:
    """Floodfill over safe cells; components smaller than ``min_cells`` are dropped."""
    ys, xs = np.nonzero(sym.labels == SAFE)
    safe = list(zip(ys.tolist(), xs.tolist()))
    return [
        Subregion.from_cells(comp, sym.tiling)
        for comp in connected_components(safe, sym.tiling.shape)
        if len(comp) >= min_cells
    ]


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos].decode("ascii"))
    if tokens[0] != "P5":
        raise ValueError("only binary PGM (P5) is supported")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise ValueError("16-bit PGM not supported")
    pos += 1
    return np.frombuffer(data[pos:pos + w * h], dtype=np.uint8).reshape(h, w).copy()
