"""Synthetic ground-truth terrains and the per-plane occupancy oracle.

Depth is measured downward from the ocean surface. Terrain is stored as
elevation above a flat seabed at depth ``extent_z``, so the surface depth
at (x, y) is ``extent_z - elevation(x, y)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError
from .occupancy import Tiling


@dataclass(frozen=True)
class Mountain:
    """One radial bump: ``peak * exp(-(d / spread) ** (2 * steepness))``.

    ``steepness`` of 1 gives a Gaussian; larger values flatten the top and
    push the flanks towards vertical walls.
    """

    center: tuple[float, float]
    peak: float
    spread: float
    steepness: float = 1.0

    def profile(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        d = np.hypot(x - self.center[0], y - self.center[1])
        return self.peak * np.exp(-((d / self.spread) ** (2.0 * self.steepness)))


@dataclass(frozen=True)
class SceneSpec:
    extent_x: float = 450.0
    extent_y: float = 450.0
    extent_z: float = 400.0
    seed: int = 0
    mountain_count: int = 0
    mountain_params: tuple[Mountain, ...] = ()
    resolution: float = 5.0
    # ranges used when mountains are drawn at random from ``seed``
    peak_range: tuple[float, float] = (0.45, 0.85)
    spread_range: tuple[float, float] = (35.0, 80.0)
    steepness_range: tuple[float, float] = (1.5, 3.0)

    def validate(self) -> None:
        if min(self.extent_x, self.extent_y, self.extent_z) <= 0:
            raise ConfigurationError("scene extents must be positive")
        if self.resolution <= 0:
            raise ConfigurationError("heightmap resolution must be positive")
        if self.mountain_count < 0:
            raise ConfigurationError("mountain_count must be >= 0")
        if self.mountain_params and len(self.mountain_params) != self.mountain_count:
            raise ConfigurationError(
                f"mountain_count={self.mountain_count} but {len(self.mountain_params)} "
                "mountains were given"
            )
        for m in self.mountain_params:
            if not 0 <= m.peak <= self.extent_z:
                raise ConfigurationError(f"mountain peak {m.peak} outside [0, extent_z]")
            if m.spread <= 0 or m.steepness <= 0:
                raise ConfigurationError("mountain spread and steepness must be positive")
        lo, hi = self.peak_range
        if not 0 <= lo <= hi <= 1:
            raise ConfigurationError("peak_range must be fractions of extent_z within [0, 1]")

    def mountains(self) -> tuple[Mountain, ...]:
        """Explicit mountains, or ``mountain_count`` of them drawn from ``seed``."""
        if self.mountain_params or self.mountain_count == 0:
            return self.mountain_params
        rng = np.random.default_rng(self.seed)
        margin = 0.1 * min(self.extent_x, self.extent_y)
        out = []
        for _ in range(self.mountain_count):
            cx = rng.uniform(margin, self.extent_x - margin)
            cy = rng.uniform(margin, self.extent_y - margin)
            peak = rng.uniform(*self.peak_range) * self.extent_z
            spread = rng.uniform(*self.spread_range)
            steep = rng.uniform(*self.steepness_range)
            out.append(Mountain((float(cx), float(cy)), float(peak), float(spread), float(steep)))
        return tuple(out)

    def to_dict(self) -> dict:
        return {
            "extent_x": self.extent_x,
            "extent_y": self.extent_y,
            "extent_z": self.extent_z,
            "seed": self.seed,
            "mountain_count": self.mountain_count,
            "mountains": [
                {"center": list(m.center), "peak": m.peak, "spread": m.spread, "steepness": m.steepness}
                for m in self.mountain_params
            ],
            "resolution": self.resolution,
            "peak_range": list(self.peak_range),
            "spread_range": list(self.spread_range),
            "steepness_range": list(self.steepness_range),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        mountains = tuple(
            Mountain(tuple(m["center"]), m["peak"], m["spread"], m.get("steepness", 1.0))
            for m in d.get("mountains", [])
        )
        defaults = cls()
        return cls(
            extent_x=float(d.get("extent_x", defaults.extent_x)),
            extent_y=float(d.get("extent_y", defaults.extent_y)),
            extent_z=float(d.get("extent_z", defaults.extent_z)),
            seed=int(d.get("seed", 0)),
            mountain_count=int(d.get("mountain_count", len(mountains))),
            mountain_params=mountains,
            resolution=float(d.get("resolution", defaults.resolution)),
            peak_range=tuple(d.get("peak_range", defaults.peak_range)),
            spread_range=tuple(d.get("spread_range", defaults.spread_range)),
            steepness_range=tuple(d.get("steepness_range", defaults.steepness_range)),
        )


@dataclass(frozen=True)
class Heightmap:
    """Terrain elevation samples at the centres of ``resolution``-sized squares.

    ``heights[iy, ix]`` is the elevation at ``((ix + 0.5) * res, (iy + 0.5) * res)``.
    Between samples the surface is bilinear, clamped at the outer ring.
    """

    resolution: float
    heights: np.ndarray = field(repr=False)
    extent_z: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.heights.shape

    @property
    def extent_x(self) -> float:
        return self.heights.shape[1] * self.resolution

    @property
    def extent_y(self) -> float:
        return self.heights.shape[0] * self.resolution

    def sample_xy(self) -> tuple[np.ndarray, np.ndarray]:
        ny, nx = self.heights.shape
        xs = (np.arange(nx) + 0.5) * self.resolution
        ys = (np.arange(ny) + 0.5) * self.resolution
        return np.meshgrid(xs, ys)

    def contains(self, x, y) -> np.ndarray:
        x = np.asarray(x)
        y = np.asarray(y)
        return (x >= 0) & (x <= self.extent_x) & (y >= 0) & (y <= self.extent_y)

    def elevation(self, x, y) -> np.ndarray:
        """Bilinear elevation at arbitrary (x, y); vectorised."""
        h = self.heights
        ny, nx = h.shape
        u = np.clip(np.asarray(x, dtype=float) / self.resolution - 0.5, 0.0, nx - 1)
        v = np.clip(np.asarray(y, dtype=float) / self.resolution - 0.5, 0.0, ny - 1)
        i0 = np.minimum(u.astype(np.intp), max(nx - 2, 0))
        j0 = np.minimum(v.astype(np.intp), max(ny - 2, 0))
        i1 = np.minimum(i0 + 1, nx - 1)
        j1 = np.minimum(j0 + 1, ny - 1)
        fu = u - i0
        fv = v - j0
        top = h[j0, i0] * (1 - fu) + h[j0, i1] * fu
        bot = h[j1, i0] * (1 - fu) + h[j1, i1] * fu
        return top * (1 - fv) + bot * fv

    def surface_depth(self, x, y) -> np.ndarray:
        return self.extent_z - self.elevation(x, y)

    def to_text(self, path: str | Path) -> None:
        """Plain-text export: one row of elevations (metres) per line."""
        np.savetxt(path, self.heights, fmt="%.6f")

    @classmethod
    def from_text(cls, path: str | Path, resolution: float, extent_z: float) -> "Heightmap":
        heights = np.loadtxt(path, ndmin=2)
        return cls(resolution, heights, extent_z)


def generate_scene(spec: SceneSpec) -> Heightmap:
    """Superpose the mountains; overlaps never rise above the tallest single peak."""
    spec.validate()
    nx = int(round(spec.extent_x / spec.resolution))
    ny = int(round(spec.extent_y / spec.resolution))
    if nx < 1 or ny < 1 or not math.isclose(nx * spec.resolution, spec.extent_x) or not math.isclose(
        ny * spec.resolution, spec.extent_y
    ):
        raise ConfigurationError("extents must be whole multiples of the heightmap resolution")
    xs = (np.arange(nx) + 0.5) * spec.resolution
    ys = (np.arange(ny) + 0.5) * spec.resolution
    gx, gy = np.meshgrid(xs, ys)
    heights = np.zeros((ny, nx))
    mountains = spec.mountains()
    for m in mountains:
        heights += m.profile(gx, gy)
    top = max((m.peak for m in mountains), default=0.0)
    np.clip(heights, 0.0, top, out=heights)
    heights.setflags(write=False)
    return Heightmap(spec.resolution, heights, spec.extent_z)


def ground_truth_occupancy(hm: Heightmap, depth: float, tiling: Tiling) -> np.ndarray:
    """Cells in which any heightmap sample rises above the plane at ``depth``."""
    if not 0 <= depth <= hm.extent_z:
        raise DomainError(f"depth {depth} outside [0, {hm.extent_z}]")
    plane_elevation = hm.extent_z - depth
    gx, gy = hm.sample_xy()
    iy, ix, ok = tiling.cells_of(gx.ravel(), gy.ravel())
    above = (hm.heights.ravel() > plane_elevation) & ok
    occ = np.zeros(tiling.shape, dtype=bool)
    occ[iy[above], ix[above]] = True
    return occ


@dataclass(frozen=True)
class PlaneStack:
    """Equidistant slicing planes ``h(l) = l * delta_h``, ``l = 0 .. count - 1``."""

    delta_h: float
    count: int

    def __post_init__(self):
        if self.delta_h <= 0:
            raise ConfigurationError("delta_h must be positive")
        if self.count < 1:
            raise ConfigurationError("a plane stack needs at least one plane")

    @property
    def depths(self) -> np.ndarray:
        return np.arange(self.count) * self.delta_h

    def depth(self, level: int) -> float:
        if not 0 <= level < self.count:
            raise DomainError(f"level {level} outside 0..{self.count - 1}")
        return level * self.delta_h

    @classmethod
    def for_sonar(cls, delta_h: float, sonar_range: float, extent_z: float) -> "PlaneStack":
        """Fewest planes such that the nadir beam from the last one reaches the seabed.

        Planes at or below the seabed are never created, so with
        ``delta_h > sonar_range`` the stack may stop short of full reach.
        """
        if delta_h <= 0:
            raise ConfigurationError("delta_h must be positive")
        count = 1
        while (count - 1) * delta_h + sonar_range < extent_z and count * delta_h < extent_z:
            count += 1
        return cls(delta_h, count)
