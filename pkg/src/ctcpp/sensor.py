"""Downward multibeam sonar model and forward clearance check.

Beams fan out in the vertical plane perpendicular to the direction of
travel. Each beam reports the first terrain intersection within range and
contributes one occupied/free reading for the cell it crosses on the plane
below: the cell under its hit point when it strikes terrain above that
plane, otherwise the cell where it pierces the plane.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError
from .occupancy import SAFE, SymbolicMap, Tiling
from .terrain import Heightmap

_MAX_RAY_SAMPLES = 1_500_000
_BISECTIONS = 6


@dataclass(frozen=True)
class SonarSpec:
    range: float = 150.0
    aperture: float = math.radians(120.0)
    beam_count: int = 128
    sample_interval: float = 1.0
    false_rate: float = 0.1

    def validate(self) -> None:
        if self.range <= 0:
            raise ConfigurationError("sonar range must be positive")
        if not 0 <= self.aperture < math.pi:
            raise ConfigurationError("aperture must lie in [0, pi)")
        if self.beam_count < 2:
            raise ConfigurationError("a multibeam sonar needs at least two beams")
        if self.sample_interval <= 0:
            raise ConfigurationError("sample interval must be positive")
        if not 0 <= self.false_rate < 0.5:
            raise ConfigurationError("false_rate must lie in [0, 0.5)")

    def beam_angles(self) -> np.ndarray:
        """Signed angles from the nadir, evenly spread over the aperture."""
        return np.linspace(-self.aperture / 2, self.aperture / 2, self.beam_count)

    def to_dict(self) -> dict:
        return {
            "range": self.range,
            "aperture_deg": round(math.degrees(self.aperture), 12),
            "beam_count": self.beam_count,
            "sample_interval": self.sample_interval,
            "false_rate": self.false_rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SonarSpec":
        base = cls()
        aperture = math.radians(d["aperture_deg"]) if "aperture_deg" in d else d.get("aperture", base.aperture)
        return cls(
            range=float(d.get("range", base.range)),
            aperture=float(aperture),
            beam_count=int(d.get("beam_count", base.beam_count)),
            sample_interval=float(d.get("sample_interval", base.sample_interval)),
            false_rate=float(d.get("false_rate", base.false_rate)),
        )


@dataclass(frozen=True)
class EvidencePlane:
    """The plane below the vehicle whose occupancy the scans report on."""

    depth: float
    tiling: Tiling
    occupied: np.ndarray = field(repr=False)


@dataclass
class Scan:
    timestamp: float
    pose: tuple[float, float, float]
    beam_hits: np.ndarray  # (M, 3) x, y, depth; NaN rows are no-returns
    plane_evidence: list = field(default_factory=list)


@dataclass
class ScanBatch:
    hits: np.ndarray  # (N, M, 3)
    evidence_scan: np.ndarray  # (K,) index into the batch
    evidence_cells: np.ndarray  # (K, 2) iy, ix
    evidence_occupied: np.ndarray  # (K,) bool

    def hit_points(self) -> np.ndarray:
        pts = self.hits.reshape(-1, 3)
        return pts[~np.isnan(pts[:, 0])]


def beams_per_cell(spec: SonarSpec, w: float, delta_h: float) -> float:
    """Beams crossing a cell of width ``w`` directly below, ``delta_h`` down."""
    if w <= 0 or delta_h <= 0 or spec.aperture <= 0:
        raise ConfigurationError("w, delta_h and the aperture must be positive")
    return 2 * spec.beam_count * math.atan(w / (2 * delta_h)) / spec.aperture


def _check_poses(hm: Heightmap, poses: np.ndarray) -> None:
    x, y, z = poses[:, 0], poses[:, 1], poses[:, 2]
    bad = ~hm.contains(x, y) | (z < 0) | (z > hm.extent_z)
    if bad.any():
        i = int(np.argmax(bad))
        raise DomainError(f"pose {tuple(poses[i])} lies outside the scene volume")


def _gap(hm: Heightmap, x, y, depth):
    """Height of the ray point above the terrain; +inf off the map."""
    g = hm.surface_depth(x, y) - depth
    return np.where(hm.contains(x, y), g, np.inf)


def _cast_chunk(hm, poses, headings, spec, angles):
    n = len(poses)
    m = len(angles)
    step = hm.resolution
    k = int(math.ceil(spec.range / step))
    ts = np.minimum(np.arange(1, k + 1) * step, spec.range)

    lat = np.stack([-headings[:, 1], headings[:, 0]], axis=1)  # (N, 2)
    s, c = np.sin(angles), np.cos(angles)
    dx = lat[:, 0:1] * s[None, :]  # (N, M)
    dy = lat[:, 1:2] * s[None, :]
    dz = np.broadcast_to(c[None, :], (n, m))

    x0 = poses[:, 0][:, None]
    y0 = poses[:, 1][:, None]
    z0 = poses[:, 2][:, None]

    px = x0[..., None] + dx[..., None] * ts
    py = y0[..., None] + dy[..., None] * ts
    pz = z0[..., None] + dz[..., None] * ts
    below = _gap(hm, px, py, pz) <= 0
    has = below.any(axis=2)
    first = np.argmax(below, axis=2)

    hits = np.full((n, m, 3), np.nan)
    t_hit = np.full((n, m), np.inf)
    if has.any():
        ii, jj = np.nonzero(has)
        kk = first[ii, jj]
        hi = ts[kk]
        lo = np.where(kk > 0, ts[np.maximum(kk - 1, 0)], 0.0)
        ox, oy, oz = x0[ii, 0], y0[ii, 0], z0[ii, 0]
        ddx, ddy, ddz = dx[ii, jj], dy[ii, jj], dz[ii, jj]

        def g(t):
            return _gap(hm, ox + ddx * t, oy + ddy * t, oz + ddz * t)

        for _ in range(_BISECTIONS):
            mid = 0.5 * (lo + hi)
            under = g(mid) <= 0
            hi = np.where(under, mid, hi)
            lo = np.where(under, lo, mid)
        g_lo, g_hi = g(lo), g(hi)
        denom = g_lo - g_hi
        frac = np.where(np.isfinite(g_lo) & (denom > 0), g_lo / np.where(denom > 0, denom, 1.0), 1.0)
        t = lo + np.clip(frac, 0.0, 1.0) * (hi - lo)
        t_hit[ii, jj] = t
        hits[ii, jj] = np.stack([ox + ddx * t, oy + ddy * t, oz + ddz * t], axis=1)
    return hits, t_hit, dx, dy, dz


def cast_scans(hm: Heightmap, poses, headings, spec: SonarSpec, rng: np.random.Generator,
               plane: EvidencePlane | None = None) -> ScanBatch:
    """Vectorised scans for many poses; ``headings`` are horizontal travel directions."""
    poses = np.atleast_2d(np.asarray(poses, dtype=float))
    headings = np.atleast_2d(np.asarray(headings, dtype=float))
    _check_poses(hm, poses)
    norm = np.hypot(headings[:, 0], headings[:, 1])
    if (norm == 0).any():
        raise DomainError("heading must have a horizontal component")
    headings = headings / norm[:, None]
    angles = spec.beam_angles()
    m = len(angles)
    per_pose = m * int(math.ceil(spec.range / hm.resolution))
    chunk = max(1, _MAX_RAY_SAMPLES // per_pose)

    hit_parts, ev_scan, ev_cells, ev_occ = [], [], [], []
    for start in range(0, len(poses), chunk):
        sl = slice(start, start + chunk)
        hits, t_hit, dx, dy, dz = _cast_chunk(hm, poses[sl], headings[sl], spec, angles)
        hit_parts.append(hits)
        if plane is None:
            continue
        p = poses[sl]
        z0 = p[:, 2][:, None]
        hit_depth = np.where(np.isfinite(t_hit), hits[..., 2], np.inf)
        above = hit_depth < plane.depth
        t_plane = (plane.depth - z0) / dz
        pierce = ~above & (plane.depth > z0) & (t_plane <= spec.range)
        cx = np.where(above, hits[..., 0], p[:, 0][:, None] + dx * t_plane)
        cy = np.where(above, hits[..., 1], p[:, 1][:, None] + dy * t_plane)
        crossed = above | pierce
        iy, ix, inside = plane.tiling.cells_of(cx, cy)
        keep = crossed & inside
        si, _ = np.nonzero(keep)
        cells = np.stack([iy[keep], ix[keep]], axis=1)
        ev_scan.append(si + start)
        ev_cells.append(cells)
        ev_occ.append(plane.occupied[cells[:, 0], cells[:, 1]])

    if ev_scan:
        evidence_scan = np.concatenate(ev_scan)
        evidence_cells = np.concatenate(ev_cells)
        evidence_occupied = np.concatenate(ev_occ)
        if spec.false_rate > 0 and len(evidence_occupied):
            flips = rng.random(len(evidence_occupied)) < spec.false_rate
            evidence_occupied = evidence_occupied ^ flips
    else:
        evidence_scan = np.zeros(0, dtype=np.intp)
        evidence_cells = np.zeros((0, 2), dtype=np.intp)
        evidence_occupied = np.zeros(0, dtype=bool)
    return ScanBatch(np.concatenate(hit_parts, axis=0), evidence_scan, evidence_cells, evidence_occupied)


def cast_scan(hm: Heightmap, pose, spec: SonarSpec, rng: np.random.Generator, heading=(1.0, 0.0),
              plane: EvidencePlane | None = None, timestamp: float = 0.0) -> Scan:
    batch = cast_scans(hm, [pose], [heading], spec, rng, plane)
    evidence = [
        ((int(c[0]), int(c[1])), bool(o))
        for c, o in zip(batch.evidence_cells, batch.evidence_occupied)
    ]
    return Scan(timestamp, tuple(float(v) for v in pose), batch.hits[0], evidence)


def forward_clearance(symbolic: SymbolicMap, pose, heading) -> bool:
    """True iff the next cell along the dominant axis of ``heading`` is safe.

    Unexplored cells are treated as not clear.
    """
    cell = symbolic.tiling.cell_of(pose[0], pose[1])
    hx, hy = heading[0], heading[1]
    if hx == 0 and hy == 0:
        raise DomainError("heading must be non-zero")
    if abs(hx) >= abs(hy):
        nxt = (cell[0], cell[1] + (1 if hx > 0 else -1))
    else:
        nxt = (cell[0] + (1 if hy > 0 else -1), cell[1])
    return symbolic.tiling.in_bounds(nxt) and symbolic.labels[nxt] == SAFE


def write_scans_csv(path: str | Path, scans: list[Scan]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "x", "y", "depth", "beam", "hit_x", "hit_y", "hit_depth"])
        for scan in scans:
            for b, hit in enumerate(scan.beam_hits):
                tail = ["", "", ""] if np.isnan(hit[0]) else [f"{v:.6f}" for v in hit]
                w.writerow([f"{scan.timestamp:.6f}", *(f"{v:.6f}" for v in scan.pose), b, *tail])


def read_scans_csv(path: str | Path) -> list[Scan]:
    scans: dict[tuple, list] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (float(row["timestamp"]), float(row["x"]), float(row["y"]), float(row["depth"]))
            hit = [np.nan] * 3 if row["hit_x"] == "" else [float(row[k]) for k in ("hit_x", "hit_y", "hit_depth")]
            scans.setdefault(key, []).append(hit)
    return [Scan(k[0], k[1:], np.array(v)) for k, v in scans.items()]
