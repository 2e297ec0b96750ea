"""Mission metrics: path length, energy, reconstruction error, point-cloud filtering."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigurationError
from .terrain import Heightmap


@dataclass(frozen=True)
class EnergyModel:
    """Joules per metre of horizontal travel (``k1``) and of depth change (``k2``)."""

    k1: float = 557.24
    k2: float = 1118.13

    def to_dict(self) -> dict:
        return {"k1": self.k1, "k2": self.k2}

    @classmethod
    def from_dict(cls, d: dict) -> "EnergyModel":
        base = cls()
        return cls(float(d.get("k1", base.k1)), float(d.get("k2", base.k2)))


def _steps(poses) -> np.ndarray:
    p = np.asarray(poses, dtype=float).reshape(-1, 3)
    return np.diff(p, axis=0)


def trajectory_length(poses) -> float:
    return float(np.linalg.norm(_steps(poses), axis=1).sum())


def energy(poses, model: EnergyModel = EnergyModel()) -> float:
    d = _steps(poses)
    horizontal = np.hypot(d[:, 0], d[:, 1]).sum()
    vertical = np.abs(d[:, 2]).sum()
    return float(model.k1 * horizontal + model.k2 * vertical)


def _column_means(ix, iy, elev, nx, ny, per_column):
    col = (iy // per_column) * (nx // per_column) + ix // per_column
    n_cols = (nx // per_column) * (ny // per_column)
    sums = np.bincount(col, weights=elev, minlength=n_cols)
    counts = np.bincount(col, minlength=n_cols)
    out = np.zeros(n_cols)
    hit = counts > 0
    out[hit] = sums[hit] / counts[hit]
    return out


def surface_voxels(hm: Heightmap, pitch: float = 1.0) -> np.ndarray:
    """Voxels ``(ix, iy, iz)`` (elevation-indexed) intersected by the true surface.

    Each ``pitch``-spaced column is filled from its own surface down to the
    lowest neighbouring surface, so steep walls contribute every voxel they
    pass through rather than one per column.
    """
    nx = int(round(hm.extent_x / pitch))
    ny = int(round(hm.extent_y / pitch))
    xs = (np.arange(nx) + 0.5) * pitch
    ys = (np.arange(ny) + 0.5) * pitch
    e = hm.elevation(*np.meshgrid(xs, ys))
    padded = np.pad(e, 1, mode="edge")
    low = np.minimum.reduce([
        e, padded[:-2, 1:-1], padded[2:, 1:-1], padded[1:-1, :-2], padded[1:-1, 2:],
    ])
    top = np.minimum(np.floor(e / pitch), hm.extent_z / pitch - 1).astype(np.int64)
    bot = np.minimum(np.floor(low / pitch).astype(np.int64), top)
    counts = (top - bot + 1).ravel()
    iy, ix = np.divmod(np.repeat(np.arange(nx * ny), counts), nx)
    offsets = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    iz = np.repeat(bot.ravel(), counts) + offsets
    return np.stack([ix, iy, iz], axis=1)


def cloud_voxels(cloud, hm: Heightmap, pitch: float = 1.0) -> np.ndarray:
    pts = np.asarray(cloud, dtype=float).reshape(-1, 3)
    nx = int(round(hm.extent_x / pitch))
    ny = int(round(hm.extent_y / pitch))
    nz = int(math.ceil(hm.extent_z / pitch))
    ix = np.clip(np.floor(pts[:, 0] / pitch), 0, nx - 1).astype(np.int64)
    iy = np.clip(np.floor(pts[:, 1] / pitch), 0, ny - 1).astype(np.int64)
    iz = np.clip(np.floor((hm.extent_z - pts[:, 2]) / pitch), 0, nz - 1).astype(np.int64)
    return np.unique(np.stack([ix, iy, iz], axis=1), axis=0)


def reconstruction_rmse(cloud, hm: Heightmap, cuboid: float = 5.0, pitch: float = 1.0) -> float:
    """RMSE of per-column mean surface elevation, normalised by the scene depth.

    Both the point cloud and the true surface are reduced to the set of
    ``pitch``-sized voxels they occupy, which evens out sampling density and
    weights steep faces by their area. The scene is cut into ``cuboid``-wide
    full-depth columns; a column's elevation is the mean voxel-centre
    elevation inside it, and 0 when the cloud left it empty.
    """
    if cuboid <= 0 or pitch <= 0:
        raise ConfigurationError("cuboid size and voxel pitch must be positive")
    per = cuboid / pitch
    if not math.isclose(per, round(per)):
        raise ConfigurationError("cuboid size must be a whole multiple of the voxel pitch")
    per = int(round(per))
    nx = int(round(hm.extent_x / pitch))
    ny = int(round(hm.extent_y / pitch))
    if nx % per or ny % per:
        raise ConfigurationError("scene extents must be whole multiples of the cuboid size")

    def means(vox):
        elev = (vox[:, 2] + 0.5) * pitch
        return _column_means(vox[:, 0], vox[:, 1], elev, nx, ny, per)

    truth = means(surface_voxels(hm, pitch))
    recon = means(cloud_voxels(cloud, hm, pitch))
    return float(np.sqrt(np.mean((recon - truth) ** 2)) / hm.extent_z)


def point_filter(cloud, pitch: float = 1.0, k: int = 6, outlier_factor: float = 3.0) -> np.ndarray:
    """Voxel-downsample then drop statistical outliers.

    One point per ``pitch``-sized voxel survives (the one nearest the voxel
    centre); a point is an outlier when its mean distance to its ``k``
    nearest neighbours exceeds ``outlier_factor * pitch``.
    """
    pts = np.asarray(cloud, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        return pts
    vox = np.floor(pts / pitch).astype(np.int64)
    centre_dist = np.linalg.norm(pts - (vox + 0.5) * pitch, axis=1)
    order = np.lexsort((centre_dist, vox[:, 2], vox[:, 1], vox[:, 0]))
    v = vox[order]
    first = np.ones(len(v), dtype=bool)
    first[1:] = np.any(v[1:] != v[:-1], axis=1)
    kept = pts[np.sort(order[first])]
    if len(kept) <= k:
        return kept
    dist, _ = cKDTree(kept).query(kept, k=k + 1)
    mean = dist[:, 1:].mean(axis=1)
    return kept[mean <= outlier_factor * pitch]


def report(trace, hm: Heightmap, tree=None, model: EnergyModel = EnergyModel(),
           runtime: float | None = None, cloud=None) -> dict:
    """Metrics dictionary; ``runtime_s`` appears only when ``runtime`` is given."""
    from .terrain import ground_truth_occupancy

    pts = trace.point_cloud if cloud is None else cloud
    out = {
        "trajectory_length_m": round(trajectory_length(trace.poses), 6),
        "energy_J": round(energy(trace.poses, model), 3),
        "rmse_normalized": round(reconstruction_rmse(pts, hm), 9),
    }
    fractions = []
    if trace.planes is not None:
        for lv in range(trace.planes.count):
            free = ~ground_truth_occupancy(hm, trace.planes.depth(lv), trace.tiling)
            n_free = int(free.sum())
            hit = sum(1 for c in trace.covered.get(lv, ()) if free[c])
            fractions.append(round(hit / n_free, 9) if n_free else 0.0)
    out["per_plane_coverage_fraction"] = fractions
    out["node_count"] = len(tree) if tree is not None else 0
    if runtime is not None:
        out["runtime_s"] = round(runtime, 3)
    return out
