"""Artifact writers and their matching readers."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .coverage_tree import CoverageTree
from .occupancy import SymbolicMap, Tiling, write_pgm


def write_trajectory_csv(path, times, poses) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "y", "depth"])
        for t, (x, y, z) in zip(times, poses):
            w.writerow([f"{t:.3f}", f"{x:.4f}", f"{y:.4f}", f"{z:.4f}"])


def read_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1:4]


def write_xyz(path, points) -> None:
    """One ``x y depth`` triple per line."""
    np.savetxt(path, np.asarray(points).reshape(-1, 3), fmt="%.4f")


def read_xyz(path) -> np.ndarray:
    return np.loadtxt(path, ndmin=2).reshape(-1, 3)


def write_symbolic(path, sym: SymbolicMap) -> None:
    Path(path).write_text(sym.to_ascii())


def read_symbolic(path, tiling: Tiling, p_threat: float = 0.2) -> SymbolicMap:
    return SymbolicMap.from_ascii(Path(path).read_text(), tiling, p_threat)


def write_pom(path, grid) -> None:
    grid.to_pgm(path)


def write_tree(json_path, dot_path, tree: CoverageTree) -> None:
    Path(json_path).write_text(tree.to_json())
    Path(dot_path).write_text(tree.to_dot())


def read_tree(path) -> CoverageTree:
    return CoverageTree.from_dict(json.loads(Path(path).read_text()))


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


__all__ = [
    "read_json",
    "read_symbolic",
    "read_trajectory_csv",
    "read_tree",
    "read_xyz",
    "write_json",
    "write_pgm",
    "write_pom",
    "write_symbolic",
    "write_trajectory_csv",
    "write_tree",
    "write_xyz",
]
