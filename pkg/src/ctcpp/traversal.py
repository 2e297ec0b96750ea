"""Tree traversal order via an open-path TSP.

The unexplored nodes plus the vehicle's current node form a complete
graph. A dummy vertex joined at zero cost to the start vertex and at
"infinite" cost to every other vertex turns the shortest Hamiltonian path
from the start into a closed tour, which is built by nearest neighbour and
improved by 2-opt.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .coverage_tree import CoverageTree
from .terrain import PlaneStack

INFINITY_FACTOR = 1e6


def transition_cost(tree: CoverageTree, v_i: int, v_j: int, planes: PlaneStack,
                    position: tuple[float, float] | None = None) -> float:
    """Up to the common ancestor's plane, across between centroids, then down.

    ``position`` overrides ``v_i``'s centroid with the vehicle's location.
    """
    if v_i == v_j:
        return 0.0
    ni, nj = tree.node(v_i), tree.node(v_j)
    la = tree.common_ancestor_level(v_i, v_j)
    h = planes.delta_h
    up = abs(ni.level * h - la * h)
    down = abs(nj.level * h - la * h)
    xi, yi = position if position is not None else ni.region.centroid
    xj, yj = nj.region.centroid
    return up + math.hypot(xi - xj, yi - yj) + down


def weight_matrix(tree: CoverageTree, v0: int, targets: list[int], planes: PlaneStack,
                  position: tuple[float, float] | None = None) -> np.ndarray:
    """Costs over ``[v0] + targets``; only ``v0`` uses the vehicle position."""
    verts = [v0] + list(targets)
    n = len(verts)
    w = np.zeros((n, n))
    for a in range(n):
        for b in range(a + 1, n):
            cost = transition_cost(tree, verts[a], verts[b], planes, position if a == 0 else None)
            w[a, b] = w[b, a] = cost
    return w


def infinity_for(w: np.ndarray) -> float:
    finite = w[np.isfinite(w)]
    top = float(finite.max()) if finite.size else 0.0
    return INFINITY_FACTOR * (top + 1.0)


def expand_with_dummy(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    eta = w.shape[0]
    if w.shape != (eta, eta) or eta < 1:
        raise ValueError("weight matrix must be square and non-empty")
    inf = infinity_for(w)
    out = np.full((eta + 1, eta + 1), inf)
    out[:eta, :eta] = w
    out[eta, eta] = 0.0
    out[eta, 0] = 0.0
    out[0, eta] = 0.0
    return out


def tour_cost(w_e: np.ndarray, order: list[int]) -> float:
    return float(sum(w_e[a, b] for a, b in zip(order, order[1:])))


@dataclass
class Tour:
    order: list[int]
    cost: float
    initial_order: list[int] = field(default_factory=list)
    initial_cost: float = 0.0
    swaps: list[dict] = field(default_factory=list)
    infinity: float = 0.0

    @property
    def dummy(self) -> int:
        return self.order[0]

    @property
    def path_cost(self) -> float:
        """Cost of the open path, i.e. without the edges touching the dummy."""
        return tour_cost_without_dummy(self.cost, self.order, self.infinity)

    def to_json(self) -> str:
        return json.dumps(
            {
                "initial_tour": self.initial_order,
                "initial_cost": self.initial_cost,
                "swaps": self.swaps,
                "final_tour": self.order,
                "final_cost": self.cost,
            },
            indent=1,
        )


def tour_cost_without_dummy(cost: float, order: list[int], infinity: float) -> float:
    # a valid tour pays the sentinel once, on the edge closing back to the dummy
    return cost - infinity if len(order) > 3 else cost


def nearest_neighbor(w_e: np.ndarray) -> list[int]:
    n = w_e.shape[0]
    dummy = n - 1
    order = [dummy]
    left = set(range(n - 1))
    cur = dummy
    while left:
        # lowest index wins ties
        nxt = min(left, key=lambda j: (w_e[cur, j], j))
        order.append(nxt)
        left.discard(nxt)
        cur = nxt
    order.append(dummy)
    return order


def two_opt(w_e: np.ndarray, order: list[int]) -> tuple[list[int], list[dict]]:
    """First-improvement 2-opt, scanning (i, j) lexicographically."""
    order = list(order)
    n = len(order) - 2  # real vertices
    symmetric = np.array_equal(w_e, w_e.T)
    swaps = []
    improved = True
    while improved:
        improved = False
        for i in range(1, n + 1):
            for j in range(i + 1, n + 1):
                if i == 1 and j == n:
                    continue  # both removed edges touch the dummy; reversal is a no-op
                a, b = order[i - 1], order[i]
                c, d = order[j], order[j + 1]
                delta = (w_e[a, c] - w_e[a, b]) + (w_e[b, d] - w_e[c, d])
                if not symmetric:
                    seg = order[i:j + 1]
                    fwd = sum(w_e[p, q] for p, q in zip(seg, seg[1:]))
                    rev = sum(w_e[q, p] for p, q in zip(seg, seg[1:]))
                    delta += rev - fwd
                if delta < -1e-9:
                    order[i:j + 1] = order[i:j + 1][::-1]
                    swaps.append({"i": i, "j": j, "delta": float(delta)})
                    improved = True
                    break
            if improved:
                break
    return order, swaps


def solve(w_e: np.ndarray) -> Tour:
    w_e = np.asarray(w_e, dtype=float)
    inf = float(w_e[1:-1, -1].max()) if w_e.shape[0] > 2 else 0.0
    initial = nearest_neighbor(w_e)
    initial_cost = tour_cost(w_e, initial)
    order, swaps = two_opt(w_e, initial)
    return Tour(order, tour_cost(w_e, order), initial, initial_cost, swaps, inf)


def next_sequence(tour: Tour) -> list[int]:
    """Vertex indices after the start vertex, dummy removed."""
    inner = [v for v in tour.order if v != tour.dummy]
    if inner and inner[0] == 0:
        return inner[1:]
    # a reversed tour ends at the start vertex instead
    return [v for v in inner[::-1] if v != 0]
