"""Closed-loop missions: the layered coverage-tree planner and the
terrain-following baseline.

Positions are ``(x, y, depth)`` in metres. The vehicle is sampled every
``v * sample_interval`` metres of travel; every sample is also a sonar scan.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .coverage_tree import CoverageTree, NodeState, root_region
from .errors import ConfigurationError, StateError
from .occupancy import (
    SAFE,
    ProbOccupancyGrid,
    Subregion,
    SymbolicMap,
    Tiling,
    close,
    compute_l_occ,
    connected_components,
    encode,
    extract_subregions,
    neighbors4,
)
from .planner2d import bfs_path, compress, cover_subregion
from .sensor import EvidencePlane, SonarSpec, cast_scans
from .terrain import Heightmap, PlaneStack, SceneSpec, generate_scene, ground_truth_occupancy
from .traversal import expand_with_dummy, next_sequence, solve, weight_matrix

log = logging.getLogger(__name__)

CT_CPP = "ct"
TF_CPP = "tf"
SURFACE_CLEARANCE = 1e-6


def max_lap_width(r: float, theta: float) -> float:
    return 2.0 / 3.0 * r * math.sin(theta / 2)


def max_delta_h(r: float, theta: float, w: float) -> float:
    """Largest plane spacing for which adjacent-plane sonar cones leave no gap."""
    limit = max_lap_width(r, theta)
    if not 0 < w < limit:
        raise ConfigurationError(
            f"lap width must satisfy 0 < w < 2/3 r sin(theta/2) = {limit:.4f}; got w = {w}"
        )
    return math.sqrt(r * r - 2.25 * w * w) - 1.5 * w / math.tan(theta / 2)


@dataclass(frozen=True)
class MissionConfig:
    scene: SceneSpec = field(default_factory=SceneSpec)
    sonar: SonarSpec = field(default_factory=SonarSpec)
    w: float = 25.0
    delta_h: float = 85.0
    v: float = 1.0
    planner: str = CT_CPP
    tf_offset: float | None = None
    seed: int = 0
    cell_size: float = 25.0
    p_threat: float = 0.2
    closing_size: int = 3
    min_subregion_cells: int = 4
    log_base: float = 10.0
    threat_probability: float = 0.9
    enforce_bounds: bool = True

    @property
    def standoff(self) -> float:
        return self.delta_h if self.tf_offset is None else self.tf_offset

    def check(self) -> None:
        """Raise ``ConfigurationError`` naming the first violated requirement."""
        self.scene.validate()
        self.sonar.validate()
        if self.planner not in (CT_CPP, TF_CPP):
            raise ConfigurationError(f"unknown planner {self.planner!r}")
        if self.v <= 0:
            raise ConfigurationError("speed v must be positive")
        if self.w <= 0 or self.cell_size <= 0:
            raise ConfigurationError("lap width and cell size must be positive")
        if not 0 < self.p_threat < 1 or not 0.5 < self.threat_probability < 1:
            raise ConfigurationError("probability thresholds out of range")
        if self.closing_size < 3 or self.closing_size % 2 == 0:
            raise ConfigurationError("closing element size must be odd and >= 3")
        Tiling.covering(self.scene.extent_x, self.scene.extent_y, self.cell_size)
        if self.delta_h <= 0:
            raise ConfigurationError(f"plane spacing must satisfy 0 < delta_h; got {self.delta_h}")
        if self.planner == TF_CPP and self.standoff <= 0:
            raise ConfigurationError("terrain-following offset must be positive")
        if self.enforce_bounds:
            bound = max_delta_h(self.sonar.range, self.sonar.aperture, self.w)
            if self.delta_h > bound:
                raise ConfigurationError(
                    f"plane spacing must satisfy delta_h <= sqrt(r^2 - 2.25 w^2) - 1.5 w cot(theta/2) "
                    f"= {bound:.4f}; got {self.delta_h}"
                )

    def with_seed(self, seed: int) -> "MissionConfig":
        return replace(self, seed=seed, scene=replace(self.scene, seed=seed))

    def to_dict(self) -> dict:
        return {
            "scene": self.scene.to_dict(),
            "sonar": self.sonar.to_dict(),
            "planner": {
                "kind": self.planner,
                "cell_size": self.cell_size,
                "lap_width": self.w,
                "delta_h": self.delta_h,
                "tf_offset": self.tf_offset,
                "p_threat": self.p_threat,
                "closing_size": self.closing_size,
                "min_subregion_cells": self.min_subregion_cells,
                "log_base": self.log_base,
                "threat_probability": self.threat_probability,
                "enforce_bounds": self.enforce_bounds,
            },
            "mission": {"speed": self.v, "seed": self.seed},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MissionConfig":
        base = cls()
        p = d.get("planner", {})
        m = d.get("mission", {})
        return cls(
            scene=SceneSpec.from_dict(d.get("scene", {})),
            sonar=SonarSpec.from_dict(d.get("sonar", {})),
            w=float(p.get("lap_width", base.w)),
            delta_h=float(p.get("delta_h", base.delta_h)),
            v=float(m.get("speed", base.v)),
            planner=p.get("kind", base.planner),
            tf_offset=None if p.get("tf_offset") is None else float(p["tf_offset"]),
            seed=int(m.get("seed", base.seed)),
            cell_size=float(p.get("cell_size", base.cell_size)),
            p_threat=float(p.get("p_threat", base.p_threat)),
            closing_size=int(p.get("closing_size", base.closing_size)),
            min_subregion_cells=int(p.get("min_subregion_cells", base.min_subregion_cells)),
            log_base=float(p.get("log_base", base.log_base)),
            threat_probability=float(p.get("threat_probability", base.threat_probability)),
            enforce_bounds=bool(p.get("enforce_bounds", base.enforce_bounds)),
        )


@dataclass
class MissionTrace:
    planner: str
    times: np.ndarray
    poses: np.ndarray
    node_ids: np.ndarray
    point_cloud: np.ndarray
    tiling: Tiling
    planes: PlaneStack | None = None
    covered: dict = field(default_factory=dict)
    events: list = field(default_factory=list)
    poms: dict = field(default_factory=dict)
    symbolic: dict = field(default_factory=dict)
    visit_labels: np.ndarray | None = None

    @property
    def threat_entries(self) -> int:
        """Samples taken on a plane in a cell not labelled safe at that moment."""
        if self.visit_labels is None:
            return 0
        on_plane = self.visit_labels >= 0
        return int(np.count_nonzero(self.visit_labels[on_plane] != SAFE))


class _Recorder:
    """Moves the vehicle along polylines, sampling poses and scanning."""

    def __init__(self, hm, sonar, rng, v, start):
        self.hm = hm
        self.sonar = sonar
        self.rng = rng
        self.v = v
        self.step = v * sonar.sample_interval
        self.pos = np.asarray(start, dtype=float)
        self.t = 0.0
        self.heading = np.array([1.0, 0.0])
        self.poses = [self.pos[None, :]]
        self.times = [np.zeros(1)]
        self.ids = [np.full(1, -1)]
        self.labels = [np.full(1, -1)]
        self.hits = []
        self._scan(self.pos[None, :], np.array([self.heading]), None)

    def _scan(self, poses, headings, plane):
        batch = cast_scans(self.hm, poses, headings, self.sonar, self.rng, plane)
        self.hits.append(batch.hit_points())
        return batch

    def move(self, points, node_id=-1, plane: EvidencePlane | None = None, label_lookup=None):
        pts = np.vstack([self.pos[None, :], np.asarray(points, dtype=float).reshape(-1, 3)])
        seg = np.diff(pts, axis=0)
        seg_len = np.linalg.norm(seg, axis=1)
        keep = seg_len > 1e-9
        if not keep.any():
            return None
        pts = np.vstack([pts[:1], pts[1:][keep]])
        seg, seg_len = seg[keep], seg_len[keep]
        cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        total = cum[-1]
        s = np.arange(1, int(math.floor(total / self.step)) + 1) * self.step
        if len(s) == 0 or total - s[-1] > 1e-9:
            s = np.append(s, total)
        idx = np.clip(np.searchsorted(cum, s, side="left") - 1, 0, len(seg) - 1)
        frac = (s - cum[idx]) / seg_len[idx]
        a, b = pts[idx], pts[idx + 1]
        samples = np.clip(a + seg[idx] * frac[:, None], np.minimum(a, b), np.maximum(a, b))

        heads = np.empty((len(s), 2))
        prev = self.heading
        for k, i in enumerate(idx):
            hxy = seg[i, :2]
            n = math.hypot(hxy[0], hxy[1])
            if n > 1e-9:
                prev = hxy / n
            heads[k] = prev
        self.heading = prev

        self.poses.append(samples)
        self.times.append(self.t + s / self.v)
        self.ids.append(np.full(len(s), node_id))
        if label_lookup is not None:
            self.labels.append(label_lookup(samples))
        else:
            self.labels.append(np.full(len(s), -1))
        self.t += total / self.v
        self.pos = pts[-1].copy()
        return self._scan(samples, heads, plane)

    def finish(self):
        hits = [h for h in self.hits if len(h)]
        cloud = np.concatenate(hits) if hits else np.zeros((0, 3))
        return (
            np.concatenate(self.times),
            np.concatenate(self.poses),
            np.concatenate(self.ids),
            cloud,
            np.concatenate(self.labels),
        )


def segment_cells(p, q, tiling: Tiling) -> list[tuple[int, int]]:
    """Cells touched by the straight segment from ``p`` to ``q`` (x, y)."""
    (x0, y0), (x1, y1) = p, q
    ts = {0.0, 1.0}
    cs = tiling.cell_size
    for a0, a1, o in ((x0, x1, tiling.origin[0]), (y0, y1, tiling.origin[1])):
        if a1 != a0:
            lo, hi = sorted((a0, a1))
            k0 = math.ceil((lo - o) / cs)
            k1 = math.floor((hi - o) / cs)
            for k in range(k0, k1 + 1):
                ts.add((o + k * cs - a0) / (a1 - a0))
    ts = sorted(t for t in ts if 0 <= t <= 1)
    probes = [0.5 * (a + b) for a, b in zip(ts, ts[1:])] or [0.0]
    cells = []
    for t in probes + ts:
        x, y = x0 + t * (x1 - x0), y0 + t * (y1 - y0)
        # points on grid lines touch every adjacent cell
        fx, fy = (x - tiling.origin[0]) / cs, (y - tiling.origin[1]) / cs
        xs = {math.floor(fx)} | ({int(round(fx)) - 1} if math.isclose(fx, round(fx), abs_tol=1e-9) else set())
        ys = {math.floor(fy)} | ({int(round(fy)) - 1} if math.isclose(fy, round(fy), abs_tol=1e-9) else set())
        for iy in ys:
            for ix in xs:
                c = (int(iy), int(ix))
                if tiling.in_bounds(c) and c not in cells:
                    cells.append(c)
    return cells


class _CtMission:
    def __init__(self, config: MissionConfig, hm: Heightmap):
        self.cfg = config
        self.hm = hm
        sc = config.scene
        self.tiling = Tiling.covering(sc.extent_x, sc.extent_y, config.cell_size)
        self.planes = PlaneStack.for_sonar(config.delta_h, config.sonar.range, hm.extent_z)
        self.l_occ = compute_l_occ(
            config.sonar, config.w, config.delta_h, config.v, config.log_base, config.threat_probability
        )
        # touching the surface counts: the launch plane must be clear everywhere
        if hm.heights.max(initial=0.0) >= hm.extent_z - SURFACE_CLEARANCE:
            raise ConfigurationError("terrain breaks the surface; the surface plane must be obstacle-free")
        self.truth = {
            lv: ground_truth_occupancy(hm, self.planes.depth(lv), self.tiling)
            for lv in range(1, self.planes.count)
        }
        self.poms = {
            lv: ProbOccupancyGrid(self.tiling, self.l_occ, config.log_base, threat_probability=config.threat_probability)
            for lv in range(1, self.planes.count)
        }
        self.syms: dict[int, SymbolicMap] = {0: SymbolicMap.all_safe(self.tiling, config.p_threat)}
        self.tree = CoverageTree(root_region(self.tiling))
        self.covered: dict[int, set] = {lv: set() for lv in range(self.planes.count)}
        self.events: list[dict] = []
        launch = (*self.tiling.center((0, 0)), 0.0)
        self.rec = _Recorder(hm, config.sonar, np.random.default_rng(config.seed), config.v, launch)

    # -- geometry helpers -------------------------------------------------
    def depth(self, level):
        return self.planes.depth(level)

    def cur_cell(self):
        return self.tiling.cell_of(self.rec.pos[0], self.rec.pos[1])

    def cur_level(self):
        d = self.rec.pos[2]
        lv = int(round(d / self.planes.delta_h))
        assert math.isclose(lv * self.planes.delta_h, d, abs_tol=1e-6), "vehicle is between planes"
        return lv

    def label_lookup(self, samples):
        out = np.full(len(samples), -1)
        iy, ix, inside = self.tiling.cells_of(samples[:, 0], samples[:, 1])
        for k, z in enumerate(samples[:, 2]):
            lv = int(round(z / self.planes.delta_h))
            if lv in self.syms and abs(lv * self.planes.delta_h - z) < 1e-6 and inside[k]:
                out[k] = self.syms[lv].labels[iy[k], ix[k]]
        return out

    def safe(self, level, cell):
        sym = self.syms.get(level)
        return sym is not None and sym.is_safe(cell)

    def move_cells(self, cells_3d, node_id=-1, plane=None):
        """Follow a list of ``(level, (iy, ix))`` grid nodes."""
        pts = [(*self.tiling.center(c), self.depth(lv)) for lv, c in cells_3d]
        return self.rec.move(pts, node_id, plane, self.label_lookup)

    # -- routing ----------------------------------------------------------
    def preferred_route(self, target_id):
        """Ascend to the common-ancestor plane, cross, descend at the entry cell."""
        v0 = self.current_node
        node = self.tree.node(target_id)
        la = self.tree.common_ancestor_level(v0, target_id)
        l0 = self.cur_level()
        start = self.cur_cell()
        entry = node.region.entry_cell(self.tiling)
        if not self.safe(node.level, entry):
            return None
        route = [(lv, start) for lv in range(l0, la - 1, -1)]
        if not all(self.safe(lv, c) for lv, c in route):
            return None
        line = segment_cells(self.tiling.center(start), self.tiling.center(entry), self.tiling)
        if all(self.safe(la, c) for c in line):
            route.append((la, entry))
        else:
            sym = self.syms[la]
            path = bfs_path(start, lambda c: c == entry, sym.is_safe, self.tiling.shape)
            if path is None:
                return None
            route.extend((la, c) for c in compress(path)[1:])
        down = [(lv, entry) for lv in range(la + 1, node.level + 1)]
        if not all(self.safe(lv, c) for lv, c in down):
            return None
        return route + down

    def search_route(self, goal_level, goal_cells):
        """Shortest route over safe cells of every mapped plane (fallback)."""
        start = (self.cur_level(), self.cur_cell())
        goal = set(goal_cells)
        cs, dh = self.tiling.cell_size, self.planes.delta_h
        dist = {start: 0.0}
        prev = {start: None}
        heap = [(0.0, start)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist[u]:
                continue
            if u[0] == goal_level and u[1] in goal:
                path = []
                while u is not None:
                    path.append(u)
                    u = prev[u]
                return path[::-1]
            lv, c = u
            nbrs = [((lv, n), cs) for n in neighbors4(c, self.tiling.shape)]
            nbrs += [((lv + s, c), dh) for s in (-1, 1)]
            for v, cost in nbrs:
                if not self.safe(*v):
                    continue
                nd = d + cost
                if nd < dist.get(v, math.inf):
                    dist[v] = nd
                    prev[v] = u
                    heapq.heappush(heap, (nd, v))
        return None

    def transit(self, target_id):
        route = self.preferred_route(target_id)
        node = self.tree.node(target_id)
        if route is None:
            cells = [c for c in node.region.cells if self.safe(node.level, c)]
            route = self.search_route(node.level, cells)
            if route is None:
                raise RuntimeError(f"no safe route to node {target_id}")
            log.debug("node %d reached via fallback route", target_id)
        self.move_cells(route[1:])

    # -- coverage ---------------------------------------------------------
    def cover(self, node_id):
        node = self.tree.node(node_id)
        lv = node.level
        sym = self.syms[lv]
        plane = None
        if lv + 1 < self.planes.count:
            plane = EvidencePlane(self.depth(lv + 1), self.tiling, self.truth[lv + 1])
        cells = [c for c in node.region.cells if sym.is_safe(c)]
        pieces = [set(p) for p in connected_components(cells, self.tiling.shape)]
        while pieces:
            here = self.cur_cell()
            piece = next((p for p in pieces if here in p and self.cur_level() == lv), None)
            if piece is None:
                piece = min(pieces, key=lambda p: (min(abs(c[0] - here[0]) + abs(c[1] - here[1]) for c in p), min(p)))
                route = self.search_route(lv, piece)
                if route is None:
                    raise RuntimeError(f"piece of node {node_id} unreachable")
                self.move_cells(route[1:])
            pieces.remove(piece)
            plan = cover_subregion(sym, Subregion.from_cells(piece, self.tiling), self.rec.pos[:2], self.cfg.w)
            pts = [(x, y, self.depth(lv)) for x, y in plan.waypoints]
            batch = self.rec.move(pts, node_id, plane, self.label_lookup)
            if batch is not None and plane is not None:
                self.poms[lv + 1].update(batch.evidence_cells, batch.evidence_occupied)
            self.covered[lv].update(plan.covered)

    # -- tree growth ------------------------------------------------------
    def discover_children(self, node_id):
        node = self.tree.node(node_id)
        below = node.level + 1
        if below >= self.planes.count:
            return []
        cfg = self.cfg
        sym, new_ids = grow_tree(
            self.tree, node_id, self.poms[below], cfg.closing_size, cfg.p_threat, cfg.min_subregion_cells
        )
        self.syms[below] = sym
        return new_ids

    def assign(self):
        return choose_target(self.tree, self.current_node, tuple(self.rec.pos[:2]), self.planes)

    def run(self):
        tree = self.tree
        target = tree.root
        self.current_node = tree.root
        guard = self.tiling.size * self.planes.count
        while tree.unexplored:
            if len(tree) > guard:
                raise RuntimeError("coverage tree outgrew the cell budget; tree construction is broken")
            if target != self.current_node:
                self.transit(target)
            self.cover(target)
            tree.mark_explored(target)
            self.current_node = target
            children = self.discover_children(target)
            event = {
                "event": "node_complete",
                "node": target,
                "level": tree.node(target).level,
                "time": self.rec.t,
                "children": children,
                "tree_size": len(tree),
                "unexplored": len(tree.unexplored),
            }
            if tree.unexplored:
                target, sequence = self.assign()
                event["next"] = target
                event["sequence"] = sequence
            self.events.append(event)
            log.info("completed node %d (level %d); %d unexplored", event["node"], event["level"], event["unexplored"])

        times, poses, ids, cloud, labels = self.rec.finish()
        trace = MissionTrace(
            CT_CPP, times, poses, ids, cloud, self.tiling, self.planes,
            covered=self.covered, events=self.events, poms=self.poms,
            symbolic=self.syms, visit_labels=labels,
        )
        return trace, tree


def grow_tree(tree: CoverageTree, node_id: int, pom: ProbOccupancyGrid, closing_size: int = 3,
              p_threat: float = 0.2, min_cells: int = 4) -> tuple[SymbolicMap, list[int]]:
    """Rebuild the symbolic map below a just-explored node and attach what is new.

    Safe cells not yet claimed by a node on that plane are split into
    connected pieces. A piece touching an unexplored node of the same
    subregion extends it; otherwise it becomes a child of the explored node
    above whose footprint it overlaps most (the just-explored node when none
    overlaps). Returns the symbolic map and the ids of the new nodes.
    """
    node = tree.node(node_id)
    below = node.level + 1
    tiling = pom.tiling
    shape = tiling.shape
    sym = encode(close(pom, closing_size, p_threat), pom.explored, p_threat)

    claimed = {c: n.id for n in tree.at_level(below) for c in n.region.cells}
    explored_here = [n for n in tree.at_level(node.level) if n.state is NodeState.EXPLORED]
    new_ids = []
    for sub in extract_subregions(sym, min_cells):
        fresh = [c for c in sub.cells if c not in claimed]
        for piece in connected_components(fresh, shape):
            touching = sorted({
                claimed[n] for c in piece for n in neighbors4(c, shape)
                if n in claimed and n in sub.cells
            })
            grow = [i for i in touching if tree.node(i).state is NodeState.UNEXPLORED]
            if grow:
                nid = grow[0]
                cells = set(tree.node(nid).region.cells) | set(piece)
                tree.extend_region(nid, Subregion.from_cells(cells, tiling))
            else:
                pset = set(piece)
                parent = max(explored_here, key=lambda n: (len(pset & n.region.cells), -n.id))
                if not pset & parent.region.cells:
                    parent = node
                (nid,) = tree.add_children(parent.id, [Subregion.from_cells(piece, tiling)])
                new_ids.append(nid)
            for c in piece:
                claimed[c] = nid
    return sym, new_ids


def choose_target(tree: CoverageTree, current: int, position, planes: PlaneStack) -> tuple[int, list[int]]:
    """Next node to visit and the full planned visiting order."""
    targets = sorted(tree.unexplored)
    if not targets:
        raise StateError("no unexplored nodes left to choose from")
    w = weight_matrix(tree, current, targets, planes, position)
    seq = next_sequence(solve(expand_with_dummy(w)))
    order = [targets[i - 1] for i in seq]
    return order[0], order


def run_ct_cpp(config: MissionConfig, hm: Heightmap | None = None) -> tuple[MissionTrace, CoverageTree]:
    config.check()
    if hm is None:
        hm = generate_scene(config.scene)
    return _CtMission(config, hm).run()


def tf_waypoints(config: MissionConfig, hm: Heightmap) -> np.ndarray:
    """Lawnmower over the full extent, depth held ``standoff`` above the terrain."""
    sc = config.scene
    off = config.standoff
    res = hm.resolution
    n_laps = int(math.ceil(sc.extent_y / config.w - 1e-9))
    ys = np.minimum((np.arange(n_laps) + 0.5) * config.w, sc.extent_y)
    xs = np.unique(np.append(np.arange(0.0, sc.extent_x, res), sc.extent_x))

    def follow(x, y):
        return np.clip(hm.surface_depth(x, y) - off, 0.0, hm.extent_z)

    pts = []
    for k, y in enumerate(ys):
        lap_x = xs if k % 2 == 0 else xs[::-1]
        lap_y = np.full_like(lap_x, y)
        pts.append(np.stack([lap_x, lap_y, follow(lap_x, lap_y)], axis=1))
        if k + 1 < len(ys):
            step_y = np.append(np.arange(y, ys[k + 1], res)[1:], ys[k + 1])[:-1]
            if len(step_y):
                step_x = np.full_like(step_y, lap_x[-1])
                pts.append(np.stack([step_x, step_y, follow(step_x, step_y)], axis=1))
    return np.concatenate(pts)


def run_tf_cpp(config: MissionConfig, hm: Heightmap | None = None) -> MissionTrace:
    config = replace(config, planner=TF_CPP)
    config.check()
    if hm is None:
        hm = generate_scene(config.scene)
    tiling = Tiling.covering(config.scene.extent_x, config.scene.extent_y, config.cell_size)
    pts = tf_waypoints(config, hm)
    rec = _Recorder(hm, config.sonar, np.random.default_rng(config.seed), config.v, (pts[0, 0], pts[0, 1], 0.0))
    rec.move(pts)
    times, poses, ids, cloud, labels = rec.finish()
    return MissionTrace(TF_CPP, times, poses, ids, cloud, tiling, None, visit_labels=None)


def run_mission(config: MissionConfig, hm: Heightmap | None = None):
    """Dispatch on ``config.planner``; returns ``(trace, tree_or_None)``."""
    if config.planner == TF_CPP:
        return run_tf_cpp(config, hm), None
    return run_ct_cpp(config, hm)
