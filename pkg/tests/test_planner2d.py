import numpy as np
import pytest

from ctcpp.errors import ConfigurationError, DomainError
from ctcpp.occupancy import SAFE, THREAT, SymbolicMap, Tiling, extract_subregions
from ctcpp.planner2d import LapPlan, bfs_path, compress, cover_subregion

TILING = Tiling.covering(450, 450, 25)


def sym_from(labels):
    return SymbolicMap(np.asarray(labels, np.int8), TILING)


def test_open_plane_lawnmower_length():
    sym = sym_from(np.full((18, 18), SAFE))
    (sub,) = extract_subregions(sym)
    plan = cover_subregion(sym, sub, (12.5, 12.5), 25.0)
    # 18 laps of 17 cells plus 17 lap changes
    assert plan.length() == pytest.approx(18 * 425 + 17 * 25)
    assert len(plan.covered) == 324


def test_wider_laps_cover_more_per_pass():
    sym = sym_from(np.full((18, 18), SAFE))
    (sub,) = extract_subregions(sym)
    narrow = cover_subregion(sym, sub, (12.5, 12.5), 25.0)
    wide = cover_subregion(sym, sub, (12.5, 12.5), 75.0)
    assert set(wide.covered) == set(narrow.covered)
    assert wide.length() < narrow.length()


@pytest.mark.parametrize("seed", range(8))
def test_every_safe_cell_is_covered_and_waypoints_stay_safe(seed):
    rng = np.random.default_rng(seed)
    labels = np.where(rng.random((18, 18)) < 0.25, THREAT, SAFE)
    sym = sym_from(labels)
    for sub in extract_subregions(sym):
        start = TILING.center(min(sub.cells))
        plan = cover_subregion(sym, sub, start, 25.0)
        assert set(plan.covered) == set(sub.cells)
        for x, y in plan.waypoints:
            assert sym.labels[TILING.cell_of(x, y)] == SAFE


def test_lap_width_must_be_a_cell_multiple():
    sym = sym_from(np.full((18, 18), SAFE))
    (sub,) = extract_subregions(sym)
    with pytest.raises(ConfigurationError):
        cover_subregion(sym, sub, (0.0, 0.0), 30.0)


def test_region_without_safe_cells_is_rejected():
    sym = sym_from(np.full((18, 18), SAFE))
    (sub,) = extract_subregions(sym)
    with pytest.raises(DomainError):
        cover_subregion(sym_from(np.full((18, 18), THREAT)), sub, (0.0, 0.0), 25.0)


def test_compress_keeps_corners():
    cells = [(0, 0), (0, 1), (0, 2), (1, 2), (2, 2)]
    assert compress(cells) == [(0, 0), (0, 2), (2, 2)]


def test_bfs_path_routes_around_walls():
    wall = {(1, 0), (1, 1)}
    path = bfs_path((0, 0), lambda c: c == (2, 0), lambda c: c not in wall, (3, 3))
    assert path[0] == (0, 0) and path[-1] == (2, 0)
    assert len(path) == 7
    assert bfs_path((0, 0), lambda c: c == (2, 0), lambda c: c[0] == 0, (3, 3)) is None


def test_waypoint_csv_round_trip(tmp_path):
    plan = LapPlan([(12.5, 12.5), (437.5, 12.5)], 25.0)
    plan.to_csv(tmp_path / "w.csv")
    assert LapPlan.read_csv(tmp_path / "w.csv") == plan.waypoints
