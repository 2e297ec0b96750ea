import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ctcpp.errors import ConfigurationError, DomainError
from ctcpp.occupancy import (
    SAFE,
    THREAT,
    UNEXPLORED,
    ProbOccupancyGrid,
    Subregion,
    SymbolicMap,
    Tiling,
    binary_closing,
    close,
    compute_l_occ,
    connected_components,
    encode,
    extract_subregions,
    read_pgm,
    update,
    write_pgm,
)
from ctcpp.sensor import SonarSpec

from oracles import batch_log_odds, closing_exact, components_exact

TILING = Tiling.covering(450, 450, 25)


def grid(l_occ=0.05):
    return ProbOccupancyGrid(TILING, l_occ)


def test_tiling_lookup_and_centres():
    assert TILING.shape == (18, 18)
    assert TILING.cell_of(0.0, 0.0) == (0, 0)
    assert TILING.cell_of(449.9, 26.0) == (1, 17)
    assert TILING.center((1, 17)) == (437.5, 37.5)
    with pytest.raises(DomainError):
        TILING.cell_of(451.0, 10.0)
    with pytest.raises(ConfigurationError):
        Tiling.covering(450, 450, 40)


def test_fresh_grid_is_unexplored_at_one_half():
    g = grid()
    assert np.all(g.probability() == 0.5)
    assert not g.explored.any()
    assert encode(g).labels.max() == UNEXPLORED


def test_update_accumulates_signed_counts():
    g = grid(0.1)
    update(g, [((2, 3), True), ((2, 3), True), ((2, 3), False), ((5, 5), False)])
    assert g.net[2, 3] == 1 and g.readings[2, 3] == 3
    assert g.log_odds[2, 3] == pytest.approx(0.1)
    assert g.log_odds[5, 5] == pytest.approx(-0.1)
    assert g.probability()[5, 5] < 0.5 < g.probability()[2, 3]


def test_update_rejects_out_of_grid_evidence():
    with pytest.raises(DomainError):
        grid().update([(18, 0)], [True])


def test_reference_l_occ_value():
    spec = SonarSpec()
    l_occ = compute_l_occ(spec, 25.0, 85.0, 1.0)
    assert 0.0020 <= l_occ <= 0.0023
    # a nadir cell traversed once at the reference settings reaches 0.9
    b_total = 25.0 * 2 * 128 * math.atan(25 / 170) / math.radians(120)
    assert 10 ** (b_total * l_occ) / (1 + 10 ** (b_total * l_occ)) == pytest.approx(0.9)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.booleans(), max_size=200), st.floats(1e-4, 1.0))
def test_sequential_updates_equal_batch_log_odds(readings, l_occ):
    g = ProbOccupancyGrid(TILING, l_occ)
    for r in readings:
        g.update([(4, 4)], [r])
    assert g.log_odds[4, 4] == batch_log_odds(readings, l_occ)


def test_closing_fills_one_cell_gap_and_is_superset():
    mask = np.zeros((18, 18), bool)
    mask[5, 2:8] = True
    mask[5, 9:15] = True
    closed = binary_closing(mask, 3)
    assert closed[5, 8]
    assert np.all(closed >= mask)


def test_closing_leaves_a_solid_block_unchanged():
    mask = np.zeros((18, 18), bool)
    mask[3:9, 3:9] = True
    assert np.array_equal(binary_closing(mask, 3), mask)


@settings(max_examples=60, deadline=None)
@given(arrays(bool, (18, 18)))
def test_closing_matches_bruteforce_and_is_idempotent(mask):
    once = binary_closing(mask, 3)
    assert np.array_equal(once, closing_exact(mask, 3))
    assert np.array_equal(binary_closing(once, 3), once)
    assert np.all(once >= mask)


def test_close_pins_filled_cells_at_threat_level():
    g = grid(0.1)
    cells = [(r, c) for r in range(18) for c in range(18)]
    occupied = [(r == 5 and c != 8) for r, c in cells]
    g.update(cells * 20, occupied * 20)
    closed = close(g)
    assert closed.probability()[5, 8] == pytest.approx(0.9)
    assert closed.probability()[0, 0] == g.probability()[0, 0]
    assert g.probability()[5, 8] < 0.2  # input untouched


def test_close_rejects_even_elements():
    with pytest.raises(ConfigurationError):
        close(grid(), 4)


def test_encode_thresholds():
    g = grid(0.1)
    g.update([(0, 0)] * 10, [False] * 10)  # p ~ 0.09 -> safe
    g.update([(0, 1)] * 2, [False] * 2)  # p ~ 0.39 -> threat
    g.update([(0, 2)] * 3, [True] * 3)
    sym = encode(g)
    assert [sym.label((0, i)) for i in range(4)] == ["S", "T", "T", "U"]


def test_floodfill_examples():
    sym = SymbolicMap(np.full((18, 18), THREAT, np.int8), TILING)
    assert extract_subregions(sym) == []
    checker = np.where((np.add.outer(np.arange(18), np.arange(18)) % 2) == 0, SAFE, THREAT).astype(np.int8)
    subs = extract_subregions(SymbolicMap(checker, TILING))
    assert len(subs) == 162 and all(len(s) == 1 for s in subs)
    wall = np.full((18, 18), SAFE, np.int8)
    wall[:, 9] = THREAT
    subs = extract_subregions(SymbolicMap(wall, TILING))
    assert sorted(len(s) for s in subs) == [144, 162]


@settings(max_examples=60, deadline=None)
@given(arrays(np.int8, (18, 18), elements=st.sampled_from([UNEXPLORED, SAFE, THREAT])))
def test_floodfill_matches_union_find(labels):
    subs = extract_subregions(SymbolicMap(labels, TILING))
    assert {s.cells for s in subs} == set(components_exact(labels == SAFE))


def test_min_cells_drops_small_components():
    labels = np.full((18, 18), THREAT, np.int8)
    labels[0, 0:3] = SAFE
    labels[10, 0:5] = SAFE
    subs = extract_subregions(SymbolicMap(labels, TILING), min_cells=4)
    assert [len(s) for s in subs] == [5]


def test_subregion_centroid_and_entry():
    sub = Subregion.from_cells([(0, 0), (0, 1), (0, 2)], TILING)
    assert sub.centroid == (37.5, 12.5)
    assert sub.entry_cell(TILING) == (0, 1)
    assert sub.mask((18, 18)).sum() == 3


def test_components_are_row_major_seeded():
    comps = connected_components([(3, 3), (0, 5), (0, 6)], (18, 18))
    assert [sorted(c) for c in comps] == [[(0, 5), (0, 6)], [(3, 3)]]


def test_symbolic_ascii_round_trip():
    rng = np.random.default_rng(0)
    sym = SymbolicMap(rng.integers(0, 3, (18, 18)).astype(np.int8), TILING)
    back = SymbolicMap.from_ascii(sym.to_ascii(), TILING)
    assert np.array_equal(back.labels, sym.labels)


def test_pgm_round_trip(tmp_path):
    g = grid(0.1)
    g.update([(1, 1)] * 5, [True] * 5)
    g.to_pgm(tmp_path / "p.pgm")
    img = read_pgm(tmp_path / "p.pgm")
    assert img.shape == (18, 18)
    assert img[1, 1] > 128 and img[0, 0] == 128
    write_pgm(tmp_path / "q.pgm", img)
    assert np.array_equal(read_pgm(tmp_path / "q.pgm"), img)
