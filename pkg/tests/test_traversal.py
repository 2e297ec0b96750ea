import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctcpp.coverage_tree import CoverageTree, root_region
from ctcpp.occupancy import Subregion, Tiling
from ctcpp.terrain import PlaneStack
from ctcpp.traversal import (
    expand_with_dummy,
    nearest_neighbor,
    next_sequence,
    solve,
    tour_cost,
    transition_cost,
    two_opt,
    weight_matrix,
)

from oracles import open_path_exact, tsp_exact

TILING = Tiling.covering(450, 450, 25)
PLANES = PlaneStack.for_sonar(85.0, 150.0, 400.0)


def euclid(pts):
    pts = np.asarray(pts, float)
    return np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))


def tree_two_branches():
    tree = CoverageTree(root_region(TILING))
    tree.mark_explored(0)
    a, b = tree.add_children(0, [Subregion.from_cells([(0, 0)], TILING), Subregion.from_cells([(0, 4)], TILING)])
    tree.mark_explored(a)
    (c,) = tree.add_children(a, [Subregion.from_cells([(4, 0)], TILING)])
    return tree, a, b, c


def test_transition_cost_climbs_to_the_common_ancestor():
    tree, a, b, c = tree_two_branches()
    # c (level 2) to b (level 1) through the root plane: up 170, across, down 85
    assert transition_cost(tree, c, b, PLANES) == pytest.approx(170 + np.hypot(100, 100) + 85)
    # parent to child: no climb, only the descent
    assert transition_cost(tree, a, c, PLANES) == pytest.approx(100 + 85)
    assert transition_cost(tree, c, c, PLANES) == 0.0
    assert transition_cost(tree, c, b, PLANES, position=(112.5, 12.5)) == pytest.approx(170 + 0 + 85)


def test_weight_matrix_is_symmetric_with_zero_diagonal():
    tree, a, b, c = tree_two_branches()
    w = weight_matrix(tree, a, [b, c], PLANES)
    assert w.shape == (3, 3)
    assert np.allclose(w, w.T) and not np.diag(w).any()


def test_dummy_vertex_layout():
    w = euclid([(0, 0), (3, 4), (6, 8)])
    we = expand_with_dummy(w)
    assert we.shape == (4, 4)
    assert we[3, 0] == we[0, 3] == 0.0
    big = we[3, 1]
    assert big == we[1, 3] == we[3, 2] > 1e6 * 10
    with pytest.raises(ValueError):
        expand_with_dummy(np.zeros((2, 3)))


def test_nearest_neighbor_on_a_line():
    w = euclid([(0, 0), (5, 0), (1, 0), (2, 0)])
    order = nearest_neighbor(expand_with_dummy(w))
    assert order == [4, 0, 2, 3, 1, 4]


def test_two_opt_untangles_a_crossing():
    pts = [(0, 0), (2, 1), (1, 1), (3, 0)]
    we = expand_with_dummy(euclid(pts))
    bad = [4, 0, 2, 1, 3, 4]
    better, swaps = two_opt(we, bad)
    assert tour_cost(we, better) <= tour_cost(we, bad)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 8), st.integers(0, 10_000))
def test_solver_reaches_the_start_and_stays_close_to_optimal(eta, seed):
    pts = np.random.default_rng(seed).uniform(0, 450, (eta, 2))
    w = euclid(pts)
    tour = solve(expand_with_dummy(w))
    seq = next_sequence(tour)
    assert sorted(seq) == list(range(1, eta))
    path = [0] + seq
    cost = sum(w[a, b] for a, b in zip(path, path[1:]))
    assert cost == pytest.approx(tour.path_cost)
    best = open_path_exact(w, 0)
    assert cost <= 1.5 * best + 1e-9
    # the expanded tour optimum equals the open path optimum
    assert tsp_exact(expand_with_dummy(w)) - tour.infinity == pytest.approx(best)


def test_next_sequence_handles_reversed_tours():
    w = euclid([(0, 0), (1, 0), (2, 0)])
    tour = solve(expand_with_dummy(w))
    tour.order = tour.order[::-1]
    assert next_sequence(tour) == [1, 2]


def test_tour_log_json():
    w = euclid([(0, 0), (1, 0), (2, 0), (0, 5)])
    text = solve(expand_with_dummy(w)).to_json()
    assert "final_tour" in text and "initial_cost" in text
