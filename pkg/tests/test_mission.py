import math
from dataclasses import replace

import numpy as np
import pytest

from ctcpp.coverage_tree import CoverageTree, root_region
from ctcpp.errors import ConfigurationError, StateError
from ctcpp.metrics import trajectory_length
from ctcpp.mission import (
    MissionConfig,
    choose_target,
    max_delta_h,
    max_lap_width,
    run_ct_cpp,
    run_mission,
    run_tf_cpp,
    segment_cells,
    tf_waypoints,
)
from ctcpp.occupancy import SAFE, Tiling
from ctcpp.presets import desk_config, isolated_mountain_scene, random_scene
from ctcpp.terrain import Mountain, PlaneStack, SceneSpec, generate_scene

TILING = Tiling.covering(450, 450, 25)


def test_delta_h_bound_reference_values():
    assert max_delta_h(150, math.radians(120), 25) == pytest.approx(123.5862, abs=1e-3)
    assert max_lap_width(150, math.radians(120)) == pytest.approx(86.6025, abs=1e-3)
    # a second geometry, worked by hand
    expect = math.sqrt(100**2 - 2.25 * 400) - 1.5 * 20 / math.tan(math.radians(45))
    assert max_delta_h(100, math.radians(90), 20) == pytest.approx(expect)
    assert expect == pytest.approx(65.3939, abs=1e-3)


def test_lap_width_beyond_the_limit_is_rejected():
    with pytest.raises(ConfigurationError, match="2/3 r sin"):
        max_delta_h(150, math.radians(120), 90)


@pytest.mark.parametrize("delta_h", [0.0, -5.0, 130.0])
def test_config_rejects_bad_plane_spacing(delta_h):
    with pytest.raises(ConfigurationError, match="delta_h"):
        MissionConfig(delta_h=delta_h).check()


def test_spacing_bound_can_be_bypassed_for_audits():
    MissionConfig(delta_h=250.0, enforce_bounds=False).check()


def test_config_dict_round_trip():
    cfg = desk_config(random_scene(3), tf_offset=40.0, planner="tf")
    assert MissionConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.with_seed(9).scene.seed == 9


def test_segment_cells_straight_and_diagonal():
    assert segment_cells((12.5, 12.5), (87.5, 12.5), TILING) == [(0, 0), (0, 1), (0, 2), (0, 3)]
    diag = segment_cells((12.5, 12.5), (62.5, 62.5), TILING)
    # passing exactly through grid corners touches all four cells around each corner
    assert set(diag) == {(0, 0), (1, 1), (2, 2), (0, 1), (1, 0), (1, 2), (2, 1)}


def test_tf_on_a_flat_seabed_holds_constant_depth():
    cfg = desk_config(SceneSpec(), noise_free=True, planner="tf")
    hm = generate_scene(cfg.scene)
    pts = tf_waypoints(cfg, hm)
    assert np.allclose(pts[:, 2], 315.0)
    horizontal = np.hypot(*np.diff(pts[:, :2], axis=0).T).sum()
    assert horizontal == pytest.approx(18 * 450 + 17 * 25)
    trace = run_tf_cpp(cfg, hm)
    assert trace.planes is None
    assert trajectory_length(trace.poses) == pytest.approx(horizontal + 315.0, rel=1e-9)


def test_tf_respects_the_surface():
    cfg = desk_config(isolated_mountain_scene(peak=390.0), planner="tf")
    hm = generate_scene(cfg.scene)
    pts = tf_waypoints(cfg, hm)
    assert pts[:, 2].min() == 0.0
    assert np.all(pts[:, 2] <= hm.surface_depth(pts[:, 0], pts[:, 1]) + 1e-9)


def test_ct_on_a_flat_seabed_explores_every_plane_once():
    cfg = desk_config(SceneSpec(), noise_free=True)
    trace, tree = run_ct_cpp(cfg)
    tree.check()
    assert len(tree) == 4
    assert [tree.node(i).level for i in sorted(tree.nodes)] == [0, 1, 2, 3]
    assert not tree.unexplored
    for lv in range(4):
        assert len(trace.covered[lv]) == 324
    assert trace.threat_entries == 0


def test_ct_splits_planes_around_two_mountains():
    ms = (Mountain((112.5, 225.0), 340.0, 45.0, 4.0), Mountain((337.5, 225.0), 340.0, 45.0, 4.0))
    cfg = desk_config(SceneSpec(mountain_count=2, mountain_params=ms), noise_free=True)
    trace, tree = run_ct_cpp(cfg)
    tree.check()
    assert not tree.unexplored
    assert trace.threat_entries == 0
    assert len(trace.events) == len(tree)
    # the vehicle never goes below a plane it has not opened
    assert trace.poses[:, 2].max() <= PlaneStack.for_sonar(85.0, 150.0, 400.0).depths[-1] + 1e-9
    hm = generate_scene(cfg.scene)
    assert np.all(trace.poses[:, 2] < hm.surface_depth(trace.poses[:, 0], trace.poses[:, 1]))


def test_ct_is_deterministic_per_seed():
    cfg = desk_config(random_scene(4))
    a, ta = run_ct_cpp(cfg)
    b, tb = run_ct_cpp(cfg)
    assert np.array_equal(a.poses, b.poses)
    assert np.array_equal(a.point_cloud, b.point_cloud)
    assert ta.to_dict() == tb.to_dict()


def test_terrain_breaching_the_surface_is_a_configuration_error():
    cfg = desk_config(isolated_mountain_scene(peak=400.0))
    with pytest.raises(ConfigurationError):
        run_ct_cpp(cfg)


def test_choose_target_with_nothing_left():
    tree = CoverageTree(root_region(TILING))
    tree.mark_explored(0)
    with pytest.raises(StateError):
        choose_target(tree, 0, (0.0, 0.0), PlaneStack.for_sonar(85.0, 150.0, 400.0))


def test_run_mission_dispatches():
    cfg = desk_config(SceneSpec(), noise_free=True)
    trace, tree = run_mission(replace(cfg, planner="tf"))
    assert trace.planner == "tf" and tree is None
    with pytest.raises(ConfigurationError):
        run_mission(replace(cfg, planner="zigzag"))
