import math

import numpy as np
import pytest

from ctcpp.errors import ConfigurationError, DomainError
from ctcpp.occupancy import SAFE, THREAT, SymbolicMap, Tiling
from ctcpp.sensor import (
    EvidencePlane,
    SonarSpec,
    beams_per_cell,
    cast_scan,
    cast_scans,
    forward_clearance,
    read_scans_csv,
    write_scans_csv,
)
from ctcpp.terrain import Mountain, SceneSpec, generate_scene, ground_truth_occupancy

FLAT = generate_scene(SceneSpec())
TILING = Tiling.covering(450, 450, 25)
RNG = lambda: np.random.default_rng(0)  # noqa: E731


def test_reference_beams_per_cell():
    assert beams_per_cell(SonarSpec(), 25.0, 85.0) == pytest.approx(17.8472, abs=1e-3)
    with pytest.raises(ConfigurationError):
        beams_per_cell(SonarSpec(), 25.0, 0.0)


def test_nadir_beam_hits_flat_seabed_exactly():
    spec = SonarSpec(beam_count=3, false_rate=0.0)
    scan = cast_scan(FLAT, (225.0, 225.0, 350.0), spec, RNG())
    assert scan.beam_hits[1] == pytest.approx([225.0, 225.0, 400.0])
    # the +60 degree beam lands 50 * tan(60) to the vehicle's left (+y when heading +x)
    assert scan.beam_hits[2] == pytest.approx([225.0, 225.0 + 50 * math.tan(math.radians(60)), 400.0])


def test_beams_beyond_range_return_nothing():
    spec = SonarSpec(beam_count=3, false_rate=0.0)
    scan = cast_scan(FLAT, (225.0, 225.0, 100.0), spec, RNG())
    assert np.isnan(scan.beam_hits).all()


def test_hits_lie_on_the_terrain_surface():
    hm = generate_scene(SceneSpec(seed=5, mountain_count=4))
    rng = np.random.default_rng(1)
    poses = np.column_stack([rng.uniform(20, 430, 50), rng.uniform(20, 430, 50), np.full(50, 5.0)])
    heads = np.tile([0.0, 1.0], (50, 1))
    batch = cast_scans(hm, poses, heads, SonarSpec(range=400.0), rng)
    pts = batch.hit_points()
    assert len(pts) > 0
    gap = hm.surface_depth(pts[:, 0], pts[:, 1]) - pts[:, 2]
    assert np.abs(gap).max() < 0.5


def test_noise_free_evidence_equals_ground_truth():
    hm = generate_scene(SceneSpec(mountain_count=1, mountain_params=(Mountain((225, 225), 300, 60, 3),)))
    truth = ground_truth_occupancy(hm, 170.0, TILING)
    plane = EvidencePlane(170.0, TILING, truth)
    spec = SonarSpec(false_rate=0.0)
    poses = [(x, 212.5, 85.0) for x in np.arange(12.5, 450, 25)]
    batch = cast_scans(hm, poses, [(1, 0)] * len(poses), spec, RNG(), plane)
    cells = batch.evidence_cells
    assert len(cells) > 0
    assert np.array_equal(batch.evidence_occupied, truth[cells[:, 0], cells[:, 1]])
    assert batch.evidence_occupied.any() and not batch.evidence_occupied.all()


def test_false_rate_flips_a_matching_fraction():
    truth = np.zeros(TILING.shape, bool)
    plane = EvidencePlane(170.0, TILING, truth)
    poses = [(x, 225.0, 85.0) for x in np.arange(10, 440, 5.0)]
    batch = cast_scans(FLAT, poses, [(1, 0)] * len(poses), SonarSpec(false_rate=0.1), RNG(), plane)
    assert batch.evidence_occupied.mean() == pytest.approx(0.1, abs=0.02)


def test_pose_outside_scene_is_rejected():
    with pytest.raises(DomainError):
        cast_scan(FLAT, (500.0, 10.0, 10.0), SonarSpec(), RNG())
    with pytest.raises(DomainError):
        cast_scan(FLAT, (10.0, 10.0, -1.0), SonarSpec(), RNG())


def test_sonar_spec_validation():
    for bad in (SonarSpec(range=0), SonarSpec(aperture=math.pi), SonarSpec(beam_count=1), SonarSpec(false_rate=0.6)):
        with pytest.raises(ConfigurationError):
            bad.validate()
    assert SonarSpec.from_dict(SonarSpec().to_dict()) == SonarSpec()


def test_forward_clearance():
    labels = np.full(TILING.shape, SAFE, np.int8)
    labels[0, 3] = THREAT
    sym = SymbolicMap(labels, TILING)
    assert not forward_clearance(sym, (62.5, 12.5, 85.0), (1.0, 0.0))
    assert forward_clearance(sym, (62.5, 12.5, 85.0), (-1.0, 0.0))
    assert not forward_clearance(sym, (12.5, 12.5, 85.0), (-1.0, 0.0))  # leaving the map
    labels[1, 2] = 0
    assert not forward_clearance(SymbolicMap(labels, TILING), (62.5, 12.5, 85.0), (0.0, 1.0))


def test_scan_csv_round_trip(tmp_path):
    spec = SonarSpec(beam_count=4, false_rate=0.0)
    scans = [cast_scan(FLAT, (100.0, 100.0, 300.0), spec, RNG(), timestamp=1.0),
             cast_scan(FLAT, (100.0, 105.0, 300.0), spec, RNG(), timestamp=2.0)]
    write_scans_csv(tmp_path / "s.csv", scans)
    back = read_scans_csv(tmp_path / "s.csv")
    assert len(back) == 2
    for a, b in zip(scans, back):
        assert np.allclose(a.beam_hits, b.beam_hits, equal_nan=True, atol=1e-5)
