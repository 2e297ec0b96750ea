"""Named configurations used by the CLI, the examples and the test suite.

Full-scale settings mirror the reference experiment (450 x 450 x 400 m,
25 m cells, 128 beams at 1 Hz). The desk-scale variants keep the geometry but
thin the sonar to 32 beams every 5 s so a mission runs in about a second.
"""

from __future__ import annotations

from .mission import MissionConfig
from .sensor import SonarSpec
from .terrain import Mountain, SceneSpec

FULL_SONAR = SonarSpec()
DESK_SONAR = SonarSpec(beam_count=32, sample_interval=5.0)


def random_scene(seed: int) -> SceneSpec:
    """Two to six moderate mountains drawn from the default generator ranges."""
    return SceneSpec(seed=seed, mountain_count=2 + seed % 5)


def steep_scene(seed: int) -> SceneSpec:
    """Densely packed, flat-topped, near-vertical massifs just below the surface."""
    return SceneSpec(
        seed=seed,
        mountain_count=18,
        peak_range=(0.8, 0.9),
        spread_range=(40.0, 65.0),
        steepness_range=(3.0, 5.0),
    )


def isolated_mountain_scene(peak: float = 320.0, spread: float = 80.0, steepness: float = 4.0) -> SceneSpec:
    return SceneSpec(mountain_count=1, mountain_params=(Mountain((225.0, 225.0), peak, spread, steepness),))


def desk_config(scene: SceneSpec, noise_free: bool = False, **overrides) -> MissionConfig:
    sonar = DESK_SONAR
    if noise_free:
        sonar = SonarSpec(**{**sonar.__dict__, "false_rate": 0.0})
    return MissionConfig(scene=scene, sonar=sonar, seed=scene.seed, **overrides)


def full_config(scene: SceneSpec, **overrides) -> MissionConfig:
    return MissionConfig(scene=scene, sonar=FULL_SONAR, seed=scene.seed, **overrides)


PRESETS = {
    "desk": lambda seed: desk_config(random_scene(seed)),
    "desk-steep": lambda seed: desk_config(steep_scene(seed)),
    "full": lambda seed: full_config(random_scene(seed)),
    "full-steep": lambda seed: full_config(steep_scene(seed)),
}
