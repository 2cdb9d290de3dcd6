import itertools

import pytest

from pseudosim.generate import GeneratorConfig, generate_scenario
from pseudosim.stage2 import TrajectoryBank, build_stage2_set


@pytest.fixture(scope="session")
def straight_scene():
    return generate_scenario(GeneratorConfig("straight", "none", 10.0, 1))


@pytest.fixture(scope="session")
def straight_traffic_scene():
    return generate_scenario(GeneratorConfig("straight", "medium", 10.0, 3))


@pytest.fixture(scope="session")
def curve_scene():
    return generate_scenario(GeneratorConfig("curve", "medium", 10.0, 3))


@pytest.fixture(scope="session")
def intersection_scene():
    return generate_scenario(GeneratorConfig("intersection", "high", 10.0, 7))


@pytest.fixture(scope="session")
def merge_scene():
    return generate_scenario(GeneratorConfig("lane-merge", "medium", 10.0, 3))


@pytest.fixture(scope="session")
def scene_suite():
    """One scenario per layout/traffic combination at medium speed."""
    out = []
    for layout, traffic in itertools.product(
        ("straight", "curve", "intersection", "lane-merge"), ("none", "medium", "high")
    ):
        out.append(generate_scenario(GeneratorConfig(layout, traffic, 10.0, 5)))
    return out


@pytest.fixture(scope="session")
def bank(scene_suite):
    return TrajectoryBank.from_scenarios(scene_suite)


@pytest.fixture(scope="session")
def stage2_sets(scene_suite, bank):
    return {sc.id: build_stage2_set(sc, bank) for sc in scene_suite}
