import numpy as np
import pytest

from conftest import leak_source
from leaksentinel.calibration import (
    JET_RANGE_RATIO,
    MATERIALS,
    SPRAY_TARGET_RANGE_M,
    TARGET_LEAK_PROBABILITY,
    band_energy_moments,
    calibrate_barrier_loss,
    calibrated_level,
    detection_probability,
    leak_probability,
    material_loss,
)
from leaksentinel.config import Scenario, ScenarioError, SourceKind, parse_scenario
from leaksentinel.dsp import acquire


@pytest.mark.slow
def test_analytic_floor_matches_simulation(front):
    scenario = Scenario(seed=31)
    mean, variance = band_energy_moments(scenario)
    energies = np.array([acquire(front, scenario, t) for t in np.arange(300) * 0.5])
    assert energies.mean() == pytest.approx(mean, rel=0.05)
    assert energies.std() == pytest.approx(np.sqrt(variance), rel=0.20)


def test_floor_is_stable_enough_to_train():
    mean, variance = band_energy_moments(Scenario())
    assert 2 * np.sqrt(variance) < mean


def test_moments_scale_with_ambient():
    loud, _ = band_energy_moments(Scenario(ambient_level_db=-30.0))
    soft, _ = band_energy_moments(Scenario(ambient_level_db=-40.0))
    # quantization noise is the only part that does not scale
    assert loud / soft == pytest.approx(10.0, rel=0.01)


def test_leak_adds_energy():
    floor, _ = band_energy_moments(Scenario())
    with_leak, _ = band_energy_moments(Scenario(sources=(leak_source(level_db=-20.0, distance_m=3.0),)))
    assert with_leak > floor


def test_leak_probability_limits():
    floor = (100.0, 400.0)
    assert leak_probability(floor, (100.0, 400.0)) < 0.01
    assert leak_probability(floor, (1000.0, 4000.0)) > 0.999


@pytest.mark.parametrize("kind, distance", [
    (SourceKind.LEAK_SPRAY, SPRAY_TARGET_RANGE_M),
    (SourceKind.LEAK_JET, SPRAY_TARGET_RANGE_M / JET_RANGE_RATIO),
])
def test_calibrated_level_hits_target(kind, distance):
    level = calibrated_level(kind)
    assert detection_probability(kind, level, distance) == pytest.approx(TARGET_LEAK_PROBABILITY, abs=1e-3)


def test_detection_falls_with_distance():
    level = calibrated_level(SourceKind.LEAK_SPRAY)
    probabilities = [detection_probability(SourceKind.LEAK_SPRAY, level, d) for d in (5.0, 10.0, 11.5, 14.0)]
    assert probabilities == sorted(probabilities, reverse=True)
    assert probabilities[0] > 0.999


def test_jet_calibrates_quieter_than_spray():
    spray = calibrated_level(SourceKind.LEAK_SPRAY)
    jet = calibrated_level(SourceKind.LEAK_JET)
    assert jet < spray


def test_ambient_kind_has_no_target():
    with pytest.raises(ValueError):
        calibrated_level(SourceKind.AMBIENT)


def test_barrier_loss_values():
    assert calibrate_barrier_loss(0.585) == pytest.approx(22.67, abs=0.01)
    assert calibrate_barrier_loss(0.735) == pytest.approx(21.06, abs=0.01)


def test_barrier_loss_must_be_positive():
    with pytest.raises(ValueError):
        calibrate_barrier_loss(10.0)


def test_material_losses_follow_measured_distances():
    losses = {name: material_loss(name) for name in MATERIALS}
    assert losses["plywood_0.6cm"] < losses["gypsum_1.3cm"] < losses["gypsum_1.3cm_insulation"]
    assert losses["gypsum_1.3cm_insulation"] == pytest.approx(losses["plywood_1.3cm"])


def test_unknown_material():
    with pytest.raises(ValueError):
        material_loss("concrete")
    with pytest.raises(ScenarioError):
        parse_scenario("sources:\n  - kind: LeakSpray\n    level_db: -20\n    path:\n"
                       "      barrier_losses_db: [concrete]\n")
