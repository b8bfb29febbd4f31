import pytest

from leaksentinel.config import MonitorConfig, SourceKind, TrainingConfig
from leaksentinel.sweeps import (
    DetectionVote,
    bisect_range,
    leak_scenario,
    material_sweep,
    standoff_sweep,
)


class Recorder:
    def __init__(self, edge):
        self.edge = edge
        self.calls = []

    def __call__(self, distance):
        self.calls.append(distance)
        return distance <= self.edge


def test_bisect_finds_edge():
    detects = Recorder(7.3)
    found = bisect_range(detects, 1.0, 30.0, 0.25)
    assert found <= 7.3 < found + 0.25
    assert detects.calls[:2] == [1.0, 30.0]


def test_bisect_edges():
    assert bisect_range(Recorder(0.5), 1.0, 30.0, 0.25) is None
    assert bisect_range(Recorder(50.0), 1.0, 30.0, 0.25) == 30.0


def test_leak_scenario_is_calibrated():
    scenario = leak_scenario(SourceKind.LEAK_JET, 2.0, seed=4, barrier_losses_db=(3.0,))
    (source,) = scenario.sources
    assert source.kind is SourceKind.LEAK_JET
    assert source.path.barrier_losses_db == (3.0,)
    assert scenario.seed == 4


def test_vote_needs_two_thirds_of_seeds():
    vote = DetectionVote(SourceKind.LEAK_SPRAY, range(3), TrainingConfig(), MonitorConfig())
    assert vote.required == 2
    assert vote(3.0)
    assert vote(40.0) is False
    assert [row[0] for row in vote.history] == [3.0, 40.0]


@pytest.mark.slow
def test_spray_range_near_target():
    result = standoff_sweep("spray", seeds=3)
    assert 10.0 <= result.range_m <= 13.0
    assert result.placements["distance_m"].is_monotonic_increasing


@pytest.mark.slow
def test_jet_range_is_a_third_of_spray():
    spray = standoff_sweep("spray", seeds=3).range_m
    jet = standoff_sweep("jet", seeds=3).range_m
    assert jet <= spray / 3


@pytest.mark.slow
def test_material_ordering():
    table = material_sweep(seeds=3).placements.set_index("material")
    found = table["detection_distance_m"]
    assert found["plywood_0.6cm"] > found["gypsum_1.3cm"] > found["gypsum_1.3cm_insulation"]
