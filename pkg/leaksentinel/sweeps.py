"""
Detection-range sweeps.

A distance counts as detected when at least two thirds of the seeds alarm within
1.5 * N * tau of monitor start. The range is found by bisection, and seeds at each
distance run in parallel through joblib.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import pandas as pd
from joblib import Parallel, delayed

from .calibration import MATERIAL_SETBACK_M, MATERIALS, calibrated_level, material_loss
from .config import (
    MonitorConfig,
    PropagationPath,
    Scenario,
    ScenarioSource,
    SourceKind,
    TrainingConfig,
)
from .detector import simulate

logger = logging.getLogger(__name__)

SOURCE_KINDS = {"spray": SourceKind.LEAK_SPRAY, "jet": SourceKind.LEAK_JET}
WINDOW_FACTOR = 1.5

STANDOFF_COLUMNS = ["distance_m", "detections", "seeds", "detected"]
MATERIAL_COLUMNS = ["material", "label", "barrier_loss_db", "measured_min_m", "measured_max_m",
                    "detection_distance_m"]


@dataclass
class SweepResult:
    kind: str
    range_m: Optional[float]
    placements: pd.DataFrame


def leak_scenario(kind: SourceKind, distance_m: float, seed: int,
                  barrier_losses_db: Tuple[float, ...] = ()) -> Scenario:
    source = ScenarioSource(
        kind=kind,
        level_db=calibrated_level(kind),
        path=PropagationPath(distance_m=distance_m, barrier_losses_db=barrier_losses_db),
    )
    return Scenario(name=f"{kind.value} at {distance_m:.2f} m", sources=(source,), seed=seed)


def alarms_in_window(scenario: Scenario, training: TrainingConfig, monitor: MonitorConfig) -> bool:
    window = WINDOW_FACTOR * monitor.n * monitor.tau_s
    _, timeline = simulate(scenario, training, monitor, duration=window)
    return timeline.first_alarm is not None


class DetectionVote:
    """Majority vote over seeds for one source placement"""

    def __init__(self, kind: SourceKind, seeds: Sequence[int], training: TrainingConfig,
                 monitor: MonitorConfig, barrier_losses_db: Tuple[float, ...] = (), n_jobs: int = 1):
        self.kind = kind
        self.seeds = list(seeds)
        self.training = training
        self.monitor = monitor
        self.barrier_losses_db = barrier_losses_db
        self.n_jobs = n_jobs
        self.required = math.ceil(2 * len(self.seeds) / 3)
        self.history: List[Tuple[float, int, int, bool]] = []

    def __call__(self, distance_m: float) -> bool:
        scenarios = [leak_scenario(self.kind, distance_m, s, self.barrier_losses_db) for s in self.seeds]
        votes = Parallel(n_jobs=self.n_jobs)(
            delayed(alarms_in_window)(sc, self.training, self.monitor) for sc in scenarios
        )
        detections = sum(bool(v) for v in votes)
        detected = detections >= self.required
        self.history.append((distance_m, detections, len(self.seeds), detected))
        logger.debug("%s at %.2f m: %d/%d seeds alarmed", self.kind.value, distance_m, detections, len(self.seeds))
        return detected


def bisect_range(detects: Callable[[float], bool], low: float, high: float, resolution: float) -> Optional[float]:
    """Largest detected distance, to within resolution; None if even `low` is missed"""
    if not detects(low):
        return None
    if detects(high):
        return high
    while high - low > resolution:
        middle = 0.5 * (low + high)
        if detects(middle):
            low = middle
        else:
            high = middle
    return low


def _placement_frame(history) -> pd.DataFrame:
    frame = pd.DataFrame(history, columns=STANDOFF_COLUMNS)
    return frame.sort_values("distance_m", kind="stable").reset_index(drop=True)


def standoff_sweep(source: str = "spray", seeds: int = 3, base_seed: int = 0,
                   training: Optional[TrainingConfig] = None, monitor: Optional[MonitorConfig] = None,
                   low: float = 1.0, high: float = 30.0, resolution: float = 0.25,
                   n_jobs: int = 1) -> SweepResult:
    kind = SOURCE_KINDS[source]
    vote = DetectionVote(kind, range(base_seed, base_seed + seeds), training or TrainingConfig(),
                         monitor or MonitorConfig(), n_jobs=n_jobs)
    range_m = bisect_range(vote, low, high, resolution)
    logger.info("%s standoff range: %s m", source, range_m)
    return SweepResult(kind=source, range_m=range_m, placements=_placement_frame(vote.history))


def _material_distance(name: str, seeds: Sequence[int], training: TrainingConfig, monitor: MonitorConfig,
                       high: float, resolution: float) -> Optional[float]:
    loss = material_loss(name)
    vote = DetectionVote(SourceKind.LEAK_SPRAY, seeds, training, monitor, barrier_losses_db=(loss,))
    # bisect over the distance from the surface; the leak sits behind the panel
    surface = bisect_range(lambda d: vote(d + MATERIAL_SETBACK_M), 0.0, high, resolution)
    return surface


def material_sweep(seeds: int = 3, base_seed: int = 0, training: Optional[TrainingConfig] = None,
                   monitor: Optional[MonitorConfig] = None, high: float = 3.0, resolution: float = 0.01,
                   n_jobs: int = 1) -> SweepResult:
    training = training or TrainingConfig()
    monitor = monitor or MonitorConfig()
    seed_list = list(range(base_seed, base_seed + seeds))
    names = list(MATERIALS)
    distances = Parallel(n_jobs=n_jobs)(
        delayed(_material_distance)(name, seed_list, training, monitor, high, resolution) for name in names
    )
    rows = []
    for name, distance in zip(names, distances):
        material = MATERIALS[name]
        rows.append((name, material.label, round(material_loss(name), 3), material.min_distance_m,
                     material.max_distance_m, None if distance is None else round(distance, 3)))
    table = pd.DataFrame(rows, columns=MATERIAL_COLUMNS)
    return SweepResult(kind="material", range_m=None, placements=table)
