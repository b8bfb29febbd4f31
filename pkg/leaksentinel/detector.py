"""
Training and monitoring state machine of the leak sensor.

An acquisition source is any callable taking a time in seconds and returning a band
energy or OVERLOAD. Comparisons are strict exactly where the firmware's rules are:
x0 > threshold to confirm, 2*std < mean to accept training, 2*std > mean for noise,
S >= T to alarm.
"""
import logging
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .config import (
    CONFIRM_ACQUISITIONS,
    CONFIRM_SPACING_S,
    FrontEndConfig,
    MonitorConfig,
    Scenario,
    TrainingConfig,
)
from .dsp import OVERLOAD, Acquirer, Acquisition
from .frontend import FrontEnd
from .synth import MONITOR_PHASE, TRAINING_PHASE

logger = logging.getLogger(__name__)

AcquisitionSource = Callable[[float], Acquisition]

TIMELINE_COLUMNS = ["time_s", "event", "q", "s", "r", "alarm", "noise", "acquisitions"]


class Event(str, Enum):
    QUIET = "Q"
    LEAK = "L"
    NOISE = "R"


EVENT_ROWS = {Event.QUIET: 0, Event.LEAK: 1, Event.NOISE: 2}


class SensorState(str, Enum):
    TRAINING = "Training"
    MONITORING = "Monitoring"


class TrainingFailure(RuntimeError):
    """Training gave up after the caller's session or tick cap"""

    def __init__(self, message: str, sessions: int, ticks: int):
        super().__init__(message)
        self.sessions = sessions
        self.ticks = ticks


def population_stats(values: Sequence[float]) -> Tuple[float, float]:
    data = np.asarray(values, dtype=float)
    return float(data.mean()), float(data.std(ddof=0))


@dataclass(frozen=True)
class Baseline:
    mean: float
    std: float

    @classmethod
    def from_samples(cls, samples: Sequence[float]) -> "Baseline":
        mean, std = population_stats(samples)
        return cls(mean=mean, std=std)

    @property
    def threshold(self) -> float:
        return self.mean + self.std

    @property
    def stable(self) -> bool:
        return 2.0 * self.std < self.mean


@dataclass(frozen=True)
class TrainingResult:
    baseline: Baseline
    sessions: int
    ticks: int
    overloads: int
    end_time: float


def run_training(cfg: TrainingConfig, acquire: AcquisitionSource, start_time: float = 0.0,
                 max_sessions: Optional[int] = None, max_ticks: Optional[int] = None) -> TrainingResult:
    """
    Collect set_size energies at the training rate until a stable set is found.

    Overloaded acquisitions are discarded and retried on the next tick. Without caps
    this loops for as long as the background stays unstable.
    """
    sessions = ticks = overloads = 0
    t = start_time
    while True:
        if max_sessions is not None and sessions >= max_sessions:
            raise TrainingFailure(f"no stable baseline after {sessions} sessions", sessions, ticks)
        sessions += 1
        samples: List[float] = []
        while len(samples) < cfg.set_size:
            if max_ticks is not None and ticks >= max_ticks:
                raise TrainingFailure(f"training tick cap {max_ticks} reached", sessions, ticks)
            value = acquire(t)
            ticks += 1
            t += cfg.sample_period_s
            if value is OVERLOAD:
                overloads += 1
                logger.debug("training acquisition overloaded at t=%.1f, retrying", t)
                continue
            samples.append(value)

        baseline = Baseline.from_samples(samples)
        if baseline.stable:
            logger.info("training accepted after %d session(s): mean=%.4g std=%.4g",
                        sessions, baseline.mean, baseline.std)
            return TrainingResult(baseline, sessions, ticks, overloads, t)
        logger.info("training session %d rejected: 2*std=%.4g >= mean=%.4g",
                    sessions, 2.0 * baseline.std, baseline.mean)


@dataclass(frozen=True)
class PollResult:
    event: Event
    acquisitions: int
    energies: Tuple[float, ...] = ()


def poll_classify(baseline: Baseline, cfg: Optional[MonitorConfig], acquire: AcquisitionSource,
                  t: float) -> PollResult:
    """One polling cycle: first measurement, then the five-sample confirmation"""
    threshold = baseline.threshold
    first = acquire(t)
    if first is OVERLOAD:
        return PollResult(Event.NOISE, 1)
    if not first > threshold:
        return PollResult(Event.QUIET, 1, (first,))

    energies = [first]
    for i in range(1, CONFIRM_ACQUISITIONS):
        value = acquire(t + i * CONFIRM_SPACING_S)
        if value is OVERLOAD:
            # further processing aborts
            return PollResult(Event.NOISE, i + 1, tuple(energies))
        energies.append(value)

    mean, std = population_stats(energies)
    if 2.0 * std > mean:
        return PollResult(Event.NOISE, CONFIRM_ACQUISITIONS, tuple(energies))
    if all(x > threshold for x in energies):
        return PollResult(Event.LEAK, CONFIRM_ACQUISITIONS, tuple(energies))
    # a transient: recorded as quiet
    return PollResult(Event.QUIET, CONFIRM_ACQUISITIONS, tuple(energies))


class EventArrays:
    """Three parallel N-slot rings (quiet, leak, noise) with running sums"""

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("event arrays need at least one slot")
        self.n = n
        self.rings = np.zeros((3, n), dtype=np.uint8)
        self.rings[EVENT_ROWS[Event.QUIET]] = 1
        self.sums = [n, 0, 0]
        self.head = 0

    def push(self, event: Event) -> None:
        row = EVENT_ROWS[event]
        oldest = int(np.argmax(self.rings[:, self.head]))
        self.sums[oldest] -= 1
        self.rings[:, self.head] = 0
        self.rings[row, self.head] = 1
        self.sums[row] += 1
        self.head = (self.head + 1) % self.n

    @property
    def counts(self) -> Tuple[int, int, int]:
        q, s, r = self.sums
        return q, s, r

    def recount(self) -> Tuple[int, int, int]:
        q, s, r = (int(v) for v in self.rings.sum(axis=1))
        return q, s, r


def push_event(arrays: EventArrays, event: Event) -> EventArrays:
    arrays.push(event)
    return arrays


@dataclass(frozen=True)
class SensorStatus:
    state: SensorState
    alarm: bool
    noise_flag: bool

    @property
    def status_byte(self) -> int:
        from .protocol import encode_status
        return encode_status(self)


def evaluate_status(arrays: EventArrays, cfg: MonitorConfig,
                    state: SensorState = SensorState.MONITORING) -> SensorStatus:
    _, s, r = arrays.counts
    alarm = s >= cfg.t_alarm
    noise = s < cfg.t_alarm and s + r >= cfg.t_alarm
    return SensorStatus(state=state, alarm=alarm, noise_flag=noise)


@dataclass(frozen=True)
class TimelineRecord:
    time_s: float
    event: Event
    q: int
    s: int
    r: int
    alarm: bool
    noise: bool
    acquisitions: int


@dataclass
class Timeline:
    tau_s: float
    records: List[TimelineRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def first_time(self, attribute: str) -> Optional[float]:
        for record in self.records:
            if getattr(record, attribute):
                return record.time_s
        return None

    @property
    def first_alarm(self) -> Optional[float]:
        return self.first_time("alarm")

    @property
    def first_noise(self) -> Optional[float]:
        return self.first_time("noise")

    @property
    def alarm_count(self) -> int:
        return sum(1 for r in self.records if r.alarm)

    @property
    def verdict(self) -> Tuple[str, Optional[float]]:
        """ALARM, NOISE or QUIET with the first trigger time"""
        if self.first_alarm is not None:
            return "ALARM", self.first_alarm
        if self.first_noise is not None:
            return "NOISE", self.first_noise
        return "QUIET", None

    def to_frame(self) -> pd.DataFrame:
        rows = [
            (round(r.time_s, 6), r.event.value, r.q, r.s, r.r, int(r.alarm), int(r.noise), r.acquisitions)
            for r in self.records
        ]
        return pd.DataFrame(rows, columns=TIMELINE_COLUMNS)


class LeakSensor:
    """
    Sequential sensor state machine: Training until a stable baseline exists, then
    Monitoring with one poll per tau. The lock gives callers atomic snapshots.
    """

    def __init__(self, training: Optional[TrainingConfig] = None, monitor: Optional[MonitorConfig] = None):
        self.training = training or TrainingConfig()
        self.monitor = monitor or MonitorConfig()
        self.lock = threading.RLock()
        self.state = SensorState.TRAINING
        self.baseline: Optional[Baseline] = None
        self.arrays = EventArrays(self.monitor.n)
        self.status = SensorStatus(SensorState.TRAINING, False, False)

    def configure(self, training: TrainingConfig, monitor: MonitorConfig) -> None:
        with self.lock:
            self.training = training
            self.monitor = monitor

    def start_training(self) -> None:
        with self.lock:
            self.state = SensorState.TRAINING
            self.baseline = None
            self.arrays = EventArrays(self.monitor.n)
            self.status = SensorStatus(SensorState.TRAINING, False, False)

    def train(self, acquire: AcquisitionSource, start_time: float = 0.0,
              max_sessions: Optional[int] = None, max_ticks: Optional[int] = None) -> TrainingResult:
        result = run_training(self.training, acquire, start_time, max_sessions, max_ticks)
        self.accept_training(result)
        return result

    def accept_training(self, result: TrainingResult) -> None:
        """Install a finished training session and start monitoring"""
        with self.lock:
            self.baseline = result.baseline
            self.arrays = EventArrays(self.monitor.n)
            self.state = SensorState.MONITORING
            self.status = evaluate_status(self.arrays, self.monitor)

    def poll(self, acquire: AcquisitionSource, t: float) -> TimelineRecord:
        if self.state is not SensorState.MONITORING or self.baseline is None:
            raise RuntimeError("sensor is not monitoring")
        result = poll_classify(self.baseline, self.monitor, acquire, t)
        with self.lock:
            push_event(self.arrays, result.event)
            self.status = evaluate_status(self.arrays, self.monitor)
            q, s, r = self.arrays.counts
            return TimelineRecord(t, result.event, q, s, r, self.status.alarm, self.status.noise_flag,
                                  result.acquisitions)

    def snapshot(self) -> Tuple[SensorStatus, Tuple[int, int, int]]:
        with self.lock:
            return self.status, self.arrays.counts


def run_monitor(baseline: Baseline, cfg: MonitorConfig, scenario: Scenario, duration: float,
                front: Optional[FrontEnd] = None) -> Timeline:
    """Poll at k*tau for every k with k*tau < duration"""
    sensor = LeakSensor(monitor=cfg)
    sensor.baseline = baseline
    sensor.state = SensorState.MONITORING
    acquire = Acquirer(scenario, front, MONITOR_PHASE)
    timeline = Timeline(tau_s=cfg.tau_s)
    k = 0
    while k * cfg.tau_s < duration:
        timeline.records.append(sensor.poll(acquire, float(k * cfg.tau_s)))
        k += 1
    logger.info("monitor %s: %d polls, %d acquisitions, verdict %s",
                scenario.name, len(timeline), acquire.count, timeline.verdict[0])
    return timeline


def simulate(scenario: Scenario, training: Optional[TrainingConfig] = None,
             monitor: Optional[MonitorConfig] = None, duration: Optional[float] = None,
             front_config: Optional[FrontEndConfig] = None,
             max_sessions: Optional[int] = 50) -> Tuple[TrainingResult, Timeline]:
    """
    Train on the scenario's leak-free environment, then monitor the full scenario.

    Training has its own clock at the 1 Hz rate; monitoring time is scenario time.
    """
    training = training or TrainingConfig()
    monitor = monitor or MonitorConfig()
    front = FrontEnd(front_config)
    trainer = Acquirer(scenario.training_view(), front, TRAINING_PHASE)
    result = run_training(training, trainer, max_sessions=max_sessions)
    duration = scenario.duration_s if duration is None else duration
    return result, run_monitor(result.baseline, monitor, scenario, duration, front)
