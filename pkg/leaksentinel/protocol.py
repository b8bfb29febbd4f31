"""
Controller-facing command interface of the sensor.

Frames are one opcode byte plus at most one payload byte. Every opcode answers: data
bytes, ACK (0x00), 0xEE for a bad payload or 0xEF for an unknown opcode. Configuration
writes are staged and only take effect on START_TRAINING (or SOFT_RESET).
"""
import logging
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Dict, Iterable, List, Optional, Tuple

from .config import MonitorConfig, Scenario, TrainingConfig
from .detector import LeakSensor, SensorState, SensorStatus, TrainingFailure, TrainingResult, run_training
from .dsp import Acquirer
from .frontend import FrontEnd
from .synth import MONITOR_PHASE, TRAINING_PHASE

logger = logging.getLogger(__name__)

ACK = 0x00
ERR_RANGE = 0xEE
ERR_UNKNOWN = 0xEF

STATUS_ALARM = 0x01
STATUS_NOISE = 0x02
STATUS_MONITORING = 0x04
STATUS_TRAINING = 0x08

TRAINING_SESSION_CAP = 50


class Opcode(IntEnum):
    READ_STATUS = 0x01
    READ_COUNTS = 0x02
    SET_N = 0x10
    SET_TAU = 0x11
    SET_T = 0x12
    SET_TRAINSIZE = 0x13
    START_TRAINING = 0x20
    SOFT_RESET = 0x21


def encode_status(status: SensorStatus) -> int:
    byte = 0
    if status.alarm:
        byte |= STATUS_ALARM
    if status.noise_flag:
        byte |= STATUS_NOISE
    if status.state is SensorState.MONITORING:
        byte |= STATUS_MONITORING
    else:
        byte |= STATUS_TRAINING
    return byte


def decode_status(byte: int) -> SensorStatus:
    if byte & 0xF0:
        raise ValueError(f"reserved status bits set in {byte:#04x}")
    state = SensorState.MONITORING if byte & STATUS_MONITORING else SensorState.TRAINING
    return SensorStatus(state=state, alarm=bool(byte & STATUS_ALARM), noise_flag=bool(byte & STATUS_NOISE))


def decode_counts(data: bytes) -> Tuple[int, int, int]:
    if len(data) != 3:
        raise ValueError("counts response is three bytes")
    return data[0], data[1], data[2]


@dataclass(frozen=True)
class CommandFrame:
    opcode: int
    payload: bytes = b""

    @classmethod
    def from_bytes(cls, data: bytes) -> "CommandFrame":
        if not data:
            raise ValueError("empty frame")
        return cls(opcode=data[0], payload=bytes(data[1:]))

    def to_bytes(self) -> bytes:
        return bytes([self.opcode]) + self.payload


@dataclass
class PendingConfig:
    n: int
    tau_s: int
    t_alarm: int
    set_size: int

    @classmethod
    def from_configs(cls, training: TrainingConfig, monitor: MonitorConfig) -> "PendingConfig":
        return cls(n=monitor.n, tau_s=monitor.tau_s, t_alarm=monitor.t_alarm, set_size=training.set_size)

    def build(self) -> Tuple[TrainingConfig, MonitorConfig]:
        return (TrainingConfig(set_size=self.set_size),
                MonitorConfig(n=self.n, tau_s=self.tau_s, t_alarm=self.t_alarm))


@dataclass(frozen=True)
class LineEdge:
    time_s: float
    line: str
    level: int


@dataclass
class SensorDevice:
    """A LeakSensor behind its register interface, with the alarm and noise lines"""

    sensor: LeakSensor = field(default_factory=LeakSensor)
    edges: List[LineEdge] = field(default_factory=list)
    training_requested: bool = True

    def __post_init__(self):
        self.pending = PendingConfig.from_configs(self.sensor.training, self.sensor.monitor)
        self._levels = {"alarm": 0, "noise": 0}
        self._handlers: Dict[int, Callable[[bytes], bytes]] = {
            Opcode.READ_STATUS: self._read_status,
            Opcode.READ_COUNTS: self._read_counts,
            Opcode.SET_N: self._set_n,
            Opcode.SET_TAU: self._set_tau,
            Opcode.SET_T: self._set_t,
            Opcode.SET_TRAINSIZE: self._set_trainsize,
            Opcode.START_TRAINING: self._start_training,
            Opcode.SOFT_RESET: self._soft_reset,
        }

    def handle(self, frame: CommandFrame) -> bytes:
        handler = self._handlers.get(frame.opcode)
        if handler is None:
            logger.debug("unknown opcode %#04x", frame.opcode)
            return bytes([ERR_UNKNOWN])
        with self.sensor.lock:
            return handler(frame.payload)

    # reads

    def _read_status(self, payload: bytes) -> bytes:
        if payload:
            return bytes([ERR_RANGE])
        status, _ = self.sensor.snapshot()
        return bytes([encode_status(status)])

    def _read_counts(self, payload: bytes) -> bytes:
        if payload:
            return bytes([ERR_RANGE])
        _, counts = self.sensor.snapshot()
        return bytes(counts)

    # staged configuration

    def _set_value(self, payload: bytes, low: int, high: int, attribute: str) -> bytes:
        if len(payload) != 1 or not low <= payload[0] <= high:
            return bytes([ERR_RANGE])
        setattr(self.pending, attribute, payload[0])
        return bytes([ACK])

    def _set_n(self, payload: bytes) -> bytes:
        return self._set_value(payload, max(10, self.pending.t_alarm), 255, "n")

    def _set_tau(self, payload: bytes) -> bytes:
        return self._set_value(payload, 1, 30, "tau_s")

    def _set_t(self, payload: bytes) -> bytes:
        return self._set_value(payload, 1, self.pending.n, "t_alarm")

    def _set_trainsize(self, payload: bytes) -> bytes:
        return self._set_value(payload, 10, 255, "set_size")

    # control

    def _start_training(self, payload: bytes) -> bytes:
        if payload:
            return bytes([ERR_RANGE])
        self.sensor.configure(*self.pending.build())
        self.sensor.start_training()
        self.training_requested = True
        return bytes([ACK])

    def _soft_reset(self, payload: bytes) -> bytes:
        if payload:
            return bytes([ERR_RANGE])
        self.pending = PendingConfig.from_configs(TrainingConfig(), MonitorConfig())
        return self._start_training(b"")

    def update_lines(self, t: float) -> List[LineEdge]:
        """Compare line levels with the last evaluation and record edges"""
        status, _ = self.sensor.snapshot()
        new_edges = []
        for line, level in (("alarm", int(status.alarm)), ("noise", int(status.noise_flag))):
            if level != self._levels[line]:
                edge = LineEdge(t, line, level)
                self._levels[line] = level
                new_edges.append(edge)
                logger.info("%s line %s at t=%.3f s", line, "rising" if level else "falling", t)
        self.edges.extend(new_edges)
        return new_edges


def handle_command(device: SensorDevice, frame: CommandFrame) -> bytes:
    return device.handle(frame)


def alarm_line(device: SensorDevice) -> int:
    status, _ = device.sensor.snapshot()
    return int(status.alarm)


def format_transaction(frame: CommandFrame, response: bytes) -> List[str]:
    return ["> " + frame.to_bytes().hex(" "), "< " + response.hex(" ")]


class HostEmulator:
    """
    Replays a batch script against a device listening to a scenario.

    Script lines are hex bytes (one command frame), `wait <seconds>` to let simulated
    time pass, or comments starting with '#'. Training starts at the START_TRAINING
    time on the scenario's leak-free view and the sensor reports Training until the
    last training sample has been taken.
    """

    def __init__(self, scenario: Scenario, device: Optional[SensorDevice] = None, front: Optional[FrontEnd] = None):
        self.scenario = scenario
        self.device = device or SensorDevice()
        self.front = front or FrontEnd()
        self.now = 0.0
        self.next_poll: Optional[float] = None
        self.trace: List[str] = []
        self._monitor = Acquirer(scenario, self.front, MONITOR_PHASE)
        self._trainer = Acquirer(scenario.training_view(), self.front, TRAINING_PHASE)
        self._training_start = 0.0
        self._training: Optional[TrainingResult] = None

    def _trace_edges(self, edges: Iterable[LineEdge]) -> None:
        for edge in edges:
            self.trace.append(f"! {edge.line} {edge.level} {edge.time_s:.3f}")

    def send(self, data: bytes) -> bytes:
        frame = CommandFrame.from_bytes(data)
        response = self.device.handle(frame)
        self.trace.extend(format_transaction(frame, response))
        if frame.opcode in (Opcode.START_TRAINING, Opcode.SOFT_RESET) and response == bytes([ACK]):
            self.next_poll = None
            self._training = None
            self._training_start = self.now
            self._trace_edges(self.device.update_lines(self.now))
        return response

    def wait(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot wait a negative time")
        target = self.now + seconds
        sensor = self.device.sensor
        if self.device.training_requested:
            if self._training is None:
                try:
                    self._training = run_training(sensor.training, self._trainer, self._training_start,
                                                  max_sessions=TRAINING_SESSION_CAP)
                except TrainingFailure as e:
                    # stays in Training until the host starts a new session
                    logger.warning("training failed: %s", e)
                    self.device.training_requested = False
                    self.now = target
                    return
            if target < self._training.end_time:
                self.now = target
                return
            sensor.accept_training(self._training)
            self.device.training_requested = False
            self.next_poll = self._training.end_time
            self._training = None
        while self.next_poll is not None and self.next_poll < target:
            sensor.poll(self._monitor, self.next_poll)
            self._trace_edges(self.device.update_lines(self.next_poll))
            self.next_poll += sensor.monitor.tau_s
        self.now = max(target, self.now)

    def run_script(self, lines: Iterable[str]) -> List[str]:
        for number, raw in enumerate(lines, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.lower().startswith("wait"):
                parts = line.split()
                try:
                    self.wait(float(parts[1]))
                except (IndexError, ValueError):
                    raise ValueError(f"line {number}: expected 'wait <seconds>'")
                continue
            try:
                data = bytes.fromhex(line)
            except ValueError:
                raise ValueError(f"line {number}: not a hex frame: {line!r}")
            self.send(data)
        return self.trace
