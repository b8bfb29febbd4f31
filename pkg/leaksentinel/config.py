"""
Configuration layer for leaksentinel.

Typed models for every tunable part of the sensor model, scenario file loading
(YAML with line-accurate diagnostics) and process settings from the environment.
"""
import math
import os
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

# Acquisition constants shared by the whole signal path
SAMPLE_RATE = 33333.0
FRAME_SIZE = 256
FRAME_DURATION_S = FRAME_SIZE / SAMPLE_RATE
BAND_LOW_HZ = 7000.0
BAND_HIGH_HZ = 11500.0
BAND_BINS = 34
CONFIRM_SPACING_S = 0.045
CONFIRM_ACQUISITIONS = 5
REFERENCE_DISTANCE_M = 1.0
MIN_DISTANCE_M = 0.1

SCENARIO_DIR = Path(__file__).parent / "data" / "scenarios"


class ConfigError(ValueError):
    """Raised when a configuration value is out of range"""


class ScenarioError(ConfigError):
    """Raised when a scenario file is malformed; names the key and line"""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None,
                 path: Optional[str] = None):
        self.key = key
        self.line = line
        self.path = path
        where = []
        if path:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if key:
            where.append(f"key '{key}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# ---------------------------------------------------------------------------
# Signal sources and propagation
# ---------------------------------------------------------------------------

class SourceKind(str, Enum):
    LEAK_SPRAY = "LeakSpray"
    LEAK_JET = "LeakJet"
    AMBIENT = "Ambient"
    IMPULSE = "Impulse"
    PERSISTENT_NOISE = "PersistentNoise"


class SpectralShape(str, Enum):
    FLAT_ABOVE_6KHZ = "FlatAbove6kHz"
    LOW_PASS_JET = "LowPassJet"
    BROADBAND = "Broadband"
    CLICK = "Click"


DEFAULT_SHAPES = {
    SourceKind.LEAK_SPRAY: SpectralShape.FLAT_ABOVE_6KHZ,
    SourceKind.LEAK_JET: SpectralShape.LOW_PASS_JET,
    SourceKind.AMBIENT: SpectralShape.BROADBAND,
    SourceKind.IMPULSE: SpectralShape.CLICK,
    SourceKind.PERSISTENT_NOISE: SpectralShape.BROADBAND,
}

CALIBRATED = "calibrated"


class AcousticSource(_Model):
    """One sound emitter; level is the 7-11.5 kHz band level in dB re full-scale at 1 m"""

    kind: SourceKind
    level_db: Union[float, str]
    spectral_shape: Optional[SpectralShape] = None
    active_interval: Tuple[float, float] = (0.0, math.inf)
    fluctuation_db: float = Field(default=0.0, ge=0.0)
    period_s: Optional[float] = Field(default=None, gt=0.0)
    during_training: bool = False

    @field_validator("level_db")
    @classmethod
    def _check_level(cls, value: Union[float, str]) -> Union[float, str]:
        if isinstance(value, str):
            if value != CALIBRATED:
                raise ValueError(f"level_db must be a number or '{CALIBRATED}'")
            return value
        if not math.isfinite(value):
            raise ValueError("level_db must be finite")
        return float(value)

    @model_validator(mode="after")
    def _check_source(self) -> "AcousticSource":
        t_start, t_end = self.active_interval
        if not t_start < t_end:
            raise ValueError("active_interval requires t_start < t_end")
        if self.level_db == CALIBRATED and self.kind not in (SourceKind.LEAK_SPRAY, SourceKind.LEAK_JET):
            raise ValueError("only LeakSpray and LeakJet sources have a calibrated level")
        if self.spectral_shape is None:
            object.__setattr__(self, "spectral_shape", DEFAULT_SHAPES[self.kind])
        return self

    @property
    def level(self) -> float:
        """Numeric level; calibrated levels are resolved when the scenario is loaded"""
        if isinstance(self.level_db, str):
            raise ConfigError("source level has not been resolved from calibration")
        return self.level_db

    def is_active(self, t0: float) -> bool:
        t_start, t_end = self.active_interval
        return t_start <= t0 < t_end


class PropagationPath(_Model):
    distance_m: float = Field(default=REFERENCE_DISTANCE_M, ge=MIN_DISTANCE_M)
    barrier_losses_db: Tuple[float, ...] = ()

    @field_validator("barrier_losses_db", mode="before")
    @classmethod
    def _resolve_materials(cls, value: Any) -> Any:
        if value is None:
            return ()
        resolved = []
        for item in value:
            if isinstance(item, str):
                # wall material names resolve to their calibrated insertion loss
                from .calibration import material_loss
                resolved.append(material_loss(item))
            else:
                resolved.append(item)
        return tuple(resolved)

    @field_validator("barrier_losses_db")
    @classmethod
    def _check_losses(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        for loss in value:
            if not math.isfinite(loss) or loss < 0:
                raise ValueError("barrier losses must be finite and non-negative")
        return value


class ScenarioSource(AcousticSource):
    """A source placed in a scenario together with its propagation path"""

    path: PropagationPath = PropagationPath()


class Scenario(_Model):
    name: str = "scenario"
    sources: Tuple[ScenarioSource, ...] = ()
    duration_s: float = Field(default=600.0, gt=0.0)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    ambient_level_db: float = -40.0
    # suggested detection window for this environment
    monitor: Optional["MonitorConfig"] = None

    @field_validator("ambient_level_db")
    @classmethod
    def _check_ambient(cls, value: float) -> float:
        if math.isnan(value) or value == math.inf:
            raise ValueError("ambient_level_db must be finite or -inf")
        return value

    def placements(self) -> Iterator[Tuple[ScenarioSource, PropagationPath]]:
        for source in self.sources:
            yield source, source.path

    def with_seed(self, seed: int) -> "Scenario":
        return Scenario.model_validate({**self.model_dump(), "seed": seed})

    def training_view(self) -> "Scenario":
        """The leak-free environment heard while training"""
        kept = tuple(s for s in self.sources if s.during_training)
        return self.model_copy(update={"sources": kept})


# ---------------------------------------------------------------------------
# Front end
# ---------------------------------------------------------------------------

class ResonatorGeometry(_Model):
    """Chamber over the microphone; SI units throughout"""

    L: float = Field(default=3.9e-3, gt=0.0)
    W: float = Field(default=3.2e-3, gt=0.0)
    H: float = Field(default=3.5e-3, gt=0.0)
    a: float = Field(default=1.0e-3, gt=0.0)
    t: float = Field(default=1.0e-3, gt=0.0)
    v: float = Field(default=343.0, gt=0.0)

    @property
    def volume(self) -> float:
        return self.L * self.W * self.H

    @property
    def t_eff(self) -> float:
        # Rayleigh end correction
        return self.t + 1.7 * self.a


class AnalogChain(_Model):
    pre_gain_db: float = 40.0
    hp_cutoff_hz: float = Field(default=8000.0, gt=0.0)
    hp_order: int = Field(default=4, ge=2)
    post_gain_db: float = 23.0

    @field_validator("hp_order")
    @classmethod
    def _even_order(cls, value: int) -> int:
        if value % 2:
            raise ValueError("hp_order must be even (cascade of second-order stages)")
        return value

    @property
    def total_gain_db(self) -> float:
        return self.pre_gain_db + self.post_gain_db


class AdcModel(_Model):
    bits: int = Field(default=12, ge=2, le=24)
    full_scale: float = Field(default=10 ** (63.0 / 20.0), gt=0.0)
    rate: float = Field(default=SAMPLE_RATE, gt=0.0)

    @property
    def max_code(self) -> int:
        return 2 ** self.bits - 1

    @property
    def mid_code(self) -> int:
        return 2 ** (self.bits - 1)


class FrontEndConfig(_Model):
    geometry: ResonatorGeometry = ResonatorGeometry()
    peak_gain: float = Field(default=2.0, ge=1.0)
    direct_gain: float = Field(default=1.0, ge=0.0)
    analog: AnalogChain = AnalogChain()
    adc: AdcModel = AdcModel()


# ---------------------------------------------------------------------------
# Detector and power
# ---------------------------------------------------------------------------

class TrainingConfig(_Model):
    set_size: int = Field(default=30, ge=10, le=255)
    sample_period_s: float = Field(default=1.0, gt=0.0)


class MonitorConfig(_Model):
    n: int = Field(default=20, ge=10, le=255)
    tau_s: int = Field(default=2, ge=1, le=30)
    t_alarm: int = Field(default=17, ge=1)

    @model_validator(mode="after")
    def _check_threshold(self) -> "MonitorConfig":
        if self.t_alarm > self.n:
            raise ValueError("t_alarm must not exceed n")
        return self

    @property
    def window_s(self) -> int:
        return self.n * self.tau_s

    @property
    def threshold_advisory(self) -> bool:
        """True when T sits in the recommended 80-90 percent of N"""
        return 0.8 * self.n <= self.t_alarm <= 0.9 * self.n


Scenario.model_rebuild()


WINDOW_PRESETS: Dict[str, MonitorConfig] = {
    # unoccupied, quiet spaces: about 2 minutes
    "attic": MonitorConfig(n=24, tau_s=5, t_alarm=20),
    # occupied residence: about 20 minutes
    "residence": MonitorConfig(n=120, tau_s=10, t_alarm=102),
}


class PowerParams(_Model):
    sleep_power_w: float = Field(default=12e-6, gt=0.0)
    acq_energy_j: float = Field(default=140e-6, gt=0.0)
    peak_current_a: float = Field(default=3.2e-3, gt=0.0)
    battery_capacity_j: float = Field(default=12960.0, gt=0.0)
    derating: float = Field(default=0.8, gt=0.0, le=1.0)
    overhead_s: float = Field(default=0.0, ge=0.0)


# ---------------------------------------------------------------------------
# Process settings
# ---------------------------------------------------------------------------

class Settings:
    """Environment-driven settings; a .env file in the working directory is honoured"""

    def __init__(self, env_file: Optional[str] = None):
        load_dotenv(env_file, override=False)
        self.out_dir = Path(os.getenv("LEAKSENTINEL_OUT_DIR", "out"))
        default_db = Path.home() / ".leaksentinel" / "runs.db"
        self.db_path = Path(os.getenv("LEAKSENTINEL_DB", str(default_db)))
        self.log_level = os.getenv("LEAKSENTINEL_LOG_LEVEL", "WARNING").upper()
        try:
            self.jobs = int(os.getenv("LEAKSENTINEL_JOBS", "1"))
        except ValueError:
            raise ConfigError("LEAKSENTINEL_JOBS must be an integer")


# ---------------------------------------------------------------------------
# Scenario files
# ---------------------------------------------------------------------------

def _line_map(node: yaml.Node, prefix: Tuple[Any, ...] = ()) -> Dict[Tuple[Any, ...], int]:
    """Map every key path in a composed YAML tree to its 1-based line"""
    lines: Dict[Tuple[Any, ...], int] = {prefix: node.start_mark.line + 1}
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            path = prefix + (key_node.value,)
            lines.update(_line_map(value_node, path))
            lines[path] = key_node.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for index, item in enumerate(node.value):
            lines.update(_line_map(item, prefix + (index,)))
    return lines


_UNION_TAGS = {"float", "int", "str", "bool"}


def _locate(loc: Tuple[Any, ...], lines: Dict[Tuple[Any, ...], int]) -> Tuple[str, Optional[int]]:
    # Pydantic inserts union-member tags into loc; drop anything not in the document
    path: Tuple[Any, ...] = ()
    for part in loc:
        if path + (part,) in lines:
            path = path + (part,)
    key = ".".join(str(p) for p in loc if p not in _UNION_TAGS)
    return key or "<root>", lines.get(path)


def _resolve_calibrated(data: Dict[str, Any]) -> Dict[str, Any]:
    sources = data.get("sources") or []
    if not isinstance(sources, list):
        return data
    if not any(isinstance(s, dict) and s.get("level_db") == CALIBRATED for s in sources):
        return data
    from .calibration import calibrated_level
    resolved = []
    for source in sources:
        if isinstance(source, dict) and source.get("level_db") == CALIBRATED:
            try:
                kind = SourceKind(source.get("kind"))
            except ValueError:
                kind = None
            if kind not in (SourceKind.LEAK_SPRAY, SourceKind.LEAK_JET):
                # left as text; the model rejects it with a located error
                resolved.append(source)
                continue
            source = dict(source, level_db=calibrated_level(kind))
        resolved.append(source)
    return dict(data, sources=resolved)


def parse_scenario(text: str, name: Optional[str] = None, path: Optional[str] = None) -> Scenario:
    """Parse scenario text; raises ScenarioError naming the offending key and line"""
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ScenarioError(f"invalid YAML: {getattr(e, 'problem', e)}", line=line, path=path)

    if root is None or data is None:
        data, lines = {}, {}
    elif not isinstance(data, dict):
        raise ScenarioError("scenario must be a mapping", line=1, path=path)
    else:
        lines = _line_map(root)

    if name is not None and "name" not in data:
        data = dict(data, name=name)

    try:
        return Scenario.model_validate(_resolve_calibrated(data))
    except ValidationError as e:
        first = e.errors()[0]
        key, line = _locate(tuple(first["loc"]), lines)
        raise ScenarioError(first["msg"], key=key, line=line, path=path)


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Load a scenario file; bare names resolve against the bundled corpus"""
    file_path = Path(path)
    if not file_path.exists():
        bundled = SCENARIO_DIR / file_path.name
        if bundled.exists():
            file_path = bundled
        elif (SCENARIO_DIR / f"{file_path.name}.scn").exists():
            file_path = SCENARIO_DIR / f"{file_path.name}.scn"
        else:
            raise ScenarioError("scenario file not found", path=str(path))
    text = file_path.read_text(encoding="utf-8")
    return parse_scenario(text, name=file_path.stem, path=str(file_path))


def bundled_scenarios() -> List[str]:
    return sorted(p.stem for p in SCENARIO_DIR.glob("*.scn"))
