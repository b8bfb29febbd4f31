"""
Analytic band-energy statistics and source-level calibration.

A frame is a zero-mean Gaussian vector x with covariance C (Toeplitz, from the
scenario spectrum through the front end). The band energy is the quadratic form
x'Mx with M[n, m] = sum over band bins k of cos(2 pi k (n - m) / 256), so

    mean = tr(MC)        variance = 2 tr(MCMC)

Leak source levels are solved for: the level
that makes a five-sample Leak verdict 80 percent likely at the target standoff.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.linalg import toeplitz
from scipy.optimize import brentq
from scipy.stats import gamma

from .config import (
    CONFIRM_ACQUISITIONS,
    FRAME_SIZE,
    FrontEndConfig,
    PropagationPath,
    Scenario,
    ScenarioSource,
    SourceKind,
    SpectralShape,
)
from .dsp import band_bins
from .frontend import FrontEnd
from .synth import PREROLL, path_loss, shape_magnitude

logger = logging.getLogger(__name__)

SPRAY_TARGET_RANGE_M = 11.5
# jet target range: a little over a third of the spray range
JET_RANGE_RATIO = 3.5
TARGET_LEAK_PROBABILITY = 0.8
CALIBRATION_AMBIENT_DB = -40.0
MATERIAL_SETBACK_M = 0.15

_LEVEL_BRACKET = (-100.0, 40.0)


@dataclass(frozen=True)
class Material:
    name: str
    label: str
    min_distance_m: float
    max_distance_m: float

    @property
    def distance_m(self) -> float:
        """Mid-point of the measured detection distance from the surface"""
        return 0.5 * (self.min_distance_m + self.max_distance_m)


MATERIALS: Dict[str, Material] = {
    m.name: m for m in (
        Material("gypsum_1.3cm", "Gypsum wallboard, 1.3 cm", 0.56, 0.61),
        Material("gypsum_1.3cm_insulation", "Gypsum wallboard, 1.3 cm, with insulation", 0.43, 0.46),
        Material("plywood_0.6cm", "Plywood, 0.6 cm", 0.71, 0.76),
        Material("plywood_1.3cm", "Plywood, 1.3 cm", 0.43, 0.46),
    )
}


def target_range(kind: SourceKind) -> float:
    if kind is SourceKind.LEAK_SPRAY:
        return SPRAY_TARGET_RANGE_M
    if kind is SourceKind.LEAK_JET:
        return SPRAY_TARGET_RANGE_M / JET_RANGE_RATIO
    raise ValueError(f"no calibration target for {kind.value}")


@lru_cache(maxsize=8)
def _band_kernel() -> np.ndarray:
    start, stop = band_bins()
    lags = np.arange(FRAME_SIZE)
    bins = np.arange(start, stop + 1)
    column = np.cos(2.0 * np.pi * np.outer(lags, bins) / FRAME_SIZE).sum(axis=1)
    return toeplitz(column)


@lru_cache(maxsize=8)
def _chain_power(config: FrontEndConfig) -> Tuple[np.ndarray, np.ndarray]:
    """|H|^2 of the full chain in squared code units, on the synthesis grid"""
    front = FrontEnd(config)
    block = FRAME_SIZE + PREROLL
    freqs = np.fft.rfftfreq(block, d=1.0 / front.rate)
    code_scale = config.adc.mid_code / config.adc.full_scale
    power = np.abs(front.response(freqs)) ** 2 * code_scale ** 2
    return freqs, power


def _source_spectrum(scenario: Scenario, t: float, config: FrontEndConfig) -> np.ndarray:
    block = FRAME_SIZE + PREROLL
    _, chain = _chain_power(config)
    total = np.zeros_like(chain)
    if math.isfinite(scenario.ambient_level_db):
        magnitude = shape_magnitude(SpectralShape.BROADBAND, block, config.adc.rate)
        total += 10.0 ** (scenario.ambient_level_db / 10.0) * magnitude ** 2
    for source in scenario.sources:
        if source.kind is SourceKind.IMPULSE or not source.is_active(t):
            continue
        magnitude = shape_magnitude(source.spectral_shape, block, config.adc.rate)
        total += 10.0 ** ((source.level - path_loss(source.path)) / 10.0) * magnitude ** 2
    return total * chain


def band_energy_moments(scenario: Scenario, t: float = 0.0,
                        config: Optional[FrontEndConfig] = None) -> Tuple[float, float]:
    """
    Mean and variance of the acquired band energy for the steady sources active at t.

    Impulses and per-frame level jitter are ignored; ADC quantization enters as
    white noise of 1/12 code^2.
    """
    config = config or FrontEndConfig()
    block = FRAME_SIZE + PREROLL
    autocorrelation = np.fft.irfft(_source_spectrum(scenario, t, config), n=block)[:FRAME_SIZE].copy()
    autocorrelation[0] += 1.0 / 12.0
    kernel_cov = _band_kernel() @ toeplitz(autocorrelation)
    mean = float(np.trace(kernel_cov))
    variance = float(2.0 * np.sum(kernel_cov * kernel_cov.T))
    return mean, variance


def leak_probability(floor: Tuple[float, float], signal: Tuple[float, float]) -> float:
    """
    Probability that a poll classifies as Leak, given the moments of the quiet floor
    and of the floor plus leak. Frames are treated as independent gamma variates and
    the stability gate is taken to pass.
    """
    floor_mean, floor_var = floor
    threshold = floor_mean + math.sqrt(floor_var)
    mean, var = signal
    single = gamma.sf(threshold, a=mean ** 2 / var, scale=var / mean)
    return float(single ** CONFIRM_ACQUISITIONS)


def _leak_scenario(kind: SourceKind, level_db: float, distance_m: float, ambient_db: float,
                   barrier_losses_db: Tuple[float, ...] = ()) -> Scenario:
    source = ScenarioSource(
        kind=kind,
        level_db=level_db,
        path=PropagationPath(distance_m=distance_m, barrier_losses_db=barrier_losses_db),
    )
    return Scenario(name=f"{kind.value}@{distance_m:g}m", sources=(source,), ambient_level_db=ambient_db)


def detection_probability(kind: SourceKind, level_db: float, distance_m: float,
                          ambient_db: float = CALIBRATION_AMBIENT_DB,
                          config: Optional[FrontEndConfig] = None) -> float:
    config = config or FrontEndConfig()
    floor = band_energy_moments(Scenario(ambient_level_db=ambient_db), config=config)
    signal = band_energy_moments(_leak_scenario(kind, level_db, distance_m, ambient_db), config=config)
    return leak_probability(floor, signal)


@lru_cache(maxsize=16)
def calibrated_level(kind: SourceKind, distance_m: Optional[float] = None,
                     ambient_db: float = CALIBRATION_AMBIENT_DB,
                     config: Optional[FrontEndConfig] = None) -> float:
    """Source level (dB re full-scale at 1 m, band RMS) that is detected with 80% probability at the target range"""
    distance_m = distance_m if distance_m is not None else target_range(kind)
    config = config or FrontEndConfig()

    def excess(level: float) -> float:
        return detection_probability(kind, level, distance_m, ambient_db, config) - TARGET_LEAK_PROBABILITY

    level = brentq(excess, *_LEVEL_BRACKET, xtol=1e-6)
    logger.info("calibrated %s level %.2f dB for %.2f m", kind.value, level, distance_m)
    return round(level, 4)


def calibrate_barrier_loss(material_distance_m: float, free_space_range_m: float = 10.0,
                           setback_m: float = MATERIAL_SETBACK_M) -> float:
    """
    Insertion loss that shrinks the free-space detection range to the measured distance
    behind a barrier (leak source set back from the far side of the panel).
    """
    if material_distance_m < 0 or free_space_range_m <= 0:
        raise ValueError("distances must be positive")
    loss = 20.0 * math.log10(free_space_range_m / (material_distance_m + setback_m))
    if loss <= 0:
        raise ValueError(f"barrier distance {material_distance_m} m implies a non-positive insertion loss")
    return loss


def material_loss(name: str, free_space_range_m: float = SPRAY_TARGET_RANGE_M) -> float:
    try:
        material = MATERIALS[name]
    except KeyError:
        raise ValueError(f"unknown material '{name}' (known: {', '.join(sorted(MATERIALS))})")
    return calibrate_barrier_loss(material.distance_m, free_space_range_m)
