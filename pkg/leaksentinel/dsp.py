"""
Fixed-size spectral analysis and the band-energy acquisition pipeline.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd

from .config import BAND_BINS, BAND_HIGH_HZ, BAND_LOW_HZ, FRAME_SIZE, SAMPLE_RATE, Scenario
from .frontend import FrontEnd, dequantize
from .synth import MONITOR_PHASE, synthesize_block

logger = logging.getLogger(__name__)


class _Overload:
    """Marker returned instead of an energy when the ADC clipped"""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "OVERLOAD"

    def __reduce__(self):
        return (_Overload, ())


OVERLOAD = _Overload()

Acquisition = Union[float, _Overload]


@dataclass(frozen=True)
class Spectrum:
    bins: np.ndarray
    bin_hz: float


def bin_hz(rate: float = SAMPLE_RATE) -> float:
    return rate / FRAME_SIZE


def band_bins(rate: float = SAMPLE_RATE) -> Tuple[int, int]:
    """Inclusive bin range of the leak band"""
    start = math.ceil(BAND_LOW_HZ / bin_hz(rate))
    stop = start + BAND_BINS - 1
    if stop * bin_hz(rate) > BAND_HIGH_HZ:
        raise ValueError(f"band of {BAND_BINS} bins from {start} exceeds {BAND_HIGH_HZ} Hz at {rate} S/s")
    return start, stop


@lru_cache(maxsize=1)
def _bit_reverse() -> np.ndarray:
    bits = int(math.log2(FRAME_SIZE))
    index = np.arange(FRAME_SIZE)
    reversed_index = np.zeros_like(index)
    for b in range(bits):
        reversed_index |= ((index >> b) & 1) << (bits - 1 - b)
    return reversed_index


@lru_cache(maxsize=1)
def _twiddles() -> Tuple[np.ndarray, ...]:
    stages = []
    half = 1
    while half < FRAME_SIZE:
        stages.append(np.exp(-2j * np.pi * np.arange(half) / (2 * half)))
        half *= 2
    return tuple(stages)


def fft256(frame: np.ndarray) -> Spectrum:
    """Radix-2 decimation-in-time FFT of a 256-sample real frame; returns bins 0..128"""
    x = np.asarray(frame, dtype=float)
    if x.shape != (FRAME_SIZE,):
        raise ValueError(f"frame must have exactly {FRAME_SIZE} samples, got {x.shape}")
    data = x[_bit_reverse()].astype(complex)
    half = 1
    for twiddle in _twiddles():
        groups = data.reshape(-1, 2 * half)
        even = groups[:, :half]
        odd = groups[:, half:] * twiddle
        data = np.concatenate([even + odd, even - odd], axis=1).reshape(-1)
        half *= 2
    return Spectrum(bins=data[: FRAME_SIZE // 2 + 1], bin_hz=bin_hz())


def spectral_energy(spectrum: Spectrum) -> float:
    """Sum of squared magnitudes over the leak band"""
    start, stop = band_bins(spectrum.bin_hz * FRAME_SIZE)
    band = spectrum.bins[start:stop + 1]
    return float(np.sum(band.real ** 2 + band.imag ** 2))


def spectrum_frame(spectrum: Spectrum) -> pd.DataFrame:
    """Spectrum dump table: bin index, bin frequency, magnitude and leak-band membership"""
    start, stop = band_bins(spectrum.bin_hz * FRAME_SIZE)
    index = np.arange(len(spectrum.bins))
    return pd.DataFrame({
        "bin_index": index,
        "frequency_hz": index * spectrum.bin_hz,
        "magnitude": np.abs(spectrum.bins),
        "in_band": (index >= start) & (index <= stop),
    })


def _digitize_frame(front: FrontEnd, scenario: Scenario, t0: float, phase: int) -> Tuple[np.ndarray, bool]:
    pressure = synthesize_block(scenario, t0, FRAME_SIZE, front.rate, phase)
    codes, overload = front.digitize(pressure)
    codes = codes[-FRAME_SIZE:]
    # only the acquired window counts, not the settling pre-roll
    clipped = bool(overload and np.any((codes == 0) | (codes == front.config.adc.max_code)))
    return codes, clipped


def frame_spectrum(front: FrontEnd, scenario: Scenario, t0: float, phase: int = MONITOR_PHASE) -> Spectrum:
    """Spectrum of the frame acquired at t0, clipped or not"""
    codes, _ = _digitize_frame(front, scenario, t0, phase)
    return fft256(dequantize(front.config.adc, codes))


def acquire(front: FrontEnd, scenario: Scenario, t0: float, phase: int = MONITOR_PHASE) -> Acquisition:
    """One acquisition: synthesize, condition, digitize and reduce to band energy"""
    codes, clipped = _digitize_frame(front, scenario, t0, phase)
    if clipped:
        logger.debug("overload at t=%.3f", t0)
        return OVERLOAD
    return spectral_energy(fft256(dequantize(front.config.adc, codes)))


class Acquirer:
    """Callable acquisition source bound to a front end and a scenario"""

    def __init__(self, scenario: Scenario, front: Optional[FrontEnd] = None, phase: int = MONITOR_PHASE):
        self.scenario = scenario
        self.front = front or FrontEnd()
        self.phase = phase
        self.count = 0

    def __call__(self, t: float) -> Acquisition:
        self.count += 1
        return acquire(self.front, self.scenario, t, self.phase)
