"""
Synthetic sound field at the microphone.

Every frame is rendered on a periodic block (pre-roll + frame) so that the front-end
filters settle before the acquired window. Noise is white Gaussian shaped in the
frequency domain; each (source, frame time) pair draws from its own RNG stream, so a
frame depends only on (scenario, seed, t0) and never on evaluation order.
"""
import logging
import math
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.signal.windows import hann

from .config import (
    BAND_HIGH_HZ,
    BAND_LOW_HZ,
    FRAME_SIZE,
    MIN_DISTANCE_M,
    REFERENCE_DISTANCE_M,
    SAMPLE_RATE,
    PropagationPath,
    Scenario,
    ScenarioSource,
    SourceKind,
    SpectralShape,
)

logger = logging.getLogger(__name__)

PREROLL = 768
IMPULSE_DURATION_S = 0.002

# RNG stream phases
MONITOR_PHASE = 0
TRAINING_PHASE = 1

SPRAY_KNEE_HZ = 6000.0
JET_CORNER_HZ = 3000.0


def path_loss(path: PropagationPath) -> float:
    """Spherical spreading re 1 m plus the barrier insertion losses, in dB"""
    if not path.distance_m >= MIN_DISTANCE_M:
        raise ValueError(f"distance {path.distance_m} m is inside the unmodelled near field (< {MIN_DISTANCE_M} m)")
    spreading = 20.0 * math.log10(path.distance_m / REFERENCE_DISTANCE_M)
    return spreading + float(sum(path.barrier_losses_db))


def shape_power(shape: SpectralShape, freqs: np.ndarray) -> np.ndarray:
    """Relative power spectral density of a spectral shape"""
    f = np.asarray(freqs, dtype=float)
    if shape is SpectralShape.FLAT_ABOVE_6KHZ:
        # white above 6 kHz, -12 dB/octave below
        return np.where(f >= SPRAY_KNEE_HZ, 1.0, (f / SPRAY_KNEE_HZ) ** 4)
    if shape is SpectralShape.LOW_PASS_JET:
        # -24 dB/octave above the corner
        return 1.0 / (1.0 + (f / JET_CORNER_HZ) ** 8)
    return np.ones_like(f)


def band_mask(freqs: np.ndarray) -> np.ndarray:
    return (freqs >= BAND_LOW_HZ) & (freqs <= BAND_HIGH_HZ)


@lru_cache(maxsize=64)
def shape_magnitude(shape: SpectralShape, block: int, rate: float) -> np.ndarray:
    """
    Spectral magnitude on the rfft grid of `block` samples, scaled so that unit-variance
    white noise shaped by it has unit variance inside the 7-11.5 kHz band.
    """
    freqs = np.fft.rfftfreq(block, d=1.0 / rate)
    magnitude = np.sqrt(shape_power(shape, freqs))
    band_variance = 2.0 * np.sum(magnitude[band_mask(freqs)] ** 2) / block
    magnitude = magnitude / math.sqrt(band_variance)
    magnitude.setflags(write=False)
    return magnitude


def stream(seed: int, phase: int, index: int, t0: float) -> np.random.Generator:
    """Independent PCG64 stream for one (phase, source, frame time)"""
    t_us = int(round(t0 * 1e6))
    if t_us < 0:
        raise ValueError("frame times must be non-negative")
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(phase, index, t_us))
    return np.random.Generator(np.random.PCG64(sequence))


def _shaped_noise(rng: np.random.Generator, shape: SpectralShape, block: int, rate: float) -> np.ndarray:
    white = rng.standard_normal(block)
    spectrum = np.fft.rfft(white) * shape_magnitude(shape, block, rate)
    return np.fft.irfft(spectrum, n=block)


def _impulse_times(source: ScenarioSource, start: float, stop: float):
    t_start, t_end = source.active_interval
    if source.period_s is None:
        if start <= t_start < stop:
            yield t_start
        return
    k = max(0, math.ceil((start - t_start) / source.period_s))
    t = t_start + k * source.period_s
    while t < stop and t < t_end:
        yield t
        k += 1
        t = t_start + k * source.period_s


def _render_source(scenario: Scenario, source: ScenarioSource, index: int, t0: float,
                   block: int, rate: float, phase: int) -> Optional[np.ndarray]:
    rng = stream(scenario.seed, phase, index, t0)
    amplitude = 10.0 ** ((source.level - path_loss(source.path)) / 20.0)
    if source.fluctuation_db > 0:
        amplitude *= 10.0 ** (rng.normal(0.0, source.fluctuation_db) / 20.0)

    if source.kind is SourceKind.IMPULSE:
        block_start = t0 - (block - FRAME_SIZE) / rate
        block_stop = block_start + block / rate
        burst_len = max(2, int(round(IMPULSE_DURATION_S * rate)))
        envelope = np.zeros(block)
        for t_burst in _impulse_times(source, block_start, block_stop):
            begin = int(round((t_burst - block_start) * rate))
            end = min(block, begin + burst_len)
            envelope[begin:end] = np.maximum(envelope[begin:end], hann(burst_len, sym=True)[:end - begin])
        if not envelope.any():
            return None
        return amplitude * envelope * _shaped_noise(rng, source.spectral_shape, block, rate)

    if not source.is_active(t0):
        return None
    return amplitude * _shaped_noise(rng, source.spectral_shape, block, rate)


def synthesize_block(scenario: Scenario, t0: float, n: int = FRAME_SIZE, rate: float = SAMPLE_RATE,
                     phase: int = MONITOR_PHASE) -> np.ndarray:
    """Pressure waveform for the pre-roll plus an n-sample frame starting at t0"""
    block = n + PREROLL
    out = np.zeros(block)
    if math.isfinite(scenario.ambient_level_db):
        rng = stream(scenario.seed, phase, 0, t0)
        out += 10.0 ** (scenario.ambient_level_db / 20.0) * _shaped_noise(rng, SpectralShape.BROADBAND, block, rate)
    for index, source in enumerate(scenario.sources, start=1):
        rendered = _render_source(scenario, source, index, t0, block, rate, phase)
        if rendered is not None:
            out += rendered
    return out


def synthesize_frame(scenario: Scenario, t0: float, n: int = FRAME_SIZE, rate: float = SAMPLE_RATE,
                     phase: int = MONITOR_PHASE) -> np.ndarray:
    """Pressure waveform of n samples (dimensionless, re full-scale) starting at t0"""
    return synthesize_block(scenario, t0, n, rate, phase)[-n:]
