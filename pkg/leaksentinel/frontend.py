"""
Sensor front end: Helmholtz chamber, analog conditioning chain and the 12-bit ADC.

Filters are biquad cascades in scipy's second-order-section form, designed by the
bilinear transform at the sampling rate with prewarping at the tuning frequency.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy import signal

from .config import AdcModel, AnalogChain, FrontEndConfig, ResonatorGeometry, SAMPLE_RATE

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ResonatorResponse:
    f0: float
    q: float
    peak_gain: float

    @property
    def bandwidth_hz(self) -> float:
        return self.f0 / self.q


def design_resonator(geometry: ResonatorGeometry, peak_gain: float = 2.0) -> ResonatorResponse:
    """Resonance frequency and quality factor of the chamber and its neck"""
    for field in ("L", "W", "H", "a", "t", "v"):
        if not getattr(geometry, field) > 0:
            raise ValueError(f"resonator dimension {field} must be positive")
    volume = geometry.volume
    t_eff = geometry.t_eff
    f0 = (geometry.v * geometry.a / 2.0) * math.sqrt(1.0 / (math.pi * volume * t_eff))
    q = 2.0 * math.sqrt((volume / math.pi) * (t_eff / geometry.a ** 2) ** 3)
    logger.debug("resonator f0=%.1f Hz q=%.2f", f0, q)
    return ResonatorResponse(f0=f0, q=q, peak_gain=peak_gain)


def resonator_sos(response: ResonatorResponse, rate: float = SAMPLE_RATE) -> np.ndarray:
    """
    Constant-peak band-pass biquad.

    The pole radius is set from tan(bandwidth / 2), which places the digital -3 dB
    points exactly f0/q apart and the unit-gain peak exactly at f0.
    """
    if not 0 < response.f0 < rate / 2:
        raise ValueError("resonance must lie below the Nyquist frequency")
    w0 = 2.0 * math.pi * response.f0 / rate
    alpha = math.tan(math.pi * response.bandwidth_hz / rate)
    norm = 1.0 + alpha
    b = response.peak_gain * alpha / norm * np.array([1.0, 0.0, -1.0])
    a = np.array([1.0, -2.0 * math.cos(w0) / norm, (1.0 - alpha) / norm])
    return np.concatenate([b, a])[np.newaxis, :]


def resonator_filter(x: np.ndarray, response: ResonatorResponse, rate: float = SAMPLE_RATE) -> np.ndarray:
    return signal.sosfilt(resonator_sos(response, rate), x)


def analog_sos(chain: AnalogChain, rate: float = SAMPLE_RATE) -> np.ndarray:
    """Butterworth high-pass cascade without the gain stages"""
    return signal.butter(chain.hp_order, chain.hp_cutoff_hz, btype="highpass", fs=rate, output="sos")


def stage_quality_factors(chain: AnalogChain) -> Tuple[float, ...]:
    """Q of each second-order Butterworth stage, lowest first"""
    n = chain.hp_order
    return tuple(sorted(1.0 / (2.0 * math.sin(math.pi * (2 * k + 1) / (2 * n))) for k in range(n // 2)))


def analog_chain(x: np.ndarray, chain: AnalogChain, rate: float = SAMPLE_RATE) -> np.ndarray:
    pre = 10.0 ** (chain.pre_gain_db / 20.0)
    post = 10.0 ** (chain.post_gain_db / 20.0)
    return post * signal.sosfilt(analog_sos(chain, rate), pre * np.asarray(x, dtype=float))


def adc_convert(adc: AdcModel, x: np.ndarray) -> Tuple[np.ndarray, bool]:
    """Quantize to unsigned codes centred on mid-scale; overload when any code hits a rail"""
    scaled = np.rint(adc.mid_code + np.asarray(x, dtype=float) * adc.mid_code / adc.full_scale)
    codes = np.clip(scaled, 0, adc.max_code).astype(np.int32)
    overload = bool(np.any(codes == 0) or np.any(codes == adc.max_code))
    return codes, overload


def dequantize(adc: AdcModel, codes: np.ndarray) -> np.ndarray:
    """Codes back to centred samples in code units"""
    return np.asarray(codes, dtype=float) - adc.mid_code


class SosStream:
    """Streaming second-order-section filter with explicit state"""

    def __init__(self, sos: np.ndarray):
        self.sos = np.asarray(sos, dtype=float)
        self.state = np.zeros((self.sos.shape[0], 2))

    def process(self, x: np.ndarray) -> np.ndarray:
        y, self.state = signal.sosfilt(self.sos, x, zi=self.state)
        return y

    def reset(self) -> None:
        self.state = np.zeros_like(self.state)


class FrontEnd:
    """Microphone-to-code signal path for one front-end configuration"""

    def __init__(self, config: Optional[FrontEndConfig] = None):
        self.config = config or FrontEndConfig()
        self.rate = self.config.adc.rate
        self.resonator = design_resonator(self.config.geometry, self.config.peak_gain)
        self._resonator_sos = resonator_sos(self.resonator, self.rate)
        self._analog_sos = analog_sos(self.config.analog, self.rate)
        self._gain = 10.0 ** (self.config.analog.total_gain_db / 20.0)

    def mechanical(self, pressure: np.ndarray) -> np.ndarray:
        """Direct acoustic path plus the chamber resonance"""
        return self.config.direct_gain * pressure + signal.sosfilt(self._resonator_sos, pressure)

    def analog(self, x: np.ndarray) -> np.ndarray:
        return analog_chain(x, self.config.analog, self.rate)

    def digitize(self, pressure: np.ndarray) -> Tuple[np.ndarray, bool]:
        return adc_convert(self.config.adc, self.analog(self.mechanical(pressure)))

    def response(self, freqs: np.ndarray, chain: str = "full") -> np.ndarray:
        """Complex response at the given frequencies for 'full', 'analog' or 'resonator'"""
        freqs = np.asarray(freqs, dtype=float)
        if chain not in ("full", "analog", "resonator"):
            raise ValueError(f"unknown chain '{chain}'")
        _, h_res = signal.sosfreqz(self._resonator_sos, worN=freqs, fs=self.rate)
        mech = self.config.direct_gain + h_res
        if chain == "resonator":
            return mech
        _, h_hp = signal.sosfreqz(self._analog_sos, worN=freqs, fs=self.rate)
        analog = self._gain * h_hp
        if chain == "analog":
            return analog
        return mech * analog

    def input_referred_response(self, freqs: np.ndarray) -> np.ndarray:
        """Full response with the flat chain gain removed (unity means unattenuated)"""
        return self.response(freqs) / self._gain


def frequency_response(chain: str = "full", config: Optional[FrontEndConfig] = None,
                       f_min: float = 100.0, f_max: float = 16000.0, points: int = 400) -> pd.DataFrame:
    """Magnitude response table in dB; the full chain is reported input-referred"""
    front = FrontEnd(config)
    freqs = np.linspace(f_min, min(f_max, front.rate / 2 * 0.999), points)
    h = front.input_referred_response(freqs) if chain == "full" else front.response(freqs, chain)
    if chain == "analog":
        h = h / front._gain
    with np.errstate(divide="ignore"):
        magnitude = 20.0 * np.log10(np.abs(h))
    return pd.DataFrame({"frequency_hz": freqs, "magnitude_db": magnitude})
