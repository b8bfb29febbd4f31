import pickle

import numpy as np
import pytest

from conftest import leak_source
from leaksentinel.calibration import calibrated_level
from leaksentinel.config import Scenario, ScenarioSource, SourceKind
from leaksentinel.dsp import (
    OVERLOAD,
    Acquirer,
    acquire,
    band_bins,
    bin_hz,
    fft256,
    frame_spectrum,
    spectral_energy,
    spectrum_frame,
)


def test_bin_spacing():
    assert bin_hz() == pytest.approx(130.207, abs=1e-3)


def test_band_window_is_34_bins_inside_band():
    start, stop = band_bins()
    assert (start, stop) == (54, 87)
    assert stop - start + 1 == 34
    assert start * bin_hz() >= 7000.0
    assert stop * bin_hz() <= 11500.0


def test_fft_matches_numpy():
    rng = np.random.default_rng(0)
    for _ in range(50):
        frame = rng.standard_normal(256)
        np.testing.assert_allclose(fft256(frame).bins, np.fft.rfft(frame), atol=1e-9)


def test_unit_impulse_has_flat_spectrum():
    frame = np.zeros(256)
    frame[0] = 1.0
    np.testing.assert_allclose(fft256(frame).bins, np.ones(129), atol=1e-12)


@pytest.mark.slow
def test_parseval():
    rng = np.random.default_rng(42)
    for _ in range(10_000):
        frame = rng.standard_normal(256)
        bins = fft256(frame).bins
        power = np.abs(bins) ** 2
        spectral = (power[0] + 2 * power[1:128].sum() + power[128]) / 256
        assert spectral == pytest.approx(np.sum(frame ** 2), rel=1e-9)


@pytest.mark.parametrize("length", [255, 257, 512])
def test_wrong_frame_length_rejected(length):
    with pytest.raises(ValueError):
        fft256(np.zeros(length))


def test_in_band_tone_energy():
    n = np.arange(256)
    tone = np.cos(2 * np.pi * 64 * n / 256)
    assert spectral_energy(fft256(tone)) == pytest.approx((256 / 2) ** 2, rel=1e-9)

    out_of_band = np.cos(2 * np.pi * 20 * n / 256)
    assert spectral_energy(fft256(out_of_band)) < 1e-12
    assert spectral_energy(fft256(np.zeros(256))) == 0.0


def test_spectrum_frame_marks_band():
    spectrum = fft256(np.random.default_rng(1).standard_normal(256))
    frame = spectrum_frame(spectrum)
    assert list(frame.columns) == ["bin_index", "frequency_hz", "magnitude", "in_band"]
    np.testing.assert_allclose(frame["magnitude"], np.abs(spectrum.bins))
    assert frame.loc[10, "frequency_hz"] == pytest.approx(10 * bin_hz())
    assert len(frame) == 129
    assert frame["in_band"].sum() == 34
    assert frame.loc[54, "in_band"] and not frame.loc[53, "in_band"]


def test_overload_marker_is_a_singleton():
    assert pickle.loads(pickle.dumps(OVERLOAD)) is OVERLOAD
    assert repr(OVERLOAD) == "OVERLOAD"


def test_quiet_acquisition_is_positive(front, quiet_scenario):
    energy = acquire(front, quiet_scenario, 1.0)
    assert isinstance(energy, float)
    assert energy > 0.0
    assert acquire(front, quiet_scenario, 1.0) == energy


def test_loud_source_overloads(front):
    blaring = ScenarioSource(kind=SourceKind.PERSISTENT_NOISE, level_db=20.0)
    assert acquire(front, Scenario(sources=(blaring,)), 0.0) is OVERLOAD


def test_acquirer_counts(front, quiet_scenario):
    acquirer = Acquirer(quiet_scenario, front)
    for t in (0.0, 0.045, 0.09):
        acquirer(t)
    assert acquirer.count == 3


def test_spray_at_5m_clears_quiet_threshold(front):
    quiet = Scenario(seed=21)
    leak = quiet.model_copy(update={"sources": (
        leak_source(level_db=calibrated_level(SourceKind.LEAK_SPRAY), distance_m=5.0),)})
    times = np.arange(100) * 0.5
    floor = np.array([acquire(front, quiet, t) for t in times])
    threshold = floor.mean() + floor.std()
    energies = np.array([acquire(front, leak, t) for t in times])
    assert np.mean(energies > threshold) >= 0.95


def test_frame_spectrum_band_sum_is_the_acquired_energy(front, quiet_scenario):
    spectrum = frame_spectrum(front, quiet_scenario, 1.0)
    assert spectral_energy(spectrum) == pytest.approx(acquire(front, quiet_scenario, 1.0))
    frame = spectrum_frame(spectrum)
    in_band = frame.loc[frame["in_band"], "magnitude"]
    assert float((in_band ** 2).sum()) == pytest.approx(acquire(front, quiet_scenario, 1.0))
