import itertools
from types import SimpleNamespace

import numpy as np
import pytest

from conftest import leak_source
from leaksentinel.calibration import calibrated_level
from leaksentinel.config import MonitorConfig, Scenario, SourceKind, TrainingConfig, load_scenario
from leaksentinel.detector import (
    Baseline,
    Event,
    EventArrays,
    LeakSensor,
    SensorState,
    TrainingFailure,
    evaluate_status,
    poll_classify,
    push_event,
    run_monitor,
    run_training,
    simulate,
)
from leaksentinel.dsp import OVERLOAD

MONITOR = MonitorConfig()


def reference_event(baseline, energies):
    """Plain restatement of the poll rules for a full list of candidate energies"""
    threshold = baseline.mean + baseline.std
    if energies[0] is OVERLOAD:
        return Event.NOISE
    if energies[0] <= threshold:
        return Event.QUIET
    if any(e is OVERLOAD for e in energies[:5]):
        return Event.NOISE
    values = np.array(energies[:5], dtype=float)
    if 2 * values.std() > values.mean():
        return Event.NOISE
    return Event.LEAK if (values > threshold).all() else Event.QUIET


# --- training ---

def test_constant_background_trains_in_one_session(scripted):
    source = scripted([5.0] * 30)
    result = run_training(TrainingConfig(), source)
    assert result.baseline == Baseline(5.0, 0.0)
    assert result.sessions == 1
    assert source.times == [float(i) for i in range(30)]
    assert result.end_time == 30.0


def test_unstable_set_is_rejected(scripted):
    # mean 2, population std 1: 2*std == mean is not stable
    source = scripted([1.0, 3.0] * 5 + [2.0] * 10)
    result = run_training(TrainingConfig(set_size=10), source)
    assert result.sessions == 2
    assert result.baseline == Baseline(2.0, 0.0)


def test_training_gives_up_at_cap(scripted):
    source = scripted([1.0, 3.0] * 100)
    with pytest.raises(TrainingFailure) as excinfo:
        run_training(TrainingConfig(set_size=10), source, max_sessions=3)
    assert excinfo.value.sessions == 3
    assert excinfo.value.ticks == 30


def test_training_tick_cap(scripted):
    with pytest.raises(TrainingFailure):
        run_training(TrainingConfig(set_size=10), scripted([OVERLOAD] * 20), max_ticks=20)


def test_overloads_are_retried_one_tick_later(scripted, overload):
    source = scripted([4.0, overload, overload] + [4.0] * 9)
    result = run_training(TrainingConfig(set_size=10), source)
    assert result.overloads == 2
    assert result.ticks == 12
    assert source.times[:4] == [0.0, 1.0, 2.0, 3.0]


# --- polling ---

def test_quiet_poll_takes_one_acquisition(scripted):
    source = scripted([4.5])
    result = poll_classify(Baseline(4.0, 1.0), MONITOR, source, 10.0)
    assert result.event is Event.QUIET
    assert result.acquisitions == 1
    assert source.times == [10.0]


def test_equal_to_threshold_is_quiet(scripted):
    assert poll_classify(Baseline(4.0, 1.0), MONITOR, scripted([5.0]), 0.0).event is Event.QUIET


def test_transient_is_quiet(scripted):
    source = scripted([10.0, 10.0, 10.0, 10.0, 1.0])
    result = poll_classify(Baseline(4.0, 1.0), MONITOR, source, 12.0)
    assert result.event is Event.QUIET
    assert result.acquisitions == 5
    assert source.times == pytest.approx([12.0, 12.045, 12.09, 12.135, 12.18])


def test_sustained_energy_is_leak(scripted):
    result = poll_classify(Baseline(4.0, 1.0), MONITOR, scripted([9.0, 10.0, 11.0, 10.0, 9.5]), 0.0)
    assert result.event is Event.LEAK
    assert result.energies == (9.0, 10.0, 11.0, 10.0, 9.5)


def test_erratic_energy_is_noise(scripted):
    result = poll_classify(Baseline(4.0, 1.0), MONITOR, scripted([20.0, 1.0, 20.0, 1.0, 20.0]), 0.0)
    assert result.event is Event.NOISE


def test_first_overload_aborts(scripted, overload):
    result = poll_classify(Baseline(4.0, 1.0), MONITOR, scripted([overload]), 0.0)
    assert (result.event, result.acquisitions) == (Event.NOISE, 1)


def test_overload_during_confirmation_aborts(scripted, overload):
    source = scripted([10.0, 10.0, overload])
    result = poll_classify(Baseline(4.0, 1.0), MONITOR, source, 0.0)
    assert (result.event, result.acquisitions) == (Event.NOISE, 3)
    assert len(source.times) == 3


@pytest.mark.parametrize("count", [2_000, pytest.param(1_000_000, marks=pytest.mark.slow)])
def test_poll_matches_reference(scripted, count):
    rng = np.random.default_rng(7)
    for _ in range(count):
        baseline = Baseline(float(rng.uniform(0.5, 5.0)), float(rng.uniform(0.0, 2.0)))
        energies = list(rng.gamma(rng.uniform(0.5, 20.0), rng.uniform(0.2, 2.0), size=5))
        if rng.random() < 0.1:
            energies[int(rng.integers(5))] = OVERLOAD
        expected = reference_event(baseline, energies)
        assert poll_classify(baseline, MONITOR, scripted(energies), 0.0).event is expected


def test_classification_is_scale_invariant(scripted):
    rng = np.random.default_rng(11)
    for _ in range(500):
        baseline = Baseline(float(rng.uniform(1.0, 4.0)), float(rng.uniform(0.0, 1.5)))
        energies = list(rng.gamma(4.0, 1.0, size=5))
        event = poll_classify(baseline, MONITOR, scripted(energies), 0.0).event
        for k in (-3, 5, 20):
            scale = 2.0 ** k
            scaled = Baseline(baseline.mean * scale, baseline.std * scale)
            assert poll_classify(scaled, MONITOR, scripted([e * scale for e in energies]), 0.0).event is event


# --- event arrays and status ---

def test_arrays_start_quiet():
    arrays = EventArrays(20)
    assert arrays.counts == (20, 0, 0)
    assert arrays.recount() == (20, 0, 0)


def test_oldest_event_leaves_window():
    arrays = EventArrays(10)
    arrays.push(Event.LEAK)
    for _ in range(9):
        arrays.push(Event.QUIET)
    assert arrays.counts == (9, 1, 0)
    arrays.push(Event.NOISE)
    assert arrays.counts == (9, 0, 1)


@pytest.mark.slow
def test_every_sequence_of_ten_keeps_sums_exact():
    events = list(Event)
    for sequence in itertools.product(events, repeat=10):
        arrays = EventArrays(10)
        for event in sequence:
            arrays.push(event)
        assert arrays.counts == arrays.recount()
        expected = tuple(sequence.count(e) for e in events)
        assert arrays.counts == expected


def test_random_pushes_keep_sums_exact():
    rng = np.random.default_rng(3)
    events = list(Event)
    arrays = EventArrays(255)
    for i, choice in enumerate(rng.integers(0, 3, size=100_000)):
        arrays.push(events[choice])
        if i % 997 == 0:
            assert arrays.counts == arrays.recount()
    assert sum(arrays.counts) == 255
    assert arrays.counts == arrays.recount()


def fill(n, leaks, noises):
    arrays = EventArrays(n)
    for _ in range(leaks):
        arrays.push(Event.LEAK)
    for _ in range(noises):
        arrays.push(Event.NOISE)
    return arrays


@pytest.mark.parametrize("leaks, noises, alarm, noise", [
    (17, 0, True, False),
    (16, 0, False, False),
    (16, 1, False, True),
    (17, 3, True, False),
    (0, 17, False, True),
    (10, 6, False, False),
])
def test_status_boundaries(leaks, noises, alarm, noise):
    status = evaluate_status(fill(20, leaks, noises), MONITOR)
    assert (status.alarm, status.noise_flag) == (alarm, noise)


def test_alarm_and_noise_never_together():
    rng = np.random.default_rng(5)
    for _ in range(2_000):
        n = int(rng.integers(10, 40))
        cfg = MonitorConfig(n=n, t_alarm=int(rng.integers(1, n + 1)))
        leaks = int(rng.integers(0, n + 1))
        status = evaluate_status(fill(n, leaks, int(rng.integers(0, n - leaks + 1))), cfg)
        assert not (status.alarm and status.noise_flag)


@pytest.mark.slow
def test_alarm_and_noise_never_together_over_many_states():
    rng = np.random.default_rng(6)
    configs = {}
    for _ in range(1_000_000):
        n = int(rng.integers(10, 256))
        t_alarm = int(rng.integers(1, n + 1))
        cfg = configs.setdefault((n, t_alarm), MonitorConfig(n=n, t_alarm=t_alarm))
        s = int(rng.integers(0, n + 1))
        r = int(rng.integers(0, n - s + 1))
        status = evaluate_status(SimpleNamespace(counts=(n - s - r, s, r)), cfg)
        assert not (status.alarm and status.noise_flag)


def test_status_byte():
    status = evaluate_status(fill(20, 17, 0), MONITOR)
    assert status.state is SensorState.MONITORING
    assert status.status_byte == 0x05


# --- sensor ---

def test_poll_before_training_is_refused(scripted):
    with pytest.raises(RuntimeError):
        LeakSensor().poll(scripted([1.0]), 0.0)


def test_sensor_alarms_after_t_leaks(scripted):
    sensor = LeakSensor(TrainingConfig(set_size=10), MonitorConfig(n=10, t_alarm=8))
    sensor.train(scripted([1.0] * 10))
    records = [sensor.poll(scripted([5.0] * 5), 2.0 * k) for k in range(8)]
    assert [r.alarm for r in records] == [False] * 7 + [True]
    status, counts = sensor.snapshot()
    assert status.alarm and counts == (2, 8, 0)

    sensor.start_training()
    assert sensor.snapshot()[0].state is SensorState.TRAINING
    assert sensor.snapshot()[1] == (10, 0, 0)


# --- whole scenarios ---

def test_spray_at_5m_alarms_quickly():
    result, timeline = simulate(load_scenario("spray_5m"), duration=60.0)
    assert result.sessions == 1
    assert timeline.first_alarm is not None
    assert timeline.first_alarm <= 50.0


@pytest.mark.slow
def test_spray_at_5m_alarms_for_nearly_every_seed():
    scenario = load_scenario("spray_5m")
    hits = sum(1 for seed in range(20)
               if (simulate(scenario.with_seed(seed), duration=60.0)[1].first_alarm or 1e9) <= 50.0)
    assert hits >= 19


def test_quiet_hour_raises_no_alarm(quiet_scenario):
    _, timeline = simulate(quiet_scenario, duration=600.0)
    assert timeline.alarm_count == 0
    assert timeline.verdict[0] != "ALARM"


@pytest.mark.slow
def test_quiet_hours_over_many_seeds_raise_no_alarm():
    for seed in range(20):
        _, timeline = simulate(Scenario(name="quiet", seed=seed), duration=3600.0)
        assert timeline.alarm_count == 0, f"seed {seed}"


def test_break_in_flags_noise_without_alarm():
    _, timeline = simulate(load_scenario("break_in"))
    assert timeline.alarm_count == 0
    assert timeline.first_noise is not None
    assert 120.0 <= timeline.first_noise <= 360.0


def test_timeline_frame(quiet_scenario):
    _, timeline = simulate(quiet_scenario, duration=20.0)
    frame = timeline.to_frame()
    assert list(frame.columns) == ["time_s", "event", "q", "s", "r", "alarm", "noise", "acquisitions"]
    assert list(frame["time_s"]) == [float(2 * k) for k in range(10)]
    assert (frame[["q", "s", "r"]].sum(axis=1) == 20).all()


def test_simulation_is_reproducible():
    scenario = Scenario(seed=9, sources=(leak_source(level_db=calibrated_level(SourceKind.LEAK_SPRAY),
                                                     distance_m=9.0),))
    first = simulate(scenario, duration=40.0)[1].to_frame()
    second = simulate(scenario, duration=40.0)[1].to_frame()
    assert first.equals(second)


def test_push_event_returns_the_same_arrays():
    arrays = EventArrays(10)
    assert push_event(arrays, Event.NOISE) is arrays
    assert arrays.counts == (9, 0, 1)


def test_run_monitor_polls_every_tau(quiet_scenario, front):
    timeline = run_monitor(Baseline(1e12, 0.0), MonitorConfig(tau_s=3), quiet_scenario, 30.0, front)
    assert [r.time_s for r in timeline.records] == [3.0 * k for k in range(10)]
    assert all(r.event is Event.QUIET and r.acquisitions == 1 for r in timeline.records)
