"""
Duty-cycle energy accounting and battery lifetime.
"""
import logging
from dataclasses import dataclass
from typing import Iterable, Optional

import pandas as pd

from .config import FRAME_DURATION_S, PowerParams

logger = logging.getLogger(__name__)

SECONDS_PER_YEAR = 365.25 * 24 * 3600
TAU_RANGE = (1, 30)
POWER_COLUMNS = ["tau_s", "acq_per_poll", "avg_power_uW", "sleep_fraction", "lifetime_years"]


@dataclass(frozen=True)
class PowerReport:
    avg_power_w: float
    sleep_fraction: float
    lifetime_s: float
    peak_current_a: float

    @property
    def lifetime_years(self) -> float:
        return self.lifetime_s / SECONDS_PER_YEAR

    @property
    def avg_power_uw(self) -> float:
        return self.avg_power_w * 1e6


def _report(p: PowerParams, tau_s: float, acq_per_poll: float) -> PowerReport:
    avg = p.sleep_power_w + acq_per_poll * p.acq_energy_j / tau_s
    awake = acq_per_poll * (FRAME_DURATION_S + p.overhead_s) / tau_s
    return PowerReport(
        avg_power_w=avg,
        sleep_fraction=min(1.0, max(0.0, 1.0 - awake)),
        lifetime_s=p.derating * p.battery_capacity_j / avg,
        peak_current_a=p.peak_current_a,
    )


def average_power(p: PowerParams, tau_s: float, acq_per_poll: float = 1.0) -> PowerReport:
    """Average draw for a steady acquisition count per poll"""
    if not TAU_RANGE[0] <= tau_s <= TAU_RANGE[1]:
        raise ValueError(f"polling period {tau_s} s outside [{TAU_RANGE[0]}, {TAU_RANGE[1]}]")
    if not 1 <= acq_per_poll <= 5:
        raise ValueError(f"acquisitions per poll {acq_per_poll} outside [1, 5]")
    return _report(p, tau_s, acq_per_poll)


def simulate_energy(timeline, p: PowerParams) -> PowerReport:
    """Energy of a monitored run, charged per acquisition actually performed"""
    if len(timeline) == 0:
        raise ValueError("timeline is empty")
    counts = [record.acquisitions for record in timeline.records]
    mean_acq = sum(counts) / len(counts)
    report = _report(p, timeline.tau_s, mean_acq)
    logger.debug("run energy: %.1f uW over %d polls", report.avg_power_uw, len(counts))
    return report


def power_sweep(p: Optional[PowerParams] = None, taus: Iterable[int] = range(1, 31),
                acq_per_poll: Iterable[float] = (1.0,)) -> pd.DataFrame:
    p = p or PowerParams()
    rows = []
    for acq in acq_per_poll:
        for tau in taus:
            report = average_power(p, tau, acq)
            rows.append((tau, acq, report.avg_power_uw, report.sleep_fraction, report.lifetime_years))
    return pd.DataFrame(rows, columns=POWER_COLUMNS)
