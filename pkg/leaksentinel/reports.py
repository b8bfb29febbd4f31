"""
CSV and HTML artifacts written by the command line.
"""
import logging
from pathlib import Path
from typing import Union

import pandas as pd
import plotly.express as px

from .detector import Timeline
from .power import PowerReport

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def write_csv(frame: pd.DataFrame, path: PathLike) -> Path:
    """Fixed float formatting and LF endings, so equal runs give equal bytes"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.6g", lineterminator="\n")
    logger.debug("wrote %s (%d rows)", path, len(frame))
    return path


def write_timeline(timeline: Timeline, path: PathLike) -> Path:
    return write_csv(timeline.to_frame(), path)


def power_frame(report: PowerReport, tau_s: float, acq_per_poll: float) -> pd.DataFrame:
    return pd.DataFrame([{
        "tau_s": tau_s,
        "acq_per_poll": acq_per_poll,
        "avg_power_uW": report.avg_power_uw,
        "sleep_fraction": report.sleep_fraction,
        "lifetime_years": report.lifetime_years,
    }])


def verdict_line(timeline: Timeline, scenario_name: str) -> str:
    verdict, first = timeline.verdict
    if first is None:
        return f"{verdict} {scenario_name}: no trigger in {len(timeline)} polls"
    return f"{verdict} {scenario_name}: first trigger at {first:.1f} s"


def timeline_figure(timeline: Timeline, title: str):
    frame = timeline.to_frame()
    long = frame.melt(id_vars="time_s", value_vars=["q", "s", "r"], var_name="count", value_name="events")
    fig = px.line(long, x="time_s", y="events", color="count", title=title,
                  labels={"time_s": "Time (s)", "events": "Events in window"})
    fig.update_layout(height=350, margin=dict(l=20, r=20, t=40, b=20))
    return fig


def write_timeline_html(timeline: Timeline, path: PathLike, title: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    timeline_figure(timeline, title).write_html(str(path), include_plotlyjs="cdn")
    return path


def response_figure(frame: pd.DataFrame, chain: str):
    fig = px.line(frame, x="frequency_hz", y="magnitude_db", title=f"Frequency response ({chain})",
                  labels={"frequency_hz": "Frequency (Hz)", "magnitude_db": "Magnitude (dB)"})
    fig.update_layout(height=350, margin=dict(l=20, r=20, t=40, b=20))
    return fig
