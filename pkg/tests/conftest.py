import os
import sys
from typing import Iterable, List

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), os.pardir))

from leaksentinel.config import PropagationPath, Scenario, ScenarioSource, SourceKind
from leaksentinel.dsp import OVERLOAD
from leaksentinel.frontend import FrontEnd


class ScriptedSource:
    """Acquisition source replaying fixed energies and recording request times"""

    def __init__(self, values: Iterable):
        self.values: List = list(values)
        self.times: List[float] = []

    def __call__(self, t: float):
        self.times.append(t)
        if not self.values:
            raise AssertionError("scripted source exhausted")
        return self.values.pop(0)


def leak_source(kind: SourceKind = SourceKind.LEAK_SPRAY, level_db: float = -20.0, distance_m: float = 1.0,
                **fields) -> ScenarioSource:
    return ScenarioSource(kind=kind, level_db=level_db, path=PropagationPath(distance_m=distance_m), **fields)


@pytest.fixture(scope="session")
def front():
    return FrontEnd()


@pytest.fixture
def quiet_scenario():
    return Scenario(name="quiet", seed=3)


@pytest.fixture
def scripted():
    return ScriptedSource


@pytest.fixture
def overload():
    return OVERLOAD


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    """Keep archives and outputs inside the test's temporary directory"""
    monkeypatch.setenv("LEAKSENTINEL_DB", str(tmp_path / "runs.db"))
    monkeypatch.setenv("LEAKSENTINEL_OUT_DIR", str(tmp_path / "out"))
    monkeypatch.delenv("LEAKSENTINEL_JOBS", raising=False)
