"""Shared fixtures for the sdnum test suite."""

import socket
from pathlib import Path

import pytest
import yaml

from sdnum.config import ExperimentConfig
from sdnum.contagion import PropagationGraph
from sdnum.scenarios import DemographicSpec, GridSpec, PandemicScenario, WildfireScenario

SMALL_PANDEMIC = {"n_teen": 4, "n_adult": 6, "n_elderly": 4, "er_edge_prob": 0.3}


@pytest.fixture
def chain_graph():
    """0 -> 1 -> 2 with certain contact, no deaths, no recovery."""
    return PropagationGraph.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)])


@pytest.fixture
def small_spec():
    return DemographicSpec(**SMALL_PANDEMIC)


@pytest.fixture
def pandemic(small_spec):
    return PandemicScenario("loc1", small_spec, seed=7, initial_infections=2)


@pytest.fixture
def wildfire():
    """Calm 5x5 grid with bare ground (spread probability kappa everywhere)."""
    return WildfireScenario("loc1", GridSpec(width=5, height=5), dt=0.1, initial_fires=2)


def small_config(mode: str = "pandemic", **overrides) -> dict:
    """Plain-data config small enough to run in a test."""
    if mode == "synthetic":
        sites = [
            {"name": "a", "kind": "log", "params": {"c": [1.0]}},
            {"name": "b", "kind": "log", "params": {"c": [2.0]}},
        ]
        horizon = {"T": 1, "tau": 1, "gamma": 1.0, "windows": 1, "z": [1.0]}
    elif mode == "wildfire":
        sites = [
            {"name": "loc1", "kind": "wildfire",
             "params": {"width": 5, "height": 5, "initial_fires": 2}},
            {"name": "loc2", "kind": "wildfire",
             "params": {"width": 5, "height": 5, "wind_dir": "W", "wind_speed": 0.3,
                        "initial_fires": 1}},
        ]
        horizon = {"T": 2, "tau": 1, "gamma": 0.95, "windows": 2, "z": [2.0]}
    else:
        sites = [
            {"name": "loc1", "kind": "pandemic",
             "params": dict(SMALL_PANDEMIC, initial_infections=2)},
            {"name": "loc2", "kind": "pandemic",
             "params": dict(SMALL_PANDEMIC, n_elderly=2, initial_infections=2)},
        ]
        horizon = {"T": 2, "tau": 1, "gamma": 0.99, "windows": 2, "z": [2.0]}
    data = {
        "mode": mode,
        "seed": 11,
        "horizon": horizon,
        "evaluation": {"replicas": 3},
        "compare": {
            "policies": ["none", "random"],
            "epochs": 4,
            "budget": 1,
            "replicas": 4,
        },
        "contagion": {"trajectory_epochs": 3},
        "sites": sites,
    }
    data.update(overrides)
    return data


@pytest.fixture
def make_config(tmp_path):
    """Build a validated ExperimentConfig writing into tmp_path."""

    def _make(mode: str = "pandemic", **overrides) -> ExperimentConfig:
        data = small_config(mode, **overrides)
        data.setdefault("output_dir", str(tmp_path / "out"))
        return ExperimentConfig.from_dict(data)

    return _make


@pytest.fixture
def config_file(tmp_path):
    """Write a small config to YAML and return its path."""

    def _write(mode: str = "pandemic", name: str = "config.yaml", **overrides) -> Path:
        data = small_config(mode, **overrides)
        path = tmp_path / name
        path.write_text(yaml.safe_dump(data, sort_keys=False), encoding="utf-8")
        return path

    return _write


@pytest.fixture
def free_port():
    """A local port with nothing listening on it."""
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]
