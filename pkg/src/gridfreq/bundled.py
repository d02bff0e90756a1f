"""Accessors for the packaged reduced multi-area test system."""
from __future__ import annotations

from importlib import resources
from pathlib import Path

from .modelio import load_distribution, load_model, load_scenario


def data_path(*parts) -> Path:
    return Path(resources.files("gridfreq").joinpath("data", *parts))


def bundled_model():
    """Reduced Nordic-style multi-area AC/DC test system."""
    return load_model(data_path("nordic_reduced.yaml"))


def bundled_scenario(name: str = "dimensioning"):
    return load_scenario(data_path("scenarios", f"{name}.yaml"))


def bundled_scenarios():
    return [bundled_scenario(n) for n in ("dimensioning", "trip_no_700", "trip_fi_300")]


def bundled_distribution(name: str):
    return load_distribution(data_path("distributions", f"{name}.yaml"))
