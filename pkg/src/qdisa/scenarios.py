"""Bundled demonstration scenarios.

Each JSON under ``scenarios/`` pins one instrument configuration: magnet
placement, sweep window, probe power, and what to report. Together they
exercise the advertised operating envelope: the three octave-scale bands
(around 9.5 GHz, the sub-350 MHz low band, and the 20-24 GHz high band),
the resolution study in shallow and steep gradients, multi-tone tracking
over time, and the dynamic-range and temporal-resolution metrics.
"""

from __future__ import annotations

import json
from importlib import resources

from .config import ScenarioConfig, scenario_from_dict
from .errors import ConfigError

BUNDLED = (
    "xband",
    "low_band",
    "kband",
    "shallow_gradient",
    "steep_gradient",
    "chirp_crossing",
    "dynamic_range",
    "temporal_resolution",
)


def scenario_names():
    return list(BUNDLED)


def load_bundled(name: str) -> ScenarioConfig:
    if name not in BUNDLED:
        raise ConfigError(
            f"unknown scenario {name!r}; bundled: {', '.join(BUNDLED)}"
        )
    ref = resources.files(__package__) / "scenarios" / f"{name}.json"
    raw = json.loads(ref.read_text())
    return scenario_from_dict(raw, name=name)
