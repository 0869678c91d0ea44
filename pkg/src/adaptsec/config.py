"""Runtime configuration: detector thresholds, search horizon, loop policy."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields


@dataclass(frozen=True)
class AdaptsecConfig:
    # Frequency detector: distinct first-seen devices within the window.
    new_device_threshold: int = 3
    frequency_window_minutes: int = 1440
    # Latency detector: spike when above mean + k * dispersion and the floor.
    latency_k: float = 4.0
    latency_floor_ms: float = 25.0
    latency_min_samples: int = 10
    latency_window_samples: int = 50
    # Trace search.
    horizon: int = 4
    # Loop policy.
    auto_enact: bool = False
    intervention_expiry_minutes: int = 10080  # 7 simulated days

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path) -> AdaptsecConfig:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    known = {f.name for f in fields(AdaptsecConfig)}
    unknown = set(payload) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return AdaptsecConfig(**payload)
