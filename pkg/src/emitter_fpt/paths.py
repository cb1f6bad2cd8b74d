"""Containers for simulated trajectories."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np


@dataclass
class MeasurementRecord:
    """Detector output along a trajectory.

    ``dq[i]`` is the current increment over ``(times[i], times[i+1]]``;
    real for homodyne, complex for heterodyne.  ``jumps`` holds photon
    detection times (photon counting only).
    """

    times: np.ndarray
    dq: np.ndarray | None = None
    jumps: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.dq is not None and len(self.dq) != len(self.times) - 1:
            raise ValueError("dq must have one entry per step")
        if any(t1 <= t0 for t0, t1 in zip(self.jumps, self.jumps[1:])):
            raise ValueError("jump times must be strictly increasing")


@dataclass
class PopulationPath:
    """Excited-state population ``C_t`` sampled on a uniform grid (units 1/gamma)."""

    times: np.ndarray
    values: np.ndarray
    record: MeasurementRecord | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def __len__(self):
        return len(self.values)

    @property
    def c0(self) -> float:
        return float(self.values[0])
