"""Distance/orientation grids with arc-length angular steps."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EmptyGrid, InputError
from .response import N_PD


@dataclass(frozen=True)
class SweepSpec:
    """Grid of distances (mm) and, per distance, orientations spaced by ``arc_step`` mm of arc.

    On the full circle the angular count of each row is rounded to a
    multiple of the photodiode count, so every row is invariant under a
    45 degree rotation.
    """

    d_range: tuple[float, float] = (70.0, 450.0)
    d_step: float = 10.0
    arc_step: float = 10.0
    theta_range: Optional[tuple[float, float]] = None

    def __post_init__(self):
        object.__setattr__(self, "d_range", (float(self.d_range[0]), float(self.d_range[1])))
        if self.theta_range is not None:
            object.__setattr__(self, "theta_range", (float(self.theta_range[0]), float(self.theta_range[1])))
        if not (self.d_step > 0 and self.arc_step > 0):
            raise InputError("d_step and arc_step must be positive")
        lo, hi = self.d_range
        if not (0 < lo <= hi):
            raise InputError(f"bad distance range {self.d_range}")
        if self.theta_range is not None and not self.theta_range[0] <= self.theta_range[1]:
            raise InputError(f"bad orientation range {self.theta_range}")

    def distances(self) -> np.ndarray:
        lo, hi = self.d_range
        n = int(math.floor((hi - lo) / self.d_step + 1e-9))
        return lo + self.d_step * np.arange(n + 1)

    def angular_count(self, d: float) -> int:
        """Number of orientations in the full-circle row at distance ``d``."""
        return full_circle_count(d, self.arc_step)

    def angles(self, d: float) -> np.ndarray:
        if self.theta_range is None:
            n = self.angular_count(d)
            return np.arange(n) * (360.0 / n)
        lo, hi = self.theta_range
        step = math.degrees(self.arc_step / d)
        n = int(math.floor((hi - lo) / step + 1e-9))
        return lo + step * np.arange(n + 1)

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened ``(d, theta)`` arrays, rows ordered by distance then orientation."""
        ds, ts = [], []
        for d in self.distances():
            a = self.angles(d)
            ds.append(np.full(a.size, d))
            ts.append(a)
        if not ds:
            raise EmptyGrid("sweep grid has no points")
        return np.concatenate(ds), np.concatenate(ts)

    def size(self) -> int:
        return sum(self.angles(d).size for d in self.distances())

    def within(self, domain: tuple[float, float]) -> bool:
        return domain[0] - 1e-9 <= self.d_range[0] and self.d_range[1] <= domain[1] + 1e-9


def full_circle_count(d: float, arc: float) -> int:
    return N_PD * max(1, int(round(2.0 * math.pi * d / (N_PD * arc))))
