"""Sweep datasets: in-memory form, CSV format and synthetic generation."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from .errors import InputError
from .grid import SweepSpec
from .io import atomic_write_text
from .response import N_PD, Design, NoiseSpec, ResponseModel, synthesize_signals

CSV_HEADER = ["design", "path", "d_mm", "theta_deg"] + [f"S{i}" for i in range(N_PD)]


class LightPath(str, Enum):
    FREE = "free"
    POST = "post"


@dataclass(frozen=True, eq=False)
class SweepDataset:
    design: Design
    path: LightPath
    d: np.ndarray
    theta: np.ndarray
    signals: np.ndarray  # (N, 8)
    d_step: float = 10.0
    arc_step: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "design", Design(self.design))
        object.__setattr__(self, "path", LightPath(self.path))
        d = np.asarray(self.d, dtype=float).reshape(-1)
        theta = np.asarray(self.theta, dtype=float).reshape(-1)
        s = np.asarray(self.signals, dtype=float).reshape(-1, N_PD)
        if not (d.size == theta.size == s.shape[0]):
            raise InputError("d, theta and signals must have one entry per record")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(theta)) and np.all(np.isfinite(s))):
            raise InputError("sweep records must be finite")
        if np.any(d <= 0):
            raise InputError("distances must be positive")
        if np.any(theta < 0) or np.any(theta >= 360.0):
            raise InputError("orientations must lie in [0, 360) degrees")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "signals", s)

    def __len__(self) -> int:
        return self.d.size

    @property
    def distances(self) -> np.ndarray:
        return np.unique(self.d)

    def rotated(self, degrees: float) -> "SweepDataset":
        """Same data with every orientation label advanced by ``degrees``."""
        return SweepDataset(self.design, self.path, self.d, np.mod(self.theta + degrees, 360.0) % 360.0,
                            self.signals, self.d_step, self.arc_step)


def synthesize_sweep(model: ResponseModel, spec: SweepSpec = SweepSpec(), noise: Optional[NoiseSpec] = None,
                     rng: Optional[np.random.Generator] = None, path: LightPath = LightPath.FREE,
                     rotation: float = 0.0) -> SweepDataset:
    """Readouts at every grid point; ``rotation`` offsets the sensor heading in degrees."""
    d, theta = spec.points()
    if rng is None and noise is not None:
        rng = np.random.default_rng(noise.seed)
    s = synthesize_signals(model, d, theta - rotation, noise, rng)
    return SweepDataset(model.design, path, d, theta, s, spec.d_step, spec.arc_step)


def sweep_to_csv(datasets: Iterable[SweepDataset]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for ds in datasets:
        for d, t, s in zip(ds.d, ds.theta, ds.signals):
            writer.writerow([ds.design.value, ds.path.value, repr(float(d)), repr(float(t))]
                            + [repr(float(v)) for v in s])
    return buf.getvalue()


def write_sweep_csv(datasets: Iterable[SweepDataset], path: Union[str, Path]) -> None:
    atomic_write_text(path, sweep_to_csv(datasets))


def read_sweep_csv(path: Union[str, Path], d_step: float = 10.0, arc_step: float = 10.0) -> list[SweepDataset]:
    """Parse a sweep CSV into one dataset per (design, path) present, free path first."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"sweep file not found: {path}")
    groups: dict[tuple[str, str], list[list[float]]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise InputError(f"{path}: expected header {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(CSV_HEADER):
                raise InputError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
            try:
                values = [float(c) for c in row[2:]]
                key = (Design(row[0].strip()).value, LightPath(row[1].strip()).value)
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from exc
            if any(math.isnan(v) for v in values):
                raise InputError(f"{path}:{lineno}: NaN values are not allowed")
            values[1] %= 360.0
            groups.setdefault(key, []).append(values)
    if not groups:
        raise InputError(f"{path}: no records")
    designs = {k[0] for k in groups}
    if len(designs) > 1:
        raise InputError(f"{path}: mixes designs {sorted(designs)}")
    out = []
    for key in sorted(groups, key=lambda k: k[1] != LightPath.FREE.value):
        arr = np.asarray(groups[key])
        out.append(SweepDataset(key[0], key[1], arr[:, 0], arr[:, 1], arr[:, 2:], d_step, arc_step))
    return out
