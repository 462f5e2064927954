"""Recover (distance, orientation) from one 8-photodiode readout by grid search on chi-squared.

A coarse sweep over the whole grid is followed by a fine sweep around its
minimiser. Orientation rows are spaced by a fixed arc length at each
candidate distance. Model values are computed from photodiode-relative
angles held as integer grid offsets, so cyclically relabelling the
photodiodes moves the estimate by exactly 45 degrees per position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Optional, Union

import numpy as np

from .errors import EmptyGrid, InputError
from .grid import SweepSpec
from .response import N_PD, Readout, ResponseModel, _pv_delta, wrap_delta

COARSE_SPEC = SweepSpec()
FINE_HALF_RANGE_D = 30.0      # mm
FINE_HALF_RANGE_THETA = 30.0  # degrees
FINE_D_STEP = 2.0             # mm
FINE_ARC_STEP = 2.0           # mm of arc


class Stage(str, Enum):
    COARSE = "coarse"
    FINE = "fine"


@dataclass(frozen=True)
class PoseEstimate:
    d: float
    theta: float
    chi_sq: float
    stage: Stage = Stage.COARSE
    # (row angular count, index) of a coarse grid point; keeps later sweeps shift-exact.
    grid_index: Optional[tuple[int, int]] = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {"d_mm": self.d, "theta_deg": self.theta, "chi_sq": self.chi_sq}


def _signals(r: Union[Readout, np.ndarray]) -> np.ndarray:
    s = r.signals if isinstance(r, Readout) else np.asarray(r, dtype=float).reshape(-1)
    if s.size != N_PD:
        raise InputError(f"a readout has {N_PD} signals, got {s.size}")
    return s


def _chi_sq(s: np.ndarray, template: np.ndarray) -> np.ndarray:
    sq = (s - template) ** 2
    # Summing in sorted order makes the total independent of photodiode labelling.
    return np.sort(sq, axis=-1).sum(axis=-1)


def chi_sq(r: Union[Readout, np.ndarray], model: ResponseModel, d: float, theta: float) -> float:
    """Sum over photodiodes of the squared readout-model difference at ``(d, theta)``."""
    s = _signals(r)
    return float(_chi_sq(s, model.readout(d, theta)))


class _CoarseGrid:
    """Readout-independent model table for one (model, spec) pair."""

    def __init__(self, model: ResponseModel, spec: SweepSpec):
        if spec.theta_range is not None:
            raise InputError("the coarse sweep always covers the full circle")
        lo, hi = model.domain
        ds = [d for d in spec.distances() if lo - 1e-9 <= d <= hi + 1e-9]
        if not ds:
            raise EmptyGrid(f"no coarse distances inside model domain {model.domain}")
        rows_d, rows_n, rows_k, tables = [], [], [], []
        for d in ds:
            n = spec.angular_count(d)
            k = np.arange(n)
            per_pd = n // N_PD
            rel = np.mod(k[:, None] - per_pd * np.arange(N_PD)[None, :], n)
            rel = np.where(rel > n // 2, rel - n, rel)
            y0, A, m_u, w = model._params(np.asarray(d))
            tables.append(_pv_delta(rel * (360.0 / n), y0, A, m_u, w))
            rows_d.append(np.full(n, d))
            rows_n.append(np.full(n, n))
            rows_k.append(k)
        self.d = np.concatenate(rows_d)
        self.n = np.concatenate(rows_n)
        self.k = np.concatenate(rows_k)
        self.theta = self.k * (360.0 / self.n)
        self.table = np.concatenate(tables)


@lru_cache(maxsize=16)
def _coarse_grid(model: ResponseModel, spec: SweepSpec) -> _CoarseGrid:
    return _CoarseGrid(model, spec)


def coarse_sweep(r: Union[Readout, np.ndarray], model: ResponseModel, spec: SweepSpec = COARSE_SPEC) -> PoseEstimate:
    """Grid minimiser of chi-squared; ties go to the smallest d, then the smallest theta."""
    s = _signals(r)
    g = _coarse_grid(model, spec)
    chi = _chi_sq(s, g.table)
    i = int(np.argmin(chi))
    return PoseEstimate(float(g.d[i]), float(g.theta[i]), float(chi[i]), Stage.COARSE,
                        (int(g.n[i]), int(g.k[i])))


def _fine_rows(center: PoseEstimate, domain: tuple[float, float]):
    lo, hi = domain
    m = int(round(FINE_HALF_RANGE_D / FINE_D_STEP))
    ds = center.d + FINE_D_STEP * np.arange(-m, m + 1)
    return ds[(ds >= lo - 1e-9) & (ds <= hi + 1e-9)]


def fine_sweep(r: Union[Readout, np.ndarray], model: ResponseModel, center: PoseEstimate) -> PoseEstimate:
    """Refine ``center`` over +/-30 mm (2 mm steps) and +/-30 degrees (2 mm of arc steps).

    Rows outside the model domain are dropped. The centre itself is part of
    the grid, so the result never has a larger chi-squared than ``center``.
    """
    s = _signals(r)
    ds = _fine_rows(center, model.domain)
    if ds.size == 0:
        raise EmptyGrid("fine sweep has no distances inside the model domain")
    # Photodiode-relative angle of the centre orientation.
    if center.grid_index is not None:
        n, k = center.grid_index
        rel = np.mod(k - (n // N_PD) * np.arange(N_PD), n)
        base = np.where(rel > n // 2, rel - n, rel) * (360.0 / n)
    else:
        base = wrap_delta(center.theta - 45.0 * np.arange(N_PD))
    all_d, all_off, tables = [], [], []
    for d in ds:
        step = math.degrees(FINE_ARC_STEP / d)
        m = int(round(FINE_HALF_RANGE_THETA / step))
        off = step * np.arange(-m, m + 1)
        y0, A, m_u, w = model._params(np.asarray(d))
        tables.append(_pv_delta(wrap_delta(base[None, :] + off[:, None]), y0, A, m_u, w))
        all_d.append(np.full(off.size, d))
        all_off.append(off)
    d_all = np.concatenate(all_d)
    off_all = np.concatenate(all_off)
    chi = _chi_sq(s, np.concatenate(tables))
    i = int(np.argmin(chi))
    if chi[i] > center.chi_sq and np.isfinite(center.chi_sq):
        return PoseEstimate(center.d, center.theta, center.chi_sq, Stage.FINE)
    theta = (center.theta + off_all[i]) % 360.0
    if theta >= 360.0:
        theta = 0.0
    return PoseEstimate(float(d_all[i]), float(theta), float(chi[i]), Stage.FINE)


def localize(r: Union[Readout, np.ndarray], model: ResponseModel, spec: SweepSpec = COARSE_SPEC) -> PoseEstimate:
    """Coarse then fine sweep."""
    coarse = coarse_sweep(r, model, spec)
    fine = fine_sweep(r, model, coarse)
    assert fine.chi_sq <= coarse.chi_sq
    return fine


def localize_many(signals: np.ndarray, model: ResponseModel, spec: SweepSpec = COARSE_SPEC) -> list[PoseEstimate]:
    signals = np.asarray(signals, dtype=float).reshape(-1, N_PD)
    return [localize(s, model, spec) for s in signals]
