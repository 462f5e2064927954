"""Mean absolute error harness and design comparison."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import GridMismatch, InputError, MissingTruth
from .grid import SweepSpec
from .io import atomic_write_text
from .localization import PoseEstimate, localize
from .response import Design, NoiseSpec, ResponseModel, synthesize_signals


def angular_error(a, b):
    """Smallest absolute angle between ``a`` and ``b`` in degrees, in [0, 180]."""
    diff = np.mod(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)), 360.0)
    out = np.minimum(diff, 360.0 - diff)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MAERow:
    d: float
    n_theta: int
    d_mae: float
    theta_mae: float


@dataclass
class MAEReport:
    design: Optional[Design]
    rows: list[MAERow]
    provenance: dict = field(default_factory=dict)

    @property
    def distances(self) -> np.ndarray:
        return np.array([r.d for r in self.rows])

    @property
    def d_mae(self) -> np.ndarray:
        return np.array([r.d_mae for r in self.rows])

    @property
    def theta_mae(self) -> np.ndarray:
        return np.array([r.theta_mae for r in self.rows])

    def to_dict(self) -> dict:
        return {
            "design": None if self.design is None else Design(self.design).value,
            "rows": [asdict(r) for r in self.rows],
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["d_mm", "n_theta", "d_mae_mm", "theta_mae_deg"])
        for r in self.rows:
            w.writerow([repr(r.d), r.n_theta, repr(r.d_mae), repr(r.theta_mae)])
        return buf.getvalue()

    def write(self, path: Union[str, Path]) -> None:
        path = Path(path)
        atomic_write_text(path, self.to_csv() if path.suffix.lower() == ".csv" else self.to_json())

    @classmethod
    def from_dict(cls, doc: dict) -> "MAEReport":
        try:
            design = None if doc.get("design") is None else Design(doc["design"])
            rows = [MAERow(float(r["d"]), int(r["n_theta"]), float(r["d_mae"]), float(r["theta_mae"]))
                    for r in doc["rows"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed MAE report: {exc}") from exc
        return cls(design, rows, dict(doc.get("provenance", {})))


def mae_over_sweep(pairs: Iterable[tuple[PoseEstimate, Optional[tuple[float, float]]]],
                   circular: bool = True, design: Optional[Design] = None,
                   provenance: Optional[dict] = None) -> MAEReport:
    """Group (estimate, (d_true, theta_true)) pairs by true distance and average the errors.

    With ``circular=False`` the orientation error is the raw ``|theta_hat - theta|``.
    """
    groups: dict[float, list[tuple[float, float]]] = {}
    for est, truth in pairs:
        if truth is None:
            raise MissingTruth("every estimate needs a (d, theta) truth")
        d, theta = float(truth[0]), float(truth[1])
        e_t = angular_error(est.theta, theta) if circular else abs(est.theta - theta)
        groups.setdefault(d, []).append((abs(est.d - d), e_t))
    if not groups:
        raise MissingTruth("no estimates supplied")
    rows = []
    for d in sorted(groups):
        e = np.asarray(groups[d])
        rows.append(MAERow(d, len(e), float(e[:, 0].mean()), float(e[:, 1].mean())))
    prov = dict(provenance or {})
    prov.setdefault("theta_error", "circular" if circular else "raw")
    return MAEReport(design, rows, prov)


def closed_loop_eval(model: ResponseModel, noise: Optional[NoiseSpec] = None, grid: SweepSpec = SweepSpec(),
                     seed: Optional[int] = None, truth_model: Optional[ResponseModel] = None) -> MAEReport:
    """Synthesize a readout at every grid point, localize it, and report MAE per distance.

    Readouts come from ``truth_model`` when given (e.g. the model a calibration
    was fitted to), otherwise from ``model`` itself.
    """
    source = truth_model if truth_model is not None else model
    if not grid.within(model.domain):
        raise InputError(f"grid {grid.d_range} lies outside model domain {model.domain}")
    if seed is None and noise is not None:
        seed = noise.seed
    rng = np.random.default_rng(seed)
    d, theta = grid.points()
    signals = synthesize_signals(source, d, theta, noise, rng)
    pairs = [(localize(s, model), (dt, tt)) for s, dt, tt in zip(signals, d, theta)]
    prov = {
        "source": "synthetic",
        "noise_sigma": 0.0 if noise is None else noise.sigma,
        "seed": seed,
        "grid": {"d_range": list(grid.d_range), "d_step": grid.d_step, "arc_step": grid.arc_step},
        "n_points": int(d.size),
    }
    return mae_over_sweep(pairs, design=model.design, provenance=prov)


@dataclass
class ComparisonRow:
    d: float
    d_mae_a: float
    d_mae_b: float
    theta_mae_a: float
    theta_mae_b: float

    @property
    def d_delta(self) -> float:
        return self.d_mae_a - self.d_mae_b

    @property
    def theta_delta(self) -> float:
        return self.theta_mae_a - self.theta_mae_b


@dataclass
class ComparisonSummary:
    label_a: str
    label_b: str
    rows: list[ComparisonRow]

    # Ties count as a win for both sides.
    @property
    def d_wins_a(self) -> int:
        return sum(r.d_mae_a <= r.d_mae_b for r in self.rows)

    @property
    def d_wins_b(self) -> int:
        return sum(r.d_mae_b <= r.d_mae_a for r in self.rows)

    @property
    def theta_wins_a(self) -> int:
        return sum(r.theta_mae_a <= r.theta_mae_b for r in self.rows)

    @property
    def theta_wins_b(self) -> int:
        return sum(r.theta_mae_b <= r.theta_mae_a for r in self.rows)

    def statement(self) -> str:
        n = len(self.rows)
        d_winner = self.label_a if self.d_wins_a >= self.d_wins_b else self.label_b
        t_winner = self.label_a if self.theta_wins_a >= self.theta_wins_b else self.label_b
        return (f"{d_winner} wins distance ({max(self.d_wins_a, self.d_wins_b)}/{n} rows); "
                f"{t_winner} wins orientation ({max(self.theta_wins_a, self.theta_wins_b)}/{n} rows)")

    def to_dict(self) -> dict:
        return {
            "a": self.label_a,
            "b": self.label_b,
            "wins": {
                "d": {self.label_a: self.d_wins_a, self.label_b: self.d_wins_b},
                "theta": {self.label_a: self.theta_wins_a, self.label_b: self.theta_wins_b},
            },
            "summary": self.statement(),
            "rows": [{"d": r.d, "d_mae_a": r.d_mae_a, "d_mae_b": r.d_mae_b, "d_delta": r.d_delta,
                      "theta_mae_a": r.theta_mae_a, "theta_mae_b": r.theta_mae_b,
                      "theta_delta": r.theta_delta} for r in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["d_mm", "d_mae_a", "d_mae_b", "d_delta", "theta_mae_a", "theta_mae_b", "theta_delta"])
        for r in self.rows:
            w.writerow([repr(x) for x in (r.d, r.d_mae_a, r.d_mae_b, r.d_delta,
                                          r.theta_mae_a, r.theta_mae_b, r.theta_delta)])
        return buf.getvalue()


def _label(report: MAEReport, fallback: str) -> str:
    return Design(report.design).value if report.design is not None else fallback


def compare_designs(a: MAEReport, b: MAEReport) -> ComparisonSummary:
    """Per-distance deltas (a minus b) and win counts."""
    da, db = a.distances, b.distances
    if da.shape != db.shape or not np.allclose(da, db, rtol=0, atol=1e-9):
        raise GridMismatch("reports do not share a distance grid")
    la, lb = _label(a, "a"), _label(b, "b")
    if la == lb:
        la, lb = la + "_a", lb + "_b"
    rows = [ComparisonRow(ra.d, ra.d_mae, rb.d_mae, ra.theta_mae, rb.theta_mae) for ra, rb in zip(a.rows, b.rows)]
    return ComparisonSummary(la, lb, rows)


def fraction_where(mask: Sequence[bool]) -> float:
    mask = np.asarray(mask, dtype=bool)
    return float(mask.mean()) if mask.size else 0.0
