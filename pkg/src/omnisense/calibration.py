"""Sweep data -> ResponseModel.

Pipeline: estimate each dataset's heading offset, centre every photodiode's
peak on 180 degrees, pool and bin-average per distance, fit a pseudo-Voigt
per distance, then fit the design's parameter-curve families over distance.
"""

from __future__ import annotations

import contextlib
import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .datasets import LightPath, SweepDataset
from .errors import DegenerateInput, FitFailed, InputError, NumericalError, OmnisenseError
from .nlls import FitResult, nlls_fit
from .response import (DESIGN_FAMILIES, FAMILIES, N_PD, PARAM_NAMES, PD_SPACING_DEG, THETA0_DEG, CurveFamily,
                       Design, ParamCurve, PVParams, ResponseModel, SensorLayout, _pv_delta, wrap_delta)

N_BINS = 40
MIN_DISTANCES = 6


# --------------------------------------------------------------------------
# Heading offset and centring
# --------------------------------------------------------------------------


def _peak_direction(theta: np.ndarray, s: np.ndarray) -> float:
    """Signal-weighted circular mean of ``theta`` (degrees, in [0, 360))."""
    w = np.maximum(s - np.median(s), 0.0)
    if not np.any(w > 0):
        w = np.ones_like(s)
    a = np.radians(theta)
    return math.degrees(math.atan2(np.sum(w * np.sin(a)), np.sum(w * np.cos(a)))) % 360.0


def _gaussian_baseline(p, x):
    c, a, mu, sigma = p
    # Periodic in x, so where the seam falls does not bias the centre.
    return c + a * np.exp(-0.5 * (wrap_delta(x - mu) / sigma) ** 2)


def estimate_offset(ds: SweepDataset) -> float:
    """Heading offset of a dataset in degrees.

    Picks the photodiode whose pooled peak lies closest to 180 degrees, fits
    a Gaussian plus constant baseline to its signal over all distances (each
    distance scaled to its 5th-95th percentile range first), and
    returns the fitted centre minus that photodiode's nominal angle, wrapped
    to (-180, 180]. For small offsets the selected photodiode is the one
    mounted at 180 degrees.
    """
    if len(ds) == 0:
        raise InputError("dataset is empty")
    peaks = [_peak_direction(ds.theta, ds.signals[:, i]) for i in range(N_PD)]
    dist = [abs(float(wrap_delta(p - 180.0))) for p in peaks]
    sel = int(np.argmin(dist))
    y = ds.signals[:, sel].astype(float)
    # Scale each distance to a common range so near rows do not dominate the peak shape.
    for d in np.unique(ds.d):
        k = ds.d == d
        lo, hi = np.percentile(y[k], [5.0, 95.0])
        y[k] = (y[k] - lo) / (hi - lo) if hi > lo else 0.0
    mu0 = peaks[sel]
    # Put the peak in the middle of a linear axis.
    x = mu0 + wrap_delta(ds.theta - mu0)
    p0 = [0.0, 1.0, mu0, 30.0]
    bounds = ([-np.inf, 0.0, mu0 - 45.0, 0.5], [np.inf, np.inf, mu0 + 45.0, 360.0])
    fit = nlls_fit(_gaussian_baseline, x, y, p0, bounds)
    if not (fit.converged and np.all(np.isfinite(fit.params))):
        raise FitFailed(f"offset Gaussian fit did not converge ({fit.message})", stage="estimate_offset")
    return float(wrap_delta(fit.params[2] - PD_SPACING_DEG * sel))


@dataclass(frozen=True, eq=False)
class CenteredSeries:
    """All centred samples at one distance, pooled over photodiodes (and paths)."""

    d: float
    theta: np.ndarray
    signal: np.ndarray

    def merge(self, other: "CenteredSeries") -> "CenteredSeries":
        if other.d != self.d:
            raise InputError(f"cannot pool series at different distances ({self.d} vs {other.d})")
        return CenteredSeries(self.d, np.concatenate([self.theta, other.theta]),
                              np.concatenate([self.signal, other.signal]))


def center_signals(ds: SweepDataset, theta_off: float) -> dict[float, CenteredSeries]:
    """Rotate out ``theta_off`` and move every photodiode's nominal angle to 180 degrees."""
    out = {}
    shifts = THETA0_DEG - PD_SPACING_DEG * np.arange(N_PD)
    for d in ds.distances:
        m = ds.d == d
        th = np.mod(ds.theta[m][:, None] - theta_off + shifts[None, :], 360.0)
        th = np.where(th >= 360.0, 0.0, th)
        out[float(d)] = CenteredSeries(float(d), th.reshape(-1), ds.signals[m].reshape(-1))
    return out


def pool_series(*groups: dict[float, CenteredSeries]) -> dict[float, CenteredSeries]:
    pooled: dict[float, CenteredSeries] = {}
    for g in groups:
        for d, s in g.items():
            pooled[d] = pooled[d].merge(s) if d in pooled else s
    return dict(sorted(pooled.items()))


# --------------------------------------------------------------------------
# Binning
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BinnedProfile:
    d: float
    centers: np.ndarray
    means: np.ndarray    # NaN for empty bins
    counts: np.ndarray
    # Samples behind each bin, so a fit can average the model the same way.
    member_theta: Optional[np.ndarray] = None
    member_bin: Optional[np.ndarray] = None

    @property
    def n_bins(self) -> int:
        return self.centers.size

    @property
    def nonempty(self) -> np.ndarray:
        return self.counts > 0


def bin_average(series: CenteredSeries, n_bins: int = N_BINS) -> BinnedProfile:
    """Mean signal in ``n_bins`` equal bins over [0, 360); bin k is [k w, (k+1) w)."""
    if n_bins < 4:
        raise InputError("n_bins must be >= 4")
    width = 360.0 / n_bins
    # Canonical sample order makes the sums independent of input order.
    order = np.lexsort((series.signal, series.theta))
    th = series.theta[order]
    s = series.signal[order]
    k = np.clip(np.floor(th / width).astype(int), 0, n_bins - 1)
    counts = np.bincount(k, minlength=n_bins)
    sums = np.bincount(k, weights=s, minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / counts, np.nan)
    centers = (np.arange(n_bins) + 0.5) * width
    return BinnedProfile(series.d, centers, means, counts, th, k)


# --------------------------------------------------------------------------
# Per-distance pseudo-Voigt fit
# --------------------------------------------------------------------------


def _pv_initial(x: np.ndarray, y: np.ndarray, bin_width: float) -> list[float]:
    y0 = float(np.min(y))
    peak = float(np.max(y))
    half = y0 + 0.5 * (peak - y0)
    w = max(bin_width, float(np.count_nonzero(y >= half)) * bin_width)
    shape = 0.5 * 2.0 / math.pi + 0.5 * math.sqrt(4.0 * math.log(2.0) / math.pi)
    A = max(peak - y0, 1e-12) * w / shape
    return [y0, A, 0.5, w]


def fit_pv_at_distance(profile: BinnedProfile, theta0: float = THETA0_DEG,
                       use_members: bool = True) -> tuple[PVParams, FitResult]:
    """Fit the pseudo-Voigt peak (centre fixed at ``theta0``) to a binned profile.

    With ``use_members`` (and sample angles available) the model is averaged
    over the same samples as the data in each bin, so binning introduces no
    curvature bias; otherwise the model is evaluated at bin centres.
    """
    keep = profile.nonempty
    if np.count_nonzero(keep) < 8:
        raise DegenerateInput(f"need >= 8 non-empty bins at d={profile.d}, got {np.count_nonzero(keep)}")
    y = profile.means[keep]
    x_centers = profile.centers[keep]
    if use_members and profile.member_theta is not None:
        delta = wrap_delta(profile.member_theta - theta0)
        ids = profile.member_bin
        counts = profile.counts

        def model(p, _x):
            v = _pv_delta(delta, *p)
            return (np.bincount(ids, weights=v, minlength=counts.size)[keep]) / counts[keep]
    else:
        delta_c = wrap_delta(x_centers - theta0)

        def model(p, _x):
            return _pv_delta(delta_c, *p)

    bounds = ([-np.inf, 0.0, -np.inf, 1e-3], [np.inf, np.inf, np.inf, 720.0])
    width = 360.0 / profile.n_bins
    p0 = _pv_initial(x_centers, y, width)
    best = None
    for m_u in (0.5, 0.1, 0.9):
        start = p0.copy()
        start[2] = m_u
        start[1] = p0[1] * (0.5 * 2.0 / math.pi + 0.5 * math.sqrt(4.0 * math.log(2.0) / math.pi)) / (
            m_u * 2.0 / math.pi + (1.0 - m_u) * math.sqrt(4.0 * math.log(2.0) / math.pi))
        fit = nlls_fit(model, x_centers, y, start, bounds)
        if best is None or fit.cost < best.cost:
            best = fit
    if not np.all(np.isfinite(best.params)):
        raise FitFailed("pseudo-Voigt fit diverged", stage=f"pv_fit d={profile.d}")
    return PVParams(*(float(v) for v in best.params)), best


# --------------------------------------------------------------------------
# Parameter curves over distance
# --------------------------------------------------------------------------


def _grid_candidates(family: CurveFamily, d: np.ndarray):
    """Nonlinear-parameter grid and linear basis for each family.

    Returns ``(grid, basis, assemble)``: ``basis(nl, d)`` gives the columns the
    curve is linear in, ``assemble(nl, lin)`` orders everything as the
    family's coefficient tuple.
    """
    lo, hi = float(d.min()), float(d.max())
    span = max(hi - lo, 1e-9)
    geo = np.geomspace
    if family is CurveFamily.LOGISTIC:
        grid = itertools.product(geo(lo / 4, hi * 4, 24), (0.5, 1, 1.5, 2, 3, 4, 6, 8, 12))

        def basis(nl, x):
            g = 1.0 / (1.0 + (x / nl[0]) ** nl[1])
            return np.column_stack([g, 1.0 - g])
        return grid, basis, lambda nl, lin: (lin[0], lin[1], nl[0], nl[1])
    if family is CurveFamily.EXP_DECAY2:
        ts = geo(span / 50, span * 10, 20)
        grid = ((a, b) for a, b in itertools.product(ts, ts) if a < b)

        def basis(nl, x):
            return np.column_stack([np.ones_like(x), np.exp(-x / nl[0]), np.exp(-x / nl[1])])
        return grid, basis, lambda nl, lin: (lin[0], lin[1], nl[0], lin[2], nl[1])
    if family is CurveFamily.LORENTZ:
        grid = itertools.product(geo(span / 30, span * 20, 20), np.linspace(lo - span, hi + span, 31))

        def basis(nl, x):
            w1, d0 = nl
            return np.column_stack([np.ones_like(x), 2.0 * w1 / (np.pi * (4.0 * (x - d0) ** 2 + w1 * w1))])
        return grid, basis, lambda nl, lin: (lin[0], lin[1], nl[0], nl[1])
    if family is CurveFamily.LOG_NORMAL:
        grid = itertools.product(geo(lo / 5, hi * 5, 25), geo(0.05, 4.0, 20))

        def basis(nl, x):
            d0, w1 = nl
            k = np.exp(-np.log(x / d0) ** 2 / (2 * w1 * w1)) / (np.sqrt(2 * np.pi) * w1 * x)
            return np.column_stack([np.ones_like(x), k])
        return grid, basis, lambda nl, lin: (lin[0], lin[1], nl[0], nl[1])
    if family is CurveFamily.EXP_DECAY1:
        grid = ((t,) for t in geo(span / 50, span * 20, 40))

        def basis(nl, x):
            return np.column_stack([np.ones_like(x), np.exp(-x / nl[0])])
        return grid, basis, lambda nl, lin: (lin[0], lin[1], nl[0])
    if family is CurveFamily.CHAPMAN:
        grid = itertools.product(geo(0.05 / hi, 50.0 / lo, 30), geo(0.05, 20.0, 25))

        def basis(nl, x):
            return ((1.0 - np.exp(-nl[0] * x)) ** nl[1])[:, None]
        return grid, basis, lambda nl, lin: (lin[0], nl[0], nl[1])
    if family is CurveFamily.RATIONAL:
        pos = geo(1e-6, 10.0 / lo, 30)
        neg = -geo(1e-6, 0.9 / hi, 15)
        grid = ((a,) for a in np.concatenate([neg[::-1], [0.0], pos]))

        def basis(nl, x):
            den = 1.0 + nl[0] * x
            return np.column_stack([1.0 / den, x / den])
        return grid, basis, lambda nl, lin: (nl[0], lin[0], lin[1])
    raise InputError(f"unknown curve family {family}")


def _curve_bounds(family: CurveFamily, d: np.ndarray):
    names = FAMILIES[family][1]
    lower = np.full(len(names), -np.inf)
    upper = np.full(len(names), np.inf)
    for i, n in enumerate(names):
        if n in FAMILIES[family][2]:
            lower[i] = 1e-9
    # A decay length or width below the sample spacing is not resolved by the data.
    steps = np.diff(np.unique(d))
    scales = {CurveFamily.EXP_DECAY1: ("t1",), CurveFamily.EXP_DECAY2: ("t1", "t2"), CurveFamily.LORENTZ: ("w1",)}
    if steps.size:
        for n in scales.get(family, ()):
            lower[names.index(n)] = float(steps.min())
    if family is CurveFamily.CHAPMAN:
        lower[names.index("b")] = 1e-12
    if family is CurveFamily.RATIONAL:
        lower[names.index("a")] = -1.0 / float(d.max()) + 1e-9
    return lower, upper


def fit_curve(family: CurveFamily, d, y, domain: Optional[tuple[float, float]] = None,
              n_starts: int = 4) -> tuple[ParamCurve, FitResult]:
    """Fit one parameter-curve family to ``y(d)``.

    Starting points come from a coarse grid over the family's nonlinear
    coefficients with the linear ones solved exactly; the best few are then
    refined by :func:`nlls_fit`.
    """
    family = CurveFamily(family)
    d = np.asarray(d, dtype=float)
    y = np.asarray(y, dtype=float)
    grid, basis, assemble = _grid_candidates(family, d)
    scored = []
    with np.errstate(all="ignore"):
        for nl in grid:
            B = basis(nl, d)
            if not np.all(np.isfinite(B)):
                continue
            lin, *_ = np.linalg.lstsq(B, y, rcond=None)
            res = y - B @ lin
            scored.append((float(res @ res), tuple(nl), tuple(lin)))
    if not scored:
        raise FitFailed("no usable starting point", stage=family.value)
    scored.sort(key=lambda t: t[0])
    formula = FAMILIES[family][0]
    lower, upper = _curve_bounds(family, d)
    best = None
    for _, nl, lin in scored[:n_starts]:
        p0 = np.clip(np.array(assemble(nl, lin), dtype=float), lower, upper)
        with np.errstate(all="ignore"):
            try:
                fit = nlls_fit(lambda p, x: formula(x, *p), d, y, p0, (lower, upper))
            except NumericalError:
                continue
        if np.all(np.isfinite(fit.params)) and (best is None or fit.cost < best.cost):
            best = fit
    if best is None:
        raise FitFailed("all starts diverged", stage=family.value)
    params = best.params
    if family is CurveFamily.EXP_DECAY2 and params[2] > params[4]:
        params = params[[0, 3, 4, 1, 2]]
    if domain is None:
        domain = (float(d.min()), float(d.max()))
    try:
        curve = ParamCurve(family, tuple(params), domain)
    except OmnisenseError as exc:
        raise FitFailed(str(exc), stage=family.value) from exc
    return curve, best


def fit_param_curves(series: Sequence[tuple[float, PVParams]], design: Design,
                     domain: Optional[tuple[float, float]] = None) -> tuple[ResponseModel, dict[str, FitResult]]:
    """Fit the design's four curve families to per-distance pseudo-Voigt parameters."""
    design = Design(design)
    if len(series) < MIN_DISTANCES:
        raise InputError(f"need pseudo-Voigt parameters at >= {MIN_DISTANCES} distances, got {len(series)}")
    series = sorted(series, key=lambda t: t[0])
    d = np.array([s[0] for s in series], dtype=float)
    if domain is None:
        domain = (float(d.min()), float(d.max()))
    curves, fits = {}, {}
    for name in PARAM_NAMES:
        y = np.array([getattr(p, name) for _, p in series], dtype=float)
        try:
            curves[name], fits[name] = fit_curve(DESIGN_FAMILIES[design][name], d, y, domain)
        except FitFailed as exc:
            raise FitFailed(str(exc), stage=f"curve {name}") from exc
    return ResponseModel(SensorLayout(design), **curves), fits


# --------------------------------------------------------------------------
# End to end
# --------------------------------------------------------------------------


@dataclass
class CalibrationReport:
    design: str
    offsets: dict[str, float] = field(default_factory=dict)
    distances: list[dict] = field(default_factory=list)
    curves: dict[str, dict] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


@contextlib.contextmanager
def _stage(name: str):
    try:
        yield
    except FitFailed as exc:
        if exc.stage is None:
            raise FitFailed(str(exc), stage=name) from exc
        raise
    except NumericalError as exc:
        raise FitFailed(str(exc), stage=name) from exc
    except InputError as exc:
        raise InputError(f"[{name}] {exc}") from exc


def calibrate(free: SweepDataset, post: Optional[SweepDataset] = None,
              n_bins: int = N_BINS) -> tuple[ResponseModel, CalibrationReport]:
    """Run the whole calibration pipeline on one design's sweeps."""
    report = CalibrationReport(design=free.design.value)
    datasets = [free]
    if post is None or len(post) == 0:
        report.warnings.append("post path missing: model built from the free path only")
    else:
        if post.design is not free.design:
            raise InputError(f"free and post sweeps are for different designs "
                             f"({free.design.value} vs {post.design.value})")
        if not np.array_equal(free.distances, post.distances):
            raise InputError("free and post sweeps use different distance grids")
        datasets.append(post)

    groups = []
    for ds in datasets:
        with _stage(f"estimate_offset[{ds.path.value}]"):
            off = estimate_offset(ds)
        report.offsets[ds.path.value] = off
        with _stage(f"center_signals[{ds.path.value}]"):
            groups.append(center_signals(ds, off))
    pooled = pool_series(*groups)

    series = []
    for d, s in pooled.items():
        with _stage(f"bin_average d={d}"):
            prof = bin_average(s, n_bins)
        with _stage(f"fit_pv d={d}"):
            params, fit = fit_pv_at_distance(prof)
        if not fit.converged:
            report.warnings.append(f"pseudo-Voigt fit at d={d} mm did not converge")
        if not 0.0 <= params.m_u <= 1.0:
            report.warnings.append(f"m_u={params.m_u:.4g} outside [0, 1] at d={d} mm")
        report.distances.append({"d_mm": d, "n_samples": int(s.theta.size),
                                 "n_bins_used": int(np.count_nonzero(prof.nonempty)),
                                 "params": asdict(params), "residual_rms": fit.residual_rms,
                                 "iterations": fit.iterations, "converged": fit.converged})
        series.append((d, params))

    with _stage("fit_param_curves"):
        model, fits = fit_param_curves(series, free.design)
    for name, fit in fits.items():
        curve = getattr(model, name)
        report.curves[name] = {"family": curve.family.value, "coeffs": curve.named(),
                               "residual_rms": fit.residual_rms, "converged": fit.converged}
        if not fit.converged:
            report.warnings.append(f"curve fit for {name} did not converge")
    return model, report
