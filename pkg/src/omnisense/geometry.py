"""Mirror profiles, 2D specular ray tracing and LED-cone estimation.

All lengths are in centimetres. A profile gives the height ``z`` of the mirror
surface as a function of the radial distance ``x`` from the sensor axis. The
mirror body sits above the curve, so light reaches the reflective side from
below.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import DegenerateInput, DomainError, InputError, InsufficientHits

#: Published branch coefficients are continuous only to this many cm.
BREAKPOINT_TOLERANCE = 2e-3
#: Mean half-angle of the LED emission cone, degrees.
LED_HALF_ANGLE_DEG = 18.4

_BISECTION_STEPS = 64
_T_EPS = 1e-9


class ProfileKind(str, Enum):
    VERTICAL_STAGE1 = "vertical-stage1"
    VERTICAL_STAGE2 = "vertical-stage2"
    FLOWER = "flower"


@dataclass(frozen=True)
class CubicSegment:
    """``a3 x^3 + a2 x^2 + a1 x + a0`` valid on ``[x_lo, x_hi]``."""

    a3: float
    a2: float
    a1: float
    a0: float
    x_lo: float
    x_hi: float

    def __post_init__(self):
        if not self.x_lo < self.x_hi:
            raise InputError(f"segment bounds must satisfy x_lo < x_hi, got [{self.x_lo}, {self.x_hi}]")

    def __call__(self, x):
        # No domain check: lets callers evaluate a branch beyond its interval.
        return ((self.a3 * x + self.a2) * x + self.a1) * x + self.a0

    def slope(self, x):
        return (3.0 * self.a3 * x + 2.0 * self.a2) * x + self.a1


@dataclass(frozen=True)
class MirrorProfile:
    kind: ProfileKind
    segments: tuple[CubicSegment, ...]

    def __post_init__(self):
        object.__setattr__(self, "kind", ProfileKind(self.kind))
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise InputError("a profile needs at least one segment")
        for left, right in zip(self.segments, self.segments[1:]):
            if abs(left.x_hi - right.x_lo) > 1e-12:
                raise InputError(f"segments must tile the domain: gap/overlap at x={left.x_hi} vs {right.x_lo}")
        for xb, gap in zip(self.breakpoints, self.breakpoint_mismatch()):
            if gap > BREAKPOINT_TOLERANCE:
                raise InputError(f"profile is discontinuous at x={xb}: branch mismatch {gap:.3g} cm")

    @property
    def domain(self) -> tuple[float, float]:
        return self.segments[0].x_lo, self.segments[-1].x_hi

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return tuple(s.x_lo for s in self.segments[1:])

    @cached_property
    def _coef(self) -> np.ndarray:
        return np.array([[s.a3, s.a2, s.a1, s.a0] for s in self.segments])

    @cached_property
    def z_bounds(self) -> tuple[float, float]:
        x_lo, x_hi = self.domain
        z = self._eval(np.linspace(x_lo, x_hi, 4097))
        return float(z.min()), float(z.max())

    def breakpoint_mismatch(self) -> list[float]:
        """|left branch - right branch| at every internal breakpoint."""
        return [abs(l(r.x_lo) - r(r.x_lo)) for l, r in zip(self.segments, self.segments[1:])]

    def _index(self, x: np.ndarray) -> np.ndarray:
        # Strict "x < breakpoint" selects the left branch; the breakpoint itself goes right.
        return np.searchsorted(np.asarray(self.breakpoints), x, side="right")

    def _eval(self, x: np.ndarray) -> np.ndarray:
        c = self._coef[self._index(x)]
        return ((c[..., 0] * x + c[..., 1]) * x + c[..., 2]) * x + c[..., 3]

    def _slope(self, x: np.ndarray) -> np.ndarray:
        c = self._coef[self._index(x)]
        return (3.0 * c[..., 0] * x + 2.0 * c[..., 1]) * x + c[..., 2]

    def _checked(self, x) -> np.ndarray:
        arr = np.asarray(x, dtype=float)
        x_lo, x_hi = self.domain
        if np.any(~np.isfinite(arr)) or np.any(arr < x_lo) or np.any(arr > x_hi):
            raise DomainError(f"x outside profile domain [{x_lo}, {x_hi}] cm")
        return arr

    def __call__(self, x):
        arr = self._checked(x)
        z = self._eval(arr)
        return float(z) if z.ndim == 0 else z

    def slope(self, x):
        arr = self._checked(x)
        s = self._slope(arr)
        return float(s) if s.ndim == 0 else s

    def to_dict(self) -> dict:
        return {
            "design": self.kind.value,
            "segments": [
                {"a3": s.a3, "a2": s.a2, "a1": s.a1, "a0": s.a0, "x_lo": s.x_lo, "x_hi": s.x_hi}
                for s in self.segments
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MirrorProfile":
        try:
            segs = tuple(CubicSegment(**{k: float(seg[k]) for k in ("a3", "a2", "a1", "a0", "x_lo", "x_hi")})
                         for seg in doc["segments"])
            return cls(ProfileKind(doc["design"]), segs)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"malformed profile document: {exc}") from exc


def eval_profile(profile: MirrorProfile, x):
    return profile(x)


def profile_slope(profile: MirrorProfile, x):
    return profile.slope(x)


VERTICAL_STAGE1 = MirrorProfile(ProfileKind.VERTICAL_STAGE1, (
    CubicSegment(2.81723, -0.20831, 0.42261, 1.99992, 0.0, 0.2),
    CubicSegment(0.05936, 2.24342, -0.24885, 2.05736, 0.2, 0.5),
))
VERTICAL_STAGE2 = MirrorProfile(ProfileKind.VERTICAL_STAGE2, (
    CubicSegment(-0.02294, 0.04687, 0.8554, 1.89499, 0.69, 1.36),
    CubicSegment(0.02182, -0.1388, 1.1057, 1.78547, 1.36, 2.04),
))
FLOWER = MirrorProfile(ProfileKind.FLOWER, (
    CubicSegment(0.4127, -0.07673, 0.37849, 1.99975, 0.0, 0.48),
    CubicSegment(-0.33283, 1.04336, -0.1781, 2.09135, 0.48, 0.89),
))

PROFILES: dict[str, MirrorProfile] = {p.kind.value: p for p in (VERTICAL_STAGE1, VERTICAL_STAGE2, FLOWER)}


def load_profile(name_or_path: Union[str, Path]) -> MirrorProfile:
    """Return an embedded profile by name, or load one from a JSON file."""
    key = str(name_or_path)
    if key in PROFILES:
        return PROFILES[key]
    path = Path(key)
    if not path.is_file():
        raise InputError(f"unknown profile {key!r}; expected one of {sorted(PROFILES)} or a JSON path")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc
    return MirrorProfile.from_dict(doc)


# --------------------------------------------------------------------------
# Ray tracing
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Ray2D:
    origin: tuple[float, float]
    direction: tuple[float, float]

    def __post_init__(self):
        dx, dz = (float(v) for v in self.direction)
        norm = math.hypot(dx, dz)
        if not norm > 0.0 or not math.isfinite(norm):
            raise InputError("ray direction must be a finite non-zero vector")
        object.__setattr__(self, "direction", (dx / norm, dz / norm))
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))

    def at(self, t: float) -> tuple[float, float]:
        return self.origin[0] + t * self.direction[0], self.origin[1] + t * self.direction[1]


@dataclass(frozen=True)
class ReflectionResult:
    hit_point: tuple[float, float]
    outgoing: Ray2D
    normal: tuple[float, float]


@dataclass(frozen=True)
class Wall:
    """Straight absorbing segment of the mirror body."""

    p0: tuple[float, float]
    p1: tuple[float, float]


def _slab(o, d, lo, hi):
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - o) / d
        t2 = (hi - o) / d
    parallel = d == 0.0
    inside = (o >= lo) & (o <= hi)
    tmin = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
    tmax = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
    return tmin, tmax


def _intersect(profile: MirrorProfile, ox, oz, dx, dz, n_sub: int = 64) -> np.ndarray:
    """Ray parameter of the first surface crossing for a batch of rays (NaN on miss).

    The portion of each ray inside the profile's bounding box is cut into
    ``n_sub`` pieces; the first sign change of ``z_ray - profile(x_ray)`` is
    then bisected.
    """
    ox, oz, dx, dz = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (ox, oz, dx, dz))
    x_lo, x_hi = profile.domain
    z_lo, z_hi = profile.z_bounds
    margin = 1e-3
    tx0, tx1 = _slab(ox, dx, x_lo, x_hi)
    tz0, tz1 = _slab(oz, dz, z_lo - margin, z_hi + margin)
    t_in = np.maximum(np.maximum(tx0, tz0), _T_EPS)
    t_out = np.minimum(tx1, tz1)
    valid = np.isfinite(t_in) & np.isfinite(t_out) & (t_in < t_out)
    t_in = np.where(valid, t_in, 0.0)
    t_out = np.where(valid, t_out, 1.0)

    def g(t):
        x = np.clip(ox[:, None] + dx[:, None] * t if t.ndim == 2 else ox + dx * t, x_lo, x_hi)
        z = oz[:, None] + dz[:, None] * t if t.ndim == 2 else oz + dz * t
        return z - profile._eval(x)

    ts = t_in[:, None] + (t_out - t_in)[:, None] * np.linspace(0.0, 1.0, n_sub + 1)[None, :]
    gs = g(ts)
    change = (gs[:, :-1] * gs[:, 1:]) <= 0.0
    found = valid & change.any(axis=1)
    k = np.argmax(change, axis=1)
    rows = np.arange(len(ox))
    lo, hi = ts[rows, k], ts[rows, k + 1]
    g_lo = gs[rows, k]
    for _ in range(_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        g_mid = g(mid)
        same = np.sign(g_mid) == np.sign(g_lo)
        lo = np.where(same, mid, lo)
        g_lo = np.where(same, g_mid, g_lo)
        hi = np.where(same, hi, mid)
    t = np.where(np.abs(g(lo)) <= np.abs(g(hi)), lo, hi)
    return np.where(found, t, np.nan)


def _intersect_wall(wall: Wall, ox, oz, dx, dz) -> np.ndarray:
    (x0, z0), (x1, z1) = wall.p0, wall.p1
    ex, ez = x1 - x0, z1 - z0
    denom = dx * ez - dz * ex
    with np.errstate(divide="ignore", invalid="ignore"):
        t = ((x0 - ox) * ez - (z0 - oz) * ex) / denom
        u = ((x0 - ox) * dz - (z0 - oz) * dx) / denom
    ok = (denom != 0.0) & (t > _T_EPS) & (u >= 0.0) & (u <= 1.0)
    return np.where(ok, t, np.nan)


def _reflect(dx, dz, slope):
    norm = np.sqrt(1.0 + slope * slope)
    nx, nz = -slope / norm, 1.0 / norm
    dot = dx * nx + dz * nz
    rx, rz = dx - 2.0 * dot * nx, dz - 2.0 * dot * nz
    rn = np.hypot(rx, rz)
    return rx / rn, rz / rn, nx, nz


def reflect_ray(ray: Ray2D, profile: MirrorProfile) -> ReflectionResult | None:
    """Specular reflection of ``ray`` off ``profile``; ``None`` means a miss."""
    (ox, oz), (dx, dz) = ray.origin, ray.direction
    t = _intersect(profile, ox, oz, dx, dz)[0]
    if np.isnan(t):
        return None
    hx = min(max(ox + t * dx, profile.domain[0]), profile.domain[1])
    hz = oz + t * dz
    rx, rz, nx, nz = _reflect(dx, dz, profile._slope(np.asarray(hx)))
    return ReflectionResult((float(hx), float(hz)), Ray2D((float(hx), float(hz)), (float(rx), float(rz))),
                            (float(nx), float(nz)))


Absorber = Union[MirrorProfile, Wall]


def default_source_height(profile: MirrorProfile, half_angle: float = LED_HALF_ANGLE_DEG,
                          rim_fraction: float = 0.99) -> float:
    """Axial LED height at which the emission cone edge lands just inside the mirror rim."""
    x_lo, x_hi = profile.domain
    x_rim = x_lo + rim_fraction * (x_hi - x_lo)
    return float(profile._eval(np.asarray(x_rim))) - x_rim / math.tan(math.radians(half_angle))


def vertical_absorbers() -> tuple[Absorber, ...]:
    """Parts of the two-stage mirror that block light reflected off stage 1."""
    x1 = VERTICAL_STAGE1.domain[1]
    x2 = VERTICAL_STAGE2.domain[0]
    wall = Wall((x1, VERTICAL_STAGE1(x1)), (x2, VERTICAL_STAGE2(x2)))
    return (VERTICAL_STAGE2, wall)


def default_receiver_height(kind: ProfileKind | str) -> float:
    """Height at which a receiving sensor collects the emitted beam.

    Vertical design: mid-height of the focusing stage. Flower design: the
    plane of the horizontal photodiodes, taken level with the LED.
    """
    kind = ProfileKind(kind)
    if kind is ProfileKind.FLOWER:
        return default_source_height(FLOWER)
    z_lo, z_hi = VERTICAL_STAGE2.z_bounds
    return 0.5 * (z_lo + z_hi)


@dataclass(frozen=True)
class FanReport:
    """Outcome of tracing an emission fan; angles sorted ascending.

    Rays at negative angles are traced through the mirror image of the
    profile, so every radial quantity here is a distance from the axis.
    """

    source: tuple[float, float]
    angles: np.ndarray
    hit: np.ndarray
    hit_x: np.ndarray
    hit_z: np.ndarray
    out_dx: np.ndarray
    out_dz: np.ndarray
    blocked_at: np.ndarray  # ray parameter where an absorber stops the reflected ray, inf if it escapes

    @property
    def n_rays(self) -> int:
        return int(self.angles.size)

    @property
    def escaped(self) -> np.ndarray:
        return self.hit & np.isinf(self.blocked_at)

    def crossing_radii(self, z: float) -> np.ndarray:
        """Radius where each escaped reflected ray reaches height ``z`` (NaN if it never does)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (z - self.hit_z) / self.out_dz
        ok = self.escaped & np.isfinite(t) & (t > 0.0)
        return np.where(ok, self.hit_x + t * self.out_dx, np.nan)

    def radial_range_at_height(self, z: float) -> tuple[float, float]:
        r = self.crossing_radii(z)
        r = r[np.isfinite(r)]
        if r.size == 0:
            raise InsufficientHits(f"no reflected ray reaches height z={z} cm")
        return float(r.min()), float(r.max())

    def is_contiguous(self, z: float) -> bool:
        """True when the rays reaching ``z`` form one unbroken run with monotone radii."""
        order = np.argsort(np.abs(self.angles), kind="stable")
        r = self.crossing_radii(z)[order]
        # +/- angle pairs share a radius; keep one of each.
        a = np.abs(self.angles)[order]
        keep = np.concatenate(([True], np.diff(a) > 0))
        r = r[keep]
        idx = np.flatnonzero(np.isfinite(r))
        if idx.size == 0:
            return False
        if idx[-1] - idx[0] + 1 != idx.size:
            return False
        run = np.diff(r[idx])
        return bool(np.all(run >= 0) or np.all(run <= 0))

    def polylines(self, z: float | None = None, length: float = 40.0) -> list[list[tuple[float, float]]]:
        """Per-ray breakpoints: source, hit point, end point (signed x for the mirrored half)."""
        lines = []
        crossing = self.crossing_radii(z) if z is not None else np.full(self.n_rays, np.nan)
        sx, sz = self.source
        for i in range(self.n_rays):
            sign = -1.0 if self.angles[i] < 0 else 1.0
            if not self.hit[i]:
                a = math.radians(abs(self.angles[i]))
                lines.append([(sx, sz), (sign * (sx + length * math.sin(a)), sz + length * math.cos(a))])
                continue
            if np.isfinite(self.blocked_at[i]):
                t = self.blocked_at[i]
            elif np.isfinite(crossing[i]):
                t = (z - self.hit_z[i]) / self.out_dz[i]
            else:
                t = length
            ex = self.hit_x[i] + t * self.out_dx[i]
            ez = self.hit_z[i] + t * self.out_dz[i]
            lines.append([(sx, sz), (sign * self.hit_x[i], self.hit_z[i]), (sign * ex, ez)])
        return lines


def trace_emission_fan(profile: MirrorProfile, n_rays: int, half_angle: float,
                       source: tuple[float, float] | None = None,
                       absorbers: Sequence[Absorber] = ()) -> FanReport:
    """Trace ``n_rays`` spread uniformly over +/-``half_angle`` (degrees) about the vertical.

    ``source`` defaults to the axial LED position from
    :func:`default_source_height`. Reflected rays that meet any of
    ``absorbers`` are stopped there.
    """
    if n_rays < 2:
        raise InputError("n_rays must be >= 2")
    if source is None:
        source = (0.0, default_source_height(profile))
    angles = np.linspace(-half_angle, half_angle, n_rays)
    angles = 0.5 * (angles - angles[::-1])  # exact +/- symmetry
    a = np.radians(np.abs(angles))
    dx, dz = np.sin(a), np.cos(a)
    ox = np.full(n_rays, float(source[0]))
    oz = np.full(n_rays, float(source[1]))
    t = _intersect(profile, ox, oz, dx, dz)
    hit = np.isfinite(t)
    if np.count_nonzero(hit) < 2:
        raise InsufficientHits(f"only {np.count_nonzero(hit)} of {n_rays} rays reach the mirror")
    t = np.where(hit, t, 0.0)
    x_lo, x_hi = profile.domain
    hx = np.clip(ox + t * dx, x_lo, x_hi)
    hz = oz + t * dz
    rx, rz, _, _ = _reflect(dx, dz, profile._slope(hx))
    blocked = np.full(n_rays, np.inf)
    for absorber in absorbers:
        if isinstance(absorber, Wall):
            tb = _intersect_wall(absorber, hx, hz, rx, rz)
        else:
            tb = _intersect(absorber, hx, hz, rx, rz)
        blocked = np.fmin(blocked, np.where(np.isnan(tb), np.inf, tb))
    nan = np.full(n_rays, np.nan)
    return FanReport(
        source=(float(source[0]), float(source[1])),
        angles=angles,
        hit=hit,
        hit_x=np.where(hit, hx, nan),
        hit_z=np.where(hit, hz, nan),
        out_dx=np.where(hit, rx, nan),
        out_dz=np.where(hit, rz, nan),
        blocked_at=np.where(hit, blocked, np.inf),
    )


# --------------------------------------------------------------------------
# LED emission cone
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ScreenMeasurement:
    x: float    # LED base to screen front, screen thickness included
    phi: float  # illuminated-circle diameter

    def __post_init__(self):
        if not (self.x > 0 and self.phi > 0):
            raise InputError(f"screen measurement needs x > 0 and phi > 0, got {self}")


@dataclass(frozen=True)
class ConeEstimate:
    theta_fp: float  # degrees
    x_fp: float      # apparent focal point along the axis, same unit as the inputs
    n_pairs: int


def cone_from_screens(measurements: Iterable[ScreenMeasurement]) -> ConeEstimate:
    """Average cone half-angle and apex position over every pair of screens.

    Each pair (nearer screen first) gives ``tan(theta) = (phi2 - phi1) / (2 (x2 - x1))``;
    each screen of the pair then places the apex at ``x - phi / (2 tan(theta))``.
    """
    ms = sorted(measurements, key=lambda m: (m.x, m.phi))
    if len(ms) < 2:
        raise DegenerateInput("need at least two screen measurements")
    thetas, apexes = [], []
    for m1, m2 in itertools.combinations(ms, 2):
        if m2.x == m1.x:
            continue
        tan_t = (m2.phi - m1.phi) / (2.0 * (m2.x - m1.x))
        thetas.append(math.degrees(math.atan(tan_t)))
        if tan_t > 0:
            apexes.extend(m.x - m.phi / (2.0 * tan_t) for m in (m1, m2))
    if not thetas:
        raise DegenerateInput("all screen distances are equal")
    theta = math.fsum(thetas) / len(thetas)
    if not 0.0 < theta < 90.0 or not apexes:
        raise DegenerateInput(f"screens do not describe a widening cone (mean angle {theta:.3f} deg)")
    return ConeEstimate(theta, math.fsum(apexes) / len(apexes), len(thetas))
