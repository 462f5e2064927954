"""Forward model: mean photodiode response as a function of distance and orientation.

Each of the eight photodiodes sees a pseudo-Voigt peak centred on its own
mounting angle. The four peak parameters (baseline ``y0``, area ``A``,
Lorentzian fraction ``m_u`` and width ``w``) are smooth functions of the
emitter distance ``d`` (mm), each described by a :class:`ParamCurve`.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import ExtrapolationWarning, InputError, InvalidParams

N_PD = 8
PD_SPACING_DEG = 45.0
THETA0_DEG = 180.0
DEFAULT_DOMAIN_MM = (70.0, 450.0)

MODEL_FORMAT = "omnisense.response-model"
MODEL_VERSION = 1

_FOUR_LN2 = 4.0 * math.log(2.0)


class Design(str, Enum):
    VERTICAL = "vertical"
    FLOWER = "flower"


@dataclass(frozen=True)
class SensorLayout:
    design: Design
    n_pd: int = N_PD
    theta0: float = THETA0_DEG

    def __post_init__(self):
        object.__setattr__(self, "design", Design(self.design))
        if self.n_pd != N_PD:
            raise InputError(f"sensor layout must have {N_PD} photodiodes")

    @property
    def pd_angles(self) -> tuple[float, ...]:
        return tuple(PD_SPACING_DEG * i for i in range(self.n_pd))


@dataclass(frozen=True)
class PVParams:
    y0: float
    A: float
    m_u: float
    w: float

    def as_array(self) -> np.ndarray:
        return np.array([self.y0, self.A, self.m_u, self.w])


def wrap_delta(delta):
    """Wrap an angular difference in degrees to (-180, 180]."""
    return 180.0 - np.mod(180.0 - np.asarray(delta, dtype=float), 360.0)


def _pv_delta(delta, y0, A, m_u, w):
    # ``delta`` is already wrapped; no validation on this hot path.
    d2 = delta * delta
    w2 = w * w
    lorentz = 2.0 * w / (np.pi * (4.0 * d2 + w2))
    gauss = np.sqrt(_FOUR_LN2 / (np.pi * w2)) * np.exp(-_FOUR_LN2 * d2 / w2)
    return y0 + A * (m_u * lorentz + (1.0 - m_u) * gauss)


def peak_height(p: PVParams) -> float:
    """Peak value above baseline, reached at ``theta == theta0``."""
    return p.A * (p.m_u * 2.0 / (math.pi * p.w) + (1.0 - p.m_u) * math.sqrt(_FOUR_LN2 / (math.pi * p.w ** 2)))


def pseudo_voigt(theta, theta0: float, p: PVParams):
    if not p.w > 0:
        raise InvalidParams(f"pseudo-Voigt width must be positive, got w={p.w}")
    if not 0.0 <= p.m_u <= 1.0:
        warnings.warn(f"Lorentzian fraction m_u={p.m_u} outside [0, 1]", RuntimeWarning, stacklevel=2)
    out = _pv_delta(wrap_delta(np.asarray(theta, dtype=float) - theta0), p.y0, p.A, p.m_u, p.w)
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# Distance dependence of the peak parameters
# --------------------------------------------------------------------------


class CurveFamily(str, Enum):
    LOGISTIC = "Logistic"
    EXP_DECAY2 = "ExpDecay2"
    LORENTZ = "Lorentz"
    LOG_NORMAL = "LogNormal"
    EXP_DECAY1 = "ExpDecay1"
    CHAPMAN = "Chapman"
    RATIONAL = "Rational"


def _logistic(d, A1, A2, d0, p):
    return A2 + (A1 - A2) / (1.0 + (d / d0) ** p)


def _exp_decay2(d, A0, A1, t1, A2, t2):
    return A0 + A1 * np.exp(-d / t1) + A2 * np.exp(-d / t2)


def _lorentz(d, A0, A1, w1, d0):
    return A0 + 2.0 * A1 * w1 / (np.pi * (4.0 * (d - d0) ** 2 + w1 * w1))


def _log_normal(d, A0, A1, d0, w1):
    return A0 + A1 / (np.sqrt(2.0 * np.pi) * w1 * d) * np.exp(-np.log(d / d0) ** 2 / (2.0 * w1 * w1))


def _exp_decay1(d, A0, A1, t1):
    return A0 + A1 * np.exp(-d / t1)


def _chapman(d, a, b, c):
    return a * (1.0 - np.exp(-b * d)) ** c


def _rational(d, a, b, c):
    return (b + c * d) / (1.0 + a * d)


#: family -> (formula, coefficient names, coefficients that must be positive)
FAMILIES = {
    CurveFamily.LOGISTIC: (_logistic, ("A1", "A2", "d0", "p"), ("d0",)),
    CurveFamily.EXP_DECAY2: (_exp_decay2, ("A0", "A1", "t1", "A2", "t2"), ("t1", "t2")),
    CurveFamily.LORENTZ: (_lorentz, ("A0", "A1", "w1", "d0"), ("w1",)),
    CurveFamily.LOG_NORMAL: (_log_normal, ("A0", "A1", "d0", "w1"), ("d0", "w1")),
    CurveFamily.EXP_DECAY1: (_exp_decay1, ("A0", "A1", "t1"), ("t1",)),
    CurveFamily.CHAPMAN: (_chapman, ("a", "b", "c"), ()),
    CurveFamily.RATIONAL: (_rational, ("a", "b", "c"), ()),
}

#: Which family models each peak parameter, per design.
DESIGN_FAMILIES = {
    Design.VERTICAL: {"y0": CurveFamily.LOGISTIC, "A": CurveFamily.EXP_DECAY2,
                      "m_u": CurveFamily.LORENTZ, "w": CurveFamily.LORENTZ},
    Design.FLOWER: {"y0": CurveFamily.LOG_NORMAL, "A": CurveFamily.EXP_DECAY1,
                    "m_u": CurveFamily.CHAPMAN, "w": CurveFamily.RATIONAL},
}
PARAM_NAMES = ("y0", "A", "m_u", "w")


@dataclass(frozen=True)
class ParamCurve:
    family: CurveFamily
    coefficients: tuple[float, ...]
    domain: tuple[float, float] = DEFAULT_DOMAIN_MM

    def __post_init__(self):
        object.__setattr__(self, "family", CurveFamily(self.family))
        coeffs = tuple(float(c) for c in self.coefficients)
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "domain", (float(self.domain[0]), float(self.domain[1])))
        _, names, positive = FAMILIES[self.family]
        if len(coeffs) != len(names):
            raise InvalidParams(f"{self.family.value} takes {len(names)} coefficients {names}, got {len(coeffs)}")
        if not all(math.isfinite(c) for c in coeffs):
            raise InvalidParams(f"{self.family.value} coefficients must be finite")
        for name in positive:
            if not self.coeff(name) > 0:
                raise InvalidParams(f"{self.family.value} requires {name} > 0, got {self.coeff(name)}")
        if not self.domain[0] < self.domain[1]:
            raise InvalidParams(f"bad curve domain {self.domain}")

    @classmethod
    def from_named(cls, family, coeffs: dict, domain=DEFAULT_DOMAIN_MM) -> "ParamCurve":
        family = CurveFamily(family)
        names = FAMILIES[family][1]
        missing = set(names) - set(coeffs)
        if missing:
            raise InvalidParams(f"{family.value} missing coefficients {sorted(missing)}")
        return cls(family, tuple(coeffs[n] for n in names), domain)

    @property
    def names(self) -> tuple[str, ...]:
        return FAMILIES[self.family][1]

    def coeff(self, name: str) -> float:
        return self.coefficients[self.names.index(name)]

    def named(self) -> dict[str, float]:
        return dict(zip(self.names, self.coefficients))

    def _raw(self, d):
        return FAMILIES[self.family][0](d, *self.coefficients)

    def __call__(self, d):
        d = np.asarray(d, dtype=float)
        lo, hi = self.domain
        if np.any(d < lo) or np.any(d > hi):
            warnings.warn(f"{self.family.value} curve evaluated outside its domain [{lo}, {hi}] mm",
                          ExtrapolationWarning, stacklevel=2)
        out = self._raw(d)
        return float(out) if out.ndim == 0 else out


def eval_param_curve(curve: ParamCurve, d):
    return curve(d)


# --------------------------------------------------------------------------
# Response model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ResponseModel:
    layout: SensorLayout
    y0: ParamCurve
    A: ParamCurve
    m_u: ParamCurve
    w: ParamCurve

    def __post_init__(self):
        binding = DESIGN_FAMILIES[self.layout.design]
        for name in PARAM_NAMES:
            curve = getattr(self, name)
            if curve.family is not binding[name]:
                raise InvalidParams(f"{self.layout.design.value} design models {name} with "
                                    f"{binding[name].value}, got {curve.family.value}")
        if len({getattr(self, n).domain for n in PARAM_NAMES}) != 1:
            raise InvalidParams("all four parameter curves must share one distance domain")

    @property
    def design(self) -> Design:
        return self.layout.design

    @property
    def domain(self) -> tuple[float, float]:
        return self.y0.domain

    def _params(self, d):
        return self.y0._raw(d), self.A._raw(d), self.m_u._raw(d), self.w._raw(d)

    def params_at(self, d: float) -> PVParams:
        self._check_domain(d)
        return PVParams(*(float(v) for v in self._params(np.asarray(float(d)))))

    def _check_domain(self, d):
        lo, hi = self.domain
        d = np.asarray(d)
        if np.any(d < lo) or np.any(d > hi):
            warnings.warn(f"distance outside model domain [{lo}, {hi}] mm", ExtrapolationWarning, stacklevel=3)

    def pd_response(self, d, theta, pd_index):
        """Signal of photodiode(s) ``pd_index`` for an emitter at ``(d, theta)``; broadcasts."""
        self._check_domain(d)
        d = np.asarray(d, dtype=float)
        idx = np.asarray(pd_index)
        if np.any((idx < 0) | (idx >= N_PD)):
            raise InputError(f"pd_index must lie in 0..{N_PD - 1}")
        y0, A, m_u, w = self._params(d)
        delta = wrap_delta(np.asarray(theta, dtype=float) - PD_SPACING_DEG * idx)
        out = _pv_delta(delta, y0, A, m_u, w)
        return float(out) if np.ndim(out) == 0 else out

    def readout(self, d: float, theta: float) -> np.ndarray:
        """Noiseless 8-vector of mean responses."""
        return np.asarray(self.pd_response(d, theta, np.arange(N_PD)), dtype=float)

    @cached_property
    def global_peak(self) -> float:
        """Largest noiseless photodiode signal anywhere in the domain."""
        d = np.linspace(*self.domain, 761)
        y0, A, m_u, w = self._params(d)
        return float(np.max(_pv_delta(0.0, y0, A, m_u, w)))

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "design": self.design.value,
            "domain": list(self.domain),
            "curves": {n: {"family": getattr(self, n).family.value, "coeffs": getattr(self, n).named()}
                       for n in PARAM_NAMES},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ResponseModel":
        if doc.get("format", MODEL_FORMAT) != MODEL_FORMAT:
            raise InputError(f"not a response model document (format={doc.get('format')!r})")
        if int(doc.get("version", MODEL_VERSION)) != MODEL_VERSION:
            raise InputError(f"unsupported response model version {doc.get('version')}")
        try:
            domain = tuple(doc.get("domain", DEFAULT_DOMAIN_MM))
            curves = {n: ParamCurve.from_named(doc["curves"][n]["family"], doc["curves"][n]["coeffs"], domain)
                      for n in PARAM_NAMES}
            return cls(SensorLayout(Design(doc["design"])), **curves)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"malformed response model document: {exc!r}") from exc


def save_model(model: ResponseModel, path: Union[str, Path]) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, json.dumps(model.to_dict(), indent=2) + "\n")


def load_model(path: Union[str, Path]) -> ResponseModel:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"model file not found: {path}")
    try:
        return ResponseModel.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc


def pd_response(model: ResponseModel, d, theta, pd_index):
    return model.pd_response(d, theta, pd_index)


# --------------------------------------------------------------------------
# Readouts
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseSpec:
    """Additive Gaussian noise; ``sigma`` is a fraction of the model's global peak."""

    sigma: float = 0.0
    seed: Optional[int] = None

    def __post_init__(self):
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise InputError(f"noise sigma must be >= 0, got {self.sigma}")

    @property
    def is_zero(self) -> bool:
        return self.sigma == 0.0


@dataclass(frozen=True)
class Readout:
    signals: np.ndarray
    truth: Optional[tuple[float, float]] = field(default=None, compare=False)

    def __post_init__(self):
        s = np.array(self.signals, dtype=float).reshape(-1)
        if s.size != N_PD:
            raise InputError(f"a readout has {N_PD} signals, got {s.size}")
        if not np.all(np.isfinite(s)) or np.any(s < 0):
            raise InputError("readout signals must be finite and non-negative")
        s.setflags(write=False)
        object.__setattr__(self, "signals", s)

    def __eq__(self, other):
        return isinstance(other, Readout) and np.array_equal(self.signals, other.signals)

    def __hash__(self):
        return hash(self.signals.tobytes())

    def shifted(self, k: int) -> "Readout":
        """Cyclic relabelling: photodiode ``i`` of the result reads photodiode ``i - k`` of this one."""
        truth = None if self.truth is None else (self.truth[0], (self.truth[1] + PD_SPACING_DEG * k) % 360.0)
        return Readout(np.roll(self.signals, k), truth)


def _add_noise(clean: np.ndarray, model: ResponseModel, noise: Optional[NoiseSpec], rng) -> np.ndarray:
    if noise is None or noise.is_zero:
        return clean
    if rng is None:
        rng = np.random.default_rng(noise.seed)
    noisy = clean + rng.normal(0.0, noise.sigma * model.global_peak, size=clean.shape)
    return np.maximum(noisy, 0.0)


def synthesize_readout(model: ResponseModel, d: float, theta: float, noise: Optional[NoiseSpec] = None,
                       rng: Optional[np.random.Generator] = None) -> Readout:
    """One 8-photodiode readout; negative noisy values are clamped to 0."""
    clean = model.readout(d, theta)
    return Readout(_add_noise(clean, model, noise, rng), truth=(float(d), float(theta) % 360.0))


def synthesize_signals(model: ResponseModel, d, theta, noise: Optional[NoiseSpec] = None,
                       rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Batch version of :func:`synthesize_readout`; returns an ``(N, 8)`` array."""
    d = np.asarray(d, dtype=float).reshape(-1, 1)
    theta = np.asarray(theta, dtype=float).reshape(-1, 1)
    clean = np.asarray(model.pd_response(d, theta, np.arange(N_PD)[None, :]), dtype=float)
    return _add_noise(clean, model, noise, rng)


def accumulated_signal(r: Union[Readout, np.ndarray]) -> float:
    s = r.signals if isinstance(r, Readout) else np.asarray(r, dtype=float)
    return float(np.sum(s))
