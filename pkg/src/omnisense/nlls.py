"""Damped Gauss-Newton (Levenberg-Marquardt) least squares with a numerical Jacobian."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, FitFailed, SingularJacobian

MAX_ITER = 200
FTOL = 1e-10
XTOL = 1e-12
LAMBDA0 = 1e-3
LAMBDA_MAX = 1e16


@dataclass(frozen=True)
class FitResult:
    params: np.ndarray
    residual_rms: float
    iterations: int
    converged: bool
    cost: float
    initial_cost: float
    message: str = ""


def numerical_jacobian(fn: Callable, p: np.ndarray, x, lower=None, upper=None) -> np.ndarray:
    """Central differences with step ``max(1e-6, 1e-6 |p_j|)``; one-sided next to a bound."""
    cols = []
    for j in range(p.size):
        h = max(1e-6, 1e-6 * abs(p[j]))
        hi, lo = p.copy(), p.copy()
        hi[j] += h
        lo[j] -= h
        if upper is not None and hi[j] > upper[j]:
            hi[j] = p[j]
        if lower is not None and lo[j] < lower[j]:
            lo[j] = p[j]
        cols.append((np.asarray(fn(hi, x), float) - np.asarray(fn(lo, x), float)) / (hi[j] - lo[j]))
    return np.column_stack(cols)


def nlls_fit(model_fn: Callable, x_data, y_data, initial: Sequence[float],
             bounds: Optional[tuple[Sequence[float], Sequence[float]]] = None,
             max_iter: int = MAX_ITER) -> FitResult:
    """Minimise ``sum((y - model_fn(params, x))**2)`` starting from ``initial``.

    Damping starts at 1e-3 and is scaled by 10 on every rejected (up) or
    accepted (down) step, with Marquardt's diagonal scaling. Iteration stops
    when the relative cost decrease drops below 1e-10, the step norm below
    1e-12, or after ``max_iter`` iterations. Only cost-decreasing steps are
    accepted, so the returned cost never exceeds the starting cost.
    ``bounds`` is a ``(lower, upper)`` pair; parameters are clipped into it.
    """
    y = np.asarray(y_data, dtype=float).reshape(-1)
    p = np.asarray(initial, dtype=float).reshape(-1).copy()
    if y.size < p.size:
        raise DimensionMismatch(f"{y.size} data points cannot determine {p.size} parameters")
    lower = upper = None
    if bounds is not None:
        lower = np.broadcast_to(np.asarray(bounds[0], dtype=float), p.shape)
        upper = np.broadcast_to(np.asarray(bounds[1], dtype=float), p.shape)
        p = np.clip(p, lower, upper)

    def residual(params):
        f = np.asarray(model_fn(params, x_data), dtype=float).reshape(-1)
        if f.size != y.size:
            raise DimensionMismatch(f"model returned {f.size} values for {y.size} data points")
        return y - f

    r = residual(p)
    cost = float(r @ r)
    if not np.isfinite(cost):
        raise FitFailed("model is not finite at the initial parameters")
    initial_cost = cost
    lam = LAMBDA0
    converged = False
    message = "iteration limit reached"
    it = 0
    while it < max_iter:
        if cost == 0.0:
            converged, message = True, "exact fit"
            break
        J = -numerical_jacobian(model_fn, p, x_data, lower, upper)
        if not np.all(np.isfinite(J)):
            raise SingularJacobian("Jacobian has non-finite entries")
        it += 1
        H = J.T @ J
        g = J.T @ r
        diag = np.diag(H).copy()
        if not np.any(diag > 0):
            raise SingularJacobian("model does not depend on any parameter")
        diag = np.maximum(diag, 1e-12 * diag.max())
        while True:
            try:
                step = np.linalg.solve(H + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                p_new = p + step
                if lower is not None:
                    p_new = np.clip(p_new, lower, upper)
                with np.errstate(all="ignore"):
                    r_new = residual(p_new)
                cost_new = float(r_new @ r_new)
                if np.isfinite(cost_new) and cost_new < cost:
                    lam = max(lam / 10.0, 1e-15)
                    break
            lam *= 10.0
            if lam > LAMBDA_MAX:
                step = None
                break
        if step is None:
            # Damping exhausted: no direction decreases the cost any more.
            converged, message = True, "no further decrease possible"
            break
        rel = (cost - cost_new) / cost
        step_norm = float(np.linalg.norm(p_new - p))
        p, r, cost = p_new, r_new, cost_new
        if rel < FTOL:
            converged, message = True, "relative cost decrease below tolerance"
            break
        if step_norm < XTOL:
            converged, message = True, "step norm below tolerance"
            break
    return FitResult(params=p, residual_rms=float(np.sqrt(cost / y.size)), iterations=it,
                     converged=converged, cost=cost, initial_cost=initial_cost, message=message)
