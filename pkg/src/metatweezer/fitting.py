"""Least-squares fits used on trap and lifetime data.

Every model is fitted with a damped Gauss-Newton (Levenberg-Marquardt)
solver on analytic Jacobians, started from a grid search over the
nonlinear parameters with the linear ones solved exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares
from scipy.special import erf

MAX_ITER = 200
REL_TOL = 1e-10


class FitError(ValueError):
    """Input data cannot support the requested model."""


class NonConvergenceError(RuntimeError):
    def __init__(self, message: str, result: "FitResult"):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class FitResult:
    model: str
    names: tuple[str, ...]
    values: np.ndarray
    errors: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    flags: tuple[str, ...] = field(default=())

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def error(self, name: str) -> float:
        return float(self.errors[self.names.index(name)])

    def as_dict(self) -> dict:
        return {
            "model": self.model,
            "parameters": {n: float(v) for n, v in zip(self.names, self.values)},
            "uncertainties": {n: float(e) for n, e in zip(self.names, self.errors)},
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "flags": list(self.flags),
        }


def _solve(model: str, names, residual, jacobian, p0, n_points, raise_on_fail=True, flags=()):
    sol = least_squares(residual, p0, jac=jacobian, method="lm", xtol=REL_TOL, ftol=REL_TOL,
                        gtol=REL_TOL, max_nfev=MAX_ITER, x_scale="jac")
    converged = bool(sol.success) and sol.status > 0 and np.all(np.isfinite(sol.x))
    J = sol.jac
    dof = n_points - len(p0)
    ssr = float(sol.fun @ sol.fun)
    try:
        cov = np.linalg.pinv(J.T @ J)
        s2 = ssr / dof if dof > 0 else 0.0
        errors = np.sqrt(np.clip(np.diag(cov) * s2, 0.0, None))
    except np.linalg.LinAlgError:
        errors = np.full(len(p0), np.inf)
    result = FitResult(model, tuple(names), np.asarray(sol.x, dtype=float), errors,
                       float(np.sqrt(ssr)), int(sol.nfev), converged, tuple(flags))
    if not converged and raise_on_fail:
        raise NonConvergenceError(f"{model} fit did not converge: {sol.message}", result)
    return result


def _prepare(points, min_points: int, min_distinct: int):
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise FitError("expected (x, y) pairs")
    x, y = pts[:, 0], pts[:, 1]
    if len(x) < min_points:
        raise FitError(f"need at least {min_points} points, got {len(x)}")
    if len(np.unique(x)) < min_distinct:
        raise FitError(f"need at least {min_distinct} distinct abscissae")
    if not np.all(np.isfinite(pts)):
        raise FitError("non-finite data")
    return x, y


def _linear_best(basis_cols, y):
    A = np.column_stack(basis_cols)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    r = y - A @ coef
    return coef, float(r @ r)


# ----------------------------------------------------------- exponential


def exponential_model(t, offset, amplitude, tau):
    return offset + amplitude * np.exp(-np.asarray(t) / tau)


def fit_exponential(points) -> FitResult:
    """Fit ``offset + amplitude * exp(-t/tau)``."""
    t, y = _prepare(points, 5, 3)
    if np.ptp(y) == 0:
        raise FitError("constant curve: decay constant undefined")
    span = np.ptp(t)
    dt = np.min(np.diff(np.unique(t)))
    best = None
    for tau in np.geomspace(dt / 4, 20 * span, 120):
        coef, ssr = _linear_best([np.ones_like(t), np.exp(-(t - t.min()) / tau)], y)
        if best is None or ssr < best[0]:
            best = (ssr, coef, tau)
    _, (off, amp), tau = best
    amp *= np.exp(t.min() / tau)

    def residual(p):
        return exponential_model(t, *p) - y

    def jacobian(p):
        off, amp, tau = p
        e = np.exp(-t / tau)
        return np.column_stack([np.ones_like(t), e, amp * e * t / tau**2])

    return _solve("exponential", ("offset", "amplitude", "tau"), residual, jacobian,
                  [off, amp, tau], len(t))


# ------------------------------------------------------------------- erf


def erf_model(x, amplitude, center, width, floor):
    return floor + 0.5 * amplitude * (1 + erf((np.asarray(x) - center) / (np.sqrt(2) * width)))


def fit_erf(points) -> FitResult:
    """Fit ``floor + A/2 * (1 + erf((P - P0)/(sqrt(2) sigma)))``.

    The reported width is kept positive; the saturation level is
    ``amplitude + floor``.
    """
    x, y = _prepare(points, 4, 4)
    if np.ptp(y) == 0:
        raise FitError("constant data: no saturation step to fit")
    span = np.ptp(x)
    best = None
    for c in np.linspace(x.min() - 0.25 * span, x.max() + 0.25 * span, 61):
        for w in np.geomspace(span / 200, span, 40):
            g = 0.5 * (1 + erf((x - c) / (np.sqrt(2) * w)))
            coef, ssr = _linear_best([g, np.ones_like(x)], y)
            if best is None or ssr < best[0]:
                best = (ssr, coef, c, w)
    _, (amp, floor), c, w = best

    def residual(p):
        return erf_model(x, *p) - y

    def jacobian(p):
        amp, c, w, floor = p
        u = (x - c) / (np.sqrt(2) * w)
        g = 0.5 * (1 + erf(u))
        dg = np.exp(-u**2) / np.sqrt(np.pi)  # d erf(u)/du / 2
        return np.column_stack([
            g,
            -amp * dg / (np.sqrt(2) * w),
            -amp * dg * u / w,
            np.ones_like(x),
        ])

    res = _solve("erf", ("amplitude", "center", "width", "floor"), residual, jacobian,
                 [amp, c, w, floor], len(x))
    if res["width"] < 0:
        vals = res.values.copy()
        vals[2] = -vals[2]
        res = FitResult(res.model, res.names, vals, res.errors, res.residual_norm,
                        res.iterations, res.converged, res.flags)
    return res


# --------------------------------------------------------- bias lifetime


def bias_lifetime_model(b, tau_max, tau_floor, b_opt, width):
    g = np.exp(-0.5 * ((np.asarray(b) - b_opt) / width) ** 2)
    return tau_floor + (tau_max - tau_floor) * g


def fit_bias_lifetime(points) -> FitResult:
    """Fit the peaked lifetime-versus-bias curve in log-lifetime space.

    The Gaussian peak is a phenomenological shape.  If the data are
    monotone or the fitted optimum falls outside the sampled bias range the
    result carries the ``"extrapolation"`` flag instead of raising.
    """
    b, tau = _prepare(points, 4, 4)
    if np.any(tau <= 0):
        raise FitError("lifetimes must be positive")
    order = np.argsort(b)
    b, tau = b[order], tau[order]
    log_tau = np.log(tau)
    flags = []
    k = int(np.argmax(tau))
    if k == 0 or k == len(b) - 1:
        flags.append("extrapolation")
    span = np.ptp(b)
    best = None
    for c in np.linspace(b.min() - 0.5 * span, b.max() + 0.5 * span, 81):
        for w in np.geomspace(span / 100, 2 * span, 40):
            g = np.exp(-0.5 * ((b - c) / w) ** 2)
            coef, _ = _linear_best([g, np.ones_like(b)], tau)
            delta, floor = coef
            if floor <= 0 or delta + floor <= 0:
                continue
            model = floor + delta * g
            ssr = float(np.sum((np.log(model) - log_tau) ** 2))
            if best is None or ssr < best[0]:
                best = (ssr, floor + delta, floor, c, w)
    if best is None:
        best = (None, tau.max(), tau.min(), b[k], span / 4)
    p0 = list(best[1:])

    def residual(p):
        m = bias_lifetime_model(b, *p)
        return np.log(np.clip(m, 1e-300, None)) - log_tau

    def jacobian(p):
        tmax, tfloor, c, w = p
        g = np.exp(-0.5 * ((b - c) / w) ** 2)
        m = tfloor + (tmax - tfloor) * g
        d = tmax - tfloor
        return np.column_stack([
            g / m,
            (1 - g) / m,
            d * g * (b - c) / w**2 / m,
            d * g * (b - c) ** 2 / w**3 / m,
        ])

    res = _solve("bias_lifetime", ("tau_max", "tau_floor", "b_opt", "width"), residual, jacobian,
                 p0, len(b), raise_on_fail=not flags, flags=flags)
    vals = res.values.copy()
    vals[3] = abs(vals[3])
    extra = list(res.flags)
    if not (b.min() <= vals[2] <= b.max()) and "extrapolation" not in extra:
        extra.append("extrapolation")
    return FitResult(res.model, res.names, vals, res.errors, res.residual_norm, res.iterations,
                     res.converged, tuple(extra))


def fit_line(points) -> FitResult:
    """Straight line as a :class:`FitResult` (slope, intercept)."""
    x, y = _prepare(points, 2, 2)
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    r = y - A @ coef
    dof = len(x) - 2
    errs = np.sqrt(np.diag(np.linalg.inv(A.T @ A)) * (r @ r) / dof) if dof > 0 else np.zeros(2)
    return FitResult("linear", ("slope", "intercept"), coef, errs, float(np.linalg.norm(r)), 1, True)
