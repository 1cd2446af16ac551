"""Field-line tracing, winding numbers, rotational transform and winding-based helicity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from . import spectral
from .calculus import (CanonicalCurves, HarmonicBasis, NeumannConstants, TangentField, inner,
                       neumann_constants)
from .errors import TracingError, TransversalityError, UndefinedTransformError
from .geometry import TWO_PI

# Fourier coefficients below this fraction of the largest are skipped when tracing.
DROP = 1e-15


@dataclass(frozen=True)
class FieldLine:
    """Unwrapped chart trajectory of a field line."""

    start: tuple[float, float]
    t: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    nfev: int


def trace_field_lines(v: TangentField, starts: np.ndarray, T: float, n_samples: int = 1024,
                      rtol: float = 1e-10, atol: float = 1e-12, extra: list[np.ndarray] | None = None):
    """Trace several field lines together over [0, T].

    Returns (t, theta, phi, integrals) with angle arrays of shape
    (n_lines, n_samples); ``integrals`` holds the running time integrals of the
    optional ``extra`` scalar fields, shape (n_extra, n_lines, n_samples).
    """
    if T <= 0:
        raise TracingError("duration must be positive")
    starts = np.atleast_2d(np.asarray(starts, float))
    k = len(starts)
    extra = extra or []
    interp = spectral.TrigInterpolant(np.stack([v.vt, v.vp] + list(extra)), drop=DROP)
    speed0 = np.hypot(*interp(starts[:, 0], starts[:, 1])[:2])
    if np.any(speed0 < 1e-14 * max(np.abs(v.vt).max() + np.abs(v.vp).max(), 1e-300)):
        raise TracingError("field vanishes at a start point")

    def rhs(_t, y):
        vals = interp(y[:k], y[k:2 * k])
        return vals.reshape(-1)

    y0 = np.concatenate([starts[:, 0], starts[:, 1], np.zeros(len(extra) * k)])
    t_eval = np.linspace(0.0, T, n_samples)
    sol = solve_ivp(rhs, (0.0, T), y0, method="DOP853", t_eval=t_eval, rtol=rtol, atol=atol)
    if not sol.success:
        raise TracingError(f"integration failed: {sol.message}")
    Y = sol.y
    integrals = Y[2 * k:].reshape(len(extra), k, Y.shape[1])
    return sol.t, Y[:k], Y[k:2 * k], integrals, sol.nfev


def trace_field_line(v: TangentField, start, T: float, n_samples: int = 1024, rtol: float = 1e-10) -> FieldLine:
    t, th, ph, _, nfev = trace_field_lines(v, np.asarray(start, float)[None], T, n_samples, rtol)
    return FieldLine((float(start[0]), float(start[1])), t, th[0], ph[0], nfev)


@dataclass(frozen=True)
class WindingReport:
    q_hat: np.ndarray
    p_hat: np.ndarray
    q_err: np.ndarray
    p_err: np.ndarray
    Q_bar: float
    P_bar: float
    iota: float | None
    low_confidence: bool


def asymptotic_windings(v: TangentField, basis: HarmonicBasis, starts, T: float, threshold: float = 1e-2,
                        n_samples: int = 257) -> WindingReport:
    """Finite-T time averages of v . gamma_t and v . gamma_p along traced lines.

    The error estimate is the largest deviation of the running average from
    its final value over the last half of the horizon.
    """
    starts = np.atleast_2d(np.asarray(starts, float))
    ft = v.dot(basis.gamma_t)
    fp = v.dot(basis.gamma_p)
    t, _, _, I, _ = trace_field_lines(v, starts, T, n_samples, extra=[ft, fp])
    half = n_samples // 2
    q = I[0, :, -1] / T
    p = I[1, :, -1] / T
    q_err = np.max(np.abs(I[0, :, half:] / t[half:] - q[:, None]), axis=1)
    p_err = np.max(np.abs(I[1, :, half:] / t[half:] - p[:, None]), axis=1)
    Q, P = average_windings(v, basis)
    scale = max(np.max(np.abs(q)), np.max(np.abs(p)), 1e-300)
    low = bool(max(q_err.max(), p_err.max()) > threshold * scale)
    iota = float(np.mean(p) / np.mean(q)) if abs(np.mean(q)) > 1e-12 * scale else None
    return WindingReport(q, p, q_err, p_err, Q, P, iota, low)


def average_windings(v: TangentField, basis: HarmonicBasis) -> tuple[float, float]:
    area = v.grid.area
    return inner(v, basis.gamma_t) / area, inner(v, basis.gamma_p) / area


def iota_formula(w: TangentField, basis: HarmonicBasis) -> float:
    """Ratio of the surface integrals of w . gamma_p and w . gamma_t."""
    a = inner(w, basis.gamma_t)
    if abs(a) <= 1e-10 * w.norm() * basis.gamma_t.norm():
        raise UndefinedTransformError("average toroidal winding vanishes")
    return inner(w, basis.gamma_p) / a


def iota_traced(v: TangentField, start, n_transits: int, curves: CanonicalCurves | None = None,
                rtol: float = 1e-10) -> float:
    """Poloidal advance per toroidal transit of one field line, measured over n transits.

    The line is integrated with phi as the independent variable, so each
    transit ends exactly on the starting section.
    """
    curves = curves or CanonicalCurves()
    vp_grid = v.vp
    if not (np.all(vp_grid > 0) or np.all(vp_grid < 0)):
        raise TransversalityError("toroidal component changes sign on the grid")
    interp = spectral.TrigInterpolant(np.stack([v.vt, v.vp]), drop=DROP)
    sgn = 1.0 if vp_grid.flat[0] > 0 else -1.0
    seen = {"bad": False}

    def rhs(ph, y):
        vt, vp = interp(y, ph)
        if np.any(vp * sgn <= 0):
            seen["bad"] = True
        return vt / vp

    th0, ph0 = float(start[0]), float(start[1])
    span = TWO_PI * n_transits
    sol = solve_ivp(rhs, (ph0, ph0 + span), [th0], method="DOP853", rtol=rtol, atol=1e-12)
    if seen["bad"]:
        raise TransversalityError("toroidal component changed sign along the trace")
    if not sol.success:
        raise TracingError(sol.message)
    sp = curves.resolved_sign_p(v.grid)
    dtheta = sol.y[0, -1] - th0
    return float(sp * curves.sign_t * dtheta / span)


def helicity_from_windings(v: TangentField, basis: HarmonicBasis, h_gamma: float | None = None,
                           simplified: bool | None = None) -> float:
    """Helicity from average windings and circulations of the harmonic basis.

    With ``simplified`` (default when sigma_t bounds outside the solid torus) only
    the Q P term is kept; otherwise the Q^2 bracket needs ``h_gamma``.
    """
    Q, P = average_windings(v, basis)
    per = basis.periods
    gt_ = per["gamma"]["sigma_t"]
    value = Q * P * gt_ * per["gamma_tilde"]["sigma_p"]
    if simplified is None:
        simplified = basis.curves.toroidal_bounds_outside
    if not simplified:
        if h_gamma is None:
            from .helicity import helicity
            h_gamma = helicity(basis.gamma)
        value += (h_gamma * gt_**2 + gt_ * per["gamma_tilde"]["sigma_t"]) * Q**2
    return float(value * v.grid.area**2)


def helicity_neumann_route(v: TangentField, basis: HarmonicBasis,
                           constants: NeumannConstants | None = None) -> float:
    """Helicity of v on an axisymmetric torus through the closed-form Neumann field."""
    c = constants or neumann_constants(v.grid.surface, basis.curves)
    Q, P = average_windings(v, basis)
    return float(Q * P * c.circulation_t * c.flux / c.volume_norm_sq * v.grid.area**2)


def winding_field(basis: HarmonicBasis, toroidal: float = 1.0, poloidal: float = 1.0) -> TangentField:
    """toroidal * h + poloidal * (h x N), where h is harmonic with circulation 2 pi along sigma_t.

    On an axisymmetric torus h is e_phi / rho, and with unit coefficients the
    field has rotational transform equal to the ratio of the two circulations.
    """
    h = TWO_PI * basis.gamma_t
    return toroidal * h + poloidal * h.cross_normal()
