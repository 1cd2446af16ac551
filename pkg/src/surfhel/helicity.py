"""Helicity, cross-helicity, the harmonic 2x2 matrix and its eigenfields."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .biot_savart import bs_surface_vectors
from .calculus import CanonicalCurves, HarmonicBasis, TangentField, inner
from .errors import ConfigError, DegeneratePeriodError

# Richardson-extrapolated staggered quadrature; plain staggering is only first order.
DEFAULT_QUADRATURE = {"refine": 1, "shift": (0.5, 0.5), "richardson": True}


def quadrature_tolerance(n: int) -> float:
    """Tolerance ladder tied to the grid: 1e-2 at 64^2, 2.5e-3 at 128^2."""
    return 1e-2 * (64.0 / n) ** 2


def _pairings(fields: list[TangentField], quad: dict | None) -> np.ndarray:
    """Symmetrised matrix of <f_i, BS f_j> for a list of fields."""
    quad = {**DEFAULT_QUADRATURE, **(quad or {})}
    B = bs_surface_vectors(fields, **quad)
    w = fields[0].grid.weights
    raw = np.array([[np.sum(w * np.einsum("...i,...i", fi.vectors, B[j])) for j in range(len(fields))]
                    for fi in fields])
    return 0.5 * (raw + raw.T)


def cross_helicity(v: TangentField, w: TangentField, quad: dict | None = None) -> float:
    """H_c(v, w) = <v, BS(w)>, evaluated as the symmetric double sum."""
    return float(_pairings([v, w], quad)[0, 1])


def helicity(v: TangentField, quad: dict | None = None) -> float:
    return float(_pairings([v], quad)[0, 0])


@dataclass(frozen=True)
class HelicityMatrix:
    M: np.ndarray

    @property
    def h_gamma(self) -> float:
        return float(self.M[0, 0])

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.M))

    @property
    def trace(self) -> float:
        return float(np.trace(self.M))


def helicity_matrix(basis: HarmonicBasis, quad: dict | None = None) -> HelicityMatrix:
    """Entries <b_i, BS b_j> in the orthonormal basis (gamma, gamma_tilde)."""
    return HelicityMatrix(_pairings([basis.gamma, basis.gamma_tilde], quad))


@dataclass(frozen=True)
class EigenResult:
    lambda_plus: float
    lambda_minus: float
    v_plus: TangentField
    v_minus: TangentField

    @property
    def Lambda(self) -> float:
        return max(self.lambda_plus, self.lambda_minus)


def eigen_values(h_gamma: float) -> tuple[float, float]:
    """Lambda_+ and Lambda_- (the latter as a magnitude) for a given H(gamma)."""
    root = np.hypot(h_gamma, 1.0)
    return 0.5 * (root + h_gamma), 0.5 * (root - h_gamma)


def eigenfields(basis: HarmonicBasis, h_gamma: float) -> EigenResult:
    """Closed-form extremal harmonic fields of the helicity Rayleigh quotient.

    ``lambda_minus`` is reported as a magnitude; the corresponding eigenvalue of
    the 2x2 matrix is ``-lambda_minus``.
    """
    lp, lm = eigen_values(h_gamma)
    c = np.hypot(h_gamma, 1.0) + h_gamma
    g, gt = basis.gamma, basis.gamma_tilde
    vp = c * g + gt
    vm = g - c * gt
    return EigenResult(lp, lm, vp / vp.norm(), vm / vm.norm())


def helicity_gamma_line(basis: HarmonicBasis, curves: CanonicalCurves | None = None) -> float:
    """H(gamma) from circulations along a toroidal curve bounding outside the solid torus."""
    curves = curves or basis.curves
    if not curves.toroidal_bounds_outside:
        raise ConfigError("sigma_t is not designated as bounding outside the solid torus")
    a = basis.periods["gamma"]["sigma_t"]
    b = basis.periods["gamma_tilde"]["sigma_t"]
    if abs(a) < 1e-10:
        raise DegeneratePeriodError("circulation of gamma along sigma_t vanishes")
    return float(-b / a * basis.norm_gamma**2)


def rayleigh_quotient(v: TangentField, quad: dict | None = None) -> float:
    return helicity(v, quad) / inner(v, v)
