"""Tangent fields, surface differential operators, Laplace-Beltrami solves and harmonic fields."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from . import spectral
from .errors import (ConfigError, DecompositionError, GeometryError, SolvabilityError,
                     TopologyError)
from .geometry import TWO_PI, FourierTorus, SurfaceGrid, frame


@dataclass(frozen=True, eq=False)
class TangentField:
    """Tangent field v = vt e_theta + vp e_phi sampled on a grid.

    Multiplying by a scalar or by a node array scales the field pointwise.
    """

    # keep numpy from broadcasting over the field when an array is on the left
    __array_ufunc__ = None

    grid: SurfaceGrid
    vt: np.ndarray
    vp: np.ndarray

    def __post_init__(self):
        shape = self.grid.shape
        vt = np.broadcast_to(np.asarray(self.vt, float), shape).copy()
        vp = np.broadcast_to(np.asarray(self.vp, float), shape).copy()
        object.__setattr__(self, "vt", vt)
        object.__setattr__(self, "vp", vp)

    @classmethod
    def zeros(cls, grid: SurfaceGrid) -> "TangentField":
        return cls(grid, 0.0, 0.0)

    @classmethod
    def from_vectors(cls, grid: SurfaceGrid, vec: np.ndarray) -> "TangentField":
        """Tangential part of a Cartesian vector field given at the nodes."""
        bt = np.einsum("...i,...i", vec, grid.e_theta)
        bp = np.einsum("...i,...i", vec, grid.e_phi)
        itt, itp, ipp = grid.inverse_metric
        return cls(grid, itt * bt + itp * bp, itp * bt + ipp * bp)

    @classmethod
    def from_covariant(cls, grid: SurfaceGrid, ct: np.ndarray, cp: np.ndarray) -> "TangentField":
        itt, itp, ipp = grid.inverse_metric
        return cls(grid, itt * ct + itp * cp, itp * ct + ipp * cp)

    @cached_property
    def vectors(self) -> np.ndarray:
        return self.vt[..., None] * self.grid.e_theta + self.vp[..., None] * self.grid.e_phi

    @cached_property
    def covariant(self) -> tuple[np.ndarray, np.ndarray]:
        gtt, gtp, gpp = self.grid.metric
        return gtt * self.vt + gtp * self.vp, gtp * self.vt + gpp * self.vp

    def cross_normal(self) -> "TangentField":
        """The field v x N."""
        ct, cp = self.covariant
        s = self.grid.orientation / self.grid.jac
        return TangentField(self.grid, s * cp, -s * ct)

    def dot(self, other: "TangentField") -> np.ndarray:
        ct, cp = self.covariant
        return ct * other.vt + cp * other.vp

    def norm_sq(self) -> float:
        return inner(self, self)

    def norm(self) -> float:
        return float(np.sqrt(self.norm_sq()))

    def interpolant(self, drop: float = 0.0) -> spectral.TrigInterpolant:
        return spectral.TrigInterpolant(np.stack([self.vt, self.vp]), drop=drop)

    def _check(self, other):
        if other.grid is not self.grid:
            raise ConfigError("fields live on different grids")

    def __add__(self, other):
        self._check(other)
        return TangentField(self.grid, self.vt + other.vt, self.vp + other.vp)

    def __sub__(self, other):
        self._check(other)
        return TangentField(self.grid, self.vt - other.vt, self.vp - other.vp)

    def __mul__(self, a):
        return TangentField(self.grid, a * self.vt, a * self.vp)

    __rmul__ = __mul__

    def __truediv__(self, a):
        return TangentField(self.grid, self.vt / a, self.vp / a)

    def __neg__(self):
        return TangentField(self.grid, -self.vt, -self.vp)

    def to_rows(self) -> list[tuple[int, int, float, float]]:
        ni, nj = self.grid.shape
        return [(i, j, float(self.vt[i, j]), float(self.vp[i, j])) for i in range(ni) for j in range(nj)]

    def save(self, path: str | Path) -> None:
        path = Path(path)
        if path.suffix == ".json":
            rows = [{"i": i, "j": j, "v_theta": a, "v_phi": b} for i, j, a, b in self.to_rows()]
            path.write_text(json.dumps({"n_theta": self.grid.n_theta, "n_phi": self.grid.n_phi,
                                        "rows": rows}, indent=1))
        else:
            np.savetxt(path, np.array(self.to_rows()), delimiter=",", header="i,j,v_theta,v_phi",
                       comments="", fmt=["%d", "%d", "%.17g", "%.17g"])

    @classmethod
    def load(cls, grid: SurfaceGrid, path: str | Path) -> "TangentField":
        path = Path(path)
        if path.suffix == ".json":
            rows = [(r["i"], r["j"], r["v_theta"], r["v_phi"]) for r in json.loads(path.read_text())["rows"]]
            arr = np.array(rows, float)
        else:
            arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        vt = np.zeros(grid.shape)
        vp = np.zeros(grid.shape)
        i, j = arr[:, 0].astype(int), arr[:, 1].astype(int)
        vt[i, j] = arr[:, 2]
        vp[i, j] = arr[:, 3]
        return cls(grid, vt, vp)


def inner(v: TangentField, w: TangentField) -> float:
    """L2(Sigma) inner product by the grid quadrature."""
    return float(np.sum(v.grid.weights * v.dot(w)))


def integrate(grid: SurfaceGrid, f: np.ndarray) -> float:
    return float(np.sum(grid.weights * f))


# --- differential operators ------------------------------------------------------------

def surface_gradient(grid: SurfaceGrid, f: np.ndarray) -> TangentField:
    return TangentField.from_covariant(grid, spectral.d_theta(f), spectral.d_phi(f))


def surface_divergence(v: TangentField) -> np.ndarray:
    J = v.grid.jac
    return (spectral.d_theta(J * v.vt) + spectral.d_phi(J * v.vp)) / J


def surface_curl(v: TangentField) -> np.ndarray:
    """Normal component of the curl, N . curl v, with N outward."""
    ct, cp = v.covariant
    return v.grid.orientation * (spectral.d_theta(cp) - spectral.d_phi(ct)) / v.grid.jac


def laplace_beltrami(grid: SurfaceGrid, f: np.ndarray) -> np.ndarray:
    return surface_divergence(surface_gradient(grid, f))


def _test_functions(grid: SurfaceGrid, kmax: int = 3):
    for m in range(0, kmax + 1):
        for n in range(-kmax, kmax + 1):
            if m == 0 and n <= 0:
                continue
            ang = m * grid.T + n * grid.P
            yield np.cos(ang)
            yield np.sin(ang)


def weak_residuals(v: TangentField, kmax: int = 3) -> tuple[float, float]:
    """Largest normalised weak divergence and curl residuals over a band-limited test battery.

    Returns ``max |<v, grad a>| / (|v| |grad a|)`` and the same with ``grad a x N``.
    """
    nv = v.norm()
    if nv == 0.0:
        return 0.0, 0.0
    rd = rc = 0.0
    for a in _test_functions(v.grid, kmax):
        g = surface_gradient(v.grid, a)
        ng = g.norm()
        rd = max(rd, abs(inner(v, g)) / (nv * ng))
        rc = max(rc, abs(inner(v, g.cross_normal())) / (nv * ng))
    return rd, rc


# --- Laplace-Beltrami solver -----------------------------------------------------------

class LaplaceSolver:
    """Fourier-Galerkin Laplace-Beltrami solver with a mean-zero gauge.

    The stiffness operator -d_i (J g^ij d_j) is applied spectrally on the
    Nyquist-free trigonometric subspace and inverted by conjugate gradients
    preconditioned with the inverse of its averaged-coefficient symbol.
    """

    def __init__(self, grid: SurfaceGrid, rtol: float = 1e-14, maxiter: int = 2000):
        self.grid = grid
        self.rtol = rtol
        self.maxiter = maxiter
        itt, itp, ipp = grid.inverse_metric
        J = grid.jac
        self.ktt, self.ktp, self.kpp = J * itt, J * itp, J * ipp
        nt, npf = grid.shape
        kt = spectral.wavenumbers(nt)[:, None]
        kp = spectral.wavenumbers(npf)[None, :]
        sym = self.ktt.mean() * kt**2 + 2 * self.ktp.mean() * kt * kp + self.kpp.mean() * kp**2
        mask = sym > 0
        self._mask = mask
        self._inv_sym = np.where(mask, 1.0 / np.where(mask, sym, 1.0), 0.0)

    def _project(self, f):
        F = np.fft.fft2(f)
        F[~self._mask] = 0.0
        return np.fft.ifft2(F).real

    def stiffness(self, f):
        ft, fp = spectral.d_theta(f), spectral.d_phi(f)
        out = -(spectral.d_theta(self.ktt * ft + self.ktp * fp) + spectral.d_phi(self.ktp * ft + self.kpp * fp))
        return self._project(out)

    def _precond(self, r):
        return np.fft.ifft2(np.fft.fft2(r) * self._inv_sym).real

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        grid = self.grid
        total = integrate(grid, rhs)
        scale = integrate(grid, np.abs(rhs))
        if abs(total) > 1e-10 * max(scale, 1e-300):
            raise SolvabilityError(f"right-hand side has non-zero mean (integral {total:.3e})")
        b = self._project(-grid.jac * rhs)
        if not np.any(b):
            return np.zeros(grid.shape)
        shape = grid.shape
        n = grid.size
        A = LinearOperator((n, n), matvec=lambda x: self.stiffness(x.reshape(shape)).ravel(), dtype=float)
        M = LinearOperator((n, n), matvec=lambda x: self._precond(x.reshape(shape)).ravel(), dtype=float)
        x, info = cg(A, b.ravel(), rtol=self.rtol, atol=0.0, maxiter=self.maxiter, M=M)
        f = self._project(x.reshape(shape))
        f -= integrate(grid, f) / grid.area
        res = np.linalg.norm(self.stiffness(f) - b) / np.linalg.norm(b)
        if info != 0 and res > 1e-9:
            raise SolvabilityError(f"Laplace-Beltrami solve did not converge (residual {res:.2e})")
        return f


def solve_laplace_beltrami(grid: SurfaceGrid, rhs: np.ndarray) -> np.ndarray:
    """Mean-zero f with Delta f = rhs."""
    return LaplaceSolver(grid).solve(rhs)


# --- curves ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ChartCurve:
    """Closed curve theta(t), phi(t), t in [0, 1), given by unwrapped samples.

    The curve closes after ``windings = (k_theta, k_phi)`` full turns, so
    ``theta(1) = theta(0) + 2 pi k_theta`` and likewise for phi.
    """

    theta: np.ndarray
    phi: np.ndarray
    windings: tuple[int, int]
    points: np.ndarray | None = None

    @classmethod
    def linear(cls, theta0: float, phi0: float, k_theta: int, k_phi: int, n: int = 512) -> "ChartCurve":
        t = np.arange(n) / n
        return cls(theta0 + TWO_PI * k_theta * t, phi0 + TWO_PI * k_phi * t, (int(k_theta), int(k_phi)))

    def derivatives(self) -> tuple[np.ndarray, np.ndarray]:
        """d theta / dt and d phi / dt from the periodic part of the samples."""
        n = len(self.theta)
        t = np.arange(n) / n
        out = []
        for ang, k in ((self.theta, self.windings[0]), (self.phi, self.windings[1])):
            per = ang - TWO_PI * k * t
            out.append(TWO_PI * k + _dt(per))
        return out[0], out[1]

    def reversed(self) -> "ChartCurve":
        th = np.concatenate([self.theta[:1], self.theta[:0:-1]])
        ph = np.concatenate([self.phi[:1], self.phi[:0:-1]])
        pts = None if self.points is None else np.concatenate([self.points[:1], self.points[:0:-1]])
        return ChartCurve(th, ph, (-self.windings[0], -self.windings[1]), pts)


def _dt(per: np.ndarray) -> np.ndarray:
    """Derivative in t in [0,1) of periodic samples."""
    return spectral.derivative(per, 0) * TWO_PI


@dataclass(frozen=True)
class CanonicalCurves:
    """The poloidal curve phi = phi_p and the toroidal curve theta = theta_t.

    ``sign_p`` and ``sign_t`` are the traversal directions in theta and phi.
    The default ``sign_p = 0`` selects the direction for which
    (poloidal tangent, toroidal tangent, outward normal) is right handed.
    ``twist`` replaces sigma_t by the (1, twist) curve sigma_t + twist * sigma_p.
    """

    phi_p: float = 0.0
    theta_t: float = np.pi
    sign_p: int = 0
    sign_t: int = 1
    twist: int = 0
    toroidal_bounds_outside: bool = True

    def resolved_sign_p(self, grid: SurfaceGrid) -> int:
        return self.sign_p if self.sign_p else grid.orientation

    def sigma_p(self, grid: SurfaceGrid, n: int = 512) -> ChartCurve:
        return ChartCurve.linear(0.0, self.phi_p, self.resolved_sign_p(grid), 0, n)

    def sigma_t(self, grid: SurfaceGrid, n: int = 512) -> ChartCurve:
        sp = self.resolved_sign_p(grid)
        return ChartCurve.linear(self.theta_t, 0.0, self.twist * sp, self.sign_t, n)


def line_integral(v: TangentField, curve: ChartCurve, tol: float = 1e-8) -> float:
    """Circulation of v along a closed chart curve by the periodic trapezoid rule."""
    if len(curve.theta) < 256:
        raise ConfigError("curve must be sampled with at least 256 points")
    grid = v.grid
    if curve.points is not None:
        on = frame(grid.surface, curve.theta, curve.phi)["x"]
        diam = np.ptp(grid.x.reshape(-1, 3), axis=0).max()
        if np.max(np.linalg.norm(on - curve.points, axis=-1)) > tol * diam:
            raise GeometryError("curve leaves the surface")
    ct, cp = v.covariant
    vals = spectral.TrigInterpolant(np.stack([ct, cp]))(curve.theta, curve.phi)
    dth, dph = curve.derivatives()
    return float(np.mean(vals[0] * dth + vals[1] * dph))


# --- harmonic fields -------------------------------------------------------------------

def closed_fields(grid: SurfaceGrid) -> tuple[TangentField, TangentField]:
    """Single-valued gradient fields of the multivalued angles theta and phi."""
    itt, itp, ipp = grid.inverse_metric
    return TangentField(grid, itt, itp), TangentField(grid, itp, ipp)


@dataclass(frozen=True, eq=False)
class HarmonicBasis:
    gamma_p: TangentField
    gamma_t: TangentField
    gamma: TangentField
    gamma_tilde: TangentField
    periods: dict
    norm_gamma: float
    norm_gamma_t: float
    curves: CanonicalCurves

    @property
    def grid(self) -> SurfaceGrid:
        return self.gamma.grid


def harmonize(field: TangentField, solver: LaplaceSolver | None = None) -> TangentField:
    """Add the gradient that makes a curl-free field divergence-free."""
    solver = solver or LaplaceSolver(field.grid)
    f = solver.solve(-surface_divergence(field))
    return field + surface_gradient(field.grid, f)


def harmonic_basis(grid: SurfaceGrid, curves: CanonicalCurves | None = None) -> HarmonicBasis:
    curves = curves or CanonicalCurves()
    solver = LaplaceSolver(grid)
    h = [harmonize(c, solver) for c in closed_fields(grid)]
    sp, st = curves.sigma_p(grid), curves.sigma_t(grid)
    P = np.array([[line_integral(hi, sp) for hi in h], [line_integral(hi, st) for hi in h]])
    if abs(np.linalg.det(P)) < 1e-12 * np.abs(P).max() ** 2:
        raise TopologyError("period matrix is singular")
    cp_, ct_ = np.linalg.solve(P, np.eye(2)).T
    gamma_p = cp_[0] * h[0] + cp_[1] * h[1]
    gamma_t = ct_[0] * h[0] + ct_[1] * h[1]
    nt = gamma_t.norm()
    gamma = gamma_t / nt
    gamma_tilde = gamma.cross_normal()
    fields = {"gamma_p": gamma_p, "gamma_t": gamma_t, "gamma": gamma, "gamma_tilde": gamma_tilde}
    periods = {name: {"sigma_p": line_integral(f, sp), "sigma_t": line_integral(f, st)}
               for name, f in fields.items()}
    return HarmonicBasis(gamma_p, gamma_t, gamma, gamma_tilde, periods, gamma.norm(), nt, curves)


@dataclass(frozen=True)
class HodgeParts:
    f: np.ndarray
    alpha: float
    beta: float
    residual: float


def hodge_project(v: TangentField, basis: HarmonicBasis, tol: float = 1e-6) -> HodgeParts:
    """Split a divergence-free field as grad f x N + alpha gamma + beta gamma_tilde."""
    rd, _ = weak_residuals(v)
    if rd > tol:
        raise DecompositionError(f"field is not divergence-free (weak residual {rd:.2e})")
    alpha = inner(basis.gamma, v)
    beta = inner(basis.gamma_tilde, v)
    rest = v - alpha * basis.gamma - beta * basis.gamma_tilde
    f = solve_laplace_beltrami(v.grid, -surface_curl(rest))
    recon = surface_gradient(v.grid, f).cross_normal() + alpha * basis.gamma + beta * basis.gamma_tilde
    nv = v.norm()
    res = (v - recon).norm() / nv if nv > 0 else 0.0
    return HodgeParts(f, alpha, beta, res)


def co_exact(grid: SurfaceGrid, f: np.ndarray) -> TangentField:
    """The field grad f x N."""
    return surface_gradient(grid, f).cross_normal()


def band_limited(grid: SurfaceGrid, rng: np.random.Generator, kmax: int = 4, decay: float = 1.0) -> np.ndarray:
    """Random smooth scalar with Fourier modes |m|, |n| <= kmax."""
    f = np.zeros(grid.shape)
    for m in range(0, kmax + 1):
        for n in range(-kmax, kmax + 1):
            if m == 0 and n <= 0:
                continue
            amp = np.exp(-decay * np.hypot(m, n) / kmax)
            ang = m * grid.T + n * grid.P
            f += amp * (rng.standard_normal() * np.cos(ang) + rng.standard_normal() * np.sin(ang))
    return f


# --- axisymmetric harmonic Neumann field -------------------------------------------------

def neumann_field(points: np.ndarray) -> np.ndarray:
    """Gamma(x) = Y / |Y|^2 with Y = (-y, x, 0)."""
    p = np.asarray(points, float)
    rho2 = p[..., 0] ** 2 + p[..., 1] ** 2
    if np.any(rho2 == 0):
        raise GeometryError("Gamma is singular on the z-axis")
    return np.stack([-p[..., 1] / rho2, p[..., 0] / rho2, np.zeros_like(rho2)], -1)


def neumann_on_surface(grid: SurfaceGrid) -> TangentField:
    """Gamma restricted to an axisymmetric surface, where it is tangent."""
    if not grid.surface.is_axisymmetric:
        raise ConfigError("Gamma is tangent only to axisymmetric surfaces")
    return TangentField.from_vectors(grid, neumann_field(grid.x))


@dataclass(frozen=True)
class NeumannConstants:
    circulation_t: float
    flux: float
    volume_norm_sq: float


def neumann_constants(surface: FourierTorus, curves: CanonicalCurves | None = None, n: int = 1024) -> NeumannConstants:
    """Circulation along sigma_t, flux through the poloidal disc and L2 norm over the solid torus.

    For an axisymmetric surface with cross-section D, the flux is the integral of
    1/R over D, evaluated as a boundary integral of log(R) dZ, and the volume norm
    is 2 pi times the flux.
    """
    if not surface.is_axisymmetric:
        raise ConfigError("closed-form Neumann field requires an axisymmetric surface")
    curves = curves or CanonicalCurves()
    sp = curves.sign_p if curves.sign_p else surface.orientation
    t = sp * np.arange(n) * TWO_PI / n
    cy = surface.cylindrical(t, curves.phi_p)
    # d/ds of Z(theta(s)) with theta = sp * s
    flux = -float(np.mean(np.log(cy["R"]) * cy["Z_t"] * sp)) * TWO_PI
    circ = TWO_PI * curves.sign_t
    return NeumannConstants(circ, flux, TWO_PI * flux)
