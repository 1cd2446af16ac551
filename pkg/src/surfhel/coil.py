"""Surface-current fitting on a winding surface: DOF basis, Tikhonov solves, kernel and simple currents."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .biot_savart import _biot_savart_sum, check_clearance
from .calculus import (HarmonicBasis, TangentField, closed_fields, co_exact, harmonic_basis, inner)
from .errors import ConfigError, KernelResolutionError, NumericsError, ProximityError
from .geometry import TWO_PI, FourierTorus, SurfaceGrid, build_grid


# --- current parametrisation -------------------------------------------------------------

@dataclass(frozen=True)
class CurrentPotential:
    """j = N x grad(Phi_sv) + a_pol (N x grad phi) + b_tor (N x grad theta).

    ``a_pol`` scales the net poloidal current (it links the hole and makes a
    toroidal field inside), ``b_tor`` the net toroidal current. ``phi_mn`` holds
    coefficients of the single-valued potential in the order of ``modes``, each
    mode being ``(kind, m, n)`` for ``cos`` or ``sin`` of (m theta - n phi).
    """

    modes: tuple[tuple[str, int, int], ...]
    phi_mn: np.ndarray
    a_pol: float = 0.0
    b_tor: float = 0.0

    @property
    def dofs(self) -> np.ndarray:
        return np.concatenate([self.phi_mn, [self.a_pol, self.b_tor]])

    @classmethod
    def from_dofs(cls, modes, x: np.ndarray) -> "CurrentPotential":
        x = np.asarray(x, float)
        return cls(tuple(modes), x[:-2].copy(), float(x[-2]), float(x[-1]))

    def potential(self, grid: SurfaceGrid) -> np.ndarray:
        phi = np.zeros(grid.shape)
        for (kind, m, n), c in zip(self.modes, self.phi_mn):
            if c == 0.0:
                continue
            ang = m * grid.T - n * grid.P
            phi += c * (np.cos(ang) if kind == "cos" else np.sin(ang))
        return phi

    def field(self, grid: SurfaceGrid) -> TangentField:
        ht, hp = closed_fields(grid)
        # N x grad f = -(grad f x N)
        return -(co_exact(grid, self.potential(grid)) + self.a_pol * hp.cross_normal()
                 + self.b_tor * ht.cross_normal())


def potential_modes(mpol: int, ntor: int, kinds=("sin", "cos")) -> tuple[tuple[str, int, int], ...]:
    """Modes (kind, m, n) with 0 <= m <= mpol, |n| <= ntor, excluding the constant and duplicates."""
    out = []
    for kind in kinds:
        for m in range(mpol + 1):
            for n in range(-ntor, ntor + 1):
                if m == 0 and n <= 0:
                    continue
                out.append((kind, m, n))
    return tuple(out)


@dataclass(frozen=True, eq=False)
class CurrentBasis:
    grid: SurfaceGrid
    modes: tuple[tuple[str, int, int], ...]
    vt: np.ndarray
    vp: np.ndarray

    @property
    def n_dofs(self) -> int:
        return len(self.modes) + 2

    def column(self, k: int) -> TangentField:
        return TangentField(self.grid, self.vt[k], self.vp[k])

    def combine(self, x: np.ndarray) -> TangentField:
        return TangentField(self.grid, np.tensordot(x, self.vt, 1), np.tensordot(x, self.vp, 1))

    def vectors(self) -> np.ndarray:
        g = self.grid
        return (self.vt[..., None] * g.e_theta + self.vp[..., None] * g.e_phi)

    def gram(self) -> np.ndarray:
        g = self.grid
        gtt, gtp, gpp = g.metric
        w = g.weights
        ct = gtt * self.vt + gtp * self.vp
        cp = gtp * self.vt + gpp * self.vp
        X = self.vt.reshape(self.n_dofs, -1)
        Y = self.vp.reshape(self.n_dofs, -1)
        return (ct.reshape(self.n_dofs, -1) * w.ravel()) @ X.T + (cp.reshape(self.n_dofs, -1) * w.ravel()) @ Y.T


def current_basis(grid: SurfaceGrid, mpol: int = 8, ntor: int = 8) -> CurrentBasis:
    modes = potential_modes(mpol, ntor)
    vt, vp = [], []
    zero = np.zeros(len(modes))
    for k in range(len(modes)):
        x = zero.copy()
        x[k] = 1.0
        f = CurrentPotential(modes, x).field(grid)
        vt.append(f.vt)
        vp.append(f.vp)
    for a, b in ((1.0, 0.0), (0.0, 1.0)):
        f = CurrentPotential(modes, zero, a, b).field(grid)
        vt.append(f.vt)
        vp.append(f.vp)
    return CurrentBasis(grid, modes, np.array(vt), np.array(vp))


# --- plasma target -------------------------------------------------------------------------

def target_wire_field(points: np.ndarray, current: float = 1.0) -> np.ndarray:
    """Field (I / 2 pi) e_phi / rho of a straight wire along the z-axis."""
    p = np.asarray(points, float)
    rho2 = p[..., 0] ** 2 + p[..., 1] ** 2
    if np.any(rho2 <= 1e-300):
        raise ProximityError("wire field is singular on the z-axis")
    c = current / TWO_PI
    return np.stack([-c * p[..., 1] / rho2, c * p[..., 0] / rho2, np.zeros_like(rho2)], -1)


def harmonic_residual(fn, points: np.ndarray, h: float = 1e-4) -> tuple[float, float]:
    """Central-difference divergence and curl of ``fn`` relative to |B| / length scale."""
    p = np.asarray(points, float).reshape(-1, 3)
    J = np.empty((len(p), 3, 3))
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        J[:, :, i] = (fn(p + e) - fn(p - e)) / (2 * h)
    div = J[:, 0, 0] + J[:, 1, 1] + J[:, 2, 2]
    curl = np.stack([J[:, 2, 1] - J[:, 1, 2], J[:, 0, 2] - J[:, 2, 0], J[:, 1, 0] - J[:, 0, 1]], -1)
    scale = np.max(np.linalg.norm(J.reshape(len(p), -1), axis=1))
    return float(np.max(np.abs(div)) / scale), float(np.max(np.linalg.norm(curl, axis=1)) / scale)


@dataclass(frozen=True, eq=False)
class PlasmaTarget:
    surface: FourierTorus
    points: np.ndarray
    weights: np.ndarray
    B: np.ndarray

    @property
    def norm_sq(self) -> float:
        return float(np.sum(self.weights[:, None] * self.B**2))


def plasma_volume_nodes(surface: FourierTorus, n_s: int = 6, n_theta: int = 16, n_phi: int = 32):
    """Gauss-Legendre (radial) by uniform (angular) nodes filling the solid torus.

    Interior points interpolate linearly between the magnetic-axis curve (the
    m = 0 modes) and the boundary at fixed angles.
    """
    s, ws = np.polynomial.legendre.leggauss(n_s)
    s = 0.5 * (s + 1.0)
    ws = 0.5 * ws
    th = np.arange(n_theta) * TWO_PI / n_theta
    ph = np.arange(n_phi) * TWO_PI / n_phi
    S, T, P = np.meshgrid(s, th, ph, indexing="ij")
    cy = surface.cylindrical(T, P)
    axis = FourierTorus(tuple(md for md in surface.modes if md[0] == 0) or ((0, 0, 0.0, 0.0),), surface.nfp)
    ca = axis.cylindrical(T, P)
    dR = cy["R"] - ca["R"]
    dZ = cy["Z"] - ca["Z"]
    R = ca["R"] + S * dR
    Z = ca["Z"] + S * dZ
    jac = R * S * np.abs(dR * cy["Z_t"] - dZ * cy["R_t"])
    w = jac * ws[:, None, None] * (TWO_PI / n_theta) * (TWO_PI / n_phi)
    pts = np.stack([R * np.cos(P), R * np.sin(P), Z], -1)
    return pts.reshape(-1, 3), w.ravel()


def wire_target(surface: FourierTorus, current: float = 1.0, **kw) -> PlasmaTarget:
    pts, w = plasma_volume_nodes(surface, **kw)
    return PlasmaTarget(surface, pts, w, target_wire_field(pts, current))


# --- the fitting problem ---------------------------------------------------------------------

def assemble_bs_matrix(basis: CurrentBasis, points: np.ndarray, min_factor: float = 2.0) -> np.ndarray:
    """Dense map from DOFs to stacked field components (x, y, z per point)."""
    grid = basis.grid
    pts = np.asarray(points, float).reshape(-1, 3)
    check_clearance(grid, pts, min_factor)
    a = basis.vectors() * grid.weights[None, ..., None]
    a = np.moveaxis(a.reshape(basis.n_dofs, -1, 3), 0, -1)
    B = _biot_savart_sum(pts, grid.x.reshape(-1, 3), a)
    return B.reshape(-1, basis.n_dofs)


@dataclass(frozen=True)
class SolveResult:
    current: CurrentPotential
    misfit: float
    penalty: float
    lam: float
    Q_bar: float
    objective: float
    relative_misfit: float
    normal_residual: float


@dataclass(eq=False)
class CoilProblem:
    """Everything needed to fit a target field: basis, matrices and the harmonic field gamma_t."""

    basis: CurrentBasis
    target: PlasmaTarget
    harmonic: HarmonicBasis
    A: np.ndarray
    gram: np.ndarray
    q: np.ndarray
    _cache: dict = field(default_factory=dict)

    @property
    def grid(self) -> SurfaceGrid:
        return self.basis.grid

    @property
    def w3(self) -> np.ndarray:
        return np.repeat(self.target.weights, 3)

    def normal_matrices(self):
        if "normal" not in self._cache:
            WA = self.A * self.w3[:, None]
            self._cache["normal"] = (self.A.T @ WA, WA.T @ self.target.B.ravel())
        return self._cache["normal"]

    def field_at_targets(self, x: np.ndarray) -> np.ndarray:
        return (self.A @ x).reshape(-1, 3)

    def misfit(self, x: np.ndarray) -> float:
        r = self.A @ x - self.target.B.ravel()
        return float(np.sum(self.w3 * r * r))

    def penalty(self, x: np.ndarray) -> float:
        return float(x @ self.gram @ x)

    def q_bar(self, x: np.ndarray) -> float:
        return float(self.q @ x) / self.grid.area

    def current(self, x: np.ndarray) -> CurrentPotential:
        return CurrentPotential.from_dofs(self.basis.modes, x)

    def null_basis(self) -> np.ndarray:
        if "Z" not in self._cache:
            self._cache["Z"] = linalg.null_space(self.q[None, :])
        return self._cache["Z"]


def build_problem(cws: FourierTorus, plasma: FourierTorus, current: float = 1.0, res: int = 64,
                  res_phi: int | None = None, mpol: int = 8, ntor: int = 8,
                  plasma_nodes: dict | None = None) -> CoilProblem:
    grid = build_grid(cws, res, res_phi or int(1.5 * res))
    basis = current_basis(grid, mpol, ntor)
    target = wire_target(plasma, current, **(plasma_nodes or {}))
    A = assemble_bs_matrix(basis, target.points)
    hb = harmonic_basis(grid)
    gt = hb.gamma_t
    q = np.array([inner(basis.column(k), gt) for k in range(basis.n_dofs)])
    return CoilProblem(basis, target, hb, A, basis.gram(), q)


def solve_current(problem: CoilProblem, lam: float, simple: bool = True) -> SolveResult:
    """Minimise misfit + lam * |j|^2, optionally over currents with zero average toroidal winding."""
    if not lam > 0:
        raise ConfigError(f"lambda must be positive, got {lam}")
    AtWA, AtWb = problem.normal_matrices()
    H = AtWA + lam * problem.gram
    if simple:
        Z = problem.null_basis()
        Hz = Z.T @ H @ Z
        rz = Z.T @ AtWb
        y = linalg.solve(Hz, rz, assume_a="pos")
        x = Z @ y
        res = np.linalg.norm(Hz @ y - rz) / np.linalg.norm(rz)
    else:
        x = linalg.solve(H, AtWb, assume_a="pos")
        res = np.linalg.norm(H @ x - AtWb) / np.linalg.norm(AtWb)
    mis = problem.misfit(x)
    pen = problem.penalty(x)
    return SolveResult(problem.current(x), mis, pen, float(lam), problem.q_bar(x), mis + lam * pen,
                       mis / problem.target.norm_sq, float(res))


@dataclass(frozen=True)
class SweepRow:
    lam: float
    misfit: float
    penalty: float
    Q_bar: float
    relative_misfit: float


def lambda_sweep(problem: CoilProblem, lambdas, simple: bool = True) -> tuple[list[SweepRow], bool]:
    """Solve for each lambda (descending) and report whether the misfit is nonincreasing."""
    lambdas = list(lambdas)
    if not lambdas or any(not lam > 0 for lam in lambdas):
        raise ConfigError("lambdas must be a non-empty list of positive numbers")
    if any(b > a for a, b in zip(lambdas, lambdas[1:])):
        raise ConfigError("lambdas must be in descending order")
    rows = []
    for lam in lambdas:
        r = solve_current(problem, lam, simple)
        rows.append(SweepRow(lam, r.misfit, r.penalty, r.Q_bar, r.relative_misfit))
    mis = [r.misfit for r in rows]
    monotone = all(b <= a * (1 + 1e-12) + 1e-300 for a, b in zip(mis, mis[1:]))
    return rows, monotone


@dataclass(frozen=True)
class KernelReport:
    current: CurrentPotential
    sigma: np.ndarray
    ratio_min: float
    ratio_next: float
    gap: float


def kernel_current(problem: CoilProblem, min_gap: float = 10.0) -> KernelReport:
    """Smallest right-singular vector of the field map in L2(P) x L2(Sigma) norms."""
    Lg = linalg.cholesky(problem.gram, lower=True)
    sw = np.sqrt(problem.w3)
    At = linalg.solve_triangular(Lg, (problem.A * sw[:, None]).T, lower=True).T
    _, s, Vt = linalg.svd(At, full_matrices=False)
    u = Vt[-1]
    x = linalg.solve_triangular(Lg.T, u, lower=False)
    gap = s[-2] / s[-1] if s[-1] > 0 else np.inf
    if gap < min_gap:
        raise KernelResolutionError(f"smallest singular value not separated (gap {gap:.2f})")
    x = x / np.sqrt(problem.penalty(x))
    if problem.q @ x < 0:
        x = -x
    return KernelReport(problem.current(x), s, float(s[-1] / s[0]), float(s[-2] / s[0]), float(gap))


def simplify_current(problem: CoilProblem, j: CurrentPotential, j0: CurrentPotential,
                     tol: float = 1e-12) -> CurrentPotential:
    """Add the multiple of the kernel current that removes the average toroidal winding."""
    x, x0 = j.dofs, j0.dofs
    q = problem.q
    d = q @ x0
    gt_norm = problem.harmonic.gamma_t.norm()
    if abs(d) <= 1e-10 * np.sqrt(problem.penalty(x0)) * gt_norm:
        raise NumericsError("kernel current has no toroidal winding")
    qx = q @ x
    if abs(qx) <= tol * np.sqrt(max(problem.penalty(x), 0.0)) * gt_norm:
        return j
    return problem.current(x - qx / d * x0)


def problem_with_target(problem: CoilProblem, current: float) -> CoilProblem:
    t = problem.target
    nt = replace(t, B=target_wire_field(t.points, current))
    return CoilProblem(problem.basis, nt, problem.harmonic, problem.A, problem.gram, problem.q)
