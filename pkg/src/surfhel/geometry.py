"""Double-Fourier toroidal surfaces, quadrature grids and normal offsets."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, GeometryError, OffsetError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class FourierTorus:
    """Stellarator-symmetric torus with R = sum R_mn cos(m t - n nfp p), Z = sum Z_mn sin(...).

    ``modes`` is a tuple of ``(m, n, R_mn, Z_mn)`` records.
    """

    modes: tuple[tuple[int, int, float, float], ...]
    nfp: int = 1

    def __post_init__(self):
        if len(self.modes) == 0:
            raise GeometryError("surface has no Fourier modes")
        if int(self.nfp) < 1:
            raise ConfigError(f"nfp must be >= 1, got {self.nfp}")
        clean = tuple((int(m), int(n), float(r), float(z)) for m, n, r, z in self.modes)
        object.__setattr__(self, "modes", clean)
        object.__setattr__(self, "nfp", int(self.nfp))

    @classmethod
    def standard(cls, major: float = 2.0, minor: float = 1.0) -> "FourierTorus":
        """Axisymmetric torus of major radius ``major`` and minor radius ``minor``."""
        return cls(((0, 0, major, 0.0), (1, 0, minor, minor)), nfp=1)

    @classmethod
    def rotating_ellipse(cls, nfp: int = 3, eps: float = 0.2) -> "FourierTorus":
        return cls(((0, 0, 2.0, 0.0), (1, 0, 1.0, 1.0), (1, 1, eps, eps)), nfp=nfp)

    @classmethod
    def from_dict(cls, data: dict) -> "FourierTorus":
        if not isinstance(data, dict):
            raise ConfigError("surface description must be a JSON object")
        unknown = set(data) - {"nfp", "modes"}
        if unknown:
            raise ConfigError(f"unknown surface keys: {sorted(unknown)}")
        try:
            modes = tuple((d["m"], d["n"], d["R"], d["Z"]) for d in data["modes"])
            nfp = data.get("nfp", 1)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed surface description: {exc}") from exc
        return cls(modes, nfp=nfp)

    @classmethod
    def load(cls, path: str | Path) -> "FourierTorus":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"cannot parse surface file {path}: {exc}") from exc
        except OSError as exc:
            raise ConfigError(f"cannot read surface file {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "nfp": self.nfp,
            "modes": [{"m": m, "n": n, "R": r, "Z": z} for m, n, r, z in self.modes],
        }

    def scaled(self, lam: float) -> "FourierTorus":
        """The surface lam * Sigma."""
        return FourierTorus(tuple((m, n, lam * r, lam * z) for m, n, r, z in self.modes), self.nfp)

    @property
    def is_axisymmetric(self) -> bool:
        return all(n == 0 or (r == 0.0 and z == 0.0) for _, n, r, z in self.modes)

    def cylindrical(self, theta, phi):
        """R, Z and their first and second angle derivatives, keyed by suffix."""
        theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
        out = {k: np.zeros(theta.shape) for k in
               ("R", "R_t", "R_p", "R_tt", "R_tp", "R_pp", "Z", "Z_t", "Z_p", "Z_tt", "Z_tp", "Z_pp")}
        for m, n, rc, zs in self.modes:
            k = n * self.nfp
            ang = m * theta - k * phi
            c, s = np.cos(ang), np.sin(ang)
            if rc != 0.0:
                out["R"] += rc * c
                out["R_t"] -= m * rc * s
                out["R_p"] += k * rc * s
                out["R_tt"] -= m * m * rc * c
                out["R_tp"] += m * k * rc * c
                out["R_pp"] -= k * k * rc * c
            if zs != 0.0:
                out["Z"] += zs * s
                out["Z_t"] += m * zs * c
                out["Z_p"] -= k * zs * c
                out["Z_tt"] -= m * m * zs * s
                out["Z_tp"] += m * k * zs * s
                out["Z_pp"] -= k * k * zs * s
        return out

    def derivatives(self, theta, phi):
        """Position and its first and second derivatives in Cartesian form.

        Returns a dict with arrays of shape ``theta.shape + (3,)`` under the keys
        ``x, x_t, x_p, x_tt, x_tp, x_pp``.
        """
        cy = self.cylindrical(theta, phi)
        phi = np.broadcast_to(np.asarray(phi, float), cy["R"].shape)
        c, s = np.cos(phi), np.sin(phi)
        R, Rt, Rp = cy["R"], cy["R_t"], cy["R_p"]
        Rtt, Rtp, Rpp = cy["R_tt"], cy["R_tp"], cy["R_pp"]
        st = np.stack
        return {
            "x": st([R * c, R * s, cy["Z"]], -1),
            "x_t": st([Rt * c, Rt * s, cy["Z_t"]], -1),
            "x_p": st([Rp * c - R * s, Rp * s + R * c, cy["Z_p"]], -1),
            "x_tt": st([Rtt * c, Rtt * s, cy["Z_tt"]], -1),
            "x_tp": st([Rtp * c - Rt * s, Rtp * s + Rt * c, cy["Z_tp"]], -1),
            "x_pp": st([Rpp * c - 2 * Rp * s - R * c, Rpp * s + 2 * Rp * c - R * s, cy["Z_pp"]], -1),
        }

    @cached_property
    def orientation(self) -> int:
        """+1 if e_theta x e_phi points out of the enclosed solid, else -1.

        Decided by the sign of the enclosed volume (1/3) * integral of x . (e_t x e_p).
        """
        n = 32
        t = np.arange(n) * TWO_PI / n
        T, P = np.meshgrid(t, t, indexing="ij")
        d = self.derivatives(T, P)
        vol = np.sum(np.einsum("...i,...i", d["x"], np.cross(d["x_t"], d["x_p"]))) / 3.0
        vol *= (TWO_PI / n) ** 2
        if not np.isfinite(vol) or abs(vol) < 1e-300:
            raise GeometryError("surface encloses no volume")
        return 1 if vol > 0 else -1


@dataclass(frozen=True)
class NodeFrame:
    """Position, tangent vectors, unit outward normal and area density at one point."""

    x: np.ndarray
    e_theta: np.ndarray
    e_phi: np.ndarray
    normal: np.ndarray
    jac: float


def frame(surface: FourierTorus, theta, phi):
    """Vectorised frame: x, e_t, e_p, outward N, J plus second derivatives."""
    d = surface.derivatives(theta, phi)
    n_raw = np.cross(d["x_t"], d["x_p"])
    jac = np.linalg.norm(n_raw, axis=-1)
    scale = max(np.max(np.abs(d["x"])), 1e-300) ** 2
    if np.any(~np.isfinite(jac)) or np.any(jac <= 1e-13 * scale):
        raise GeometryError("degenerate surface Jacobian (J <= 0) encountered")
    ph = np.asarray(phi, float)
    R = d["x"][..., 0] * np.cos(ph) + d["x"][..., 1] * np.sin(ph)
    if np.any(R <= 0.0):
        raise GeometryError("surface crosses the z-axis (R <= 0)")
    d["normal"] = surface.orientation * n_raw / jac[..., None]
    d["jac"] = jac
    return d


def eval_point(surface: FourierTorus, theta: float, phi: float) -> NodeFrame:
    d = frame(surface, np.asarray(float(theta)), np.asarray(float(phi)))
    return NodeFrame(d["x"], d["x_t"], d["x_p"], d["normal"], float(d["jac"]))


@dataclass(frozen=True, eq=False)
class SurfaceGrid:
    """Uniform tensor grid on a FourierTorus with frames and quadrature weights.

    Arrays are indexed ``[i, j]`` with ``theta[i] = 2 pi i / n_theta`` and
    ``phi[j] = 2 pi j / n_phi`` covering the full torus.
    """

    surface: FourierTorus
    n_theta: int
    n_phi: int
    shift: tuple[float, float] = (0.0, 0.0)
    _d: dict = field(default=None, repr=False)

    def __post_init__(self):
        if self.n_theta < 4 or self.n_phi < 4:
            raise ConfigError("grid needs at least 4 nodes per direction")
        st, sp = self.shift
        t = (np.arange(self.n_theta) + st) * TWO_PI / self.n_theta
        p = (np.arange(self.n_phi) + sp) * TWO_PI / self.n_phi
        T, P = np.meshgrid(t, p, indexing="ij")
        d = frame(self.surface, T, P)
        d.update(theta=t, phi=p, T=T, P=P)
        object.__setattr__(self, "_d", d)

    def __getattr__(self, name):
        d = object.__getattribute__(self, "_d")
        if d is not None and name in d:
            return d[name]
        raise AttributeError(name)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_theta, self.n_phi)

    @property
    def size(self) -> int:
        return self.n_theta * self.n_phi

    @property
    def dtheta(self) -> float:
        return TWO_PI / self.n_theta

    @property
    def dphi(self) -> float:
        return TWO_PI / self.n_phi

    @property
    def e_theta(self):
        return self._d["x_t"]

    @property
    def e_phi(self):
        return self._d["x_p"]

    @property
    def orientation(self) -> int:
        return self.surface.orientation

    @cached_property
    def weights(self) -> np.ndarray:
        return self.jac * self.dtheta * self.dphi

    @cached_property
    def area(self) -> float:
        return float(np.sum(self.weights))

    @cached_property
    def metric(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Covariant metric components (g_tt, g_tp, g_pp)."""
        et, ep = self.e_theta, self.e_phi
        return (np.einsum("...i,...i", et, et), np.einsum("...i,...i", et, ep),
                np.einsum("...i,...i", ep, ep))

    @cached_property
    def inverse_metric(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        gtt, gtp, gpp = self.metric
        det = gtt * gpp - gtp**2
        return gpp / det, -gtp / det, gtt / det

    @cached_property
    def second_form(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Second fundamental form coefficients x_ij . N."""
        N = self.normal
        dot = lambda a: np.einsum("...i,...i", a, N)  # noqa: E731
        return dot(self.x_tt), dot(self.x_tp), dot(self.x_pp)

    @cached_property
    def shape_operator(self) -> np.ndarray:
        """Mixed shape operator S = g^-1 L as (..., 2, 2); dN/du^i = -S^k_i e_k."""
        itt, itp, ipp = self.inverse_metric
        L, M, Nn = self.second_form
        S = np.empty(self.shape + (2, 2))
        S[..., 0, 0] = itt * L + itp * M
        S[..., 0, 1] = itt * M + itp * Nn
        S[..., 1, 0] = itp * L + ipp * M
        S[..., 1, 1] = itp * M + ipp * Nn
        return S

    @cached_property
    def normal_derivatives(self) -> tuple[np.ndarray, np.ndarray]:
        S = self.shape_operator
        et, ep = self.e_theta, self.e_phi
        dN_t = -(S[..., 0, 0, None] * et + S[..., 1, 0, None] * ep)
        dN_p = -(S[..., 0, 1, None] * et + S[..., 1, 1, None] * ep)
        return dN_t, dN_p

    @cached_property
    def principal_curvatures(self) -> np.ndarray:
        return np.sort(np.linalg.eigvals(self.shape_operator).real, axis=-1)

    @cached_property
    def min_spacing(self) -> float:
        """Smallest distance between grid neighbours."""
        x = self.x
        dt = np.linalg.norm(np.roll(x, -1, axis=0) - x, axis=-1)
        dp = np.linalg.norm(np.roll(x, -1, axis=1) - x, axis=-1)
        return float(min(dt.min(), dp.min()))

    @cached_property
    def max_spacing(self) -> float:
        x = self.x
        dt = np.linalg.norm(np.roll(x, -1, axis=0) - x, axis=-1)
        dp = np.linalg.norm(np.roll(x, -1, axis=1) - x, axis=-1)
        return float(max(dt.max(), dp.max()))

    def node(self, i: int, j: int) -> NodeFrame:
        return NodeFrame(self.x[i, j], self.e_theta[i, j], self.e_phi[i, j],
                         self.normal[i, j], float(self.jac[i, j]))

    def shifted(self, st: float, sp: float, refine: int = 1) -> "SurfaceGrid":
        """A grid on the same surface refined by ``refine`` and offset by (st, sp) cells."""
        return SurfaceGrid(self.surface, self.n_theta * refine, self.n_phi * refine, (st, sp))


def build_grid(surface: FourierTorus, n_theta: int, n_phi: int | None = None) -> SurfaceGrid:
    return SurfaceGrid(surface, int(n_theta), int(n_theta if n_phi is None else n_phi))


@dataclass(frozen=True)
class GeometryConstants:
    c: float
    delta: float
    tau_max: float
    focal: float


def _pair_blocks(x, chunk=512):
    n = len(x)
    for a in range(0, n, chunk):
        yield a, x[a:a + chunk]


def estimate_constants(grid: SurfaceGrid, safety: float = 1.1) -> GeometryConstants:
    """Flatness constant c, normal-alignment radius delta and an admissible offset."""
    x = grid.x.reshape(-1, 3)
    N = grid.normal.reshape(-1, 3)
    cmax = 0.0
    delta = np.inf
    for a, xa in _pair_blocks(x):
        Na = N[a:a + len(xa)]
        d = xa[:, None, :] - x[None, :, :]
        r2 = np.einsum("abi,abi->ab", d, d)
        nd = np.abs(np.einsum("ai,abi->ab", Na, d))
        idx = np.arange(len(xa))
        r2[idx, a + idx] = np.inf
        cmax = max(cmax, float(np.max(nd / r2)))
        bad = (Na @ N.T) < 0.5
        if np.any(bad):
            delta = min(delta, float(np.sqrt(np.min(r2[bad]))))
    if not np.isfinite(delta):
        delta = float(np.max(np.linalg.norm(x - x.mean(0), axis=1)) * 2)
    c = safety * cmax
    kappa = float(np.max(np.abs(grid.principal_curvatures)))
    focal = 1.0 / kappa if kappa > 0 else np.inf
    tau_max = min(delta / 3.0, 1.0 / (6.0 * c) if c > 0 else np.inf, focal)
    return GeometryConstants(c=c, delta=delta, tau_max=float(tau_max), focal=focal)


@dataclass(frozen=True, eq=False)
class OffsetSurface:
    """Nodes x + tau N(x) of a base grid with the frame of the offset map."""

    base: SurfaceGrid
    tau: float
    x: np.ndarray
    e_theta: np.ndarray
    e_phi: np.ndarray
    normal: np.ndarray
    jac: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return self.jac * self.base.dtheta * self.base.dphi

    @property
    def area(self) -> float:
        return float(np.sum(self.weights))


def offset_map(surface: FourierTorus, theta, phi, tau: float) -> np.ndarray:
    """Psi_tau at arbitrary chart points."""
    d = frame(surface, theta, phi)
    return d["x"] + tau * d["normal"]


def offset_surface(grid: SurfaceGrid, tau: float, tau_max: float | None = None) -> OffsetSurface:
    tau = float(tau)
    if tau_max is None:
        tau_max = estimate_constants(grid).tau_max
    if abs(tau) > tau_max:
        raise OffsetError(f"|tau|={abs(tau):.3g} exceeds tau_max={tau_max:.3g}")
    dN_t, dN_p = grid.normal_derivatives
    x = grid.x + tau * grid.normal
    et = grid.e_theta + tau * dN_t
    ep = grid.e_phi + tau * dN_p
    jac = np.linalg.norm(np.cross(et, ep), axis=-1)
    if tau != 0.0:
        pts = x.reshape(-1, 3)
        if cKDTree(pts).query_pairs(0.5 * grid.min_spacing):
            raise OffsetError("offset map is not injective on the grid")
    return OffsetSurface(grid, tau, x, et, ep, grid.normal, jac)
