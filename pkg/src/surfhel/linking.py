"""Gauss linking numbers, closing of field-line segments and helicity as average linking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.spatial import cKDTree

from . import spectral
from .calculus import TangentField
from .errors import ConfigError, OffsetError, ProximityError, SamplingError, TracingError
from .geometry import TWO_PI, SurfaceGrid, estimate_constants, frame, offset_map
from .windings import DROP, FieldLine, trace_field_lines


@dataclass(frozen=True, eq=False)
class ClosedCurve:
    """Polygon through ``points``; the closing edge runs from the last point to the first."""

    points: np.ndarray
    added_length: float = 0.0

    @property
    def edges(self) -> np.ndarray:
        return np.roll(self.points, -1, axis=0) - self.points

    @property
    def length(self) -> float:
        return float(np.sum(np.linalg.norm(self.edges, axis=1)))

    @property
    def diameter(self) -> float:
        p = self.points
        return float(np.max(np.ptp(p, axis=0)))

    def reversed(self) -> "ClosedCurve":
        return ClosedCurve(self.points[::-1].copy(), self.added_length)


def circle(center, radius: float, normal, n: int = 256) -> ClosedCurve:
    """Counter-clockwise circle about ``normal``."""
    normal = np.asarray(normal, float)
    normal = normal / np.linalg.norm(normal)
    a = np.cross(normal, [1.0, 0.0, 0.0])
    if np.linalg.norm(a) < 1e-8:
        a = np.cross(normal, [0.0, 1.0, 0.0])
    a /= np.linalg.norm(a)
    b = np.cross(normal, a)
    t = np.arange(n) * TWO_PI / n
    pts = np.asarray(center, float) + radius * (np.cos(t)[:, None] * a + np.sin(t)[:, None] * b)
    return ClosedCurve(pts)


def min_distance(a: ClosedCurve, b: ClosedCurve) -> float:
    """Smallest distance between the two polygons, computed segment to segment near the closest vertices."""
    tree = cKDTree(b.points)
    d, _ = tree.query(a.points)
    seg = max(np.linalg.norm(a.edges, axis=1).max(), np.linalg.norm(b.edges, axis=1).max())
    cand_a = np.nonzero(d <= d.min() + 2 * seg)[0]
    pairs = []
    nb = len(b.points)
    for i, js in zip(cand_a, tree.query_ball_point(a.points[cand_a], d.min() + 2 * seg)):
        for j in js:
            for ii in (i, i - 1):
                pairs.append((ii % len(a.points), j))
                pairs.append((ii % len(a.points), (j - 1) % nb))
    if not pairs:
        return float(d.min())
    ia, jb = np.array(pairs).T
    return float(min(d.min(), _segment_distances(a.points[ia], a.edges[ia], b.points[jb], b.edges[jb]).min()))


def _segment_distances(p, u, q, v) -> np.ndarray:
    """Vectorised distance between segments p + s u and q + t v, s, t in [0, 1]."""
    w0 = p - q
    A = np.sum(u * u, -1)
    B = np.sum(u * v, -1)
    C = np.sum(v * v, -1)
    D = np.sum(u * w0, -1)
    E = np.sum(v * w0, -1)
    den = A * C - B * B
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(den > 1e-300, np.clip((B * E - C * D) / den, 0, 1), 0.0)
        t = np.where(C > 0, np.clip((B * s + E) / C, 0, 1), 0.0)
        s = np.where(A > 0, np.clip((B * t - D) / A, 0, 1), 0.0)
    return np.linalg.norm(w0 + s[:, None] * u - t[:, None] * v, axis=-1)


def _triangle_solid_angle(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Signed solid angle subtended by the triangle with vertices a, b, c seen from the origin."""
    na, nb, nc = (np.linalg.norm(x, axis=-1) for x in (a, b, c))
    num = np.sum(a * np.cross(b, c), axis=-1)
    den = (na * nb * nc + np.sum(a * b, axis=-1) * nc + np.sum(a * c, axis=-1) * nb
           + np.sum(b * c, axis=-1) * na)
    return 2.0 * np.arctan2(num, den)


def _polygon_linking(A: np.ndarray, B: np.ndarray, chunk: int = 128) -> float:
    """Exact Gauss integral of two closed polygons via signed solid angles of segment pairs."""
    A1 = np.roll(A, -1, axis=0)
    B1 = np.roll(B, -1, axis=0)
    total = 0.0
    for s in range(0, len(A), chunk):
        p1 = A[s:s + chunk, None, :]
        p2 = A1[s:s + chunk, None, :]
        r13, r14 = B[None] - p1, B1[None] - p1
        r23, r24 = B[None] - p2, B1[None] - p2
        # the quadrilateral r13, r14, r24, r23 split into two triangles
        omega = _triangle_solid_angle(r13, r14, r24) + _triangle_solid_angle(r13, r24, r23)
        total -= float(np.sum(omega))
    return total / (4.0 * np.pi)


def _quadrature_linking(A: np.ndarray, B: np.ndarray) -> float:
    """Midpoint-rule Gauss integral, for smooth uniformly sampled curves."""
    da = np.roll(A, -1, axis=0) - A
    db = np.roll(B, -1, axis=0) - B
    ma = A + 0.5 * da
    mb = B + 0.5 * db
    d = ma[:, None, :] - mb[None, :, :]
    r3 = np.linalg.norm(d, axis=-1) ** 3
    cr = np.cross(da[:, None, :], db[None, :, :])
    return float(np.sum(np.sum(cr * d, axis=-1) / r3) / (4.0 * np.pi))


def gauss_linking(a: ClosedCurve, b: ClosedCurve, method: str = "polygon", rel_tol: float = 1e-6) -> float:
    """Linking number (1/4pi) double integral of (a' x b') . (a - b) / |a - b|^3.

    ``polygon`` integrates the polygons exactly; ``quadrature`` uses the midpoint rule.
    """
    diam = max(a.diameter, b.diameter)
    if min_distance(a, b) <= rel_tol * diam:
        raise ProximityError("curves (nearly) intersect")
    if method == "polygon":
        return _polygon_linking(a.points, b.points)
    if method == "quadrature":
        return _quadrature_linking(a.points, b.points)
    raise ConfigError(f"unknown linking method {method!r}")


# --- closing constructions ---------------------------------------------------------------

def _wrap(x):
    return (x + np.pi) % TWO_PI - np.pi


def close_segment(grid: SurfaceGrid, line: FieldLine, tau: float, side: int = 1,
                  n_connector: int = 64, tau_max: float | None = None) -> ClosedCurve:
    """Close a field-line segment through the offset surface on one side.

    The closure runs along the normal from the end point to the offset surface,
    along the image of the straight chart segment back to the offset of the start
    point, and along the normal back to the start.
    """
    if side not in (1, -1):
        raise ConfigError("side must be +1 or -1")
    if tau_max is None:
        tau_max = estimate_constants(grid).tau_max
    if not 0 < tau <= tau_max:
        raise OffsetError(f"tau={tau:.3g} outside (0, tau_max={tau_max:.3g}]")
    surf = grid.surface
    seg = frame(surf, line.theta, line.phi)["x"]
    th0, ph0 = line.theta[0], line.phi[0]
    th1, ph1 = line.theta[-1], line.phi[-1]
    s = np.linspace(0.0, 1.0, n_connector)
    cth = th1 + s * _wrap(th0 - th1)
    cph = ph1 + s * _wrap(ph0 - ph1)
    conn = offset_map(surf, cth, cph, side * tau)
    pts = np.concatenate([seg, conn])
    added = 2 * tau + float(np.sum(np.linalg.norm(np.diff(conn, axis=0), axis=1)))
    return ClosedCurve(pts, added)


def area_samples(grid: SurfaceGrid, rng: np.random.Generator, n: int) -> np.ndarray:
    """Chart points distributed uniformly with respect to surface area (rejection sampling)."""
    jmax = grid.jac.max() * 1.05
    out = []
    while len(out) < n:
        th, ph = rng.uniform(0, TWO_PI, size=2)
        if rng.uniform(0, jmax) < float(frame(grid.surface, th, ph)["jac"]):
            out.append((th, ph))
    return np.array(out)


@dataclass(frozen=True)
class PeriodicOrbits:
    period: np.ndarray
    windings: np.ndarray
    theta: np.ndarray
    phi: np.ndarray


def periodic_orbits(v: TangentField, starts: np.ndarray, t_cap: float, n_samples: int = 256,
                    close_tol: float = 1e-7) -> PeriodicOrbits:
    """First-return periods of closed field lines and uniformly time-sampled orbits.

    A return is a crossing of the chart section through the start point,
    transverse to the flow, at which the start point is recovered modulo 2 pi.
    """
    starts = np.atleast_2d(starts)
    k = len(starts)
    interp = spectral.TrigInterpolant(np.stack([v.vt, v.vp]), drop=DROP)
    v0 = interp(starts[:, 0], starts[:, 1]).T
    v0 /= np.linalg.norm(v0, axis=1, keepdims=True)

    def rhs(_t, y):
        return interp(y[:k], y[k:]).reshape(-1)

    sol = solve_ivp(rhs, (0.0, t_cap), np.concatenate([starts[:, 0], starts[:, 1]]), method="DOP853",
                    rtol=1e-10, atol=1e-12, dense_output=True)
    if not sol.success:
        raise TracingError(sol.message)
    nt = max(4096, 16 * len(sol.t))
    tg = np.linspace(0.0, t_cap, nt)
    Y = sol.sol(tg)
    dth = Y[:k] - starts[:, :1]
    dph = Y[k:] - starts[:, 1:]
    g = np.sin(dth) * v0[:, :1] + np.sin(dph) * v0[:, 1:]
    dist = np.hypot(_wrap(dth), _wrap(dph))
    periods = np.full(k, np.nan)
    for i in range(k):
        cross = np.nonzero((g[i, :-1] < 0) & (g[i, 1:] >= 0) & (dist[i, 1:] < 0.5))[0]
        for c in cross:
            if tg[c] <= 0.0:
                continue
            a, b = tg[c], tg[c + 1]
            for _ in range(60):
                m = 0.5 * (a + b)
                ym = sol.sol(m)
                gm = np.sin(ym[i] - starts[i, 0]) * v0[i, 0] + np.sin(ym[k + i] - starts[i, 1]) * v0[i, 1]
                a, b = (m, b) if gm < 0 else (a, m)
            periods[i] = 0.5 * (a + b)
            break
    if np.any(np.isnan(periods)):
        raise SamplingError(f"{int(np.sum(np.isnan(periods)))} field lines did not close before t={t_cap:g}")
    # retrace in normalised time so every orbit is sampled uniformly over one period

    def rhs_n(_s, y):
        vals = interp(y[:k], y[k:])
        return (vals * periods).reshape(-1)

    s_eval = np.arange(n_samples + 1) / n_samples
    sol2 = solve_ivp(rhs_n, (0.0, 1.0), np.concatenate([starts[:, 0], starts[:, 1]]), method="DOP853",
                     rtol=1e-11, atol=1e-13, t_eval=s_eval)
    th = sol2.y[:k]
    ph = sol2.y[k:]
    wt = (th[:, -1] - th[:, 0]) / TWO_PI
    wp = (ph[:, -1] - ph[:, 0]) / TWO_PI
    gap = np.hypot(wt - np.round(wt), wp - np.round(wp)) * TWO_PI
    if np.any(gap > close_tol * 1e3):
        raise SamplingError(f"field lines do not close (orbit closure gap {gap.max():.2e}); "
                            "use offset mode for fields without closed lines")
    return PeriodicOrbits(periods, np.stack([np.round(wt), np.round(wp)], 1).astype(int), th[:, :-1], ph[:, :-1])


@dataclass(frozen=True)
class LinkingEstimate:
    estimate: float
    stderr: float
    n_pairs: int
    rejected: int
    mode: str
    samples: np.ndarray

    def as_dict(self) -> dict:
        return {"estimate": self.estimate, "stderr": self.stderr, "n_pairs": self.n_pairs,
                "rejected": self.rejected, "mode": self.mode}


def _default_t_cap(v: TangentField) -> float:
    g = v.grid
    circ_t = np.sum(np.linalg.norm(np.diff(g.x[:, 0], axis=0, append=g.x[:1, 0]), axis=1))
    circ_p = np.sum(np.linalg.norm(np.diff(g.x[0], axis=0, append=g.x[0, :1]), axis=1))
    speed = np.sqrt(np.sum(g.weights * v.dot(v)) / g.area)
    return 20.0 * max(circ_t, circ_p) / speed


def helicity_via_linking(v: TangentField, n_pairs: int, T: float | None = None, mode: str = "periodic",
                         tau: float | None = None, seed: int = 0, samples_per_period: int = 256,
                         t_cap: float | None = None, max_reject: float = 0.05,
                         near_factor: float = 4.0) -> LinkingEstimate:
    """Monte-Carlo average of lk / (T S) over area-uniform start pairs, scaled by |Sigma|^2.

    ``periodic`` closes lines by following the flow for whole periods; with
    ``T=None`` the limit T, S -> infinity is taken, each pair contributing
    lk / (period_x period_y). ``offset`` traces both lines for T and closes them
    through the offset surfaces at +tau and -tau.
    """
    grid = v.grid
    if n_pairs < 1:
        raise ConfigError("n_pairs must be positive")
    area = grid.area
    if v.norm() == 0.0:
        return LinkingEstimate(0.0, 0.0, n_pairs, 0, mode, np.zeros(n_pairs))
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_pairs)]
    if mode == "periodic":
        return _linking_periodic(v, streams, T, samples_per_period, t_cap, max_reject, near_factor, area)
    if mode == "offset":
        if T is None or T <= 0:
            raise ConfigError("offset mode needs a positive horizon T")
        return _linking_offset(v, streams, T, tau, max_reject, near_factor, area)
    raise ConfigError(f"unknown mode {mode!r}")


def _too_close(a: ClosedCurve, b: ClosedCurve, near_factor: float, kappa: float) -> bool:
    """True when the curves approach closer than a multiple of the chord sagitta."""
    seg = max(np.linalg.norm(a.edges, axis=1).max(), np.linalg.norm(b.edges, axis=1).max())
    return min_distance(a, b) < near_factor * max(seg * seg * kappa / 8.0, 1e-9 * a.diameter)


def _linking_periodic(v, streams, T, n_samples, t_cap, max_reject, near_factor, area):
    grid = v.grid
    n_pairs = len(streams)
    t_cap = t_cap or _default_t_cap(v)
    kappa = float(np.abs(grid.principal_curvatures).max())
    starts = np.concatenate([area_samples(grid, r, 2) for r in streams])
    parts = [periodic_orbits(v, starts[s:s + 128], t_cap, n_samples) for s in range(0, len(starts), 128)]
    period = np.concatenate([o.period for o in parts])
    pts = np.concatenate([frame(grid.surface, o.theta, o.phi)["x"] for o in parts])
    vals = np.empty(n_pairs)
    rejected = 0
    for i, rng in enumerate(streams):
        a, b = 2 * i, 2 * i + 1
        ca, cb = ClosedCurve(pts[a]), ClosedCurve(pts[b])
        tries = 0
        while _too_close(ca, cb, near_factor, kappa):
            rejected += 1
            tries += 1
            if tries > 20:
                raise SamplingError("could not draw a disjoint pair")
            new = area_samples(grid, rng, 1)
            o = periodic_orbits(v, new, t_cap, n_samples)
            period[b] = o.period[0]
            cb = ClosedCurve(frame(grid.surface, o.theta, o.phi)["x"][0])
        lk = _polygon_linking(ca.points, cb.points)
        if T is None:
            vals[i] = lk / (period[a] * period[b])
        else:
            ka, kb = np.ceil(T / period[a]), np.ceil(T / period[b])
            vals[i] = ka * kb * lk / (T * T)
    return _finish(vals, rejected, max_reject, "periodic", area)


def _linking_offset(v, streams, T, tau, max_reject, near_factor, area):
    grid = v.grid
    n_pairs = len(streams)
    tmax = estimate_constants(grid).tau_max
    kappa = float(np.abs(grid.principal_curvatures).max())
    tau = 0.5 * tmax if tau is None else float(tau)
    speed = np.sqrt(np.sum(grid.weights * v.dot(v)) / area)
    n_samples = int(max(256, 40 * T * speed / np.sqrt(area) * 4))
    starts = np.concatenate([area_samples(grid, r, 2) for r in streams])
    t, th, ph, _, _ = trace_field_lines(v, starts, T, n_samples)
    vals = np.empty(n_pairs)
    rejected = 0

    def closed(j, side, th_j, ph_j):
        line = FieldLine((th_j[0], ph_j[0]), t, th_j, ph_j, 0)
        return close_segment(grid, line, tau, side, tau_max=tmax)

    for i, rng in enumerate(streams):
        ca = closed(2 * i, 1, th[2 * i], ph[2 * i])
        cb = closed(2 * i + 1, -1, th[2 * i + 1], ph[2 * i + 1])
        tries = 0
        while _too_close(ca, cb, near_factor, kappa):
            rejected += 1
            tries += 1
            if tries > 20:
                raise SamplingError("could not draw a disjoint pair")
            new = area_samples(grid, rng, 1)
            _, th2, ph2, _, _ = trace_field_lines(v, new, T, n_samples)
            cb = closed(0, -1, th2[0], ph2[0])
        vals[i] = _polygon_linking(ca.points, cb.points) / (T * T)
    return _finish(vals, rejected, max_reject, "offset", area)


def _finish(vals, rejected, max_reject, mode, area):
    n = len(vals)
    if rejected > max_reject * n:
        raise SamplingError(f"{rejected} of {n} pairs rejected as near-intersecting")
    est = float(area**2 * np.mean(vals))
    err = float(area**2 * np.std(vals, ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
    return LinkingEstimate(est, err, n, rejected, mode, vals * area**2)
