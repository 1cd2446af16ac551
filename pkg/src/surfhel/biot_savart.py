"""Surface Biot-Savart operator and off-surface field evaluation of surface currents."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from . import spectral
from .calculus import TangentField
from .errors import ProximityError
from .geometry import SurfaceGrid

FOUR_PI = 4.0 * np.pi


def _source_data(fields: Sequence[TangentField], refine: int, shift) -> tuple[np.ndarray, np.ndarray]:
    """Source positions and weighted current vectors on a refined, shifted grid."""
    grid = fields[0].grid
    src = grid.shifted(shift[0], shift[1], refine)
    mt, mp = src.shape
    vecs = []
    for f in fields:
        vt = spectral.resample(f.vt, mt, mp, shift)
        vp = spectral.resample(f.vp, mt, mp, shift)
        v = vt[..., None] * src.e_theta + vp[..., None] * src.e_phi
        vecs.append((v * src.weights[..., None]).reshape(-1, 3))
    return src.x.reshape(-1, 3), np.stack(vecs, axis=-1)


def _biot_savart_sum(targets: np.ndarray, y: np.ndarray, a: np.ndarray, chunk: int = 256) -> np.ndarray:
    """(1/4pi) sum_s a_s x (x_t - y_s) / |x_t - y_s|^3 for every target and field.

    ``a`` has shape (n_sources, 3, n_fields); returns (n_targets, 3, n_fields).
    Source order is fixed so the result does not depend on chunking.
    """
    nt = len(targets)
    out = np.empty((nt, 3, a.shape[-1]))
    ax, ay, az = (np.ascontiguousarray(a[:, i]) for i in range(3))
    for s in range(0, nt, chunk):
        xt = targets[s:s + chunk]
        dx = xt[:, 0, None] - y[None, :, 0]
        dy = xt[:, 1, None] - y[None, :, 1]
        dz = xt[:, 2, None] - y[None, :, 2]
        r2 = dx * dx + dy * dy + dz * dz
        inv3 = 1.0 / (r2 * np.sqrt(r2))
        dx *= inv3
        dy *= inv3
        dz *= inv3
        out[s:s + chunk, 0] = dz @ ay - dy @ az
        out[s:s + chunk, 1] = dx @ az - dz @ ax
        out[s:s + chunk, 2] = dy @ ax - dx @ ay
    return out / FOUR_PI


def bs_surface_vectors(fields: Sequence[TangentField], refine: int = 1, shift=(0.5, 0.5),
                       richardson: bool = False) -> np.ndarray:
    """Unprojected surface Biot-Savart vectors at the primal nodes, shape (n_fields, nt, np, 3).

    Targets sit on the primal grid and sources on a grid refined by ``refine``
    and shifted by ``shift`` cells, so no source coincides with a target. With
    ``richardson`` the first-order staggering error is cancelled by combining the
    sums at ``refine`` and ``2 * refine``.
    """
    grid = fields[0].grid
    targets = grid.x.reshape(-1, 3)
    y, a = _source_data(fields, refine, shift)
    B = _biot_savart_sum(targets, y, a)
    if richardson:
        y2, a2 = _source_data(fields, 2 * refine, shift)
        B = 2.0 * _biot_savart_sum(targets, y2, a2) - B
    return np.moveaxis(B, -1, 0).reshape((len(fields),) + grid.shape + (3,))


def bs_surface_many(fields: Sequence[TangentField], **kw) -> list[TangentField]:
    B = bs_surface_vectors(fields, **kw)
    grid = fields[0].grid
    return [TangentField.from_vectors(grid, b) for b in B]


def bs_surface(v: TangentField, **kw) -> TangentField:
    """Tangential projection of the Biot-Savart field of v evaluated on its own surface."""
    return bs_surface_many([v], **kw)[0]


def bs_at_points(j: TangentField, points: np.ndarray, min_factor: float = 2.0) -> np.ndarray:
    """Biot-Savart field of a surface current at points off the surface.

    Uses the plain grid quadrature, which is spectrally accurate once the
    points are a few grid spacings away from the surface.
    """
    grid = j.grid
    pts = np.asarray(points, float)
    shp = pts.shape[:-1]
    pts = pts.reshape(-1, 3)
    check_clearance(grid, pts, min_factor)
    y = grid.x.reshape(-1, 3)
    a = (j.vectors * grid.weights[..., None]).reshape(-1, 3)[..., None]
    return _biot_savart_sum(pts, y, a)[..., 0].reshape(shp + (3,))


def check_clearance(grid: SurfaceGrid, pts: np.ndarray, min_factor: float = 2.0) -> float:
    """Raise if any point is within ``min_factor`` grid spacings of a surface node."""
    from scipy.spatial import cKDTree

    dist, _ = cKDTree(grid.x.reshape(-1, 3)).query(pts.reshape(-1, 3))
    dmin = float(dist.min()) if len(dist) else np.inf
    if dmin <= min_factor * grid.max_spacing:
        raise ProximityError(f"evaluation point {dmin:.3g} from the surface, "
                             f"needs > {min_factor} x spacing {grid.max_spacing:.3g}")
    return dmin
