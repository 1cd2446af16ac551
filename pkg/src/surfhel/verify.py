"""Invariant checks on a single surface, used by ``surfhel verify``."""

from __future__ import annotations

import numpy as np

from .calculus import band_limited, co_exact, harmonic_basis, weak_residuals
from .geometry import FourierTorus, build_grid
from .helicity import eigen_values, eigenfields, helicity, helicity_gamma_line, helicity_matrix


def _row(check: str, value: float, tol: float) -> dict:
    return {"check": check, "value": float(value), "tol": float(tol), "passed": bool(value <= tol)}


def run_checks(surface: FourierTorus, res: int = 64, seed: int = 0) -> list[dict]:
    grid = build_grid(surface, res)
    b = harmonic_basis(grid)
    rows = []

    res_w = max(max(weak_residuals(f)) for f in (b.gamma, b.gamma_tilde))
    rows.append(_row("harmonic basis is weakly divergence- and curl-free", res_w, 1e-8))
    per = b.periods
    dev = max(abs(per["gamma_t"]["sigma_t"] - 1), abs(per["gamma_t"]["sigma_p"]),
              abs(per["gamma_p"]["sigma_p"] - 1), abs(per["gamma_p"]["sigma_t"]))
    rows.append(_row("dual basis has identity period matrix", dev, 1e-10))

    M = helicity_matrix(b)
    rows.append(_row("M is symmetric", abs(M.M[0, 1] - M.M[1, 0]), 1e-8))
    rows.append(_row("det M = -1/4 (relative error)", abs(M.det + 0.25) / 0.25, 2e-2))
    rows.append(_row("2 H_c(gamma, gamma~) = 1", abs(2 * M.M[0, 1] - 1), 1e-2))
    rows.append(_row("|M22| vanishes", abs(M.M[1, 1]), 1e-2))
    h_line = helicity_gamma_line(b)
    scale = max(abs(h_line), np.linalg.norm(M.M, 2))
    rows.append(_row("trace M = H(gamma) from line integrals", abs(M.trace - h_line) / scale, 2e-2))

    ev = eigenfields(b, M.h_gamma)
    lp, lm = eigen_values(M.h_gamma)
    rq = helicity(ev.v_plus)
    rows.append(_row("Rayleigh quotient of v+ equals Lambda+", abs(rq - lp) / lp, 1e-2))
    rows.append(_row("Lambda+ Lambda- = 1/4", abs(lp * lm - 0.25) / 0.25, 1e-12))

    rng = np.random.default_rng(seed)
    v = co_exact(grid, band_limited(grid, rng))
    rows.append(_row("co-exact field has zero helicity (|H| / |v|^2)", abs(helicity(v)) / v.norm_sq(), 1e-2))

    g2 = build_grid(surface.scaled(2.0), res)
    b2 = harmonic_basis(g2)
    h2 = helicity_matrix(b2).h_gamma
    rows.append(_row("Lambda unchanged under scaling by 2", abs(eigen_values(h2)[0] - lp) / lp, 1e-10))
    return rows
