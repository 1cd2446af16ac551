"""Fourier differentiation, resampling and point evaluation on periodic 2-D grids."""

from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi


def wavenumbers(n: int, drop_nyquist: bool = True) -> np.ndarray:
    k = np.fft.fftfreq(n, 1.0 / n)
    if drop_nyquist and n % 2 == 0:
        k[n // 2] = 0.0
    return k


def derivative(f: np.ndarray, axis: int) -> np.ndarray:
    """Spectral derivative along a periodic axis of length 2 pi (Nyquist mode dropped)."""
    n = f.shape[axis]
    shape = [1] * f.ndim
    shape[axis] = n
    ik = 1j * wavenumbers(n).reshape(shape)
    return np.fft.ifft(ik * np.fft.fft(f, axis=axis), axis=axis).real


def d_theta(f):
    return derivative(f, 0)


def d_phi(f):
    return derivative(f, 1)


def remove_nyquist(f: np.ndarray) -> np.ndarray:
    F = np.fft.fft2(f)
    for axis in (0, 1):
        n = f.shape[axis]
        if n % 2 == 0:
            idx = [slice(None)] * 2
            idx[axis] = n // 2
            F[tuple(idx)] = 0.0
    return np.fft.ifft2(F).real


def _resample_axis(f: np.ndarray, axis: int, m: int, shift: float) -> np.ndarray:
    """Trigonometric interpolant along ``axis`` evaluated at (a + shift) * 2 pi / m."""
    n = f.shape[axis]
    F = np.fft.fft(f, axis=axis) / n
    F = np.moveaxis(F, axis, 0)
    k = np.fft.fftfreq(n, 1.0 / n)
    G = np.zeros((m,) + F.shape[1:], dtype=complex)
    half = n // 2
    for idx, kk in enumerate(k.astype(int)):
        coef = F[idx]
        if n % 2 == 0 and idx == half:
            # split the Nyquist coefficient symmetrically
            for kq in (half, -half):
                if abs(kq) < m / 2 or (m % 2 == 1 and abs(kq) <= m // 2):
                    G[kq % m] += 0.5 * coef * np.exp(1j * kq * shift * TWO_PI / m)
            continue
        G[kk % m] += coef * np.exp(1j * kk * shift * TWO_PI / m)
    out = np.fft.ifft(G, axis=0) * m
    return np.moveaxis(out.real, 0, axis)


def resample(f: np.ndarray, m_theta: int, m_phi: int, shift=(0.0, 0.0)) -> np.ndarray:
    """Evaluate the 2-D trigonometric interpolant of grid data on a refined/shifted grid.

    The target nodes are ``((a + shift[0]) 2 pi / m_theta, (b + shift[1]) 2 pi / m_phi)``.
    Requires ``m >= n`` per axis.
    """
    g = _resample_axis(f, 0, m_theta, shift[0])
    return _resample_axis(g, 1, m_phi, shift[1])


class TrigInterpolant:
    """Evaluate the trigonometric interpolant of one or more grid fields at arbitrary points.

    Coefficients below ``drop * max|c|`` are discarded to speed up evaluation.
    """

    def __init__(self, values: np.ndarray, drop: float = 0.0):
        values = np.asarray(values, float)
        if values.ndim == 2:
            values = values[None]
        self.n_fields = values.shape[0]
        nt, npf = values.shape[1:]
        F = np.fft.fft2(values) / (nt * npf)
        kt = np.fft.fftfreq(nt, 1.0 / nt)
        kp = np.fft.fftfreq(npf, 1.0 / npf)
        wt = np.ones(nt)
        wp = np.ones(npf)
        if nt % 2 == 0:
            wt[nt // 2] = 0.0
        if npf % 2 == 0:
            wp[npf // 2] = 0.0
        # Nyquist rows are dropped: they carry no derivative information and are
        # negligible for the smooth fields handled here.
        F = F * wt[None, :, None] * wp[None, None, :]
        mag = np.max(np.abs(F), axis=0)
        keep_t = np.any(mag > drop * mag.max(), axis=1) if drop > 0 else np.ones(nt, bool)
        keep_p = np.any(mag > drop * mag.max(), axis=0) if drop > 0 else np.ones(npf, bool)
        keep_t &= wt > 0
        keep_p &= wp > 0
        self.kt = kt[keep_t]
        self.kp = kp[keep_p]
        self.coef = F[:, keep_t][:, :, keep_p]

    def __call__(self, theta, phi) -> np.ndarray:
        """Values with shape ``(n_fields,) + theta.shape``."""
        theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
        shp = theta.shape
        t = theta.reshape(-1)
        p = phi.reshape(-1)
        Et = np.exp(1j * np.outer(t, self.kt))
        Ep = np.exp(1j * np.outer(p, self.kp))
        tmp = np.einsum("qa,fab->fqb", Et, self.coef)
        vals = np.einsum("fqb,qb->fq", tmp, Ep).real
        return vals.reshape((self.n_fields,) + shp)
