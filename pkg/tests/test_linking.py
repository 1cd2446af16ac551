from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surfhel.calculus import TangentField, band_limited, co_exact
from surfhel.errors import ConfigError, OffsetError, ProximityError, SamplingError
from surfhel.geometry import estimate_constants
from surfhel.helicity import helicity
from surfhel.linking import (ClosedCurve, area_samples, circle, close_segment, gauss_linking,
                             helicity_via_linking, min_distance, periodic_orbits)
from surfhel.windings import trace_field_line, winding_field

SQ3 = np.sqrt(3.0)
# closed-line field with rotational transform 1 on the standard torus
H_IOTA1 = 4 * np.pi**2 / 3


@pytest.fixture(scope="module")
def iota1(basis64):
    return winding_field(basis64, 1.0, 1 / SQ3)


def hopf_pair(n=256):
    a = circle((0, 0, 0), 1.0, (0, 0, 1), n)
    b = circle((1, 0, 0), 1.0, (0, 1, 0), n)
    return a, b


# --- Gauss linking of explicit curves --------------------------------------------------------

def test_hopf_link():
    a, b = hopf_pair()
    assert abs(gauss_linking(a, b) - 1) < 1e-12


def test_quadrature_route_converges_to_polygon_route():
    # the midpoint rule is second order on smooth curves
    errs = [abs(gauss_linking(*hopf_pair(n), "quadrature") - 1) for n in (256, 512)]
    assert errs[1] < 1e-3
    assert errs[0] / errs[1] > 3.5


def test_hopf_reversal_flips_sign():
    a, b = hopf_pair()
    lk = gauss_linking(a, b)
    assert abs(gauss_linking(a.reversed(), b) + lk) < 1e-12
    assert abs(gauss_linking(a, b) - gauss_linking(b, a)) < 1e-12


def test_polygon_linking_exact_for_coarse_polygons():
    a, b = hopf_pair(7)
    assert abs(abs(gauss_linking(a, b)) - 1) < 1e-12


def test_far_circles_unlinked():
    a = circle((0, 0, 0), 1.0, (0, 0, 1))
    b = circle((5, 0, 0), 1.0, (0, 1, 0))
    assert abs(gauss_linking(a, b)) < 1e-4


def test_nested_torus_curves_link_once():
    # (1,1) curves on two nested tori link once
    t = np.arange(512) * 2 * np.pi / 512

    def curve(r, shift):
        th, ph = t + shift, t
        rho = 2 + r * np.cos(th)
        return ClosedCurve(np.stack([rho * np.cos(ph), rho * np.sin(ph), r * np.sin(th)], -1))
    assert abs(abs(gauss_linking(curve(1.0, 0.0), curve(0.5, 1.0))) - 1) < 1e-4


def test_intersecting_curves_raise():
    a = circle((0, 0, 0), 1.0, (0, 0, 1))
    b = circle((1, 0, 0), 0.5, (0, 0, 1))
    with pytest.raises(ProximityError):
        gauss_linking(a, b)


def test_unknown_method():
    a, b = hopf_pair(16)
    with pytest.raises(ConfigError):
        gauss_linking(a, b, "simpson")


def test_min_distance_between_circles():
    a = circle((0, 0, 0), 1.0, (0, 0, 1), 512)
    b = circle((0, 0, 2.0), 1.0, (0, 0, 1), 512)
    assert abs(min_distance(a, b) - 2.0) < 1e-12


@settings(max_examples=25, deadline=None)
@given(c=st.tuples(*[st.floats(-2, 2)] * 3), n=st.tuples(*[st.floats(-1, 1)] * 3),
       r=st.floats(0.3, 2.0))
def test_random_circles_link_integer_symmetric(c, n, r):
    if np.linalg.norm(n) < 0.1:
        n = (0.0, 0.0, 1.0)
    a = circle((0, 0, 0), 1.0, (0, 0, 1), 96)
    b = circle(c, r, n, 96)
    if min_distance(a, b) < 0.05:
        return
    lk = gauss_linking(a, b)
    assert abs(lk - round(lk)) < 1e-8
    assert abs(lk - gauss_linking(b, a)) < 1e-10
    assert abs(gauss_linking(a, b.reversed()) + lk) < 1e-10


# --- closing segments ------------------------------------------------------------------------

def test_close_segment_geometry(grid64, iota1):
    tau = 0.5 * estimate_constants(grid64).tau_max
    line = trace_field_line(iota1, (0.3, 0.1), 7.0, n_samples=400)
    c = close_segment(grid64, line, tau)
    n_seg = len(line.t)
    seg_len = np.sum(np.linalg.norm(np.diff(c.points[:n_seg], axis=0), axis=1))
    # normal legs of length tau at both ends
    assert abs(np.linalg.norm(c.points[n_seg] - c.points[n_seg - 1]) - tau) < 1e-9
    assert abs(np.linalg.norm(c.points[0] - c.points[-1]) - tau) < 1e-9
    assert c.added_length >= 2 * tau
    assert abs(c.length - (seg_len + c.added_length)) < 1e-9


def test_close_segment_validates_tau(grid64, iota1):
    line = trace_field_line(iota1, (0.3, 0.1), 3.0, n_samples=50)
    with pytest.raises(OffsetError):
        close_segment(grid64, line, 0.0)
    with pytest.raises(OffsetError):
        close_segment(grid64, line, 2 * estimate_constants(grid64).tau_max)
    with pytest.raises(ConfigError):
        close_segment(grid64, line, 0.1, side=0)


def test_area_samples_are_area_uniform(grid64):
    # on the standard torus the area density is proportional to 2 + cos(theta)
    th = area_samples(grid64, np.random.default_rng(5), 4000)[:, 0]
    assert abs(np.mean(np.cos(th)) - 0.25) < 0.03


# --- periodic orbits -------------------------------------------------------------------------

def test_periodic_orbit_period(iota1):
    o = periodic_orbits(iota1, np.array([[0.3, 0.1], [2.0, 4.0]]), 60.0)
    assert np.abs(o.period - 4 * np.pi * SQ3).max() < 1e-6
    assert np.all(np.abs(o.windings) == 1)


def test_non_closing_field_rejected(basis64):
    w = winding_field(basis64)
    with pytest.raises(SamplingError):
        helicity_via_linking(w, 2, mode="periodic")


# --- helicity as average linking -------------------------------------------------------------

def test_zero_field(grid32):
    r = helicity_via_linking(TangentField.zeros(grid32), 10)
    assert r.estimate == 0.0 and r.stderr == 0.0


def test_bad_arguments(iota1):
    with pytest.raises(ConfigError):
        helicity_via_linking(iota1, 0)
    with pytest.raises(ConfigError):
        helicity_via_linking(iota1, 4, mode="offset")
    with pytest.raises(ConfigError):
        helicity_via_linking(iota1, 4, mode="spiral")


@pytest.fixture(scope="module")
def periodic_estimate(iota1):
    return helicity_via_linking(iota1, 60, seed=3)


def test_periodic_linking_matches_closed_form(periodic_estimate):
    # every pair of distinct lines links once and every period is 4 pi sqrt 3
    assert abs(periodic_estimate.estimate - H_IOTA1) < 1e-6 * H_IOTA1
    assert periodic_estimate.stderr < 1e-6 * H_IOTA1


def test_periodic_linking_matches_quadrature(periodic_estimate, iota1):
    assert abs(periodic_estimate.estimate - helicity(iota1)) < 0.05 * H_IOTA1


def test_linking_estimate_reproducible(iota1):
    a = helicity_via_linking(iota1, 6, seed=11)
    b = helicity_via_linking(iota1, 6, seed=11)
    assert np.array_equal(a.samples, b.samples)


def test_offset_mode_bias_on_closed_lines(iota1, grid64):
    # closed lines link an integer number of times, so a finite horizon T
    # carries a relative error up to one period over T
    T = 40.0
    period = 4 * np.pi * SQ3
    r = helicity_via_linking(iota1, 8, T=T, mode="offset", seed=2)
    assert abs(r.estimate - H_IOTA1) <= (2 * period / T + (period / T) ** 2) * H_IOTA1 + 3 * r.stderr


def test_offset_mode_co_exact_near_zero(grid32):
    v = co_exact(grid32, band_limited(grid32, np.random.default_rng(4), kmax=2))
    r = helicity_via_linking(v, 40, T=6.0, mode="offset", seed=1)
    assert abs(r.estimate) <= 3 * r.stderr
