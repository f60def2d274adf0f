"""Far-field slit profiles against closed forms and a quadrature oracle.

The closed-form sinc^2 envelope and the fringe model are checked at
hand-computable points, then both are cross-validated against a direct
phasor sum over the open aperture, which knows nothing about either
formula.  The width fit is exercised on exact and Poisson-noised data.
"""

import math

import numpy as np
import pytest

from qmirror.diffraction import (
    Pattern1D,
    SlitGeometry,
    double_slit_intensity,
    fit_sinc_width,
    sample_pattern,
    single_slit_ratio,
    tabulated_farfield,
    visibility,
)
from qmirror.errors import GammaOutOfRange, NoFringes

LAM = 702e-9
A = 0.4e-3
Z = 2.0
GEOM = SlitGeometry(width=A, wavelength=LAM, distance=Z)


# ---------------------------------------------------------------- validation


def test_geometry_rejects_bad_dimensions():
    with pytest.raises(ValueError):
        SlitGeometry(width=-A, wavelength=LAM, distance=Z)
    with pytest.raises(ValueError):
        SlitGeometry(width=A, wavelength=0.0, distance=Z)
    with pytest.raises(ValueError):
        SlitGeometry(width=A, wavelength=LAM, distance=math.inf)
    with pytest.raises(ValueError):
        SlitGeometry(width=A, wavelength=LAM, distance=Z, separation=A / 2)
    with pytest.raises(ValueError):
        SlitGeometry(width=A, wavelength=LAM, distance=Z, separation=-1.0)


def test_pattern_validation():
    with pytest.raises(ValueError):
        Pattern1D(x=np.array([0.0, 1.0, 2.0]), intensity=np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        Pattern1D(x=np.array([0.0, 2.0, 1.0]), intensity=np.array([1.0, 2.0, 3.0]))
    with pytest.raises(ValueError):
        Pattern1D(x=np.array([0.0, 1.0]), intensity=np.array([1.0, -0.5]))
    with pytest.raises(ValueError):
        Pattern1D(x=np.array([0.0, 1.0]), intensity=np.array([1.0, math.nan]))
    with pytest.raises(ValueError):
        Pattern1D(x=np.array([0.0]), intensity=np.array([1.0]))


def test_pattern_is_readonly_and_normalized():
    p = Pattern1D(x=np.array([0.0, 1.0, 2.0]), intensity=np.array([2.0, 8.0, 4.0]))
    assert p.intensity.max() == 1.0
    assert p.intensity[0] == 0.25
    with pytest.raises(ValueError):
        p.intensity[0] = 5.0
    with pytest.raises(ValueError):
        p.x[0] = -1.0


# -------------------------------------------------------------- single slit


def test_center_ratio_is_one():
    assert single_slit_ratio(0.0, GEOM) == 1.0


def test_first_zero():
    assert abs(single_slit_ratio(LAM * Z / A, GEOM)) < 1e-12


def test_half_pi_argument():
    # X = pi/2 at x2 = lam z / (2 a)
    val = single_slit_ratio(LAM * Z / (2.0 * A), GEOM)
    assert val == pytest.approx((2.0 / math.pi) ** 2, rel=1e-12)


def test_even_with_zeros_at_integer_multiples():
    x = np.linspace(-3.0, 3.0, 501) * LAM * Z / A
    ratio = single_slit_ratio(x, GEOM)
    assert np.allclose(ratio, ratio[::-1], atol=1e-15)
    for m in (1, 2, 3, 4, 5):
        assert abs(single_slit_ratio(m * LAM * Z / A, GEOM)) < 1e-12
    off_center = np.abs(x) > 1e-9
    assert ratio[off_center].max() < 1.0


def test_series_cut_is_continuous():
    # straddle the series switchover; both branches must agree with the
    # quadratic expansion 1 - X^2/3 to well below the cut scale
    for frac in (0.999999, 1.000001):
        big_x = 1e-6 * frac
        x2 = big_x * LAM * Z / (math.pi * A)
        val = single_slit_ratio(x2, GEOM)
        assert abs(val - (1.0 - big_x**2 / 3.0)) < 1e-12
    below = single_slit_ratio(0.999999e-6 * LAM * Z / (math.pi * A), GEOM)
    above = single_slit_ratio(1.000001e-6 * LAM * Z / (math.pi * A), GEOM)
    assert abs(below - above) < 1e-12


# -------------------------------------------------------------- double slit


def test_gamma_validation():
    geom = SlitGeometry(width=A, wavelength=LAM, distance=Z, separation=3 * A)
    with pytest.raises(GammaOutOfRange):
        double_slit_intensity(0.0, geom, gamma=-0.01)
    with pytest.raises(GammaOutOfRange):
        double_slit_intensity(0.0, geom, gamma=1.01)
    with pytest.raises(ValueError):
        double_slit_intensity(0.0, GEOM, gamma=0.5)


def test_incoherent_limit_is_the_envelope():
    geom = SlitGeometry(width=A, wavelength=LAM, distance=Z, separation=3 * A)
    x = np.linspace(-2.0, 2.0, 101) * LAM * Z / A
    assert np.array_equal(
        double_slit_intensity(x, geom, gamma=0.0), single_slit_ratio(x, GEOM)
    )


def test_full_coherence_dark_fringe():
    d = 3 * A
    geom = SlitGeometry(width=A, wavelength=LAM, distance=Z, separation=d)
    assert abs(double_slit_intensity(LAM * Z / (2.0 * d), geom, gamma=1.0)) < 1e-12


def test_center_is_normalized_for_any_gamma():
    geom = SlitGeometry(width=A, wavelength=LAM, distance=Z, separation=3 * A)
    for gamma in (0.0, 0.5, 1.0):
        assert double_slit_intensity(0.0, geom, gamma) == pytest.approx(1.0, abs=1e-15)


def test_shrinking_separation_approaches_envelope():
    # with the fringe period pushed far beyond the scan the profile must
    # collapse onto the single-slit envelope
    a = 1e-5
    env = SlitGeometry(width=a, wavelength=LAM, distance=1.0)
    x = np.linspace(-5e-4, 5e-4, 401)
    base = single_slit_ratio(x, env)
    sups = []
    for d in (1e-4, 3e-5, 1.2e-5):
        geom = SlitGeometry(width=a, wavelength=LAM, distance=1.0, separation=d)
        sups.append(np.max(np.abs(double_slit_intensity(x, geom, 1.0) - base)))
    assert sups[0] > sups[1] > sups[2]
    assert sups[2] < 1e-3


# --------------------------------------------------------------- visibility


def _fringe_pattern(gamma, halfwidth_periods=0.8, points=2001):
    d = 10 * A
    geom = SlitGeometry(width=A, wavelength=LAM, distance=Z, separation=d)
    period = LAM * Z / d
    return sample_pattern(geom, halfwidth_periods * period, points, gamma=gamma)


def test_full_coherence_visibility_is_one():
    v = visibility(_fringe_pattern(1.0))
    assert abs(v - 1.0) < 1e-3


def test_envelope_only_scan_has_no_fringes():
    # window inside the central lobe of a pure envelope is monotone away
    # from the peak, so there is nothing to measure
    pat = sample_pattern(GEOM, 0.3 * LAM * Z / A, 501, gamma=None)
    with pytest.raises(NoFringes):
        visibility(pat)


def test_partial_coherence_visibility():
    v = visibility(_fringe_pattern(0.5))
    assert abs(v - 0.5) / 0.5 < 0.02


def test_visibility_monotone_in_gamma():
    vals = [visibility(_fringe_pattern(g)) for g in np.arange(0.1, 1.0, 0.1)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_edge_peak_raises():
    pat = Pattern1D(x=np.array([0.0, 1.0, 2.0]), intensity=np.array([3.0, 2.0, 1.0]))
    with pytest.raises(NoFringes):
        visibility(pat)


# ------------------------------------------------------------ sampled grids


def test_sample_pattern_grid_and_normalization():
    pat = sample_pattern(GEOM, 1e-3, 11)
    assert pat.x[0] == -1e-3 and pat.x[-1] == 1e-3 and pat.x.size == 11
    assert pat.intensity[5] == 1.0  # center sample
    # an even grid skips x = 0, so normalization has to rescale
    pat2 = sample_pattern(GEOM, 1e-3, 10)
    assert single_slit_ratio(pat2.x, GEOM).max() < 1.0
    assert pat2.intensity.max() == 1.0


def test_sample_pattern_validation():
    with pytest.raises(ValueError):
        sample_pattern(GEOM, 0.0, 11)
    with pytest.raises(ValueError):
        sample_pattern(GEOM, 1e-3, 1)


# --------------------------------------------------- phasor-sum quadrature


def test_quadrature_matches_single_slit_closed_form():
    # direct summation over 1e4 aperture sources against the sinc^2 law,
    # everywhere out to the third zero
    smax = 3.0 * LAM / A
    thetas = np.arcsin(np.linspace(-smax, smax, 601))
    oracle = tabulated_farfield([(-A / 2, A / 2, 1.0)], LAM, thetas, 10_000)
    closed = single_slit_ratio(np.sin(thetas) * Z, GEOM)
    assert np.max(np.abs(oracle - closed)) < 1e-3


def test_quadrature_matches_double_slit_closed_form():
    d = 1.2e-3
    smax = 3.0 * LAM / A
    thetas = np.arcsin(np.linspace(-smax, smax, 601))
    windows = [(-d / 2 - A / 2, -d / 2 + A / 2, 1.0), (d / 2 - A / 2, d / 2 + A / 2, 1.0)]
    oracle = tabulated_farfield(windows, LAM, thetas, 10_000)
    geom = SlitGeometry(width=A, wavelength=LAM, distance=Z, separation=d)
    closed = double_slit_intensity(np.sin(thetas) * Z, geom, gamma=1.0)
    assert np.max(np.abs(oracle - closed)) < 1e-3


def test_quadrature_transmission_scale_invariance():
    thetas = np.linspace(-3.0 * LAM / A, 3.0 * LAM / A, 101)
    half = tabulated_farfield([(-A / 2, A / 2, 0.5)], LAM, thetas, 1024)
    full = tabulated_farfield([(-A / 2, A / 2, 1.0)], LAM, thetas, 1024)
    assert np.array_equal(half, full)


def test_quadrature_validation():
    thetas = np.array([0.0, 1e-3])
    with pytest.raises(ValueError):
        tabulated_farfield([(-A / 2, A / 2, 0.0)], LAM, thetas)
    with pytest.raises(ValueError):
        tabulated_farfield([(-A / 2, A / 2, 1.0)], 0.0, thetas)


# ---------------------------------------------------------------- width fit


def _synthetic_counts(amp, rng=None):
    first_zero = LAM * Z / A
    x = np.linspace(-2.5 * first_zero, 2.5 * first_zero, 201)
    expect = amp * single_slit_ratio(x, GEOM)
    if rng is None:
        return x, expect
    return x, rng.poisson(expect).astype(float)


def test_fit_recovers_exact_data():
    x, counts = _synthetic_counts(60.0)
    width, amp = fit_sinc_width(x, counts, LAM, Z)
    assert abs(width - A) / A < 1e-6
    assert abs(amp - 60.0) / 60.0 < 1e-6


def test_fit_recovers_poisson_draw():
    x, counts = _synthetic_counts(60.0, np.random.default_rng(11))
    width, amp = fit_sinc_width(x, counts, LAM, Z)
    assert abs(width - A) / A < 0.02
    assert abs(amp - 60.0) / 60.0 < 0.05


def test_fit_guess_does_not_change_the_optimum():
    x, counts = _synthetic_counts(60.0, np.random.default_rng(11))
    w_auto, _ = fit_sinc_width(x, counts, LAM, Z)
    w_seeded, _ = fit_sinc_width(x, counts, LAM, Z, width_guess=0.7 * A)
    assert abs(w_auto - w_seeded) / A < 1e-6


def test_fit_validation():
    x, counts = _synthetic_counts(60.0)
    with pytest.raises(ValueError):
        fit_sinc_width(x[:-1], counts, LAM, Z)
    with pytest.raises(ValueError):
        fit_sinc_width(x, np.zeros_like(x), LAM, Z)
