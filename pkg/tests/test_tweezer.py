import numpy as np
import pytest
import scipy.constants as const
from hypothesis import given, strategies as st

from metatweezer.tweezer import (METALENS_CHANNEL, OBJECTIVE_CHANNEL, RB87, AtomSpecies,
                                 CollectionModel, FictitiousFieldModel, ResonanceError,
                                 _collection_quadrature, collection_efficiency, count_ratio,
                                 dipole_potential, fictitious_field, optimal_bias_linear_fit,
                                 peak_intensity, trap_frequencies, trap_parameters)


def two_level_depth(intensity, lam, lam0, gamma):
    # single-line RWA formula
    w, w0 = 2 * np.pi * const.c / lam, 2 * np.pi * const.c / lam0
    return 3 * np.pi * const.c**2 / (2 * w0**3) * gamma / (w - w0) * intensity


def test_dipole_matches_line_sum():
    i0 = 1e9
    d2 = two_level_depth(i0, 852e-9, RB87.d2_wavelength, RB87.d2_gamma)
    d1 = two_level_depth(i0, 852e-9, RB87.d1_wavelength, RB87.d1_gamma)
    assert dipole_potential(i0, 852e-9) == pytest.approx((2 * d2 + d1) / 3, rel=1e-12)


def test_red_detuned_is_attractive_blue_repulsive():
    assert dipole_potential(1e9, 852e-9) < 0
    assert dipole_potential(1e9, 700e-9) > 0
    with pytest.raises(ResonanceError):
        dipole_potential(1e9, RB87.d2_wavelength)


def test_counter_rotating_deepens_red_trap():
    assert abs(dipole_potential(1e9, 852e-9, counter_rotating=True)) > abs(dipole_potential(1e9, 852e-9))


@given(st.floats(1e-4, 0.1), st.floats(0.05, 1.0), st.floats(0.5e-6, 5e-6))
def test_depth_linear_in_power(p, zeta, w0):
    a = trap_parameters(p, zeta, w0, 3e-6)
    b = trap_parameters(2 * p, zeta, w0, 3e-6)
    assert b.depth == pytest.approx(2 * a.depth, rel=1e-12)
    assert a.peak_intensity == pytest.approx(2 * zeta * p / (np.pi * w0**2))


def test_trap_frequencies_harmonic_curvature():
    u, w0, zr, m = 1e-27, 1.33e-6, 6.5e-6, RB87.mass
    wr, wz = trap_frequencies(-u, w0, zr, m)
    # second derivative of -U exp(-2 r^2/w0^2) and -U/(1+z^2/zr^2)
    h = 1e-10
    pot_r = lambda r: -u * np.exp(-2 * r**2 / w0**2)
    pot_z = lambda z: -u / (1 + z**2 / zr**2)
    kr = (pot_r(h) - 2 * pot_r(0) + pot_r(-h)) / h**2
    kz = (pot_z(h * 10) - 2 * pot_z(0) + pot_z(-h * 10)) / (h * 10) ** 2
    assert wr == pytest.approx(np.sqrt(kr / m), rel=1e-4)
    assert wz == pytest.approx(np.sqrt(kz / m), rel=1e-4)


def test_peak_intensity_validation():
    with pytest.raises(ValueError):
        peak_intensity(1e-3, 0.0, 1e-6)
    with pytest.raises(ValueError):
        peak_intensity(1e-3, 0.5, -1e-6)


@given(st.floats(0.01, 0.95))
def test_collection_closed_forms(na):
    for pattern in ("isotropic", "circular-dipole"):
        assert collection_efficiency(na, pattern) == pytest.approx(_collection_quadrature(na, pattern), rel=1e-9)


def test_collection_monotone_and_bounds():
    nas = np.linspace(0, 0.99, 50)
    eta = [collection_efficiency(n) for n in nas]
    assert np.all(np.diff(eta) > 0) and eta[0] == 0 and eta[-1] < 0.5


def test_count_ratio_bookkeeping():
    assert count_ratio(METALENS_CHANNEL, OBJECTIVE_CHANNEL) == pytest.approx(
        0.040 * 0.22 * 0.33 / (0.015 * 0.8))
    with pytest.raises(ZeroDivisionError):
        count_ratio(METALENS_CHANNEL, CollectionModel(0.3, transmission=0.0))


def test_linear_fit_and_fictitious_field():
    p = np.array([14.0, 16.3, 18.6]) * 1e-3
    b = 0.1e-4 - 3e-3 * p
    line = optimal_bias_linear_fit(np.column_stack([p, b]))
    assert line.slope == pytest.approx(-3e-3) and line.intercept == pytest.approx(0.1e-4)
    model = FictitiousFieldModel.from_linear_fit(line, waist=1.33e-6)
    bf, grad = fictitious_field(16.3e-3, model)
    assert bf == pytest.approx(3e-3 * 16.3e-3)
    assert grad == pytest.approx(bf / 1.33e-6)
    with pytest.raises(ValueError):
        optimal_bias_linear_fit([[1.0, 2.0], [1.0, 3.0]])


def test_species_validation():
    with pytest.raises(ValueError):
        AtomSpecies("x", -1.0, 1e-6, 1e-6, 1.0, 1.0)
