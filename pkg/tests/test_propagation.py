import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import j1

from metatweezer.lens import default_efficiency_table, desk_prescription, generate_layout
from metatweezer.propagation import (FocusAtBoundaryError, SampledField,
                                     angular_spectrum_propagate, focal_metrics, focus_scan,
                                     gaussian_beam, gaussian_reference_zr, gaussian_width,
                                     ideal_lens_field, propagating_fraction, scan_axial,
                                     second_moment_width, synthesize_aperture_field,
                                     unmodulated_background)

LAM = 852e-9


def exact_gaussian_on_axis(w0, lam, z):
    """Angular-spectrum integral of a Gaussian waist, by quadrature."""
    k = 2 * np.pi / lam

    def part(fn):
        return quad(lambda q: fn(q * np.exp(-(q * w0) ** 2 / 4)
                                  * np.exp(1j * np.sqrt(k * k - q * q) * z)), 0, k, limit=400)[0]
    return 0.5 * w0**2 * complex(part(np.real), part(np.imag))


def airy_waist(lam, na):
    v = brentq(lambda v: (2 * j1(v) / v) ** 2 - np.exp(-2), 0.5, 3.5)
    return v * lam / (2 * np.pi * na)


@pytest.fixture(scope="module")
def beam():
    return gaussian_beam(5 * LAM, LAM, 256, 5 * LAM / 8)


def test_fresnel_kernel_matches_gaussian_optics(beam):
    w0 = 5 * LAM
    zr = gaussian_reference_zr(w0, LAM)
    for z in (0.5 * zr, zr, 2 * zr):
        f = angular_spectrum_propagate(beam, z, "fresnel")
        assert f.intensity[128, 128] == pytest.approx((w0 / gaussian_width(w0, LAM, z)) ** 2, abs=1e-9)
        assert second_moment_width(f) == pytest.approx(gaussian_width(w0, LAM, z), rel=1e-6)


def test_exact_kernel_matches_quadrature(beam):
    w0 = 5 * LAM
    zr = gaussian_reference_zr(w0, LAM)
    for z in (0.3 * zr, zr):
        f = angular_spectrum_propagate(beam, z)
        assert f.amplitude[128, 128] == pytest.approx(exact_gaussian_on_axis(w0, LAM, z), abs=1e-7)


def test_power_conserved(beam):
    f = angular_spectrum_propagate(beam, 40e-6)
    assert f.power == pytest.approx(beam.power, rel=1e-10)
    assert f.spectral_power() == pytest.approx(f.power, rel=1e-12)


def test_zero_distance_is_identity(beam):
    assert angular_spectrum_propagate(beam, 0.0) is beam
    back = angular_spectrum_propagate(angular_spectrum_propagate(beam, 10e-6), -10e-6)
    assert np.allclose(back.amplitude, beam.amplitude, atol=1e-12)


def test_evanescent_decay():
    pitch = LAM / 4
    x = np.arange(64) * pitch
    # spatial frequency 2/lambda > 1/lambda: purely evanescent
    a = np.tile(np.cos(2 * np.pi * x * 2 / LAM), (64, 1))
    f = SampledField(a, pitch, LAM)
    assert propagating_fraction(f) < 1e-20
    out = angular_spectrum_propagate(f, LAM)
    assert out.power < 1e-8 * f.power


@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
def test_tilted_plane_wave_keeps_modulus(ax, ay):
    n, pitch = 32, LAM / 2
    kx = 2 * np.pi * np.round(ax * 4) / (n * pitch)
    ky = 2 * np.pi * np.round(ay * 4) / (n * pitch)
    x = np.arange(n) * pitch
    a = np.exp(1j * (kx * x[None, :] + ky * x[:, None]))
    out = angular_spectrum_propagate(SampledField(a, pitch, LAM), 3e-6)
    assert np.allclose(np.abs(out.amplitude), 1.0, atol=1e-10)


def test_bad_distance():
    with pytest.raises(ValueError):
        angular_spectrum_propagate(gaussian_beam(1e-6, LAM, 16, 1e-7), np.inf)


@pytest.fixture(scope="module")
def small_lens():
    pr = desk_prescription(diameter=30e-6)
    return pr, generate_layout(pr)


def test_ideal_lens_matches_airy(small_lens):
    pr, _ = small_lens
    m = focal_metrics(focus_scan(ideal_lens_field(pr, LAM, 0.2e-6), pr.focal_length))
    assert m.waist == pytest.approx(airy_waist(LAM, 0.46), rel=0.05)
    assert m.focal_z == pytest.approx(pr.focal_length, rel=0.02)
    assert m.side_lobe_ratio == pytest.approx(0.0175, abs=0.01)
    assert m.gaussian_reference_zr == pytest.approx(np.pi * m.waist**2 / LAM)


def test_layout_field_phase_and_power(small_lens):
    pr, lay = small_lens
    t = default_efficiency_table()
    f = synthesize_aperture_field(lay, t, LAM)
    i = f.amplitude[np.abs(f.amplitude) > 0]
    assert len(i) == len(lay)
    assert f.incident_power == pytest.approx(len(lay) * pr.pitch**2)
    with pytest.raises(ValueError):
        synthesize_aperture_field(lay, t, LAM, grid_pitch=2 * pr.pitch)


def test_layout_focus_and_dual_wavelength(small_lens):
    pr, lay = small_lens
    t = default_efficiency_table()
    m1 = focal_metrics(focus_scan(synthesize_aperture_field(lay, t, 852e-9), pr.focal_length))
    m2 = focal_metrics(focus_scan(synthesize_aperture_field(lay, t, 780e-9), pr.focal_length))
    assert m2.waist < m1.waist
    # the two foci overlap within a depth of focus
    assert abs(m1.focal_z - m2.focal_z) < m1.rayleigh_length
    assert 0 < m1.efficiency < 0.5


def test_focus_outside_scan_raises(beam):
    # a waist at z=0 diverges: the axial maximum sits on the scan edge
    with pytest.raises(FocusAtBoundaryError):
        focal_metrics(scan_axial(beam, 0.0, 20e-6, 11))


def test_background_methods_agree(small_lens):
    _, lay = small_lens
    t = default_efficiency_table()
    grid = unmodulated_background(lay, t, LAM, method="grid")
    radial = unmodulated_background(lay, t, LAM, method="radial")
    assert 0 < grid < 0.05
    assert radial == pytest.approx(grid, rel=0.5)
    assert unmodulated_background(lay, t, LAM, residual_amplitude=0.0) == 0.0
