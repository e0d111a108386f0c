"""Scalar angular-spectrum diffraction and focal-spot metrics.

Fields are sampled on a uniform square grid.  Propagation multiplies the
2-D spectrum by ``exp(i*dz*kz)``; with ``kernel="exact"`` the longitudinal
wavenumber is ``sqrt(k**2 - kx**2 - ky**2)`` and evanescent components
decay as ``exp(-|dz|*kappa)``.  ``kernel="fresnel"`` uses the paraxial
expansion ``k - (kx**2 + ky**2)/(2k)``, for which the textbook Gaussian
beam formulas are exact.

Focal metrics never rely on the grid pitch alone: on-axis values and radial
cuts are evaluated from the spectrum at arbitrary points (band-limited
interpolation), so the waist does not snap to grid samples.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Literal

import numpy as np
from scipy import fft as sfft
from scipy.integrate import trapezoid
from scipy.optimize import brentq, minimize_scalar

from .lens import (CLASS_1, CLASS_2, EfficiencyTable, LayoutTable, LensPrescription,
                   hyperbolic_phase, lattice_coordinates, modulation_efficiency)

Kernel = Literal["exact", "fresnel"]

FILTER_APERTURE = 5e-6
MAX_DESK_GRID = 4096


class FocusAtBoundaryError(RuntimeError):
    """The axial maximum or a half-intensity point lies outside the scan."""


@dataclass(frozen=True)
class SampledField:
    """Complex scalar field on a square grid.

    ``x0``/``y0`` are the coordinates of sample ``[0, 0]``; by default the
    optical axis sits on sample ``[ny//2, nx//2]``.
    """

    amplitude: np.ndarray
    pitch: float
    wavelength: float
    z: float = 0.0
    x0: float | None = None
    y0: float | None = None
    incident_power: float | None = None

    def __post_init__(self):
        a = np.asarray(self.amplitude, dtype=complex)
        if a.ndim != 2:
            raise ValueError("field amplitude must be 2-D")
        if not self.pitch > 0:
            raise ValueError("pitch must be positive")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        a.setflags(write=False)
        object.__setattr__(self, "amplitude", a)
        ny, nx = a.shape
        if self.x0 is None:
            object.__setattr__(self, "x0", -(nx // 2) * self.pitch)
        if self.y0 is None:
            object.__setattr__(self, "y0", -(ny // 2) * self.pitch)

    @property
    def shape(self) -> tuple[int, int]:
        return self.amplitude.shape

    @property
    def x(self) -> np.ndarray:
        return self.x0 + np.arange(self.shape[1]) * self.pitch

    @property
    def y(self) -> np.ndarray:
        return self.y0 + np.arange(self.shape[0]) * self.pitch

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.amplitude) ** 2

    @property
    def power(self) -> float:
        return float(np.sum(self.intensity) * self.pitch**2)

    @property
    def k(self) -> float:
        return 2 * np.pi / self.wavelength

    def spectrum(self) -> np.ndarray:
        return sfft.fft2(self.amplitude)

    def spectral_power(self) -> float:
        """Power computed in the Fourier domain (Parseval)."""
        s = self.spectrum()
        return float(np.sum(np.abs(s) ** 2) / s.size * self.pitch**2)

    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        ny, nx = self.shape
        kx = 2 * np.pi * sfft.fftfreq(nx, self.pitch)
        ky = 2 * np.pi * sfft.fftfreq(ny, self.pitch)
        return kx, ky

    def with_amplitude(self, amplitude, z=None) -> "SampledField":
        return replace(self, amplitude=amplitude, z=self.z if z is None else z)


def _kz(kx, ky, k, kernel: Kernel):
    kr2 = kx[None, :] ** 2 + ky[:, None] ** 2
    if kernel == "fresnel":
        return k - kr2 / (2 * k)
    if kernel != "exact":
        raise ValueError(f"unknown kernel {kernel!r}")
    return np.sqrt((k**2 - kr2).astype(complex))


def transfer_function(field: SampledField, dz: float, kernel: Kernel = "exact") -> np.ndarray:
    kx, ky = field.wavenumbers()
    kz = _kz(kx, ky, field.k, kernel)
    if kernel == "exact":
        # propagating: |H| = 1; evanescent: decay for either sign of dz
        return np.exp(1j * dz * kz.real - abs(dz) * kz.imag)
    return np.exp(1j * dz * kz)


def angular_spectrum_propagate(field: SampledField, dz: float,
                               kernel: Kernel = "exact") -> SampledField:
    if not np.isfinite(dz):
        raise ValueError("propagation distance must be finite")
    if dz == 0:
        return field
    out = sfft.ifft2(field.spectrum() * transfer_function(field, dz, kernel))
    return field.with_amplitude(out, z=field.z + dz)


def propagating_fraction(field: SampledField) -> float:
    """Fraction of spectral power inside the propagating disk."""
    kx, ky = field.wavenumbers()
    s2 = np.abs(field.spectrum()) ** 2
    mask = kx[None, :] ** 2 + ky[:, None] ** 2 <= field.k**2
    return float(s2[mask].sum() / s2.sum())


# ---------------------------------------------------------------- sources


def gaussian_beam(waist: float, wavelength: float, n: int, pitch: float) -> SampledField:
    """Gaussian beam at its waist, unit peak amplitude."""
    x = (np.arange(n) - n // 2) * pitch
    r2 = x[None, :] ** 2 + x[:, None] ** 2
    return SampledField(np.exp(-r2 / waist**2), pitch, wavelength)


def gaussian_width(waist: float, wavelength: float, z: float) -> float:
    zr = np.pi * waist**2 / wavelength
    return waist * np.sqrt(1 + (z / zr) ** 2)


def gaussian_on_axis_intensity(waist: float, wavelength: float, z: float) -> float:
    """On-axis intensity relative to the waist value."""
    return (waist / gaussian_width(waist, wavelength, z)) ** 2


def second_moment_width(f: SampledField) -> float:
    """1/e^2 radius ``2*sqrt(<x^2>)`` of the intensity (x direction)."""
    intensity = f.intensity
    xs = f.x - np.sum(intensity.sum(axis=0) * f.x) / intensity.sum()
    return float(2 * np.sqrt(np.sum(intensity.sum(axis=0) * xs**2) / intensity.sum()))


def illumination_amplitude(prescription: LensPrescription, x, y):
    r2 = np.asarray(x) ** 2 + np.asarray(y) ** 2
    if prescription.illumination == "gaussian":
        return np.exp(-r2 / prescription.gauss_radius**2)
    return np.ones(np.broadcast(x, y).shape)


def ideal_lens_field(prescription: LensPrescription, wavelength: float, pitch: float,
                     padding: float = 2.0) -> SampledField:
    """Continuous hyperbolic phase mask, no partition and unit efficiency."""
    n_ap = int(np.ceil(prescription.diameter / pitch)) + 1
    n = sfft.next_fast_len(int(np.ceil(padding * n_ap)))
    x = (np.arange(n) - n // 2) * pitch
    X, Y = np.meshgrid(x, x)
    inside = X**2 + Y**2 <= prescription.radius**2
    amp = illumination_amplitude(prescription, X, Y) * inside
    phase = hyperbolic_phase(X, Y, prescription.focal_length, wavelength)
    a = amp * np.exp(1j * phase)
    return SampledField(a, pitch, wavelength,
                        incident_power=float(np.sum(amp**2) * pitch**2))


def synthesize_aperture_field(layout: LayoutTable, table: EfficiencyTable, wavelength: float,
                              illumination: LensPrescription | None = None, oversample: int = 1,
                              padding: float = 2.0, channel: Literal["converted", "residual"] = "converted",
                              residual_amplitude: float | np.ndarray | None = None,
                              aberration: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
                              grid_pitch: float | None = None) -> SampledField:
    """Field just after the lens for one polarization channel.

    The converted channel of each brick cell carries
    ``sqrt(eff(class, wavelength)) * illumination * exp(2i*theta)``; the
    residual channel carries ``residual_amplitude * illumination`` with no
    geometric phase (default residual ``sqrt(1 - eff)``).  ``illumination``
    overrides the prescription's beam profile.
    """
    pr = layout.prescription
    beam = illumination if illumination is not None else pr
    if grid_pitch is not None:
        if grid_pitch > pr.pitch * (1 + 1e-9):
            raise ValueError("grid resolution is coarser than the lattice pitch")
        ratio = pr.pitch / grid_pitch
        oversample = int(round(ratio))
        if abs(ratio - oversample) > 1e-6:
            raise ValueError("grid pitch must divide the lattice pitch")
    if oversample < 1:
        raise ValueError("oversample must be >= 1")
    dg = pr.pitch / oversample
    idx, coords = lattice_coordinates(pr)
    n_lat = len(idx) * oversample
    n = sfft.next_fast_len(int(np.ceil(padding * n_lat)))
    if n > MAX_DESK_GRID:
        warnings.warn(f"{n}x{n} grid: full-aperture runs are long and memory hungry",
                      stacklevel=2)
    offset = (n - n_lat) // 2
    origin = coords[0] - 0.5 * (oversample - 1) * dg - offset * dg

    eff = np.empty(len(layout))
    for c in (CLASS_1, CLASS_2):
        sel = layout.cls == c
        eff[sel] = modulation_efficiency(c, wavelength, table)
    if channel == "converted":
        value = np.sqrt(eff) * np.exp(2j * layout.theta)
    elif channel == "residual":
        res = np.sqrt(np.clip(1.0 - eff, 0.0, 1.0)) if residual_amplitude is None else residual_amplitude
        value = np.broadcast_to(np.asarray(res, dtype=complex), eff.shape)
    else:
        raise ValueError(f"unknown channel {channel!r}")

    a = np.zeros((n, n), dtype=complex)
    cover = np.zeros((n, n), dtype=bool)
    sub = np.arange(oversample)
    for sy in sub:
        for sx in sub:
            rows = offset + layout.row * oversample + sy
            cols = offset + layout.col * oversample + sx
            a[rows, cols] = value
            cover[rows, cols] = True
    x = origin + np.arange(n) * dg
    X, Y = np.meshgrid(x, x)
    illum = np.where(cover, illumination_amplitude(beam, X, Y), 0.0)
    a *= illum
    if aberration is not None and channel == "converted":
        a *= np.exp(1j * aberration(X, Y))
    return SampledField(a, dg, wavelength, x0=origin, y0=origin,
                        incident_power=float(np.sum(illum**2) * dg**2))


# ------------------------------------------------------------ point evaluation


class _SpectralEvaluator:
    """Evaluate a propagated field at arbitrary points from its spectrum."""

    def __init__(self, source: SampledField, kernel: Kernel):
        self.source = source
        self.kernel = kernel
        self.kx, self.ky = source.wavenumbers()
        kz = _kz(self.kx, self.ky, source.k, kernel)
        self.kz_re = kz.real if np.iscomplexobj(kz) else kz
        self.kz_im = kz.imag if np.iscomplexobj(kz) else np.zeros_like(kz)
        self.spectrum = source.spectrum() / source.amplitude.size

    def _at(self, dz: float) -> np.ndarray:
        return self.spectrum * np.exp(1j * dz * self.kz_re - abs(dz) * self.kz_im)

    def plane_spectrum(self, z: float) -> np.ndarray:
        return self._at(z - self.source.z)

    def points(self, z: float, x, y) -> np.ndarray:
        """Field on the tensor grid ``y x x`` at plane ``z``."""
        s = self.plane_spectrum(z)
        ex = np.exp(1j * np.outer(np.atleast_1d(x) - self.source.x0, self.kx))
        ey = np.exp(1j * np.outer(np.atleast_1d(y) - self.source.y0, self.ky))
        return ey @ s @ ex.T

    def on_axis(self, z: float, x: float = 0.0, y: float = 0.0) -> complex:
        return complex(self.points(z, [x], [y])[0, 0])


@dataclass
class FocalStack:
    """Lazily materialized planes between ``z_min`` and ``z_max``."""

    source: SampledField
    z: np.ndarray
    on_axis_intensity: np.ndarray
    kernel: Kernel = "exact"
    axis: tuple[float, float] = (0.0, 0.0)
    _evaluator: _SpectralEvaluator | None = field(default=None, repr=False)

    def __post_init__(self):
        if self._evaluator is None:
            self._evaluator = _SpectralEvaluator(self.source, self.kernel)

    def __len__(self) -> int:
        return len(self.z)

    def __getitem__(self, i: int) -> SampledField:
        return angular_spectrum_propagate(self.source, float(self.z[i]) - self.source.z, self.kernel)

    def __iter__(self) -> Iterator[SampledField]:
        return (self[i] for i in range(len(self)))

    @property
    def evaluator(self) -> _SpectralEvaluator:
        return self._evaluator

    def intensity_on_axis(self, z: float) -> float:
        return abs(self.evaluator.on_axis(z, *self.axis)) ** 2


def scan_axial(field: SampledField, z_min: float, z_max: float, n_planes: int,
               kernel: Kernel = "exact", axis: tuple[float, float] = (0.0, 0.0)) -> FocalStack:
    if n_planes < 3:
        raise ValueError("n_planes must be >= 3")
    if not z_min < z_max:
        raise ValueError("z_min must be smaller than z_max")
    z = np.linspace(z_min, z_max, n_planes)
    ev = _SpectralEvaluator(field, kernel)
    ex = np.exp(1j * (axis[0] - field.x0) * ev.kx)
    ey = np.exp(1j * (axis[1] - field.y0) * ev.ky)
    weighted = ev.spectrum * np.outer(ey, ex)
    on_axis = np.array([
        abs(np.sum(weighted * np.exp(1j * (zz - field.z) * ev.kz_re - abs(zz - field.z) * ev.kz_im))) ** 2
        for zz in z])
    return FocalStack(field, z, on_axis, kernel, axis, ev)


# ------------------------------------------------------------------- metrics


@dataclass(frozen=True)
class FocalMetrics:
    waist: float
    rayleigh_length: float
    focal_z: float
    side_lobe_ratio: float
    efficiency: float
    gaussian_reference_zr: float
    peak_intensity: float
    wavelength: float

    def as_dict(self) -> dict:
        return {
            "waist_m": self.waist,
            "rayleigh_length_m": self.rayleigh_length,
            "focal_z_m": self.focal_z,
            "side_lobe_ratio": self.side_lobe_ratio,
            "efficiency": self.efficiency,
            "gaussian_reference_zr_m": self.gaussian_reference_zr,
            "peak_intensity": self.peak_intensity,
            "wavelength_m": self.wavelength,
        }


def gaussian_reference_zr(waist: float, wavelength: float) -> float:
    """Rayleigh length ``pi*w0**2/lambda`` of a Gaussian beam with the same waist."""
    return np.pi * waist**2 / wavelength


def _best_focus(stack: FocalStack) -> tuple[float, float]:
    i = int(np.argmax(stack.on_axis_intensity))
    if i == 0 or i == len(stack) - 1:
        raise FocusAtBoundaryError(
            f"axial maximum at the scan edge (z = {stack.z[i]:.6g} m); widen the scan")
    lo, hi = stack.z[i - 1], stack.z[i + 1]
    res = minimize_scalar(lambda z: -stack.intensity_on_axis(z), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-6 * (hi - lo)})
    z_best = float(res.x)
    peak = stack.intensity_on_axis(z_best)
    if peak < stack.on_axis_intensity[i]:
        z_best, peak = float(stack.z[i]), float(stack.on_axis_intensity[i])
    return z_best, peak


def _half_width(stack: FocalStack, z_best: float, peak: float) -> float:
    half = 0.5 * peak
    z, on = stack.z, stack.on_axis_intensity
    f = lambda zz: stack.intensity_on_axis(zz) - half
    above = z > z_best
    below = z < z_best
    hi_idx = np.nonzero(above & (on < half))[0]
    lo_idx = np.nonzero(below & (on < half))[0]
    if len(hi_idx) == 0 or len(lo_idx) == 0:
        raise FocusAtBoundaryError("half-intensity points not bracketed by the scan")
    j = hi_idx[0]
    z_hi = brentq(f, max(z[j - 1], z_best), z[j], xtol=1e-12)
    j = lo_idx[-1]
    z_lo = brentq(f, z[j], min(z[j + 1], z_best), xtol=1e-12)
    return 0.5 * (z_hi - z_lo)


def radial_profile(stack: FocalStack, z: float, r_max: float, n: int = 400,
                   angle: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    r = np.linspace(0.0, r_max, n)
    ev = stack.evaluator
    cx, cy = stack.axis
    x = cx + r * np.cos(angle)
    y = cy + r * np.sin(angle)
    if abs(np.sin(angle)) < 1e-15 or abs(np.cos(angle)) < 1e-15:
        # separable along a grid axis
        vals = ev.points(z, x, [cy])[0] if abs(np.sin(angle)) < 1e-15 else ev.points(z, [cx], y)[:, 0]
    else:
        vals = np.array([ev.points(z, [xx], [yy])[0, 0] for xx, yy in zip(x, y)])
    return r, np.abs(vals) ** 2


def _crossing_radius(stack: FocalStack, z: float, level: float, angle: float, r_max: float) -> float:
    r, prof = radial_profile(stack, z, r_max, 400, angle)
    below = np.nonzero(prof < level)[0]
    if len(below) == 0:
        raise FocusAtBoundaryError("intensity never drops to 1/e^2 within the cut")
    j = below[0]
    cx, cy = stack.axis
    c, s = np.cos(angle), np.sin(angle)
    g = lambda rr: abs(stack.evaluator.on_axis(z, cx + rr * c, cy + rr * s)) ** 2 - level
    return brentq(g, r[j - 1], r[j], xtol=1e-13)


def _side_lobe(prof: np.ndarray) -> float:
    d = np.diff(prof)
    mins = np.nonzero((d[:-1] < 0) & (d[1:] >= 0))[0]
    if len(mins) == 0:
        return 0.0
    m = mins[0] + 1
    maxs = np.nonzero((d[m:-1] > 0) & (d[m + 1:] <= 0))[0]
    if len(maxs) == 0:
        return 0.0
    return float(prof[m + maxs[0] + 1] / prof[0])


def encircled_power(stack: FocalStack, z: float, diameter: float, spacing: float | None = None) -> float:
    """Power inside a disk of ``diameter`` centred on the axis at plane ``z``."""
    src = stack.source
    if spacing is None:
        spacing = min(src.pitch / 4, src.wavelength / 16)
    m = int(np.ceil(diameter / 2 / spacing))
    u = (np.arange(-m, m + 1)) * spacing
    cx, cy = stack.axis
    vals = stack.evaluator.points(z, cx + u, cy + u)
    inside = u[None, :] ** 2 + u[:, None] ** 2 <= (diameter / 2) ** 2
    return float(np.sum(np.abs(vals[inside]) ** 2) * spacing**2)


def focal_metrics(stack: FocalStack, incident_power: float | None = None,
                  aperture_diameter: float = FILTER_APERTURE) -> FocalMetrics:
    """Waist, Rayleigh length, side lobes and filtered efficiency of a focus."""
    src = stack.source
    z_best, peak = _best_focus(stack)
    zr = _half_width(stack, z_best, peak)
    level = np.exp(-2.0) * peak
    # generous cut: several Airy radii of the widest plausible focus
    r_max = max(8 * src.wavelength, 20 * src.pitch)
    radii = [_crossing_radius(stack, z_best, level, a, r_max)
             for a in (0.0, np.pi / 2, np.pi, 3 * np.pi / 2)]
    waist = float(np.mean(radii))
    _, prof = radial_profile(stack, z_best, max(r_max, 6 * waist), 600)
    side = _side_lobe(prof)
    if incident_power is None:
        incident_power = src.incident_power if src.incident_power is not None else src.power
    t = encircled_power(stack, z_best, aperture_diameter) / incident_power
    return FocalMetrics(waist, zr, z_best, side, float(min(t, 1.0)),
                        gaussian_reference_zr(waist, src.wavelength), peak, src.wavelength)


def focus_scan(field: SampledField, focal_length: float, half_range: float | None = None,
               n_planes: int = 81, kernel: Kernel = "exact") -> FocalStack:
    """Axial scan centred on the nominal focal length."""
    if half_range is None:
        na = 0.46
        half_range = max(20 * field.wavelength / na**2, 10e-6)
    return scan_axial(field, focal_length - half_range, focal_length + half_range, n_planes, kernel)


# --------------------------------------------------------------- background


def _rs_on_axis(radial_amplitude: Callable[[np.ndarray], np.ndarray], radius: float,
                wavelength: float, z: float, n: int) -> complex:
    """On-axis Rayleigh-Sommerfeld integral of a rotationally symmetric aperture."""
    k = 2 * np.pi / wavelength
    r = np.linspace(0.0, radius, n)
    rho = np.sqrt(r**2 + z**2)
    kern = -(z / rho**2) * (1j * k - 1.0 / rho) * np.exp(1j * k * rho)
    return complex(trapezoid(radial_amplitude(r) * kern * r, r))


def _radial_background(pr: LensPrescription, table: EfficiencyTable, wavelength: float,
                       residual_amplitude) -> float:
    e1 = float(modulation_efficiency(CLASS_1, wavelength, table))
    e2 = float(modulation_efficiency(CLASS_2, wavelength, table))
    k = 2 * np.pi / wavelength
    f = pr.focal_length

    def illum(r):
        return illumination_amplitude(pr, r, np.zeros_like(r))

    def converted(r):
        # checkerboard zero order: mean of the two sub-lattices
        p1 = hyperbolic_phase(r, 0.0, f, pr.lambda1)
        p2 = hyperbolic_phase(r, 0.0, f, pr.lambda2)
        return illum(r) * 0.5 * (np.sqrt(e1) * np.exp(1j * p1) + np.sqrt(e2) * np.exp(1j * p2))

    if residual_amplitude is None:
        res = 0.5 * (np.sqrt(1 - e1) + np.sqrt(1 - e2))
    else:
        res = float(np.mean(residual_amplitude))

    def residual(r):
        return illum(r) * res

    # resolve the fastest fringe (k*NA) with >= 8 samples
    n = int(8 * k * pr.numerical_aperture * pr.radius / (2 * np.pi)) + 2001
    span = 40 * wavelength / pr.numerical_aperture**2
    opt = minimize_scalar(lambda z: -abs(_rs_on_axis(converted, pr.radius, wavelength, z, n)) ** 2,
                          bounds=(f - span, f + span), method="bounded",
                          options={"xatol": wavelength / 50})
    z_best = float(opt.x)
    conv = abs(_rs_on_axis(converted, pr.radius, wavelength, z_best, n)) ** 2
    if conv == 0:
        return 0.0
    back = abs(_rs_on_axis(residual, pr.radius, wavelength, z_best, n)) ** 2
    return back / conv


def unmodulated_background(layout: LayoutTable, table: EfficiencyTable, wavelength: float,
                           residual_amplitude: float | np.ndarray | None = None,
                           method: Literal["auto", "grid", "radial"] = "auto",
                           n_planes: int = 61) -> float:
    """On-axis intensity of the unconverted light at focus over the focal peak.

    ``method="grid"`` propagates both channels on the full FFT grid;
    ``method="radial"`` integrates the azimuthally averaged aperture fields
    on axis (Rayleigh-Sommerfeld), which is the only practical route for a
    millimetre aperture.  ``"auto"`` picks grid when it fits in memory.
    """
    if residual_amplitude is not None and np.all(np.asarray(residual_amplitude) == 0):
        return 0.0
    pr = layout.prescription
    if method == "auto":
        n_lat = len(lattice_coordinates(pr)[0])
        method = "grid" if 2 * n_lat <= MAX_DESK_GRID else "radial"
    if method == "radial":
        return _radial_background(pr, table, wavelength, residual_amplitude)
    conv = synthesize_aperture_field(layout, table, wavelength)
    stack = focus_scan(conv, pr.focal_length, n_planes=n_planes)
    z_best, peak = _best_focus(stack)
    res = synthesize_aperture_field(layout, table, wavelength, channel="residual",
                                    residual_amplitude=residual_amplitude)
    back = abs(_SpectralEvaluator(res, "exact").on_axis(z_best)) ** 2
    return float(back / peak)
