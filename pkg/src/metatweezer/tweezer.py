"""Optical-tweezer bookkeeping: dipole potential, trap frequencies,
fluorescence collection and the fictitious magnetic field.

All quantities are SI.  Depths are negative energies for a red-detuned
trap; :attr:`TrapParameters.depth_mk` reports ``|U0|/k_B`` in millikelvin.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.constants as const
from scipy.integrate import quad

Pattern = Literal["isotropic", "circular-dipole"]


class ResonanceError(ValueError):
    """Trap wavelength coincides with an atomic line."""


@dataclass(frozen=True)
class AtomSpecies:
    name: str
    mass: float
    d1_wavelength: float
    d2_wavelength: float
    d1_gamma: float
    d2_gamma: float
    #: cycling-transition saturation intensity (W/m^2)
    saturation_intensity: float = 0.0

    def __post_init__(self):
        for key in ("mass", "d1_wavelength", "d2_wavelength", "d1_gamma", "d2_gamma"):
            if not getattr(self, key) > 0:
                raise ValueError(f"{key} must be positive")


# D-line data from Steck, "Rubidium 87 D Line Data" (rev. 2.2.2)
RB87 = AtomSpecies(
    name="87Rb",
    mass=1.443160648e-25,
    d1_wavelength=794.978851156e-9,
    d2_wavelength=780.241209686e-9,
    d1_gamma=2 * np.pi * 5.7500e6,
    d2_gamma=2 * np.pi * 6.0666e6,
    saturation_intensity=16.6933,
)


def peak_intensity(power: float, concentration: float, waist: float) -> float:
    """Peak intensity ``2*zeta*P/(pi*w0**2)`` of the useful central lobe."""
    if power < 0:
        raise ValueError("power must be non-negative")
    if not 0 < concentration <= 1:
        raise ValueError("concentration factor must lie in (0, 1]")
    if waist <= 0:
        raise ValueError("waist must be positive")
    return 2 * concentration * power / (np.pi * waist**2)


def _line_term(omega, omega0, gamma, counter_rotating):
    detuning = omega - omega0
    if abs(detuning) <= 1e-12 * omega0:
        raise ResonanceError("trap light is resonant with an atomic line")
    term = 1.0 / detuning
    if counter_rotating:
        term -= 1.0 / (omega + omega0)
    return gamma / omega0**3 * term


def dipole_potential(intensity, wavelength: float, species: AtomSpecies = RB87,
                     counter_rotating: bool = False):
    """AC Stark shift of the ground state from the D1 and D2 lines.

    ``U = (pi c^2 / 2) [2 G2/(w2^3 D2) + G1/(w1^3 D1)] I`` with detunings
    ``D = w_trap - w_line`` (negative, hence U < 0, for red detuning).
    ``counter_rotating`` adds the ``-1/(w + w_line)`` terms.
    """
    omega = 2 * np.pi * const.c / wavelength
    w1 = 2 * np.pi * const.c / species.d1_wavelength
    w2 = 2 * np.pi * const.c / species.d2_wavelength
    coeff = np.pi * const.c**2 / 2 * (
        2 * _line_term(omega, w2, species.d2_gamma, counter_rotating)
        + _line_term(omega, w1, species.d1_gamma, counter_rotating))
    return coeff * np.asarray(intensity, dtype=float)


def to_millikelvin(energy: float) -> float:
    return energy / const.k * 1e3


def trap_frequencies(depth: float, waist: float, rayleigh_length: float,
                     mass: float) -> tuple[float, float]:
    """Radial and axial angular frequencies of the harmonic approximation."""
    u = abs(depth)
    if u == 0:
        raise ValueError("trap depth must be nonzero")
    omega_r = np.sqrt(4 * u / (mass * waist**2))
    omega_z = np.sqrt(2 * u / (mass * rayleigh_length**2))
    return float(omega_r), float(omega_z)


@dataclass(frozen=True)
class TrapParameters:
    depth: float
    waist: float
    rayleigh_length: float
    concentration: float
    omega_radial: float
    omega_axial: float
    peak_intensity: float
    power: float
    wavelength: float

    @property
    def depth_mk(self) -> float:
        return to_millikelvin(abs(self.depth))

    def as_dict(self) -> dict:
        return {
            "depth_J": self.depth,
            "depth_mK": self.depth_mk,
            "waist_m": self.waist,
            "rayleigh_length_m": self.rayleigh_length,
            "concentration": self.concentration,
            "omega_radial_rad_s": self.omega_radial,
            "omega_axial_rad_s": self.omega_axial,
            "peak_intensity_W_m2": self.peak_intensity,
            "power_W": self.power,
            "wavelength_m": self.wavelength,
        }


def trap_parameters(power: float, concentration: float, waist: float, rayleigh_length: float,
                    wavelength: float = 852e-9, species: AtomSpecies = RB87,
                    counter_rotating: bool = False) -> TrapParameters:
    intensity = peak_intensity(power, concentration, waist)
    depth = float(dipole_potential(intensity, wavelength, species, counter_rotating))
    if depth == 0:
        omega_r = omega_z = 0.0
    else:
        omega_r, omega_z = trap_frequencies(depth, waist, rayleigh_length, species.mass)
    return TrapParameters(depth, waist, rayleigh_length, concentration, omega_r, omega_z,
                          intensity, power, wavelength)


# ------------------------------------------------------------- collection


def collection_efficiency(na: float, pattern: Pattern = "isotropic") -> float:
    """Fraction of emitted photons inside the collection cone of ``na``.

    ``isotropic`` is the bare solid-angle fraction.  ``circular-dipole``
    weights directions by ``(1 + cos^2 theta)/2``, the emission of a
    sigma transition about the lens axis.
    """
    if not 0 <= na < 1:
        raise ValueError("numerical aperture must lie in [0, 1)")
    c = np.sqrt(1 - na**2)
    if pattern == "isotropic":
        return float((1 - c) / 2)
    if pattern == "circular-dipole":
        # closed form of the normalized cone integral
        return float(((1 - c) / 2 + (1 - c**3) / 6) / (4 / 3))
    raise ValueError(f"unknown emission pattern {pattern!r}")


def _collection_quadrature(na: float, pattern: Pattern) -> float:
    weight = (lambda t: 1.0) if pattern == "isotropic" else (lambda t: (1 + np.cos(t) ** 2) / 2)
    total = quad(lambda t: weight(t) * np.sin(t), 0, np.pi)[0]
    cone = quad(lambda t: weight(t) * np.sin(t), 0, np.arcsin(na))[0]
    return cone / total


@dataclass(frozen=True)
class CollectionModel:
    """Detection chain for fluorescence through one lens.

    ``efficiency`` overrides the solid-angle value computed from ``na``.
    """

    na: float
    transmission: float = 1.0
    concentration: float = 1.0
    pattern: Pattern = "isotropic"
    path_factor: float = 1.0
    efficiency: float | None = None

    def __post_init__(self):
        if not 0 < self.na < 1:
            raise ValueError("numerical aperture must lie in (0, 1)")
        for key in ("transmission", "concentration", "path_factor"):
            if not 0 <= getattr(self, key) <= 1:
                raise ValueError(f"{key} must lie in [0, 1]")
        if self.efficiency is not None and not 0 <= self.efficiency <= 1:
            raise ValueError("efficiency must lie in [0, 1]")

    @property
    def eta(self) -> float:
        if self.efficiency is not None:
            return self.efficiency
        return collection_efficiency(self.na, self.pattern)

    @property
    def throughput(self) -> float:
        return self.eta * self.transmission * self.concentration * self.path_factor


def count_ratio(metalens: CollectionModel, objective: CollectionModel) -> float:
    """Expected detected-count ratio ``(eta t zeta path)_m / (eta t zeta path)_o``."""
    denom = objective.throughput
    if denom == 0:
        raise ZeroDivisionError("objective collection throughput is zero")
    return metalens.throughput / denom


#: Metalens and objective channels with measured efficiencies, transmissions and
#: concentrations (beamsplitter factor left at 1).
METALENS_CHANNEL = CollectionModel(na=0.46, transmission=0.22, concentration=0.33, efficiency=0.040)
OBJECTIVE_CHANNEL = CollectionModel(na=0.28, transmission=0.8, concentration=1.0, efficiency=0.015)


# ------------------------------------------------------- fictitious field


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    slope_err: float
    intercept_err: float
    residuals: np.ndarray

    def __call__(self, x):
        return self.intercept + self.slope * np.asarray(x)

    @property
    def residual_norm(self) -> float:
        return float(np.linalg.norm(self.residuals))


def optimal_bias_linear_fit(points) -> LinearFit:
    """Ordinary least-squares line through ``(power, optimal bias)`` points."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be (P, B) pairs")
    p, b = pts[:, 0], pts[:, 1]
    if len(np.unique(p)) < 2:
        raise ValueError("need at least two distinct powers")
    A = np.column_stack([p, np.ones_like(p)])
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    resid = b - A @ coef
    dof = len(p) - 2
    if dof > 0:
        s2 = float(resid @ resid) / dof
        cov = s2 * np.linalg.inv(A.T @ A)
        errs = np.sqrt(np.diag(cov))
    else:
        errs = np.zeros(2)
    return LinearFit(float(coef[0]), float(coef[1]), float(errs[0]), float(errs[1]), resid)


@dataclass(frozen=True)
class FictitiousFieldModel:
    """``B_F = beta * P``; the longest lifetime is expected at ``B_z + B_F = 0``."""

    beta: float
    waist: float
    bias: float = 0.0

    @classmethod
    def from_linear_fit(cls, fit: LinearFit, waist: float, bias: float = 0.0):
        # B_opt(P) = -B_F(P) + offset, so beta is minus the fitted slope
        return cls(beta=-fit.slope, waist=waist, bias=bias)


def fictitious_field(power: float, model: FictitiousFieldModel) -> tuple[float, float]:
    """Fictitious field (tesla) and its gradient scale ``B_F/w0`` (tesla/m)."""
    b_f = model.beta * power
    return b_f, b_f / model.waist


def total_axial_field(power: float, model: FictitiousFieldModel) -> float:
    return model.bias + fictitious_field(power, model)[0]
