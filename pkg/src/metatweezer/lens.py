"""Dual-wavelength geometric-phase metalens layout.

The lens is a square lattice of nanobricks clipped to a circular aperture.
Bricks are split between two size classes in a checkerboard ("cross")
pattern; class 1 addresses ``lambda1`` and class 2 addresses ``lambda2``.
Each brick is rotated by half of the hyperbolic focusing phase evaluated at
its own class's design wavelength.

Note on the focusing phase: the profile is
``2*pi/lambda * (f - sqrt(x**2 + y**2 + f**2))``, i.e. equal optical path to
an on-axis focus at distance ``f``.  A ``- f**2`` under the radical would be
imaginary near the axis.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Iterator, Literal

import numpy as np

CLASS_1 = 1
CLASS_2 = 2

#: Brick footprints (length, width) in meters for the 852 nm and 780 nm classes.
DEFAULT_FOOTPRINTS = {
    CLASS_1: (250e-9, 140e-9),
    CLASS_2: (160e-9, 110e-9),
}

DEFAULT_PITCH = 400e-9
DEFAULT_SUBSTRATE = 10e-3
DEVICE_NA = 0.46


def focal_length_for_na(diameter: float, na: float) -> float:
    """Focal length putting the aperture edge at ``asin(na)`` from the axis."""
    radius = diameter / 2
    return radius * np.sqrt(1.0 - na**2) / na


@dataclass(frozen=True)
class LensPrescription:
    focal_length: float
    diameter: float
    lambda1: float = 852e-9
    lambda2: float = 780e-9
    pitch: float = DEFAULT_PITCH
    illumination: Literal["flat-top", "gaussian"] = "flat-top"
    gauss_radius: float | None = None
    substrate_size: float = DEFAULT_SUBSTRATE
    centered_site: bool = True

    def __post_init__(self):
        if not self.focal_length > 0:
            raise ValueError("focal_length must be positive")
        if not self.diameter > 0:
            raise ValueError("diameter must be positive")
        if self.lambda1 <= 0 or self.lambda2 <= 0:
            raise ValueError("wavelengths must be positive")
        if self.lambda1 == self.lambda2:
            raise ValueError("the two design wavelengths must differ")
        if self.illumination not in ("flat-top", "gaussian"):
            raise ValueError(f"unknown illumination {self.illumination!r}")
        if self.illumination == "gaussian" and self.gauss_radius is None:
            object.__setattr__(self, "gauss_radius", self.diameter / 2)

    @property
    def radius(self) -> float:
        return self.diameter / 2

    @property
    def numerical_aperture(self) -> float:
        return self.radius / np.hypot(self.radius, self.focal_length)

    def wavelength(self, cls: int) -> float:
        return self.lambda1 if cls == CLASS_1 else self.lambda2

    def with_illumination(self, illumination: str, gauss_radius: float | None = None):
        return replace(self, illumination=illumination, gauss_radius=gauss_radius)


def desk_prescription(diameter: float = 200e-6, na: float = DEVICE_NA, **kwargs) -> LensPrescription:
    """Scaled-down lens with the device NA, small enough for a full FFT grid."""
    return LensPrescription(focal_length_for_na(diameter, na), diameter, **kwargs)


def device_prescription(**kwargs) -> LensPrescription:
    """Full 2 mm aperture with the focal length that gives NA 0.46 in vacuum."""
    return LensPrescription(focal_length_for_na(2e-3, DEVICE_NA), 2e-3, **kwargs)


@dataclass(frozen=True)
class NanobrickSpec:
    x: float
    y: float
    cls: int
    theta: float
    length: float
    width: float


@dataclass(frozen=True)
class LayoutTable:
    """Columnar brick table in row-major lattice order (y slowest)."""

    prescription: LensPrescription
    x: np.ndarray
    y: np.ndarray
    cls: np.ndarray
    theta: np.ndarray
    row: np.ndarray
    col: np.ndarray
    pattern: str = "checkerboard"

    def __len__(self) -> int:
        return len(self.x)

    @property
    def length(self) -> np.ndarray:
        return np.where(self.cls == CLASS_1, DEFAULT_FOOTPRINTS[CLASS_1][0],
                        DEFAULT_FOOTPRINTS[CLASS_2][0])

    @property
    def width(self) -> np.ndarray:
        return np.where(self.cls == CLASS_1, DEFAULT_FOOTPRINTS[CLASS_1][1],
                        DEFAULT_FOOTPRINTS[CLASS_2][1])

    def class_counts(self) -> dict[int, int]:
        return {c: int(np.sum(self.cls == c)) for c in (CLASS_1, CLASS_2)}

    def bricks(self) -> Iterator[NanobrickSpec]:
        length, width = self.length, self.width
        for i in range(len(self)):
            yield NanobrickSpec(float(self.x[i]), float(self.y[i]), int(self.cls[i]),
                                float(self.theta[i]), float(length[i]), float(width[i]))


def hyperbolic_phase(x, y, focal_length: float, wavelength: float):
    """Focusing phase wrapped to ``[0, 2*pi)``."""
    if focal_length <= 0 or wavelength <= 0:
        raise ValueError("focal_length and wavelength must be positive")
    r2 = np.asarray(x, dtype=float) ** 2 + np.asarray(y, dtype=float) ** 2
    # f - sqrt(r2 + f^2) written without cancellation
    path = -r2 / (focal_length + np.sqrt(r2 + focal_length**2))
    return np.mod(2 * np.pi / wavelength * path, 2 * np.pi)


def rotation_from_phase(phase):
    """Brick angle in ``[0, pi)`` producing the geometric phase ``phase``."""
    return np.mod(np.asarray(phase, dtype=float) / 2.0, np.pi)


def assign_partition(rows, cols) -> np.ndarray:
    """Checkerboard two-colouring of lattice indices: class 1 on even ``row+col``."""
    parity = (np.asarray(rows) + np.asarray(cols)) % 2
    return np.where(parity == 0, CLASS_1, CLASS_2).astype(np.int8)


def lattice_coordinates(prescription: LensPrescription) -> tuple[np.ndarray, np.ndarray]:
    """1-D lattice coordinates covering the aperture (same along x and y)."""
    p = prescription.pitch
    if p <= 0:
        raise ValueError("pitch must be positive")
    m = int(np.floor(prescription.radius / p + 1e-9))
    if prescription.centered_site:
        idx = np.arange(-m, m + 1)
        coords = idx * p
    else:
        idx = np.arange(-m - 1, m + 1)
        coords = (idx + 0.5) * p
    return idx, coords


def generate_layout(prescription: LensPrescription) -> LayoutTable:
    pr = prescription
    if pr.pitch <= 0:
        raise ValueError("pitch must be positive")
    if pr.diameter > pr.substrate_size:
        raise ValueError(
            f"aperture {pr.diameter:g} m exceeds the substrate {pr.substrate_size:g} m")
    if pr.pitch > min(pr.lambda1, pr.lambda2) / 1.5:
        warnings.warn("lattice pitch exceeds min(lambda)/1.5; diffraction orders may propagate",
                      stacklevel=2)
    idx, coords = lattice_coordinates(pr)
    n_lattice = len(idx)
    # row-major: y index varies slowest
    row, col = np.divmod(np.arange(n_lattice * n_lattice), n_lattice)
    x = coords[col]
    y = coords[row]
    inside = x**2 + y**2 <= pr.radius**2 * (1 + 1e-12)
    row, col, x, y = row[inside], col[inside], x[inside], y[inside]
    cls = assign_partition(idx[row], idx[col])
    theta = np.empty_like(x)
    for c in (CLASS_1, CLASS_2):
        sel = cls == c
        theta[sel] = rotation_from_phase(
            hyperbolic_phase(x[sel], y[sel], pr.focal_length, pr.wavelength(c)))
    return LayoutTable(pr, x, y, cls, theta, row.astype(np.int64), col.astype(np.int64))


@dataclass(frozen=True)
class EfficiencyTable:
    wavelengths: np.ndarray
    class1: np.ndarray
    class2: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.wavelengths, dtype=float)
        e1 = np.asarray(self.class1, dtype=float)
        e2 = np.asarray(self.class2, dtype=float)
        if lam.ndim != 1 or len(lam) < 2 or e1.shape != lam.shape or e2.shape != lam.shape:
            raise ValueError("efficiency table needs matching 1-D columns of length >= 2")
        if np.any(np.diff(lam) <= 0):
            raise ValueError("table wavelengths must be strictly increasing")
        if np.any((e1 < 0) | (e1 > 1) | (e2 < 0) | (e2 > 1)):
            raise ValueError("efficiencies must lie in [0, 1]")
        for name, val in (("wavelengths", lam), ("class1", e1), ("class2", e2)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    def curve(self, cls: int) -> np.ndarray:
        return self.class1 if cls == CLASS_1 else self.class2

    def peak_wavelength(self, cls: int) -> float:
        return float(self.wavelengths[np.argmax(self.curve(cls))])

    @classmethod
    def ideal(cls, lo: float = 600e-9, hi: float = 1000e-9) -> "EfficiencyTable":
        lam = np.array([lo, hi])
        return cls(lam, np.ones(2), np.ones(2))


def _skewed_peak(lam, center, height, sigma_lo, sigma_hi):
    sigma = np.where(lam < center, sigma_lo, sigma_hi)
    return height * np.exp(-0.5 * ((lam - center) / sigma) ** 2)


def default_efficiency_table() -> EfficiencyTable:
    """Smooth stand-in curves for the two brick classes.

    Class 1 peaks at 852 nm, class 2 at 720 nm (shifted blue of 780 nm to cut
    crosstalk).  Heights are set so each partitioned lens focuses roughly a
    fifth of the incident light, and each class beats the other by more than
    3x at its own design wavelength.
    """
    lam = np.arange(600e-9, 1000.5e-9, 1e-9)
    e1 = _skewed_peak(lam, 852e-9, 0.92, 40e-9, 80e-9)
    e2 = _skewed_peak(lam, 720e-9, 0.95, 100e-9, 80e-9)
    return EfficiencyTable(lam, e1, e2)


def modulation_efficiency(cls: int, wavelength: float, table: EfficiencyTable):
    """Linearly interpolated conversion efficiency of a brick class."""
    lam = np.asarray(wavelength, dtype=float)
    lo, hi = table.wavelengths[0], table.wavelengths[-1]
    if np.any(lam < lo * (1 - 1e-12)) or np.any(lam > hi * (1 + 1e-12)):
        raise ValueError(f"wavelength outside the table range [{lo:g}, {hi:g}] m")
    return np.clip(np.interp(lam, table.wavelengths, table.curve(cls)), 0.0, 1.0)
