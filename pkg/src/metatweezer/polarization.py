"""Jones calculus for the geometric-phase metalens.

Conventions
-----------
Linear basis components are (E_H, E_V).  Circular states are defined in
that basis by ``LCP = (1, +i)/sqrt(2)`` and ``RCP = (1, -i)/sqrt(2)``; the
columns of :data:`LINEAR_FROM_CIRCULAR` are (LCP, RCP) in that order.
With this choice the circular Stokes component ``S3 = 2 Im(E_H* E_V)`` is
positive for left-handed light.

Linear polarization is reported with ellipticity 0.  Global phase is not
observable, so :meth:`JonesVector.equivalent` compares states up to it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

Basis = Literal["linear", "circular"]

_S = 1.0 / np.sqrt(2.0)
LCP_LINEAR = np.array([_S, 1j * _S])
RCP_LINEAR = np.array([_S, -1j * _S])
#: Columns are LCP and RCP expressed in the (H, V) basis.
LINEAR_FROM_CIRCULAR = np.column_stack([LCP_LINEAR, RCP_LINEAR])
CIRCULAR_FROM_LINEAR = LINEAR_FROM_CIRCULAR.conj().T

# Index of each handedness in a circular-basis vector.
LCP_INDEX = 0
RCP_INDEX = 1


class NoSignalError(ValueError):
    """Both measured powers are zero."""


class UndefinedRatioError(ValueError):
    """The p/s power ratio has a zero denominator."""


@dataclass(frozen=True)
class JonesVector:
    amplitudes: np.ndarray
    basis: Basis = "linear"

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex).reshape(2)
        if not np.all(np.isfinite(a)):
            raise ValueError("Jones amplitudes must be finite")
        if self.basis not in ("linear", "circular"):
            raise ValueError(f"unknown basis {self.basis!r}")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def horizontal(cls) -> "JonesVector":
        return cls(np.array([1.0, 0.0]))

    @classmethod
    def vertical(cls) -> "JonesVector":
        return cls(np.array([0.0, 1.0]))

    @classmethod
    def left(cls) -> "JonesVector":
        return cls(LCP_LINEAR)

    @classmethod
    def right(cls) -> "JonesVector":
        return cls(RCP_LINEAR)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @property
    def power(self) -> float:
        return self.norm**2

    @property
    def is_zero(self) -> bool:
        return self.norm == 0.0

    def to_linear(self) -> "JonesVector":
        if self.basis == "linear":
            return self
        return JonesVector(LINEAR_FROM_CIRCULAR @ self.amplitudes, "linear")

    def to_circular(self) -> "JonesVector":
        if self.basis == "circular":
            return self
        return JonesVector(CIRCULAR_FROM_LINEAR @ self.amplitudes, "circular")

    def to_basis(self, basis: Basis) -> "JonesVector":
        return self.to_linear() if basis == "linear" else self.to_circular()

    def stokes(self) -> tuple[float, float, float, float]:
        """Stokes parameters (S0, S1, S2, S3) of the state."""
        ex, ey = self.to_linear().amplitudes
        s0 = abs(ex) ** 2 + abs(ey) ** 2
        s1 = abs(ex) ** 2 - abs(ey) ** 2
        s2 = 2.0 * (np.conj(ex) * ey).real
        s3 = 2.0 * (np.conj(ex) * ey).imag
        return float(s0), float(s1), float(s2), float(s3)

    def equivalent(self, other: "JonesVector", rtol: float = 1e-9) -> bool:
        """True if the two states agree up to a global phase."""
        a = self.to_linear().amplitudes
        b = other.to_linear().amplitudes
        scale = max(np.linalg.norm(a), np.linalg.norm(b))
        if scale == 0.0:
            return True
        overlap = np.vdot(b, a)
        phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
        return bool(np.linalg.norm(a - phase * b) <= rtol * scale)


@dataclass(frozen=True)
class JonesMatrix:
    matrix: np.ndarray
    basis: Basis = "linear"

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex).reshape(2, 2)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __matmul__(self, other):
        if isinstance(other, JonesMatrix):
            return JonesMatrix(self.matrix @ other.to_basis(self.basis).matrix, self.basis)
        if isinstance(other, JonesVector):
            return JonesVector(self.matrix @ other.to_basis(self.basis).amplitudes, self.basis)
        return NotImplemented

    def to_linear(self) -> "JonesMatrix":
        if self.basis == "linear":
            return self
        U = LINEAR_FROM_CIRCULAR
        return JonesMatrix(U @ self.matrix @ U.conj().T, "linear")

    def to_circular(self) -> "JonesMatrix":
        if self.basis == "circular":
            return self
        U = LINEAR_FROM_CIRCULAR
        return JonesMatrix(U.conj().T @ self.matrix @ U, "circular")

    def to_basis(self, basis: Basis) -> "JonesMatrix":
        return self.to_linear() if basis == "linear" else self.to_circular()

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.matrix, compute_uv=False)

    def unitarity_error(self) -> float:
        m = self.matrix
        return float(np.linalg.norm(m.conj().T @ m - np.eye(2)))


@dataclass(frozen=True)
class PolarizationReport:
    ellipticity: float
    orientation: float
    handedness: Literal["left", "right", "linear"]
    p_power: float
    s_power: float

    def reconstruct(self) -> JonesVector:
        """Unit-power state with this ellipse, defined up to global phase."""
        sign = {"left": 1.0, "right": -1.0, "linear": 0.0}[self.handedness]
        local = np.array([np.cos(self.ellipticity), 1j * sign * np.sin(self.ellipticity)])
        return JonesVector(rotation(self.orientation) @ local)


def rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def waveplate(retardance: float, fast_axis: float) -> JonesMatrix:
    """Linear retarder with its fast axis at ``fast_axis`` from horizontal.

    The slow axis acquires ``exp(i*retardance)`` relative to the fast axis,
    so a half-wave plate at angle t is ``R(t) diag(1, -1) R(-t)``.
    """
    core = np.diag([1.0, np.exp(1j * retardance)])
    R = rotation(fast_axis)
    return JonesMatrix(R @ core @ R.T)


def quarter_wave_plate(fast_axis: float) -> JonesMatrix:
    return waveplate(np.pi / 2, fast_axis)


def half_wave_plate(fast_axis: float) -> JonesMatrix:
    return waveplate(np.pi, fast_axis)


def nanobrick_element(rotation_angle: float, conversion_amplitude: float = 1.0,
                      residual_amplitude: float = 0.0) -> JonesMatrix:
    """Jones matrix of a rotated nanobrick acting as a lossy half-wave retarder.

    The converted channel flips handedness and carries the geometric phase
    ``2 * rotation_angle``; the unconverted channel keeps the input
    handedness.  The residual is added in quadrature phase (as in a real
    retarder, ``cos(d/2) I - i sin(d/2) H``) so the singular values are both
    ``sqrt(conversion**2 + residual**2)``.
    """
    c, r = float(conversion_amplitude), float(residual_amplitude)
    if c < 0 or r < 0 or c > 1 or r > 1:
        raise ValueError("amplitudes must lie in [0, 1]")
    if c * c + r * r > 1.0 + 1e-12:
        raise ValueError(
            f"conversion**2 + residual**2 = {c * c + r * r:.6g} exceeds 1")
    m = c * half_wave_plate(rotation_angle).matrix + 1j * r * np.eye(2)
    return JonesMatrix(m)


def converted_amplitude(element: JonesMatrix) -> complex:
    """Amplitude <RCP|M|LCP> of the handedness-converted channel."""
    return complex(element.to_circular().matrix[RCP_INDEX, LCP_INDEX])


def ellipticity_from_powers(p_power: float, s_power: float) -> float:
    """Ellipticity ``arccot(sqrt(P_p / P_s))`` of an analyzer measurement."""
    if p_power < 0 or s_power < 0:
        raise ValueError("powers must be non-negative")
    if p_power == 0 and s_power == 0:
        raise NoSignalError("no signal: both powers are zero")
    if s_power == 0:
        raise UndefinedRatioError("P_s = 0 leaves P_p/P_s undefined")
    # arccot(x) = arctan(1/x), continuous at P_p = 0
    return float(np.arctan2(np.sqrt(s_power), np.sqrt(p_power)))


def analyze(state: JonesVector) -> PolarizationReport:
    """Ellipse parameters of a pure state.

    ``p_power`` and ``s_power`` are the powers along the major and minor
    axes, so ``ellipticity == arctan(sqrt(s/p))`` lies in ``[0, pi/4]``.
    """
    if state.is_zero:
        raise ValueError("cannot analyze the zero state")
    s0, s1, s2, s3 = state.stokes()
    orientation = 0.5 * np.arctan2(s2, s1)
    chi = 0.5 * np.arcsin(np.clip(s3 / s0, -1.0, 1.0))
    ell = abs(chi)
    tol = 1e-12
    if ell < tol:
        handedness = "linear"
        ell = 0.0
    else:
        handedness = "left" if s3 > 0 else "right"
    p_power = s0 * np.cos(ell) ** 2
    s_power = s0 * np.sin(ell) ** 2
    return PolarizationReport(float(ell), float(orientation), handedness,
                              float(p_power), float(s_power))
