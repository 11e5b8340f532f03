"""Two-level state representations, SU(2) rotations and the fidelity metric.

Conventions
-----------
|psi> = cos(theta/2)|0> + exp(i phi) sin(theta/2)|1>, Bloch vector
(sin theta cos phi, sin theta sin phi, cos theta). A rotation by ``angle``
about the unit axis n is U = exp(-i angle n.sigma / 2), which turns the Bloch
vector right-handedly about n. Global phase is discarded everywhere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NormViolationError, ValidationError

TWO_PI = 2.0 * math.pi
POLE_TOL = 1e-12

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def wrap_angle(x):
    """Wrap an angle (or array of angles) into (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + math.pi, TWO_PI) - math.pi
    y = np.where(y <= -math.pi, y + TWO_PI, y)
    if np.ndim(y) == 0:
        return float(y)
    return y


@dataclass(frozen=True)
class PureState:
    """Pure qubit state by its polar angle ``theta`` and azimuth ``phi`` (radians)."""

    theta: float
    phi: float = 0.0

    def __post_init__(self):
        theta = float(self.theta)
        phi = float(self.phi)
        if not (math.isfinite(theta) and math.isfinite(phi)):
            raise ValidationError(f"non-finite state angles ({theta}, {phi})")
        if theta < -POLE_TOL or theta > math.pi + POLE_TOL:
            raise ValidationError(f"theta={theta} outside [0, pi]")
        theta = min(max(theta, 0.0), math.pi)
        phi = math.fmod(phi, TWO_PI)
        if phi < 0.0:
            phi += TWO_PI
        if phi >= TWO_PI:
            phi = 0.0
        if math.sin(theta) < POLE_TOL:
            phi = 0.0
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi)

    @classmethod
    def from_degrees(cls, theta_deg, phi_deg=0.0):
        return cls(math.radians(theta_deg), math.radians(phi_deg))

    @classmethod
    def from_angles(cls, theta, phi):
        """Build a state from arbitrary angles, folding theta back into [0, pi]."""
        theta = math.fmod(float(theta), TWO_PI)
        if theta < 0.0:
            theta = -theta
            phi = phi + math.pi
        if theta > math.pi:
            theta = TWO_PI - theta
            phi = phi + math.pi
        return cls(theta, phi)

    @property
    def degrees(self):
        return math.degrees(self.theta), math.degrees(self.phi)

    def ket(self):
        return np.array(
            [math.cos(self.theta / 2), np.exp(1j * self.phi) * math.sin(self.theta / 2)]
        )


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ("x", "y", "z"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.norm() > 1.0 + 1e-12:
            raise NormViolationError(f"Bloch vector norm {self.norm()} exceeds 1")

    def norm(self):
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def as_array(self):
        return np.array([self.x, self.y, self.z])

    @classmethod
    def from_array(cls, v):
        return cls(*np.asarray(v, dtype=float))


X_AXIS = BlochVector(1.0, 0.0, 0.0)
Y_AXIS = BlochVector(0.0, 1.0, 0.0)
Z_AXIS = BlochVector(0.0, 0.0, 1.0)


class DensityMatrix:
    """Immutable 2x2 density matrix.

    Validated on construction: Hermitian, unit trace and positive semidefinite,
    each to 1e-12.
    """

    __slots__ = ("_m",)

    def __init__(self, matrix):
        m = np.array(matrix, dtype=complex).reshape(2, 2)
        if not np.all(np.isfinite(m)):
            raise ValidationError("density matrix has non-finite entries")
        if abs(m[0, 1] - np.conj(m[1, 0])) > 1e-12 or abs(m[0, 0].imag) > 1e-12 \
                or abs(m[1, 1].imag) > 1e-12:
            raise ValidationError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1.0) > 1e-12:
            raise ValidationError(f"density matrix trace {np.trace(m).real} != 1")
        if np.linalg.eigvalsh(m).min() < -1e-12:
            raise ValidationError("density matrix is not positive semidefinite")
        m.flags.writeable = False
        self._m = m

    @property
    def matrix(self):
        return self._m

    def entries(self):
        """Row-major tuple of the four complex entries."""
        return tuple(complex(v) for v in self._m.ravel())

    def purity(self):
        return float(np.trace(self._m @ self._m).real)

    def __repr__(self):
        return f"DensityMatrix({self._m.tolist()!r})"

    def __eq__(self, other):
        return isinstance(other, DensityMatrix) and np.array_equal(self._m, other._m)

    def __hash__(self):
        return hash(self.entries())


MAXIMALLY_MIXED = DensityMatrix(np.eye(2) / 2)


def pure_to_density(s: PureState) -> DensityMatrix:
    psi = s.ket()
    rho = np.outer(psi, psi.conj())
    # exact Hermitian symmetry and real diagonal
    rho = 0.5 * (rho + rho.conj().T)
    rho[0, 0] = rho[0, 0].real
    rho[1, 1] = rho[1, 1].real
    return DensityMatrix(rho)


def pure_to_bloch(s: PureState) -> BlochVector:
    st = math.sin(s.theta)
    return BlochVector(st * math.cos(s.phi), st * math.sin(s.phi), math.cos(s.theta))


def bloch_to_pure(v: BlochVector) -> PureState:
    n = v.norm()
    if abs(n - 1.0) > 1e-9:
        raise NormViolationError(f"Bloch vector norm {n} is not 1")
    theta = math.atan2(math.hypot(v.x, v.y), v.z)
    phi = math.atan2(v.y, v.x)
    return PureState(theta, phi)


def fidelity(rho_th: DensityMatrix, rho_exp: DensityMatrix) -> float:
    """Normalized Hilbert-Schmidt overlap Tr(a b) / sqrt(Tr(a^2) Tr(b^2))."""
    if not (isinstance(rho_th, DensityMatrix) and isinstance(rho_exp, DensityMatrix)):
        raise ValidationError("fidelity expects two DensityMatrix instances")
    a, b = rho_th.matrix, rho_exp.matrix
    # Tr(AB) for Hermitian A, B is sum(A * conj(B)), which is symmetric bit-for-bit
    overlap = float(np.sum(a * b.conj()).real)
    norm = math.sqrt(rho_th.purity() * rho_exp.purity())
    return min(max(overlap / norm, 0.0), 1.0)


def state_fidelity(a: PureState, b: PureState) -> float:
    return fidelity(pure_to_density(a), pure_to_density(b))


def bloch_fidelity(va, vb):
    """Vectorized pure-state fidelity (1 + va.vb) / 2 for Bloch vectors on the last axis."""
    dot = np.sum(np.asarray(va) * np.asarray(vb), axis=-1)
    return np.clip(0.5 * (1.0 + dot), 0.0, 1.0)


def su2_matrix(axis: BlochVector, angle: float):
    n = axis.as_array()
    if abs(np.linalg.norm(n) - 1.0) > 1e-9:
        raise ValidationError(f"rotation axis norm {np.linalg.norm(n)} is not 1")
    n_sigma = n[0] * PAULI_X + n[1] * PAULI_Y + n[2] * PAULI_Z
    return math.cos(angle / 2) * np.eye(2) - 1j * math.sin(angle / 2) * n_sigma


def ket_to_pure(psi) -> PureState:
    a, b = complex(psi[0]), complex(psi[1])
    norm = math.sqrt(abs(a) ** 2 + abs(b) ** 2)
    theta = 2.0 * math.atan2(abs(b) / norm, abs(a) / norm)
    phi = np.angle(b) - np.angle(a) if abs(a) > 0 else 0.0
    return PureState(theta, phi)


def su2_rotate(s: PureState, axis: BlochVector, angle: float) -> PureState:
    return ket_to_pure(su2_matrix(axis, angle) @ s.ket())


def rotation_matrix(axis: BlochVector, angle: float):
    """3x3 right-handed (Rodrigues) rotation acting on Bloch vectors."""
    n = axis.as_array()
    k = np.array([[0, -n[2], n[1]], [n[2], 0, -n[0]], [-n[1], n[0], 0]])
    return np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k)
