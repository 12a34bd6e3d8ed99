"""Two-level density matrices, Pauli operators and the z/x basis change."""

from dataclasses import dataclass
from enum import Enum

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
POSITIVITY_TOL = -1e-8

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)

# Hadamard-type change of basis; it is its own inverse.
BASIS_CHANGE = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)


class PositivityError(ValueError):
    pass


class RangeError(ValueError):
    pass


class BasisError(ValueError):
    pass


class Basis(Enum):
    Z = "z"
    X = "x"

    @classmethod
    def _missing_(cls, value):
        if isinstance(value, str) and value.lower() in ("z", "x"):
            return cls(value.lower())
        return None


@dataclass(frozen=True)
class PauliSet:
    sigma_x: np.ndarray = SIGMA_X
    sigma_y: np.ndarray = SIGMA_Y
    sigma_z: np.ndarray = SIGMA_Z
    sigma_plus: np.ndarray = SIGMA_PLUS
    sigma_minus: np.ndarray = SIGMA_MINUS


PAULI = PauliSet()


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """A 2x2 state tagged with the basis its entries refer to.

    Hermiticity and unit trace are checked on construction. Positivity is
    only a diagnostic (see `min_eigenvalue`), because approximate master
    equations can leave the physical cone slightly.
    """

    entries: np.ndarray
    basis: Basis = Basis.Z

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError(f"density matrix must be 2x2, got {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1.0) > TRACE_TOL:
            raise ValueError("density matrix does not have unit trace")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)
        if not isinstance(self.basis, Basis):
            object.__setattr__(self, "basis", Basis(self.basis))

    @property
    def rho11(self) -> float:
        return float(self.entries[0, 0].real)

    @property
    def rho12(self) -> complex:
        return complex(self.entries[0, 1])

    def bloch(self) -> np.ndarray:
        """Components (<sx>, <sy>, <sz>) with respect to the tagged basis."""
        m = self.entries
        return np.array([2 * m[0, 1].real, -2 * m[0, 1].imag, (m[0, 0] - m[1, 1]).real])

    def __eq__(self, other):
        if not isinstance(other, DensityMatrix):
            return NotImplemented
        return self.basis == other.basis and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash((self.basis, self.entries.tobytes()))


def make_density(rho11: float, rho12: complex, basis: Basis = Basis.Z) -> DensityMatrix:
    rho11 = float(rho11)
    rho12 = complex(rho12)
    if not 0.0 <= rho11 <= 1.0:
        raise RangeError(f"rho11={rho11} outside [0, 1]")
    if abs(rho12) ** 2 > rho11 * (1.0 - rho11) + 1e-12:
        raise PositivityError(
            f"|rho12|^2={abs(rho12) ** 2:.3g} exceeds rho11*rho22={rho11 * (1 - rho11):.3g}"
        )
    m = np.array([[rho11, rho12], [rho12.conjugate(), 1.0 - rho11]], dtype=complex)
    return DensityMatrix(m, basis)


def from_bloch(x: float, y: float, z: float, basis: Basis = Basis.Z) -> DensityMatrix:
    return make_density(0.5 * (1.0 + z), 0.5 * (x - 1j * y), basis)


def _change_basis(rho: DensityMatrix, target: Basis) -> DensityMatrix:
    m = BASIS_CHANGE @ rho.entries @ BASIS_CHANGE
    m = 0.5 * (m + m.conj().T)
    return DensityMatrix(m, target)


def to_x_basis(rho: DensityMatrix) -> DensityMatrix:
    if rho.basis is not Basis.Z:
        raise BasisError("state is already in the x basis")
    return _change_basis(rho, Basis.X)


def to_z_basis(rho: DensityMatrix) -> DensityMatrix:
    if rho.basis is not Basis.X:
        raise BasisError("state is already in the z basis")
    return _change_basis(rho, Basis.Z)


def x_basis_elements(rho11, rho12):
    """Vectorised z -> x conversion of (rho11, rho12) arrays."""
    rho11 = np.asarray(rho11, dtype=float)
    rho12 = np.asarray(rho12, dtype=complex)
    return 0.5 + rho12.real, -0.5 + rho11 - 1j * rho12.imag


def min_eigenvalue(rho) -> float:
    m = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho)
    return min_eigenvalue_elements(m[0, 0].real, m[0, 1])


def min_eigenvalue_elements(rho11, rho12):
    """Closed-form smaller eigenvalue of a unit-trace Hermitian 2x2 matrix."""
    rho11 = np.asarray(rho11, dtype=float)
    rho12 = np.asarray(rho12, dtype=complex)
    val = 0.5 * (1.0 - np.sqrt((2.0 * rho11 - 1.0) ** 2 + 4.0 * np.abs(rho12) ** 2))
    return float(val) if val.ndim == 0 else val
