"""Closed-form evolution of the qubit under measurement alone (no bath).

The generator is d rho/dt = -i w0 [sz, rho] + lam^2 (s rho s - rho) with
s = sz (z measurement) or s = sx (x measurement). Frequencies and inverse
times share one unit (hbar = k_B = 1).
"""

from dataclasses import dataclass
from enum import Enum
import math

import numpy as np

from .qubit_algebra import Basis, DensityMatrix, BasisError

DEGENERATE_RTOL = 1e-9
TAYLOR_THRESHOLD = 1e-6


class DomainError(ValueError):
    pass


class ZeroTemperature:
    """Sentinel for the T = 0 limit of the bath (beta -> infinity)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "ZERO_TEMPERATURE"

    def __reduce__(self):
        return (ZeroTemperature, ())


ZERO_TEMPERATURE = ZeroTemperature()


def is_zero_temperature(beta) -> bool:
    return beta is ZERO_TEMPERATURE or isinstance(beta, ZeroTemperature)


@dataclass(frozen=True)
class ModelParams:
    lam: float
    eta: float = 0.0
    omega0: float = 0.0
    omega_c: float = 1.0
    beta: object = ZERO_TEMPERATURE

    def __post_init__(self):
        for name in ("lam", "eta", "omega0", "omega_c"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise DomainError(f"{name} must be finite")
        if self.lam < 0 or self.eta < 0 or self.omega0 < 0:
            raise DomainError("lam, eta and omega0 must be non-negative")
        if self.omega_c <= 0:
            raise DomainError("omega_c must be positive")
        if not is_zero_temperature(self.beta):
            b = float(self.beta)
            if not (b > 0 and math.isfinite(b)):
                raise DomainError("beta must be positive and finite, or ZERO_TEMPERATURE")
            object.__setattr__(self, "beta", b)

    @property
    def zero_temperature(self) -> bool:
        return is_zero_temperature(self.beta)

    @property
    def lam2(self) -> float:
        return self.lam * self.lam

    def with_(self, **changes) -> "ModelParams":
        fields = dict(lam=self.lam, eta=self.eta, omega0=self.omega0,
                      omega_c=self.omega_c, beta=self.beta)
        fields.update(changes)
        return ModelParams(**fields)


class Regime(Enum):
    HYPERBOLIC = "hyperbolic"
    DEGENERATE = "degenerate"
    OSCILLATORY = "oscillatory"


@dataclass(frozen=True)
class OmegaBranch:
    omega: complex
    regime: Regime


def omega_branch(p: ModelParams) -> OmegaBranch:
    lam2 = p.lam2
    disc = lam2 * lam2 - 4.0 * p.omega0 ** 2
    omega = complex(np.sqrt(complex(disc)))
    scale = max(lam2, 2.0 * p.omega0)
    if scale == 0.0 or abs(lam2 - 2.0 * p.omega0) <= DEGENERATE_RTOL * scale:
        regime = Regime.DEGENERATE
    elif lam2 > 2.0 * p.omega0:
        regime = Regime.HYPERBOLIC
    else:
        regime = Regime.OSCILLATORY
    return OmegaBranch(omega, regime)


def cosh_sinhc(omega: complex, t):
    """Return cosh(omega t) and sinh(omega t)/omega, safe at omega -> 0.

    Both are even in omega, so they stay real for real or purely imaginary
    omega; the imaginary rounding residue is dropped in that case.
    """
    t = np.asarray(t, dtype=float)
    z = omega * t
    small = np.abs(z) < TAYLOR_THRESHOLD
    zs = np.where(small, 1.0, z)
    with np.errstate(over="ignore", invalid="ignore"):
        ch = np.cosh(z)
        sh = np.where(small, t * (1 + z * z / 6 + z ** 4 / 120), t * np.sinh(zs) / zs)
    if omega.real == 0.0 or omega.imag == 0.0:
        ch = ch.real
        sh = sh.real
    return ch, sh


def _generator_b(p: ModelParams) -> np.ndarray:
    w0, lam2 = p.omega0, p.lam2
    return np.array([[-2j * w0, lam2], [lam2, 2j * w0]])


def x_meas_coherence_propagator(p: ModelParams, t) -> np.ndarray:
    """Matrix mapping (rho12, rho21) at 0 to time t under x measurement.

    Returns shape t.shape + (2, 2).
    """
    t = np.asarray(t, dtype=float)
    ch, sh = cosh_sinhc(omega_branch(p).omega, t)
    damp = np.exp(-p.lam2 * t)
    b = _generator_b(p)
    out = (ch[..., None, None] * np.eye(2) + sh[..., None, None] * b) * damp[..., None, None]
    return out


def propagate_z_meas(rho0: DensityMatrix, p: ModelParams, t: float) -> DensityMatrix:
    _require_z(rho0)
    m = np.array(rho0.entries)
    factor = np.exp(-2 * p.lam2 * t) * np.exp(-2j * p.omega0 * t)
    m[0, 1] *= factor
    m[1, 0] = np.conj(m[0, 1])
    return DensityMatrix(m, Basis.Z)


def propagate_x_meas(rho0: DensityMatrix, p: ModelParams, t: float) -> DensityMatrix:
    _require_z(rho0)
    r11 = 0.5 + (rho0.rho11 - 0.5) * np.exp(-2 * p.lam2 * t)
    v = x_meas_coherence_propagator(p, t) @ np.array([rho0.rho12, np.conj(rho0.rho12)])
    # v[1] equals conj(v[0]) analytically; symmetrise rounding.
    r12 = 0.5 * (v[0] + np.conj(v[1]))
    return DensityMatrix(np.array([[r11, r12], [np.conj(r12), 1 - r11]]), Basis.Z)


def noiseless_elements(rho11_0, rho12_0, p: ModelParams, lindblad: str, t):
    """Vectorised noiseless evolution of (rho11, rho12) in the z basis."""
    t = np.asarray(t, dtype=float)
    if lindblad == "z":
        r11 = np.full(t.shape, float(rho11_0))
        r12 = rho12_0 * np.exp(-2 * p.lam2 * t - 2j * p.omega0 * t)
        return r11, r12
    if lindblad == "x":
        r11 = 0.5 + (rho11_0 - 0.5) * np.exp(-2 * p.lam2 * t)
        v = x_meas_coherence_propagator(p, t) @ np.array([rho12_0, np.conj(rho12_0)])
        return r11, 0.5 * (v[..., 0] + np.conj(v[..., 1]))
    raise ValueError(f"unknown measurement axis {lindblad!r}")


def step_matrices(p: ModelParams, dt: float):
    """Per-step matrices A+ and A- acting on (rho12, rho21).

    Normalised by Omega and by exp(lam^2 dt), so A+ + A- is the one-step
    x-measurement propagator times exp(lam^2 dt).
    """
    if dt <= 0:
        raise DomainError("dt must be positive")
    c_plus, c_minus = c_factors(p, dt)
    c_bar = _c_plus_bar(p, dt)
    a_plus = np.array([[c_plus, c_minus], [0, 0]], dtype=complex)
    a_minus = np.array([[0, 0], [c_minus, c_bar]], dtype=complex)
    return a_plus, a_minus


def c_factors(p: ModelParams, dt: float):
    if dt <= 0:
        raise DomainError("dt must be positive")
    ch, sh = cosh_sinhc(omega_branch(p).omega, dt)
    c_plus = complex(ch - 2j * p.omega0 * sh)
    c_minus = complex(p.lam2 * sh)
    return c_plus, c_minus


def _c_plus_bar(p: ModelParams, dt: float) -> complex:
    # c+ with the explicit i flipped; it is the (2,2) entry of A-.
    ch, sh = cosh_sinhc(omega_branch(p).omega, dt)
    return complex(ch + 2j * p.omega0 * sh)


def measurement_duration(lam: float, f: float) -> float:
    if not 0.0 < f < 1.0:
        raise DomainError("f must lie in (0, 1)")
    if not lam > 0:
        raise DomainError("lam must be positive")
    return -math.log(f) / (2.0 * lam * lam)


def _require_z(rho: DensityMatrix):
    if rho.basis is not Basis.Z:
        raise BasisError("propagators take states in the z basis")
