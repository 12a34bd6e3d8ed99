"""Ohmic bath: spectral density, correlation kernels, log-Gamma and the
pairwise influence weights of the splitting sum.

Every frequency integral is split into its zero-temperature part, which has
a closed form for the Ohmic density, and a thermal correction carrying the
Bose occupation, which is integrated with composite Gauss-Legendre panels.
"""

from dataclasses import dataclass
from enum import Enum
import cmath
import math

import numpy as np
from numpy.polynomial.legendre import leggauss

from .noiseless_lindblad import DomainError, ZERO_TEMPERATURE, is_zero_temperature

GL_ORDER = 16
CUTOFF_DECADES = 40.0
QUAD_RTOL = 1e-9
BOSE_SERIES_BELOW = 1e-4

_GL_X, _GL_W = leggauss(GL_ORDER)


class QuadratureError(RuntimeError):
    pass


class PoleError(ValueError):
    pass


@dataclass(frozen=True)
class SpectralDensity:
    eta: float
    omega_c: float = 1.0

    def __post_init__(self):
        if self.eta < 0:
            raise DomainError("eta must be non-negative")
        if self.omega_c <= 0:
            raise DomainError("omega_c must be positive")

    def __call__(self, w):
        return ohmic_j(w, self)


def ohmic_j(w, sd: SpectralDensity):
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise DomainError("spectral density is defined for w >= 0")
    out = sd.eta * w * np.exp(-w / sd.omega_c)
    return float(out) if out.ndim == 0 else out


def omega_bose(w, beta):
    """w * n(w) = w / (exp(beta w) - 1), finite at w = 0."""
    w = np.asarray(w, dtype=float)
    if is_zero_temperature(beta):
        return np.zeros_like(w)
    x = beta * w
    small = x < BOSE_SERIES_BELOW
    xs = np.where(small, 1.0, x)
    with np.errstate(over="ignore"):
        full = w / np.expm1(xs)
    series = (1.0 - x / 2 + x * x / 12) / beta
    return np.where(small, series, full)


def coth_half(w, beta):
    """coth(beta w / 2); equals 1 at zero temperature."""
    w = np.asarray(w, dtype=float)
    if is_zero_temperature(beta):
        return np.ones_like(w)
    with np.errstate(divide="ignore"):
        return 1.0 / np.tanh(0.5 * beta * w)


def _gl_nodes(upper: float, panels: int):
    edges = np.linspace(0.0, upper, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    weights = (half[:, None] * _GL_W[None, :]).ravel()
    return nodes, weights


def _panels(upper: float, s_max: float) -> int:
    # About ten radians of the cos(w s) factor per panel; with the default
    # cutoff of 40 w_c this is max(16, ceil(4 s w_c)).
    return max(16, int(math.ceil(upper * s_max / 10.0)))


def integrate_frequency(integrand, upper: float, s_max: float, rtol: float = QUAD_RTOL):
    """Integrate integrand(w) -> (..., n_nodes) over [0, upper].

    The panel count follows the largest oscillation time s_max; convergence
    is checked by doubling the panel count. The error is measured against
    the L1 norm of the integrand, which is the natural scale when the
    integral itself is near a zero of an oscillatory kernel.
    """
    panels = _panels(upper, s_max)
    nodes, weights = _gl_nodes(upper, panels)
    coarse = integrand(nodes) @ weights
    nodes, weights = _gl_nodes(upper, 2 * panels)
    vals = integrand(nodes)
    fine = vals @ weights
    scale = np.abs(vals) @ weights
    err = np.abs(fine - coarse)
    bad = err > rtol * np.maximum(scale, 1e-300)
    if np.any(bad):
        worst = float(np.max(err / np.maximum(scale, 1e-300)))
        raise QuadratureError(f"frequency quadrature did not converge (rel err {worst:.2e})")
    return fine


def _thermal_upper(sd: SpectralDensity, beta) -> float:
    # J(w) n(w) decays as exp(-w (1/w_c + beta)).
    return CUTOFF_DECADES / (1.0 / sd.omega_c + beta)


def _zero_t_transform(s, sd: SpectralDensity):
    """Closed form of int J(w) exp(-i w s) dw for the Ohmic density."""
    s = np.asarray(s, dtype=float)
    return sd.eta / (1.0 / sd.omega_c + 1j * s) ** 2


def _thermal_transform(s, sd: SpectralDensity, beta):
    """int J(w) n(w) exp(-i w s) dw by quadrature (zero when T = 0)."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if is_zero_temperature(beta) or sd.eta == 0.0:
        return np.zeros(s.shape, dtype=complex)
    upper = _thermal_upper(sd, beta)

    def f(w):
        jn = sd.eta * np.exp(-w / sd.omega_c) * omega_bose(w, beta)
        return jn[None, :] * np.exp(-1j * np.outer(s, w))

    return integrate_frequency(f, upper, float(np.max(np.abs(s), initial=0.0)))


def phase_kernel(s, sd: SpectralDensity, beta=ZERO_TEMPERATURE):
    """int J(w) [coth(beta w/2) cos(w s) + i sin(w s)] dw.

    J includes the coupling eta, so the kernel is eta times the bare
    frequency integral.
    """
    scalar = np.ndim(s) == 0
    s = np.atleast_1d(np.asarray(s, dtype=float))
    zero = _zero_t_transform(s, sd)
    thermal = _thermal_transform(s, sd, beta)
    out = zero.real + 2.0 * thermal.real - 1j * zero.imag
    return complex(out[0]) if scalar else out


def amplitude_kernels(s, sd: SpectralDensity, beta=ZERO_TEMPERATURE):
    """Emission int J (n+1) e^{i w s} dw and absorption int J n e^{-i w s} dw."""
    scalar = np.ndim(s) == 0
    s = np.atleast_1d(np.asarray(s, dtype=float))
    zero = _zero_t_transform(s, sd)
    thermal = _thermal_transform(s, sd, beta)
    absorption = thermal
    emission = np.conj(zero + thermal)
    if scalar:
        return complex(emission[0]), complex(absorption[0])
    return emission, absorption


class KernelKind(Enum):
    PHASE_DAMPING = "phase_damping"
    AMPLITUDE_EMISSION = "amplitude_emission"
    AMPLITUDE_ABSORPTION = "amplitude_absorption"


@dataclass(frozen=True, eq=False)
class KernelTable:
    dt: float
    values: np.ndarray
    kind: KernelKind

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.values))


def kernel_table(kind: KernelKind, sd: SpectralDensity, beta, dt: float, n: int) -> KernelTable:
    s = dt * np.arange(n + 1)
    if kind is KernelKind.PHASE_DAMPING:
        vals = phase_kernel(s, sd, beta)
    else:
        em, ab = amplitude_kernels(s, sd, beta)
        vals = em if kind is KernelKind.AMPLITUDE_EMISSION else ab
    return KernelTable(dt, vals, kind)


@dataclass(frozen=True)
class BathFunctions:
    """Real kernels sampled on a grid, the building blocks of every memory term.

    nu_r = int J coth cos, nu_s = int J coth sin, mu_r = int J cos,
    mu_s = int J sin, all evaluated at s = times.
    """

    times: np.ndarray
    nu_r: np.ndarray
    nu_s: np.ndarray
    mu_r: np.ndarray
    mu_s: np.ndarray


def bath_functions(sd: SpectralDensity, beta, times) -> BathFunctions:
    times = np.asarray(times, dtype=float)
    zero = _zero_t_transform(times, sd)
    thermal = _thermal_transform(times, sd, beta)
    mu_r, mu_s = zero.real, -zero.imag
    nu_r = mu_r + 2.0 * thermal.real
    nu_s = mu_s - 2.0 * thermal.imag
    return BathFunctions(times, nu_r, nu_s, mu_r, mu_s)


# Lanczos approximation, g = 7 with nine coefficients.
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_TWO_PI = 0.5 * math.log(2.0 * math.pi)


def log_gamma_complex(z) -> complex:
    """log Gamma(z).

    For Re z >= 1/2 this is the branch continuous from the positive real
    axis. Below that the reflection formula is used and the imaginary part
    is only defined modulo 2 pi.
    """
    z = complex(z)
    if z.imag == 0.0 and z.real <= 0.0 and z.real == math.floor(z.real):
        raise PoleError(f"Gamma has a pole at {z.real:g}")
    if z.real < 0.5:
        return complex(math.log(math.pi)) - cmath.log(cmath.sin(math.pi * z)) - log_gamma_complex(1.0 - z)
    z -= 1.0
    acc = _LANCZOS_COEF[0]
    for k in range(1, len(_LANCZOS_COEF)):
        acc += _LANCZOS_COEF[k] / (z + k)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_TWO_PI + (z + 0.5) * cmath.log(t) - t + cmath.log(acc)


def gamma_bracket_log(t, omega_c: float, beta: float) -> float:
    """log of |G(x+iy) G(x+1+iy)|^2 / (G(x)^2 G(x+1)^2), x = 1/(w_c beta), y = t/beta.

    Equals -2 int e^{-w/w_c} coth(beta w/2) (1 - cos w t)/w dw.
    """
    x = 1.0 / (omega_c * beta)
    y = t / beta
    num = log_gamma_complex(complex(x, y)).real + log_gamma_complex(complex(x + 1.0, y)).real
    den = log_gamma_complex(x).real + log_gamma_complex(x + 1.0).real
    return 2.0 * (num - den)


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    n: int
    w: np.ndarray

    def __post_init__(self):
        m = np.array(self.w, dtype=float)
        m.setflags(write=False)
        object.__setattr__(self, "w", m)

    def exponent(self, q) -> float:
        q = np.asarray(q, dtype=float)
        return float(q @ self.w @ q)


def zero_t_weight_profile(n: int, dt: float, sd: SpectralDensity) -> np.ndarray:
    """W(d) for d = 0..n-1 from the zero-temperature product formula."""
    u = (sd.omega_c * dt) ** -2.0
    d2 = np.arange(n, dtype=float) ** 2
    f = 1.0 + (2.0 * u + 1.0 - 2.0 * d2) / (u + d2) ** 2
    return -sd.eta * np.log(f)


def _weight_integral_profile(n, dt, sd, beta, window, thermal_only):
    # -8 eta int e^{-w/w_c} c(w) cos(d w dt) sin^2(w window/2)/w dw, with
    # c = 2 n(w) (thermal part) or coth(beta w/2) (full).
    d = np.arange(n, dtype=float)
    if thermal_only:
        upper = _thermal_upper(sd, beta)
    else:
        upper = CUTOFF_DECADES * sd.omega_c
    half = 0.5 * window

    def f(w):
        sin2_over_w2 = half * half * np.sinc(w * half / np.pi) ** 2
        if thermal_only:
            occ = 2.0 * omega_bose(w, beta)  # 2 w n(w)
        elif is_zero_temperature(beta):
            occ = w
        else:
            occ = w + 2.0 * omega_bose(w, beta)  # w coth(beta w/2)
        base = np.exp(-w / sd.omega_c) * occ * sin2_over_w2
        return base[None, :] * np.cos(np.outer(d * dt, w))

    s_max = max((n - 1) * dt, window)
    return -8.0 * sd.eta * integrate_frequency(f, upper, s_max)


def splitting_weights(n: int, dt: float, sd: SpectralDensity, beta=ZERO_TEMPERATURE,
                      literal_window: bool = False) -> WeightMatrix:
    """Pairwise log-weights W so a sign sequence q carries exp(q.W.q).

    The window inside sin^2 is the step dt. With literal_window=True the
    total time n*dt is used instead, which reproduces a printed variant of
    the finite-temperature formula; it is there for comparison only.
    """
    if n < 1:
        raise DomainError("n must be at least 1")
    if dt <= 0:
        raise DomainError("dt must be positive")
    if sd.eta == 0.0:
        return WeightMatrix(n, np.zeros((n, n)))
    if literal_window:
        profile = _weight_integral_profile(n, dt, sd, beta, n * dt, thermal_only=False)
    else:
        profile = zero_t_weight_profile(n, dt, sd)
        if not is_zero_temperature(beta):
            profile = profile + _weight_integral_profile(n, dt, sd, beta, dt, thermal_only=True)
    idx = np.arange(n)
    return WeightMatrix(n, profile[np.abs(idx[:, None] - idx[None, :])])


def single_step_factor(dt: float, sd: SpectralDensity, beta=ZERO_TEMPERATURE) -> float:
    """exp(W_11): the decoherence factor of one splitting step."""
    return math.exp(splitting_weights(1, dt, sd, beta).w[0, 0])
