"""Second-order (weak bath coupling) master equation with the measurement
treated exactly, for phase damping (PD) and amplitude damping (AD) baths.

The memory terms are written in lag form: the time-local generator at time t
is G(t) = -int_0^t K(tau) dtau with K depending on the lag only. The lag
kernels below are the measured-axis Q-, a- and b-function products rewritten
in Bloch coordinates, where the growing and decaying exponentials never
multiply each other and the evaluation stays well conditioned at large
lam^2 t.

Integration uses a fourth-order Runge-Kutta scheme in the interaction
picture R = exp(-S t) rho, re-anchored at the start of every step (Lawson
form), so the noiseless part is propagated exactly.
"""

from dataclasses import dataclass, field
from enum import Enum
import warnings

import numpy as np

from .bath_kernels import SpectralDensity, bath_functions, gamma_bracket_log
from .noiseless_lindblad import (
    ModelParams,
    cosh_sinhc,
    omega_branch,
    noiseless_elements,
    x_meas_coherence_propagator,
)
from .qubit_algebra import (
    Basis,
    BasisError,
    DensityMatrix,
    POSITIVITY_TOL,
    make_density,
    min_eigenvalue_elements,
)

ETA_VALIDITY = 0.2
STEP_ADVISORY = 0.05
STEP_LIMIT = 1.0
UNDERFLOW_LOG = -745.0


class StepSizeError(ValueError):
    pass


class Interaction(Enum):
    PHASE_DAMPING = "PD"
    AMPLITUDE_DAMPING = "AD"

    @classmethod
    def _missing_(cls, value):
        if isinstance(value, str) and value.upper() in ("PD", "AD"):
            return cls(value.upper())
        return None


@dataclass(frozen=True)
class Scenario:
    interaction: Interaction
    component: Basis
    params: ModelParams
    rho0: DensityMatrix
    t_final: float = 10.0
    n_steps: int = 2000

    def __post_init__(self):
        object.__setattr__(self, "interaction", Interaction(self.interaction))
        object.__setattr__(self, "component", Basis(self.component))
        if self.rho0.basis is not Basis.Z:
            raise BasisError("initial state must be given in the z basis")
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ValueError("n_steps must be an integer >= 2")

    @property
    def dt(self) -> float:
        return self.t_final / self.n_steps


@dataclass(frozen=True)
class Diagnostics:
    max_trace_error: float
    max_hermiticity_error: float
    min_eigenvalue: float
    warnings: tuple = ()


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    rho11: np.ndarray
    rho12: np.ndarray
    basis: Basis
    solver_id: str
    diagnostics: Diagnostics
    bloch: np.ndarray = field(default=None, repr=False)

    def __len__(self):
        return len(self.times)

    def state(self, i: int) -> DensityMatrix:
        r11 = float(self.rho11[i])
        r12 = complex(self.rho12[i])
        m = np.array([[r11, r12], [np.conj(r12), 1.0 - r11]])
        return DensityMatrix(m, self.basis)


@dataclass(frozen=True)
class RState:
    r11: float
    r12: complex

    @property
    def r22(self) -> float:
        return 1.0 - self.r11

    @property
    def r21(self) -> complex:
        return complex(np.conj(self.r12))


def cumulative_integral(f, d: float) -> np.ndarray:
    """Running integral of samples f (axis 0, spacing d), fourth order.

    Interior intervals use the centred four-point cubic rule; the first and
    last intervals use the one-sided cubic through the nearest four samples.
    """
    f = np.asarray(f)
    m = f.shape[0]
    if m < 4:
        raise ValueError("need at least four samples")
    inc = np.empty((m - 1,) + f.shape[1:], dtype=f.dtype)
    inc[1:-1] = (-f[:-3] + 13 * f[1:-2] + 13 * f[2:-1] - f[3:]) / 24
    inc[0] = (9 * f[0] + 19 * f[1] - 5 * f[2] + f[3]) / 24
    inc[-1] = (f[-4] - 5 * f[-3] + 19 * f[-2] + 9 * f[-1]) / 24
    out = np.zeros_like(f)
    out[1:] = np.cumsum(inc * d, axis=0)
    return out


def lag_functions(p: ModelParams, tau):
    """cosh(Om tau), sinh(Om tau)/Om and f+- = cosh -+ ... = c +- lam^2 s.

    f- is the decaying combination; for real Om and Om tau > 1 it is
    evaluated from its exponential form to avoid cancelling e^{Om tau}.
    """
    tau = np.asarray(tau, dtype=float)
    om = omega_branch(p).omega
    c, s = cosh_sinhc(om, tau)
    lam2 = p.lam2
    fp = c + lam2 * s
    fm = c - lam2 * s
    if om.imag == 0.0 and om.real > 0.0:
        o = om.real
        big = o * tau > 1.0
        if np.any(big):
            e = np.exp(o * tau[big])
            fm = np.array(fm, dtype=float)
            fm[big] = ((o + lam2) / e - e * 4 * p.omega0 ** 2 / (lam2 + o)) / (2 * o)
    return c, s, fp, fm


def x_meas_bloch_propagator(p: ModelParams, t: float) -> np.ndarray:
    """exp(S t) on the Bloch 4-vector (1, x, y, z) for x measurement."""
    c, s = cosh_sinhc(omega_branch(p).omega, t)
    lam2, w0 = p.lam2, p.omega0
    g = np.exp(-lam2 * t)
    out = np.zeros((4, 4))
    out[0, 0] = 1.0
    out[1:3, 1:3] = g * (c * np.eye(2) + s * np.array([[lam2, -2 * w0], [2 * w0, -lam2]]))
    out[3, 3] = np.exp(-2 * lam2 * t)
    return out


def lawson_rk4(prop_half: np.ndarray, gens: np.ndarray, v0: np.ndarray, h: float) -> np.ndarray:
    """Integrate v' = S v + G(t) v with exp(S h/2) given.

    gens holds G on the half-step grid (2n+1 samples); returns v at the n+1
    step times. With G = 0 this is exact propagation by exp(S h).
    """
    e = prop_half
    n = (gens.shape[0] - 1) // 2
    out = np.empty((n + 1, v0.shape[0]), dtype=np.result_type(v0, gens, e))
    v = np.array(v0, dtype=out.dtype)
    out[0] = v
    for k in range(n):
        g0, g1, g2 = gens[2 * k], gens[2 * k + 1], gens[2 * k + 2]
        ev = e @ v
        u1 = g0 @ v
        u2 = g1 @ (ev + 0.5 * h * (e @ u1))
        u3 = g1 @ (ev + 0.5 * h * u2)
        eev = e @ ev
        u4 = g2 @ (eev + h * (e @ u3))
        v = eev + (h / 6) * (e @ (e @ u1) + 2 * (e @ u2) + 2 * (e @ u3)) + (h / 6) * u4
        out[k + 1] = v
    return out


def rk4_population(gain: np.ndarray, loss: np.ndarray, r0: float, h: float) -> np.ndarray:
    """RK4 for r' = gain (1 - r) - loss r with rates on the half-step grid."""
    n = (gain.shape[0] - 1) // 2
    out = np.empty(n + 1)
    r = float(r0)
    out[0] = r
    rhs = lambda i, x: gain[i] * (1.0 - x) - loss[i] * x
    for k in range(n):
        i = 2 * k
        k1 = rhs(i, r)
        k2 = rhs(i + 1, r + 0.5 * h * k1)
        k3 = rhs(i + 1, r + 0.5 * h * k2)
        k4 = rhs(i + 2, r + h * k3)
        r = r + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = r
    return out


def _check_grid(sc: Scenario) -> list:
    p = sc.params
    notes = []
    rate = max(p.lam2, p.omega0, p.omega_c)
    if sc.dt > STEP_LIMIT / rate:
        raise StepSizeError(
            f"dt={sc.dt:.3g} exceeds the stability limit {STEP_LIMIT / rate:.3g}; raise n_steps"
        )
    if sc.dt > STEP_ADVISORY / rate:
        notes.append(f"dt={sc.dt:.3g} above the advised {STEP_ADVISORY / rate:.3g}")
    if p.eta > ETA_VALIDITY:
        notes.append(f"eta={p.eta:g} > {ETA_VALIDITY}: weak-coupling equation outside its validity range")
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
    return notes


def _fine_times(sc: Scenario) -> np.ndarray:
    return 0.5 * sc.dt * np.arange(2 * sc.n_steps + 1)


def _bath(sc: Scenario, tau: np.ndarray):
    p = sc.params
    return bath_functions(SpectralDensity(p.eta, p.omega_c), p.beta, tau)


def pd_x_lag_kernel(p: ModelParams, tau, nu_r) -> np.ndarray:
    """PD memory kernel on the (x, y) Bloch components, shape (..., 2, 2)."""
    _, s, fp, fm = lag_functions(p, tau)
    w0, lam2 = p.omega0, p.lam2
    s2 = s * s
    k = np.empty(np.shape(tau) + (2, 2))
    k[..., 0, 0] = fm * fm + 4 * w0 ** 2 * s2
    k[..., 1, 1] = fp * fp + 4 * w0 ** 2 * s2
    k[..., 0, 1] = k[..., 1, 0] = -4 * lam2 * w0 * s2
    return 4 * nu_r[..., None, None] * k


def ad_x_lag_kernel(p: ModelParams, tau, bf) -> np.ndarray:
    """AD memory kernel on the Bloch 4-vector (1, x, y, z), shape (..., 4, 4)."""
    c, s, fp, fm = lag_functions(p, tau)
    w0, lam2 = p.omega0, p.lam2
    g = np.exp(-lam2 * tau)
    k = np.zeros(np.shape(tau) + (4, 4))
    ws = 2 * w0 * s
    k[..., 1, 1] = g * fm * bf.nu_r + g * ws * bf.nu_s
    k[..., 1, 2] = g * ws * bf.nu_r - g * fp * bf.nu_s
    k[..., 2, 1] = -g * ws * bf.nu_r + g * fm * bf.nu_s
    k[..., 2, 2] = g * fp * bf.nu_r + g * ws * bf.nu_s
    k[..., 3, 0] = 2 * g * (c * bf.mu_r + ws * bf.mu_s)
    with np.errstate(over="ignore"):
        k[..., 3, 3] = 2 * (c * bf.nu_r + ws * bf.nu_s) / g
    return k


def _bloch_from_z(rho0: DensityMatrix) -> np.ndarray:
    return np.array([1.0, 2 * rho0.rho12.real, -2 * rho0.rho12.imag, 2 * rho0.rho11 - 1.0])


def _trajectory_from_bloch(times, bloch, component: Basis, solver_id, notes) -> Trajectory:
    x, y, z = bloch[:, 0], bloch[:, 1], bloch[:, 2]
    if component is Basis.Z:
        r11, r12 = 0.5 * (1 + z), 0.5 * (x - 1j * y)
    else:
        r11, r12 = 0.5 * (1 + x), 0.5 * (z + 1j * y)
    return _finish(times, r11, r12, component, solver_id, notes, bloch)


def _finish(times, r11, r12, basis, solver_id, notes, bloch=None) -> Trajectory:
    r11 = np.asarray(r11, dtype=float)
    r12 = np.asarray(r12, dtype=complex)
    notes = list(notes)
    finite = np.isfinite(r11) & np.isfinite(r12)
    if not np.all(finite):
        t_bad = times[np.argmin(finite)]
        notes.append(f"solution diverged (non-finite) from t={t_bad:.6g}")
    lam_min = min_eigenvalue_elements(r11, r12)
    with np.errstate(invalid="ignore"):
        bad = np.flatnonzero(~(lam_min >= POSITIVITY_TOL))
    if bad.size:
        msg = f"positivity violated from t={times[bad[0]]:.6g} (min eigenvalue {np.nanmin(lam_min):.3g})"
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
    if bloch is None:
        x, y, z = 2 * r12.real, -2 * r12.imag, 2 * r11 - 1
        if basis is Basis.X:
            x, y, z = z, -y, x
        bloch = np.column_stack([x, y, z])
    diag = Diagnostics(
        max_trace_error=0.0,  # rho22 is stored as 1 - rho11
        max_hermiticity_error=0.0,  # rho21 is stored as conj(rho12)
        min_eigenvalue=float(np.nanmin(lam_min)) if np.any(np.isfinite(lam_min)) else float("nan"),
        warnings=tuple(notes),
    )
    return Trajectory(np.asarray(times, dtype=float), r11, r12, basis, solver_id, diag, bloch)


def _require(sc: Scenario, interaction: Interaction, component: Basis):
    if sc.interaction is not interaction or sc.component is not component:
        raise ValueError(
            f"scenario is {sc.interaction.value}/{sc.component.value}, "
            f"expected {interaction.value}/{component.value}"
        )


def pd_z_decoherence_exponent(p: ModelParams, t) -> np.ndarray:
    """log of the bath factor multiplying rho12 under phase damping.

    Finite temperature uses the Gamma-function bracket raised to 2 eta;
    T = 0 uses its limit -2 eta log(1 + w_c^2 t^2).
    """
    t = np.asarray(t, dtype=float)
    if p.eta == 0.0:
        return np.zeros_like(t)
    if p.zero_temperature:
        return -2 * p.eta * np.log1p((p.omega_c * t) ** 2)
    logs = np.array([gamma_bracket_log(ti, p.omega_c, p.beta) for ti in t.ravel()])
    return (2 * p.eta * logs).reshape(t.shape)


def solve_pd_z(sc: Scenario) -> Trajectory:
    _require(sc, Interaction.PHASE_DAMPING, Basis.Z)
    p = sc.params
    notes = _check_grid(sc)
    t = sc.dt * np.arange(sc.n_steps + 1)
    expo = pd_z_decoherence_exponent(p, t) - 2 * p.lam2 * t - 2j * p.omega0 * t
    r11 = np.full(t.shape, sc.rho0.rho11)
    r12 = sc.rho0.rho12 * np.exp(expo)
    return _finish(t, r11, r12, Basis.Z, "hybrid-pd-z", notes)


def _solve_x(sc: Scenario, kernel4: np.ndarray, solver_id: str, notes) -> Trajectory:
    p = sc.params
    h = sc.dt
    gens = -cumulative_integral(kernel4, 0.5 * h)
    v = lawson_rk4(x_meas_bloch_propagator(p, 0.5 * h), gens, _bloch_from_z(sc.rho0), h)
    t = h * np.arange(sc.n_steps + 1)
    return _trajectory_from_bloch(t, v[:, 1:], Basis.X, solver_id, notes)


def solve_pd_x(sc: Scenario) -> Trajectory:
    _require(sc, Interaction.PHASE_DAMPING, Basis.X)
    notes = _check_grid(sc)
    tau = _fine_times(sc)
    bf = _bath(sc, tau)
    k4 = np.zeros((tau.size, 4, 4))
    k4[:, 1:3, 1:3] = pd_x_lag_kernel(sc.params, tau, bf.nu_r)
    return _solve_x(sc, k4, "hybrid-pd-x", notes)


def solve_ad_x(sc: Scenario) -> Trajectory:
    _require(sc, Interaction.AMPLITUDE_DAMPING, Basis.X)
    notes = _check_grid(sc)
    tau = _fine_times(sc)
    bf = _bath(sc, tau)
    return _solve_x(sc, ad_x_lag_kernel(sc.params, tau, bf), "hybrid-ad-x", notes)


def ad_z_rates(p: ModelParams, tau, bf):
    """Gain, loss and coherence rate integrands of the AD/z equations at lag tau.

    gain: 2 int J n e^{-2 lam^2 tau} cos((2 w0 - w) tau) dw, loss the same
    with n + 1; coherence: -int J coth e^{(2 lam^2 + i(2 w0 - w)) tau} dw.
    """
    tau = np.asarray(tau, dtype=float)
    cos2, sin2 = np.cos(2 * p.omega0 * tau), np.sin(2 * p.omega0 * tau)
    damp = np.exp(-2 * p.lam2 * tau)
    gain = damp * (cos2 * (bf.nu_r - bf.mu_r) + sin2 * (bf.nu_s - bf.mu_s))
    loss = damp * (cos2 * (bf.nu_r + bf.mu_r) + sin2 * (bf.nu_s + bf.mu_s))
    with np.errstate(over="ignore", invalid="ignore"):
        coh = -np.exp((2 * p.lam2 + 2j * p.omega0) * tau) * (bf.nu_r - 1j * bf.nu_s)
    return gain, loss, coh


def solve_ad_z(sc: Scenario) -> Trajectory:
    _require(sc, Interaction.AMPLITUDE_DAMPING, Basis.Z)
    p = sc.params
    notes = _check_grid(sc)
    h = sc.dt
    tau = _fine_times(sc)
    bf = _bath(sc, tau)
    gain_k, loss_k, coh_k = ad_z_rates(p, tau, bf)
    gain = cumulative_integral(gain_k, 0.5 * h)
    loss = cumulative_integral(loss_k, 0.5 * h)
    r11 = rk4_population(gain, loss, sc.rho0.rho11, h)
    # log R12(t)/R12(0) is the double integral of the coherence rate.
    log_r12 = cumulative_integral(cumulative_integral(coh_k, 0.5 * h), 0.5 * h)[::2]
    t = h * np.arange(sc.n_steps + 1)
    expo = log_r12 - (2 * p.lam2 + 2j * p.omega0) * t
    # Once the modulus has underflowed the phase carries no information;
    # the remaining samples are zero rather than inf * 0.
    gone = ~(np.isfinite(expo) & (expo.real > UNDERFLOW_LOG))
    if np.any(gone):
        gone[np.argmax(gone):] = True
    r12 = np.zeros(t.shape, dtype=complex)
    if sc.rho0.rho12 != 0:
        r12[~gone] = sc.rho0.rho12 * np.exp(expo[~gone])
    return _finish(t, r11, r12, Basis.Z, "hybrid-ad-z", notes)


_SOLVERS = {
    (Interaction.PHASE_DAMPING, Basis.Z): solve_pd_z,
    (Interaction.PHASE_DAMPING, Basis.X): solve_pd_x,
    (Interaction.AMPLITUDE_DAMPING, Basis.Z): solve_ad_z,
    (Interaction.AMPLITUDE_DAMPING, Basis.X): solve_ad_x,
}


def solve(sc: Scenario) -> Trajectory:
    return _SOLVERS[(sc.interaction, sc.component)](sc)


def assemble_rho(times, r11, r12, p: ModelParams, lindblad: str) -> Trajectory:
    """rho(t) = exp(S t) R(t), tagged with the measured observable's eigenbasis."""
    times = np.asarray(times, dtype=float)
    r11 = np.asarray(r11, dtype=float)
    r12 = np.asarray(r12, dtype=complex)
    if lindblad == "z":
        rho11 = r11
        rho12 = r12 * np.exp(-(2 * p.lam2 + 2j * p.omega0) * times)
        return _finish(times, rho11, rho12, Basis.Z, "assembled", [])
    if lindblad == "x":
        rho11 = 0.5 + (r11 - 0.5) * np.exp(-2 * p.lam2 * times)
        prop = x_meas_coherence_propagator(p, times)
        v = prop @ np.stack([r12, np.conj(r12)], axis=-1)[..., None]
        rho12 = 0.5 * (v[..., 0, 0] + np.conj(v[..., 1, 0]))
        x11, x12 = 0.5 + rho12.real, -0.5 + rho11 - 1j * rho12.imag
        return _finish(times, x11, x12, Basis.X, "assembled", [])
    raise ValueError(f"unknown measurement axis {lindblad!r}")


def interaction_picture(times, rho11, rho12, p: ModelParams, lindblad: str):
    """R(t) = exp(-S t) rho(t) from z-basis elements; returns (R11, R12)."""
    times = np.asarray(times, dtype=float)
    rho11 = np.asarray(rho11, dtype=float)
    rho12 = np.asarray(rho12, dtype=complex)
    if lindblad == "z":
        return rho11, rho12 * np.exp((2 * p.lam2 + 2j * p.omega0) * times)
    r11 = 0.5 + (rho11 - 0.5) * np.exp(2 * p.lam2 * times)
    prop = x_meas_coherence_propagator(p, -times)
    v = prop @ np.stack([rho12, np.conj(rho12)], axis=-1)[..., None]
    return r11, 0.5 * (v[..., 0, 0] + np.conj(v[..., 1, 0]))


def r_states(r11, r12) -> list:
    return [RState(float(a), complex(b)) for a, b in zip(r11, r12)]
