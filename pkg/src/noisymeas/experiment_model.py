"""Two-apparatus weak-measurement test: a finite-time measurement of the
tilted observable s_theta = cos(theta) sz + sin(theta) sx, followed by a
projective sz readout.

The tilt is called theta here; beta is kept for the inverse temperature.
"""

from dataclasses import dataclass
import csv
import io
import math

import numpy as np

from .noiseless_lindblad import DomainError
from .qubit_algebra import SIGMA_X, SIGMA_Z, Basis, BasisError, DensityMatrix

ANGLE_TOL = 1e-12


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class WeakMeasSetting:
    theta: float
    b: float
    tau: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.b <= 1.0:
            raise DomainError(f"b={self.b} outside [0, 1]")
        if self.tau < 0:
            raise DomainError("tau must be non-negative")

    @property
    def informative(self) -> bool:
        return not _is_multiple_of_pi(self.theta)


@dataclass(frozen=True)
class BSample:
    tau: float
    b_hat: float
    sigma: float

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")


def _is_multiple_of_pi(theta: float) -> bool:
    return abs(math.sin(theta)) < ANGLE_TOL


def tilted_observable(theta: float) -> np.ndarray:
    return math.cos(theta) * SIGMA_Z + math.sin(theta) * SIGMA_X


def _z_state(rho: DensityMatrix) -> np.ndarray:
    if rho.basis is not Basis.Z:
        raise BasisError("expected a state in the z basis")
    return rho.entries


def apply_weak_meas(rho0: DensityMatrix, s: WeakMeasSetting) -> DensityMatrix:
    """Partial dephasing in the s_theta eigenbasis; b is the surviving coherence."""
    m = _z_state(rho0)
    sb = tilted_observable(s.theta)
    out = 0.5 * (1 + s.b) * m + 0.5 * (1 - s.b) * (sb @ m @ sb)
    out = 0.5 * (out + out.conj().T)
    return DensityMatrix(out, Basis.Z)


def _sz_sx(rho0: DensityMatrix):
    m = _z_state(rho0)
    return float((m[0, 0] - m[1, 1]).real), float(2 * m[0, 1].real)


def expected_sigma_z(rho0: DensityMatrix, s: WeakMeasSetting) -> float:
    # Assumes no free evolution between the two apparatus (w0 = 0).
    sz, sx = _sz_sx(rho0)
    c, sn = math.cos(s.theta), math.sin(s.theta)
    return (c * c + s.b * sn * sn) * sz + 0.5 * (1 - s.b) * math.sin(2 * s.theta) * sx


def b_of_tau(lam: float, tau):
    if lam < 0:
        raise DomainError("lam must be non-negative")
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise DomainError("tau must be non-negative")
    out = np.exp(-2.0 * lam * lam * tau)
    return float(out) if out.ndim == 0 else out


def discriminator_delta_z(rho0: DensityMatrix, theta: float) -> float:
    """Gap in <sz> between a negligible (b = 1) and a complete (b = 0) first measurement."""
    if _is_multiple_of_pi(theta):
        raise DomainError("theta is a multiple of pi: both outcomes coincide")
    weak = expected_sigma_z(rho0, WeakMeasSetting(theta, 1.0))
    strong = expected_sigma_z(rho0, WeakMeasSetting(theta, 0.0))
    return abs(weak - strong)


def fit_lambda_squared(samples):
    """Weighted least squares of -ln b_hat = lam^2 (2 tau) through the origin.

    Weights come from the propagated error sigma / b_hat; if every sigma is
    zero the fit is unweighted and the standard error is taken from the
    residual scatter.
    """
    samples = list(samples)
    if len(samples) < 2:
        raise FitError("need at least two samples")
    tau = np.array([s.tau for s in samples], dtype=float)
    b = np.array([s.b_hat for s in samples], dtype=float)
    sig = np.array([s.sigma for s in samples], dtype=float)
    # b_hat slightly above 1 is ordinary shot noise near tau = 0, so only
    # non-positive values are rejected.
    if np.any(b <= 0):
        raise FitError("every b_hat must be positive")
    if np.any(tau <= 0) or np.ptp(tau) == 0:
        raise FitError("need distinct positive tau values")
    x = 2.0 * tau
    y = -np.log(b)
    if np.all(sig > 0):
        w = (b / sig) ** 2
        sxx = np.sum(w * x * x)
        slope = np.sum(w * x * y) / sxx
        stderr = math.sqrt(1.0 / sxx)
    else:
        sxx = np.sum(x * x)
        slope = np.sum(x * y) / sxx
        resid = y - slope * x
        stderr = math.sqrt(np.sum(resid ** 2) / (len(x) - 1) / sxx)
    return float(slope), float(stderr)


def synthesize_experiment(lam: float, theta: float, rho0: DensityMatrix, tau_grid, shots: int,
                          seed, sigma_x0=None):
    """Simulated shot-noise data for b(tau) at the listed exposure times.

    At theta != pi/2 the offset term needs <sx>(0); it is read from rho0
    unless sigma_x0 overrides it.
    """
    if int(shots) != shots or shots < 1:
        raise DomainError("shots must be a positive integer")
    sz0, sx0 = _sz_sx(rho0)
    if sigma_x0 is not None:
        sx0 = float(sigma_x0)
    c2 = math.cos(theta) ** 2
    s2 = math.sin(theta) ** 2
    offset = c2 * sz0 + 0.5 * math.sin(2 * theta) * sx0
    slope = s2 * sz0 - 0.5 * math.sin(2 * theta) * sx0
    if abs(slope) < ANGLE_TOL:
        raise DomainError("<sz>(tau) does not depend on b for this state and tilt")
    rng = np.random.default_rng(seed)
    out = []
    for tau in np.asarray(tau_grid, dtype=float):
        b = b_of_tau(lam, tau)
        mean = offset + b * slope
        p_up = min(1.0, max(0.0, 0.5 * (1.0 + mean)))
        ups = rng.binomial(int(shots), p_up)
        sz_emp = 2.0 * ups / shots - 1.0
        b_hat = (sz_emp - offset) / slope
        # binomial standard error of <sz>, floored at one count
        p_hat = min(max(ups, 1), shots - 1 if shots > 1 else 1) / shots
        sigma = 2.0 * math.sqrt(p_hat * (1 - p_hat) / shots) / abs(slope)
        out.append(BSample(float(tau), float(b_hat), float(sigma)))
    return out


CSV_COLUMNS = ("tau", "b_hat", "sigma")


def samples_to_csv(samples) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for s in samples:
        w.writerow(["%.17g" % s.tau, "%.17g" % s.b_hat, "%.17g" % s.sigma])
    return buf.getvalue()


def samples_from_csv(text: str):
    rows = csv.DictReader(io.StringIO(text))
    if tuple(rows.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"expected columns {CSV_COLUMNS}, got {rows.fieldnames}")
    return [BSample(float(r["tau"]), float(r["b_hat"]), float(r["sigma"])) for r in rows]
