"""Exact phase-damping dynamics under x measurement from the 2^N sign-sequence sum.

Each step of length dt contributes a factor A+ or A- acting on
(rho12, rho21); a sign sequence q carries the bath weight exp(q.W.q). The
product of N step matrices collapses to a scalar times |e_{q_N}><a_{q_1}|,
where the scalar counts adjacent pairs: c+ for (+,+), its partner cbar for
(-,-) and c- for a sign change. Only these counts and the weight exponent
change when one sign flips, which the Gray-code enumeration exploits.
"""

from dataclasses import dataclass
from enum import Enum
import itertools
import math

import numpy as np

from .bath_kernels import SpectralDensity, WeightMatrix, splitting_weights
from .hybrid_solver import Trajectory, _finish
from .noiseless_lindblad import ModelParams, c_factors, step_matrices, _c_plus_bar
from .qubit_algebra import Basis, BasisError, DensityMatrix

MAX_STEPS = 24
DEFAULT_LOW_BITS = 12


class CapError(ValueError):
    pass


class Strategy(Enum):
    BRUTE_FORCE = "brute_force"
    GRAY_CODE = "gray_code"


@dataclass(frozen=True)
class SplittingRun:
    n: int
    dt: float
    params: ModelParams
    rho0: DensityMatrix
    strategy: Strategy = Strategy.GRAY_CODE
    literal_window: bool = False

    def __post_init__(self):
        if self.n > MAX_STEPS:
            raise CapError(f"N={self.n} exceeds the cap of {MAX_STEPS} steps")
        if self.n < 1:
            raise ValueError("N must be at least 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.rho0.basis is not Basis.Z:
            raise BasisError("initial state must be given in the z basis")

    @property
    def t(self) -> float:
        return self.n * self.dt


@dataclass(frozen=True)
class SplittingResult:
    rho12: complex
    rho21: complex
    rho11: float


def to_gray(i: int) -> int:
    return i ^ (i >> 1)


def flipped_bit(g_old: int, g_new: int) -> int:
    return (g_old ^ g_new).bit_length() - 1


def sign_patterns(bits: int) -> np.ndarray:
    """All sign vectors of length bits, in Gray-code order; bit set means -1."""
    codes = to_gray(np.arange(1 << bits, dtype=np.int64)) if bits else np.zeros(1, np.int64)
    b = (codes[:, None] >> np.arange(bits)) & 1
    return 1 - 2 * b.astype(float)


def sequence_sum_brute(weights: WeightMatrix, a_plus: np.ndarray, a_minus: np.ndarray) -> np.ndarray:
    """Sum of w(q) A_{q_N}...A_{q_1} over all sequences, by direct products."""
    n = weights.n
    total = np.zeros((2, 2), dtype=complex)
    mats = {1: a_plus, -1: a_minus}
    for q in itertools.product((1, -1), repeat=n):
        prod = np.eye(2, dtype=complex)
        for qk in q:
            prod = mats[qk] @ prod
        total += math.exp(weights.exponent(q)) * prod
    return total


def _pair_products(q: np.ndarray, c_plus, c_bar, c_minus) -> np.ndarray:
    # q has shape (patterns, length); product over adjacent pairs.
    if q.shape[1] < 2:
        return np.ones(q.shape[0], dtype=complex)
    left, right = q[:, :-1], q[:, 1:]
    n_pp = np.sum((left > 0) & (right > 0), axis=1)
    n_mm = np.sum((left < 0) & (right < 0), axis=1)
    n_d = q.shape[1] - 1 - n_pp - n_mm
    return np.power(c_plus, n_pp) * np.power(c_bar, n_mm) * np.power(c_minus, n_d)


class _Neumaier:
    """Compensated accumulator for a complex array."""

    def __init__(self, shape):
        self.s = np.zeros(shape, dtype=complex)
        self.c = np.zeros(shape, dtype=complex)

    def add(self, x):
        for part in ("real", "imag"):
            s = getattr(self.s, part)
            c = getattr(self.c, part)
            xv = np.real(x) if part == "real" else np.imag(x)
            t = s + xv
            big = np.abs(s) >= np.abs(xv)
            c += np.where(big, (s - t) + xv, (xv - t) + s)
            s[...] = t

    def value(self):
        return self.s + self.c


def sequence_sum_gray(weights: WeightMatrix, c_plus: complex, c_minus: complex,
                      c_bar: complex, low_bits: int = None) -> np.ndarray:
    """Endpoint-resolved sum S[i, j] over sequences with q_1 = s_i and q_N = s_j
    (s_0 = +1, s_1 = -1) of w(q) times the pair-count product.

    The first low_bits signs are enumerated as one vectorised block; the
    remaining signs are walked in Gray-code order, so each step flips one
    sign and updates the weight exponent by -4 q_k sum_{m != k} q_m W_km.
    """
    n = weights.n
    if n > MAX_STEPS:
        raise CapError(f"N={n} exceeds the cap of {MAX_STEPS} steps")
    w = weights.w
    low = min(n, DEFAULT_LOW_BITS if low_bits is None else max(1, int(low_bits)))
    high = n - low

    ql = sign_patterns(low)
    e_low = np.einsum("ai,ij,aj->a", ql, w[:low, :low], ql)
    p_low = _pair_products(ql, c_plus, c_bar, c_minus)
    first_plus = ql[:, 0] > 0
    acc = _Neumaier((2, 2))

    if high == 0:
        vals = np.exp(e_low) * p_low
        last_plus = ql[:, -1] > 0
        for i, fm in enumerate((first_plus, ~first_plus)):
            for j, lm in enumerate((last_plus, ~last_plus)):
                acc.add(_at(i, j, np.sum(vals[fm & lm])))
        return acc.value()

    w_lh = w[:low, low:]
    w_hh = w[low:, low:]
    cross_cols = 2.0 * (ql @ w_lh)  # d(cross)/d(q_high_k) per low pattern
    last_low_plus = ql[:, -1] > 0
    boundary = {
        1: np.where(last_low_plus, c_plus, c_minus),
        -1: np.where(last_low_plus, c_minus, c_bar),
    }

    qh = np.ones(high)
    e_high = float(qh @ w_hh @ qh)
    cross = cross_cols.sum(axis=1)
    counts = {"pp": high - 1, "mm": 0, "d": 0}

    def high_product():
        return (c_plus ** counts["pp"]) * (c_bar ** counts["mm"]) * (c_minus ** counts["d"])

    def pair_key(a, b):
        return "pp" if a > 0 and b > 0 else ("mm" if a < 0 and b < 0 else "d")

    g_old = 0
    for i in range(1 << high):
        if i:
            g_new = to_gray(i)
            k = flipped_bit(g_old, g_new)
            g_old = g_new
            qk = qh[k]
            e_high += -4.0 * qk * (qh @ w_hh[k] - qk * w_hh[k, k])
            cross += -2.0 * qk * cross_cols[:, k]
            for nb in (k - 1, k + 1):
                if 0 <= nb < high:
                    counts[pair_key(qk, qh[nb])] -= 1
                    counts[pair_key(-qk, qh[nb])] += 1
            qh[k] = -qk
        vals = np.exp(e_low + cross + e_high) * p_low * boundary[int(qh[0])] * high_product()
        j = 0 if qh[-1] > 0 else 1
        acc.add(_at(0, j, np.sum(vals[first_plus])) + _at(1, j, np.sum(vals[~first_plus])))
    return acc.value()


def _at(i, j, value):
    m = np.zeros((2, 2), dtype=complex)
    m[i, j] = value
    return m


def aggregate_propagator(s: np.ndarray, c_plus, c_minus, c_bar) -> np.ndarray:
    """Turn endpoint sums into the 2x2 map on (rho12, rho21)."""
    e = np.eye(2)
    a = [np.array([c_plus, c_minus]), np.array([c_minus, c_bar])]
    total = np.zeros((2, 2), dtype=complex)
    for i in range(2):
        for j in range(2):
            total += s[i, j] * np.outer(e[j], a[i])
    return total


def solve_pd_x_exact(run: SplittingRun, weights: WeightMatrix = None) -> SplittingResult:
    p = run.params
    if weights is None:
        weights = splitting_weights(run.n, run.dt, SpectralDensity(p.eta, p.omega_c), p.beta,
                                    literal_window=run.literal_window)
    if run.strategy is Strategy.BRUTE_FORCE:
        a_plus, a_minus = step_matrices(p, run.dt)
        total = sequence_sum_brute(weights, a_plus, a_minus)
    else:
        c_plus, c_minus = c_factors(p, run.dt)
        c_bar = _c_plus_bar(p, run.dt)
        s = sequence_sum_gray(weights, c_plus, c_minus, c_bar)
        total = aggregate_propagator(s, c_plus, c_minus, c_bar)
    t = run.t
    v0 = np.array([run.rho0.rho12, np.conj(run.rho0.rho12)])
    v = np.exp(-p.lam2 * t) * (total @ v0)
    rho11 = 0.5 + (run.rho0.rho11 - 0.5) * math.exp(-2 * p.lam2 * t)
    return SplittingResult(complex(v[0]), complex(v[1]), rho11)


def splitting_trajectory(params: ModelParams, rho0: DensityMatrix, dt: float, n_max: int,
                         strategy: Strategy = Strategy.GRAY_CODE) -> Trajectory:
    """Samples t = k dt, k = 0..n_max, each an independent N = k sum, in the x basis."""
    if n_max > MAX_STEPS:
        raise CapError(f"N={n_max} exceeds the cap of {MAX_STEPS} steps")
    sd = SpectralDensity(params.eta, params.omega_c)
    full = splitting_weights(n_max, dt, sd, params.beta) if n_max else None
    r11 = [rho0.rho11]
    r12 = [rho0.rho12]
    for k in range(1, n_max + 1):
        wk = WeightMatrix(k, full.w[:k, :k])
        res = solve_pd_x_exact(SplittingRun(k, dt, params, rho0, strategy), wk)
        r11.append(res.rho11)
        r12.append(0.5 * (res.rho12 + np.conj(res.rho21)))
    r11 = np.array(r11)
    r12 = np.array(r12)
    times = dt * np.arange(n_max + 1)
    x11, x12 = 0.5 + r12.real, -0.5 + r11 - 1j * r12.imag
    return _finish(times, x11, x12, Basis.X, f"splitting-{strategy.value}", [])
