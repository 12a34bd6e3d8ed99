"""Independent reference implementations used only by the tests.

The second-order engine works on the full 4x4 Liouville superoperator with
matrix exponentials and a brute-force frequency grid. It imports nothing
from the package: kernels, propagators and time stepping are rebuilt here.
"""

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import expm

SZ = np.diag([1.0, -1.0]).astype(complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SP = np.array([[0, 1], [0, 0]], dtype=complex)
SM = SP.T.copy()
I2 = np.eye(2)


def left(a):
    return np.kron(a, I2)


def right(a):
    return np.kron(I2, a.T)


def comm(a):
    return left(a) - right(a)


def noiseless_generator(lam, w0, axis):
    s = {"z": SZ, "x": SX}[axis]
    return -1j * w0 * comm(SZ) + lam ** 2 * (np.kron(s, s.T) - np.eye(4))


def lindblad_rk4(rho0, lam, w0, axis, t, n=4000):
    """Dense classical RK4 of the noiseless equation; returns rho(t)."""
    g = noiseless_generator(lam, w0, axis)
    y = np.asarray(rho0, dtype=complex).reshape(4)
    h = t / n
    for _ in range(n):
        k1 = g @ y
        k2 = g @ (y + h / 2 * k1)
        k3 = g @ (y + h / 2 * k2)
        k4 = g @ (y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y.reshape(2, 2)


def _frequency_grid(w_max, panels, order=16):
    x, w = leggauss(order)
    e = np.linspace(0.0, w_max, panels + 1)
    a, b = e[:-1, None], e[1:, None]
    return ((b - a) / 2 * x + (a + b) / 2).ravel(), ((b - a) / 2 * w).ravel()


def _occupation(w, beta):
    return np.zeros_like(w) if beta is None else 1.0 / np.expm1(beta * w)


def tcl2_engine(kind, axis, lam, w0, eta, wc, beta, rho0, t_final, n):
    """Second-order time-convolutionless equation in the Schrodinger picture.

    beta=None means zero temperature. Returns (times, rho) with rho of shape
    (n+1, 2, 2) in the z basis.
    """
    s_gen = noiseless_generator(lam, w0, axis)
    h = t_final / n
    taus = np.arange(2 * n + 1) * h / 2
    w, ww = _frequency_grid(40 * wc, max(200, int(8 * t_final * wc)))
    j = eta * w * np.exp(-w / wc)
    nb = _occupation(w, beta)
    e = np.exp(-1j * np.outer(taus, w))
    if kind == "PD":
        c = ((nb + 1) * j * ww) @ e.T + (nb * j * ww) @ e.conj().T
        terms = [(SZ, SZ, c, c.conj())]
    else:
        em = ((nb + 1) * j * ww) @ e.T
        ab = (nb * j * ww) @ e.conj().T
        terms = [(SP, SM, ab, em.conj()), (SM, SP, em, ab.conj())]
    k = np.zeros((len(taus), 4, 4), dtype=complex)
    for i, tau in enumerate(taus):
        ep, em_ = expm(s_gen * tau), expm(-s_gen * tau)
        for a_al, a_be, c_ba, d_ab in terms:
            k[i] += c_ba[i] * comm(a_be) @ ep @ left(a_al) @ em_
            k[i] -= d_ab[i] * comm(a_be) @ ep @ right(a_al) @ em_
    # cumulative integral of the kernel, four-point rule on the half grid
    d = h / 2
    m = len(taus)
    cum = np.zeros_like(k)
    for i in range(m - 1):
        if i == 0:
            inc = d * (9 * k[0] + 19 * k[1] - 5 * k[2] + k[3]) / 24
        elif i == m - 2:
            inc = d * (k[i - 2] - 5 * k[i - 1] + 19 * k[i] + 9 * k[i + 1]) / 24
        else:
            inc = d * (-k[i - 1] + 13 * k[i] + 13 * k[i + 1] - k[i + 2]) / 24
        cum[i + 1] = cum[i] + inc
    y = np.asarray(rho0, dtype=complex).reshape(4)
    out = [y.copy()]
    for step in range(n):
        i = 2 * step
        g0, g1, g2 = s_gen - cum[i], s_gen - cum[i + 1], s_gen - cum[i + 2]
        k1 = g0 @ y
        k2 = g1 @ (y + h / 2 * k1)
        k3 = g1 @ (y + h / 2 * k2)
        k4 = g2 @ (y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(y.copy())
    return np.arange(n + 1) * h, np.array(out).reshape(-1, 2, 2)


def to_x(rho):
    m = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    return m @ rho @ m


def pd_z_exponent_quad(t, eta, wc, beta):
    """-4 eta int e^{-w/wc} coth(beta w/2) (1 - cos w t)/w dw by scipy quad."""
    from scipy.integrate import quad

    def f(w):
        if w == 0.0:
            return 0.0
        c = 1.0 if beta is None else 1.0 / np.tanh(0.5 * beta * w)
        return np.exp(-w / wc) * c * (1 - np.cos(w * t)) / w

    val, _ = quad(f, 0, 60 * wc, limit=2000, epsabs=1e-14, epsrel=1e-12)
    return -4.0 * eta * val
