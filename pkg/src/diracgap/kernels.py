"""Pointwise hot loops: nonlinearity, its Hessian blocks and the local flow.

Every polynomial in the catalogue is written through the three gauge
invariants ``A = |u|^2``, ``B = |v|^2`` and ``C = conj(u) v + u conj(v)``::

    W = c1 (A^2 + B^2) + c2 A B + c3 C^2 + c4 (A + B) C + c6 (A + B) A B

with the coefficient vector ``coef = (c1, c2, c3, c4, c6)``.  Each kernel has
a loop version (compiled by numba when available) and a vectorised numpy
version; ``DGL_BACKEND`` picks which one the public names point at.  Both are
importable as ``*_loop`` / ``*_numpy`` for cross-checking and benchmarking.
"""
import numpy as np

from ._backend import HAVE_NUMBA, njit

__all__ = [
    "nonlinearity",
    "potential_density",
    "hessian_blocks",
    "local_flow",
]


# ---------------------------------------------------------------------------
# numpy versions


def _derivs_numpy(u, v, coef):
    c1, c2, c3, c4, c6 = coef
    A = (u * u.conj()).real
    B = (v * v.conj()).real
    C = 2.0 * (u.conj() * v).real
    WA = 2 * c1 * A + c2 * B + c4 * C + c6 * (2 * A * B + B * B)
    WB = 2 * c1 * B + c2 * A + c4 * C + c6 * (A * A + 2 * A * B)
    WC = 2 * c3 * C + c4 * (A + B)
    return A, B, C, WA, WB, WC


def nonlinearity_numpy(u, v, coef):
    _, _, _, WA, WB, WC = _derivs_numpy(u, v, coef)
    return WA * u + WC * v, WB * v + WC * u


def potential_density_numpy(u, v, coef):
    c1, c2, c3, c4, c6 = coef
    A = (u * u.conj()).real
    B = (v * v.conj()).real
    C = 2.0 * (u.conj() * v).real
    return c1 * (A * A + B * B) + c2 * A * B + c3 * C * C + c4 * (A + B) * C + c6 * (A + B) * A * B


def hessian_blocks_numpy(u, v, coef):
    c1, c2, c3, c4, c6 = coef
    A, B, C, WA, WB, WC = _derivs_numpy(u, v, coef)
    n = u.shape[0]
    zero = np.zeros(n, dtype=np.complex128)
    # conj-gradients of the invariants: (dX/d conj(u), dX/d conj(v))
    g = [(u, zero), (zero, v), (v, u)]
    WAA = 2 * c1 + 2 * c6 * B
    WBB = 2 * c1 + 2 * c6 * A
    WAB = c2 + 2 * c6 * (A + B)
    WCC = 2 * c3 * np.ones(n)
    WAC = c4 * np.ones(n)
    H = [[WAA, WAB, WAC], [WAB, WBB, WAC], [WAC, WAC, WCC]]
    v11 = np.zeros((n, 2, 2), dtype=np.complex128)
    v12 = np.zeros((n, 2, 2), dtype=np.complex128)
    v11[:, 0, 0] = WA
    v11[:, 1, 1] = WB
    v11[:, 0, 1] = WC
    v11[:, 1, 0] = WC
    for X in range(3):
        for Y in range(3):
            h = H[X][Y]
            for i in range(2):
                for j in range(2):
                    v11[:, i, j] += h * g[X][i] * np.conj(g[Y][j])
                    v12[:, i, j] += h * g[X][i] * g[Y][j]
    return v11, v12


def _vflow_numpy(u, v, beta, gamma, t):
    ph = np.exp(-1j * beta * t)
    c = np.cos(gamma * t)
    s = np.sin(gamma * t)
    return ph * (c * u - 1j * s * v), ph * (c * v - 1j * s * u)


def local_flow_numpy(u, v, beta, gamma, coef, dt, rotation_only, nsub):
    u, v = _vflow_numpy(u, v, beta, gamma, 0.5 * dt)
    if rotation_only:
        _, _, _, WA, WB, _ = _derivs_numpy(u, v, coef)
        u = u * np.exp(-1j * WA * dt)
        v = v * np.exp(-1j * WB * dt)
    else:
        h = dt / nsub
        for _ in range(nsub):
            k1u, k1v = nonlinearity_numpy(u, v, coef)
            k2u, k2v = nonlinearity_numpy(u - 0.5j * h * k1u, v - 0.5j * h * k1v, coef)
            k3u, k3v = nonlinearity_numpy(u - 0.5j * h * k2u, v - 0.5j * h * k2v, coef)
            k4u, k4v = nonlinearity_numpy(u - 1j * h * k3u, v - 1j * h * k3v, coef)
            u = u - 1j * h / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
            v = v - 1j * h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return _vflow_numpy(u, v, beta, gamma, 0.5 * dt)


# ---------------------------------------------------------------------------
# loop versions


@njit
def _point_derivs(u, v, c1, c2, c3, c4, c6):
    A = u.real * u.real + u.imag * u.imag
    B = v.real * v.real + v.imag * v.imag
    C = 2.0 * (u.real * v.real + u.imag * v.imag)
    WA = 2 * c1 * A + c2 * B + c4 * C + c6 * (2 * A * B + B * B)
    WB = 2 * c1 * B + c2 * A + c4 * C + c6 * (A * A + 2 * A * B)
    WC = 2 * c3 * C + c4 * (A + B)
    return A, B, C, WA, WB, WC


@njit
def nonlinearity_loop(u, v, coef):
    c1, c2, c3, c4, c6 = coef[0], coef[1], coef[2], coef[3], coef[4]
    n = u.shape[0]
    n1 = np.empty(n, dtype=np.complex128)
    n2 = np.empty(n, dtype=np.complex128)
    for i in range(n):
        _, _, _, WA, WB, WC = _point_derivs(u[i], v[i], c1, c2, c3, c4, c6)
        n1[i] = WA * u[i] + WC * v[i]
        n2[i] = WB * v[i] + WC * u[i]
    return n1, n2


@njit
def potential_density_loop(u, v, coef):
    c1, c2, c3, c4, c6 = coef[0], coef[1], coef[2], coef[3], coef[4]
    n = u.shape[0]
    w = np.empty(n)
    for i in range(n):
        ui, vi = u[i], v[i]
        A = ui.real * ui.real + ui.imag * ui.imag
        B = vi.real * vi.real + vi.imag * vi.imag
        C = 2.0 * (ui.real * vi.real + ui.imag * vi.imag)
        w[i] = c1 * (A * A + B * B) + c2 * A * B + c3 * C * C + c4 * (A + B) * C + c6 * (A + B) * A * B
    return w


@njit
def hessian_blocks_loop(u, v, coef):
    c1, c2, c3, c4, c6 = coef[0], coef[1], coef[2], coef[3], coef[4]
    n = u.shape[0]
    v11 = np.zeros((n, 2, 2), dtype=np.complex128)
    v12 = np.zeros((n, 2, 2), dtype=np.complex128)
    g = np.zeros((3, 2), dtype=np.complex128)
    H = np.empty((3, 3))
    for p in range(n):
        ui, vi = u[p], v[p]
        A, B, C, WA, WB, WC = _point_derivs(ui, vi, c1, c2, c3, c4, c6)
        g[0, 0] = ui
        g[0, 1] = 0.0
        g[1, 0] = 0.0
        g[1, 1] = vi
        g[2, 0] = vi
        g[2, 1] = ui
        H[0, 0] = 2 * c1 + 2 * c6 * B
        H[1, 1] = 2 * c1 + 2 * c6 * A
        H[0, 1] = H[1, 0] = c2 + 2 * c6 * (A + B)
        H[2, 2] = 2 * c3
        H[0, 2] = H[2, 0] = H[1, 2] = H[2, 1] = c4
        v11[p, 0, 0] = WA
        v11[p, 1, 1] = WB
        v11[p, 0, 1] = WC
        v11[p, 1, 0] = WC
        for X in range(3):
            for Y in range(3):
                h = H[X, Y]
                if h == 0.0:
                    continue
                for i in range(2):
                    for j in range(2):
                        v11[p, i, j] += h * g[X, i] * np.conj(g[Y, j])
                        v12[p, i, j] += h * g[X, i] * g[Y, j]
    return v11, v12


@njit
def _point_n(u, v, c1, c2, c3, c4, c6):
    _, _, _, WA, WB, WC = _point_derivs(u, v, c1, c2, c3, c4, c6)
    return WA * u + WC * v, WB * v + WC * u


@njit
def local_flow_loop(u, v, beta, gamma, coef, dt, rotation_only, nsub):
    c1, c2, c3, c4, c6 = coef[0], coef[1], coef[2], coef[3], coef[4]
    n = u.shape[0]
    ou = np.empty(n, dtype=np.complex128)
    ov = np.empty(n, dtype=np.complex128)
    hdt = 0.5 * dt
    h = dt / nsub
    for i in range(n):
        ph = np.exp(-1j * beta[i] * hdt)
        c = np.cos(gamma[i] * hdt)
        s = np.sin(gamma[i] * hdt)
        a = ph * (c * u[i] - 1j * s * v[i])
        b = ph * (c * v[i] - 1j * s * u[i])
        if rotation_only:
            _, _, _, WA, WB, _ = _point_derivs(a, b, c1, c2, c3, c4, c6)
            a = a * np.exp(-1j * WA * dt)
            b = b * np.exp(-1j * WB * dt)
        else:
            for _ in range(nsub):
                k1a, k1b = _point_n(a, b, c1, c2, c3, c4, c6)
                k2a, k2b = _point_n(a - 0.5j * h * k1a, b - 0.5j * h * k1b, c1, c2, c3, c4, c6)
                k3a, k3b = _point_n(a - 0.5j * h * k2a, b - 0.5j * h * k2b, c1, c2, c3, c4, c6)
                k4a, k4b = _point_n(a - 1j * h * k3a, b - 1j * h * k3b, c1, c2, c3, c4, c6)
                a = a - 1j * h / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a)
                b = b - 1j * h / 6.0 * (k1b + 2 * k2b + 2 * k3b + k4b)
        ou[i] = ph * (c * a - 1j * s * b)
        ov[i] = ph * (c * b - 1j * s * a)
    return ou, ov


if HAVE_NUMBA:
    nonlinearity = nonlinearity_loop
    potential_density = potential_density_loop
    hessian_blocks = hessian_blocks_loop
    local_flow = local_flow_loop
else:
    nonlinearity = nonlinearity_numpy
    potential_density = potential_density_numpy
    hessian_blocks = hessian_blocks_numpy
    local_flow = local_flow_numpy
