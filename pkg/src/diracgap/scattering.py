"""Jost solutions, scattering data and the limiting resolvent kernel.

On the lower branch of the continuum we write lambda = -sqrt(1 + k^2) and
look for solutions u(x) = m(x) exp(+-i k x) with m -> [1, alpha_+-(k)] at
+-infinity, alpha_+-(k) = sqrt(1 + k^2) +- k.  The integral equation for m
is equivalent to the first order system

    m' = (A(x) - i s k) m,   A = [[i(lam - beta), -i(gamma - 1)],
                                  [i(gamma - 1), -i(lam - beta)]]

which we integrate with an adaptive Runge-Kutta scheme across the support of
the potential only.  Outside it the potential is below 1e-17 and the free
flow exp(A0 t) = cos(kt) I + sin(kt)/k A0 is used in closed form.

The integrals defining a, b and the edge numbers gamma are carried along as
extra ODE components, so they are accurate to the integrator tolerance.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .core import SpinorField, japanese
from .dirac_op import DiracOperator

__all__ = [
    "JostError",
    "ResonanceError",
    "JostSolution",
    "ScatteringCoefficients",
    "Wronskian",
    "RESONANCE_THRESHOLD",
    "K_MAX",
    "alpha",
    "solve_jost",
    "upper_branch_jost",
    "scattering_coefficients",
    "wronskian",
    "gamma_resonance",
    "volterra_residual",
    "resolvent_kernel",
    "resolvent_branches",
    "weighted_kernel_sup",
]

RESONANCE_THRESHOLD = 1e-3
K_MAX = 20.0
RTOL = 1e-12
ATOL = 1e-14


class JostError(RuntimeError):
    """The Jost integration failed (the offending k is in the message)."""


class ResonanceError(RuntimeError):
    """The edge is resonant (|gamma+| below threshold): kernel bounds are unavailable."""


def _sign(side) -> int:
    if side in ("plus", "+", 1, +1.0):
        return 1
    if side in ("minus", "-", -1, -1.0):
        return -1
    raise ValueError(f"side must be 'plus' or 'minus', got {side!r}")


def alpha(k, side) -> float:
    """alpha_+-(k) = sqrt(1 + k^2) +- k."""
    return float(np.sqrt(1.0 + k * k) + _sign(side) * k)


def _free_flow(lam: float, k: float, t):
    """exp(A0 t) for the free system at spectral value lam (A0^2 = -k^2 I)."""
    t = np.asarray(t, dtype=float)
    a0 = np.array([[1j * lam, 1j], [-1j, -1j * lam]])
    if k == 0.0:
        c, s = np.ones_like(t), t
    else:
        c, s = np.cos(k * t), np.sin(k * t) / k
    return c[..., None, None] * np.eye(2) + s[..., None, None] * a0


@dataclass(frozen=True, eq=False)
class JostSolution:
    """Jost profile m(x; k) on one side, for the lower (or upper) continuum branch.

    ``m`` holds the profile on the operator's grid; :meth:`profile` evaluates it
    anywhere.  ``integrals`` carries the raw scattering integrals (lower
    branch only): ``a``, ``b`` and ``gamma`` (k = 0).
    """

    k: float
    side: str
    m: SpinorField
    alpha_side: float
    branch: str = "lower"
    lam: float = -1.0
    support: float = 0.0
    integrals: dict = field(default_factory=dict, repr=False)
    _dense: object = field(default=None, repr=False)
    _m_edge: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def sign(self) -> int:
        return _sign(self.side)

    @property
    def m_infinity(self) -> np.ndarray:
        a = self.alpha_side
        return np.array([1.0, a], dtype=complex) if self.branch == "lower" else np.array([-a, 1.0], dtype=complex)

    def profile(self, x) -> np.ndarray:
        """m at points ``x``; shape ``x.shape + (2,)``."""
        x = np.asarray(x, dtype=float)
        s, X = self.sign, self.support
        out = np.empty(x.shape + (2,), dtype=complex)
        own = s * x >= X
        far = s * x < -X
        mid = ~(own | far)
        out[own] = self.m_infinity
        if np.any(mid):
            out[mid] = self._dense(x[mid]).T[:, :2]
        if np.any(far):
            xe = -s * X
            me = self._m_edge if self._m_edge is not None else self.m_infinity
            t = x[far] - xe
            E = _free_flow(self.lam, self.k, t)
            out[far] = np.einsum("nij,j->ni", E, me) * np.exp(-1j * s * self.k * t)[:, None]
        return out

    def solution(self, x) -> np.ndarray:
        """u(x) = m(x) exp(+-i k x), shape ``x.shape + (2,)``."""
        x = np.asarray(x, dtype=float)
        return self.profile(x) * np.exp(1j * self.sign * self.k * x)[..., None]

    def u(self) -> SpinorField:
        ph = np.exp(1j * self.sign * self.k * self.m.grid.x)
        return SpinorField(self.m.grid, self.m.u * ph, self.m.v * ph)


def _solve(op: DiracOperator, k: float, s: int, branch: str, rtol: float, atol: float) -> JostSolution:
    grid = op.grid
    lam = -np.sqrt(1.0 + k * k) if branch == "lower" else np.sqrt(1.0 + k * k)
    a_s = np.sqrt(1.0 + k * k) + s * k
    a_o = np.sqrt(1.0 + k * k) - s * k
    side = "plus" if s > 0 else "minus"
    m_inf = np.array([1.0, a_s], dtype=complex) if branch == "lower" else np.array([-a_s, 1.0], dtype=complex)
    X = op.potential.support_radius()
    bf, gf = op.potential.functions()

    dense = None
    m_edge = None
    ints = {"a": 0.0, "b": 0.0, "gamma": 0.0}
    if X > 0:
        def rhs(x, y):
            b = float(bf(x))
            g = float(gf(x))
            m1, m2 = y[0], y[1]
            d1 = 1j * (lam - b - s * k) * m1 - 1j * (g - 1.0) * m2
            d2 = 1j * (g - 1.0) * m1 - 1j * (lam - b + s * k) * m2
            vm1 = b * m1 + g * m2
            vm2 = g * m1 + b * m2
            return np.array([
                d1,
                d2,
                a_o * vm1 + vm2,
                (a_s * vm1 + vm2) * np.exp(2j * s * k * x),
                (b + g) * (m1 + m2),
            ])

        y0 = np.concatenate([m_inf, np.zeros(3, dtype=complex)])
        res = solve_ivp(rhs, (s * X, -s * X), y0, method="DOP853", rtol=rtol, atol=atol, dense_output=True)
        if not res.success:
            raise JostError(f"Jost integration failed at k={k:g}, side={side}: {res.message}")
        dense = res.sol
        yend = res.y[:, -1]
        if not np.all(np.isfinite(yend)):
            raise JostError(f"Jost integration diverged at k={k:g}, side={side}")
        m_edge = yend[:2].copy()
        # integrated from s*X to -s*X, i.e. -s times the integral over the line
        I_a, I_b, I_g = -s * yend[2], -s * yend[3], -s * yend[4]
        ints["gamma"] = complex(I_g)
        if k != 0.0:
            # both sides carry the same sign once the Volterra integral is taken
            # over (x, +inf) resp. (-inf, x) with positive orientation
            ints["a"] = complex(1.0 + I_a / (2j * k))
            ints["b"] = complex(-I_b / (2j * k))
        else:
            ints["a"] = ints["b"] = complex(np.nan, np.nan)
    else:
        if k != 0.0:
            ints["a"], ints["b"] = 1.0 + 0j, 0j
        else:
            ints["a"] = ints["b"] = complex(np.nan, np.nan)
        ints["gamma"] = 0j

    proto = JostSolution(float(k), side, SpinorField.zeros(grid), float(a_s), branch, float(lam), float(X),
                         ints if branch == "lower" else {}, dense, m_edge)
    mx = proto.profile(grid.x)
    return JostSolution(float(k), side, SpinorField(grid, mx[:, 0], mx[:, 1]), float(a_s), branch,
                        float(lam), float(X), proto.integrals, dense, m_edge)


@lru_cache(maxsize=512)
def _solve_cached(op, k, s, branch, rtol, atol):
    return _solve(op, k, s, branch, rtol, atol)


def solve_jost(op: DiracOperator, k: float, side="plus", *, k_max: float = K_MAX,
               rtol: float = RTOL, atol: float = ATOL) -> JostSolution:
    """Lower-branch Jost profile m+-(x; k) for lambda = -sqrt(1 + k^2)."""
    k = float(k)
    if not np.isfinite(k) or abs(k) > k_max:
        raise JostError(f"|k| = {abs(k):g} outside the supported range (k_max = {k_max:g})")
    return _solve_cached(op, k, _sign(side), "lower", rtol, atol)


def upper_branch_jost(op: DiracOperator, k: float, side="plus", method: str = "auto",
                      *, k_max: float = K_MAX) -> JostSolution:
    """Upper-branch profile with m -> [-alpha, 1] at the side's own infinity.

    ``method='symmetry'`` rotates the lower-branch solution by [[0, -1], [1, 0]],
    which is only valid for beta = 0; ``'direct'`` integrates the system at
    lambda = +sqrt(1 + k^2); ``'auto'`` picks symmetry when beta vanishes.
    """
    k = float(k)
    if abs(k) > k_max:
        raise JostError(f"|k| = {abs(k):g} outside the supported range (k_max = {k_max:g})")
    beta_zero = not np.any(op.potential.beta)
    if method == "auto":
        method = "symmetry" if beta_zero else "direct"
    if method == "direct":
        return _solve_cached(op, k, _sign(side), "upper", RTOL, ATOL)
    if method != "symmetry":
        raise ValueError("method must be 'auto', 'symmetry' or 'direct'")
    if not beta_zero:
        raise ValueError("the symmetry route needs beta = 0")
    low = solve_jost(op, k, side)
    m = SpinorField(op.grid, -low.m.v, low.m.u)
    J = np.array([[0.0, -1.0], [1.0, 0.0]])

    class _Rotated:
        def __call__(self, x):
            y = low._dense(x)
            return np.vstack([-y[1], y[0]])

    edge = J @ low._m_edge if low._m_edge is not None else None
    return JostSolution(k, low.side, m, low.alpha_side, "upper", -low.lam, low.support, {},
                        _Rotated() if low._dense is not None else None, edge)


# -- scattering data ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ScatteringCoefficients:
    """a+-(k), b+-(k) on ``k_grid``; the ``*_neg`` arrays hold the values at -k."""

    k_grid: np.ndarray
    a_plus: np.ndarray
    b_plus: np.ndarray
    a_minus: np.ndarray
    b_minus: np.ndarray
    a_plus_neg: np.ndarray = field(repr=False, default=None)
    b_plus_neg: np.ndarray = field(repr=False, default=None)
    b_minus_neg: np.ndarray = field(repr=False, default=None)

    def residuals(self) -> dict:
        """Absolute residuals of the scattering identities, one array per identity."""
        k = self.k_grid
        rho = (np.sqrt(1 + k * k) - k) / (np.sqrt(1 + k * k) + k)
        out = {
            "a_plus_eq_a_minus": np.abs(self.a_plus - self.a_minus),
            "unitarity": np.abs(np.abs(self.a_plus) ** 2 - rho * np.abs(self.b_plus) ** 2 - 1.0),
        }
        if self.a_plus_neg is not None:
            out["b_plus_eq_minus_b_minus_neg"] = np.abs(self.b_plus + self.b_minus_neg)
            out["a_plus_reflect"] = np.abs(self.a_plus_neg - np.conj(self.a_plus))
            out["b_plus_reflect"] = np.abs(self.b_plus_neg - rho * np.conj(self.b_plus))
        return out


def _threads(threads):
    if threads is None:
        threads = int(os.environ.get("DGL_THREADS", "1") or 1)
    return max(1, int(threads))


def scattering_coefficients(op: DiracOperator, k_grid, threads: Optional[int] = None,
                            mirror: bool = True) -> ScatteringCoefficients:
    """Evaluate a+-, b+- by the integral formulas; k = 0 is not allowed.

    With ``mirror`` the values at -k are computed as well so that every
    identity can be checked.  Per-k solves run on ``threads`` workers.
    """
    k_grid = np.atleast_1d(np.asarray(k_grid, dtype=float))
    if np.any(k_grid == 0.0):
        raise ValueError("k = 0 must be excluded: a and b are singular there")
    ks = sorted(set(k_grid.tolist()) | (set((-k_grid).tolist()) if mirror else set()))

    def job(k):
        try:
            jp, jm = solve_jost(op, k, "plus"), solve_jost(op, k, "minus")
        except JostError as exc:
            raise JostError(f"scattering failed at k={k:g}: {exc}") from exc
        return jp.integrals["a"], jp.integrals["b"], jm.integrals["a"], jm.integrals["b"]

    n = _threads(threads)
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as ex:
            vals = dict(zip(ks, ex.map(job, ks)))
    else:
        vals = {k: job(k) for k in ks}
    take = lambda ks_, i: np.array([vals[k][i] for k in ks_], dtype=complex)  # noqa: E731
    kl = k_grid.tolist()
    neg = (-k_grid).tolist()
    return ScatteringCoefficients(
        k_grid, take(kl, 0), take(kl, 1), take(kl, 2), take(kl, 3),
        take(neg, 0) if mirror else None,
        take(neg, 1) if mirror else None,
        take(neg, 3) if mirror else None,
    )


class Wronskian(NamedTuple):
    values: np.ndarray
    mean: complex
    deviation: float  # max |W - mean| / |mean|


def wronskian(up: JostSolution, um: JostSolution) -> Wronskian:
    """W(x) = u+_1 u-_2 - u+_2 u-_1 on the grid (equal to the same form in m)."""
    if up.sign != 1 or um.sign != -1:
        raise ValueError("wronskian expects (plus, minus) solutions")
    if up.k != um.k or up.branch != um.branch:
        raise ValueError("Jost solutions must share k and branch")
    if up.m.grid != um.m.grid:
        raise ValueError("Jost solutions live on different grids")
    w = up.m.u * um.m.v - up.m.v * um.m.u
    mean = complex(np.mean(w))
    dev = float(np.max(np.abs(w - mean)) / max(abs(mean), 1e-300))
    return Wronskian(w, mean, dev)


def gamma_resonance(op: DiracOperator):
    """(gamma+, gamma-) = int (beta + gamma)(m1 + m2) dx at k = 0."""
    return (solve_jost(op, 0.0, "plus").integrals["gamma"],
            solve_jost(op, 0.0, "minus").integrals["gamma"])


def _kernel_G(s: int, k: float, t):
    """Volterra kernel G+-(t; k), shape t.shape + (2, 2)."""
    t = np.asarray(t, dtype=float)
    if k == 0.0:
        one = np.ones_like(t)
        G = np.stack([np.stack([t + 1j * one, t + 0j], -1), np.stack([t + 0j, t - 1j * one], -1)], -2)
        return s * G
    a_s = np.sqrt(1 + k * k) + s * k
    a_o = np.sqrt(1 + k * k) - s * k
    e = np.exp(-2j * s * k * t)
    G = np.stack([np.stack([a_o - a_s * e, 1 - e], -1), np.stack([1 - e, a_s - a_o * e], -1)], -2)
    return G / (2j * k)


def volterra_residual(op: DiracOperator, jost: JostSolution, x_points=None, panels: int = 400,
                      order: int = 16) -> float:
    """max over ``x_points`` of |m(x) - m_inf - int G(x - y) V(y) m(y) dy|.

    The integral runs over (x, inf) for the plus side and (-inf, x) for the
    minus side, both with positive orientation.
    The integral is done by composite Gauss-Legendre on [x, +-X] (the
    potential vanishes beyond X), independently of the ODE formulation.
    """
    if jost.branch != "lower":
        raise ValueError("the Volterra form is implemented for the lower branch")
    s, X = jost.sign, jost.support
    if x_points is None:
        x_points = np.linspace(-0.9 * X, 0.9 * X, 11) if X > 0 else np.array([0.0])
    bf, gf = op.potential.functions()
    gx, gw = np.polynomial.legendre.leggauss(order)
    worst = 0.0
    for x0 in np.atleast_1d(x_points):
        lo, hi = (x0, X) if s > 0 else (-X, x0)
        if hi <= lo:
            integral = np.zeros(2, dtype=complex)
        else:
            edges = np.linspace(lo, hi, panels + 1)
            mid = 0.5 * (edges[1:] + edges[:-1])
            half = 0.5 * (edges[1:] - edges[:-1])
            y = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
            w = (half[:, None] * gw[None, :]).ravel()
            m = jost.profile(y)
            b, g = bf(y), gf(y)
            vm = np.stack([b * m[:, 0] + g * m[:, 1], g * m[:, 0] + b * m[:, 1]], -1)
            G = _kernel_G(s, jost.k, x0 - y)
            integral = np.einsum("n,nij,nj->i", w, G, vm)
        r = jost.profile(np.array([x0]))[0] - jost.m_infinity - integral
        worst = max(worst, float(np.max(np.abs(r))))
    return worst


# -- resolvent ---------------------------------------------------------------


_SIGMA1 = np.array([[0.0, 1.0], [1.0, 0.0]])


def _kernel_parts(op, lam, sign):
    if not lam <= -1.0:
        raise ValueError("resolvent_kernel is implemented on the lower branch lambda <= -1")
    k = -np.sqrt(lam * lam - 1.0)
    kk = k if _sign(sign) > 0 else -k
    jp, jm = solve_jost(op, kk, "plus"), solve_jost(op, kk, "minus")
    mp, mm = jp.profile(np.array([0.0]))[0], jm.profile(np.array([0.0]))[0]
    W = mp[0] * mm[1] - mp[1] * mm[0]
    if abs(W) < 1e-14:
        raise ResonanceError(f"vanishing Wronskian at lambda={lam:g}")
    return jp, jm, W


def _check_resonance(op, threshold):
    gp, _ = gamma_resonance(op)
    if abs(gp) < threshold:
        raise ResonanceError(f"|gamma+| = {abs(gp):.3e} below threshold {threshold:g}: edge resonance")


def resolvent_branches(op: DiracOperator, lam: float, sign, x: float, y: float):
    """Both formula branches (x > y form, x < y form) of the limiting kernel at (x, y)."""
    jp, jm, W = _kernel_parts(op, lam, sign)
    up_x, um_x = jp.solution(np.array([x]))[0], jm.solution(np.array([x]))[0]
    up_y, um_y = jp.solution(np.array([y]))[0], jm.solution(np.array([y]))[0]
    c = 1j / W
    return c * np.outer(up_x, _SIGMA1 @ um_y), c * np.outer(um_x, _SIGMA1 @ up_y)


def resolvent_kernel(op: DiracOperator, lam: float, sign, x: float, y: float,
                     threshold: float = RESONANCE_THRESHOLD) -> np.ndarray:
    """Kernel of the limiting resolvent (H - lam -+ i0)^{-1} at (x, y), lam <= -1.

    ``sign='plus'`` is the limit from the upper half plane.  On the diagonal
    x = y the mean of the two one-sided limits is returned.
    """
    _check_resonance(op, threshold)
    g = op.grid
    for z in (x, y):
        if not g.x_min <= z <= g.x_max:
            raise ValueError("x and y must lie inside the grid")
    right, left = resolvent_branches(op, lam, sign, x, y)
    if x > y:
        return right
    if x < y:
        return left
    return 0.5 * (right + left)


def weighted_kernel_sup(op: DiracOperator, lambdas, points, sign="plus", weight: float = 2.0,
                        threshold: float = RESONANCE_THRESHOLD) -> float:
    """sup over lambdas and point pairs of <x>^-w <y>^-w |R(lam)(x, y)|_2."""
    _check_resonance(op, threshold)
    points = np.asarray(points, dtype=float)
    best = 0.0
    for lam in lambdas:
        jp, jm, W = _kernel_parts(op, float(lam), sign)
        up, um = jp.solution(points), jm.solution(points)
        wt = japanese(points) ** (-weight)
        for i, x in enumerate(points):
            for j, y in enumerate(points):
                if x > y:
                    K = np.outer(up[i], _SIGMA1 @ um[j])
                elif x < y:
                    K = np.outer(um[i], _SIGMA1 @ up[j])
                else:
                    K = 0.5 * (np.outer(up[i], _SIGMA1 @ um[j]) + np.outer(um[i], _SIGMA1 @ up[j]))
                best = max(best, wt[i] * wt[j] * np.linalg.norm(K, 2) / abs(W))
    return float(best)
