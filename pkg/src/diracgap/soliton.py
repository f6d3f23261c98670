"""Small gap solitons: the stationary problem (H - omega) U + N(U) = 0.

The branch bifurcating from the linear eigenpair (omega_0, u_0) is computed by
Newton iteration on the symmetric reduction V = conj(U), with the amplitude
``a = <u_0, U>`` prescribed and omega as an extra unknown.  Equivalently
U = a u_0 + W with W orthogonal to u_0.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, NamedTuple

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq

from .core import Grid, Nonlinearity, SpinorField, eval_hessian, eval_nonlinearity, inner_product
from .dirac_op import DiracOperator

__all__ = [
    "NewtonError",
    "BranchError",
    "BranchPoint",
    "SolitonBranch",
    "explicit_soliton",
    "stationary_residual",
    "continue_branch",
    "branch_derivatives",
    "coupling_constant",
]

NEWTON_TOL = 1e-10
MAX_ITER = 50


class NewtonError(RuntimeError):
    """Newton iteration did not reach the residual tolerance."""


class BranchError(RuntimeError):
    """The branch went to the side of omega_0 not allowed by <u_0, N(u_0)>."""


def explicit_soliton(omega: float, grid: Grid) -> SpinorField:
    """Exact soliton of the homogeneous problem (V = 0, bragg_quartic with alpha = 1/3)."""
    if not -1.0 < omega < 1.0:
        raise ValueError("explicit soliton needs |omega| < 1")
    mu = np.sqrt(1.0 - omega * omega)
    x = grid.x
    with np.errstate(over="ignore"):
        den = np.sqrt(1.0 - omega) * np.cosh(mu * x) + 1j * np.sqrt(1.0 + omega) * np.sinh(mu * x)
        U = mu / den
    U = np.where(np.isfinite(den), U, 0.0)
    return SpinorField(grid, U, U.conj())


def stationary_residual(op: DiracOperator, nl: Nonlinearity, omega: float, U: SpinorField) -> float:
    """L2 norm of (H - omega) U + N(U)."""
    r = op.apply(U) - omega * U + eval_nonlinearity(nl, U)
    return r.norm()


def coupling_constant(op: DiracOperator, nl: Nonlinearity) -> float:
    """<u_0, N(u_0)>, real for the catalogued nonlinearities."""
    u0 = op.u0
    return float(inner_product(u0, eval_nonlinearity(nl, u0)).real)


class BranchPoint(NamedTuple):
    a: float
    omega: float
    profile: SpinorField
    residual: float
    iterations: int


def _lagrange_basis(nodes):
    """Coefficient rows (highest power first) of the Lagrange basis polynomials."""
    nodes = np.asarray(nodes, dtype=float)
    rows = []
    for j in range(len(nodes)):
        others = np.delete(nodes, j)
        rows.append(np.poly(others) / np.prod(nodes[j] - others))
    return np.array(rows)


@dataclass(frozen=True, eq=False)
class SolitonBranch:
    """Points (a, omega, U) of the branch, in increasing a.

    Between points U / a and omega are local degree-4 polynomials in a^2;
    omega is mapped back to a by inverting the omega interpolant.
    """

    nonlinearity: Nonlinearity
    operator: DiracOperator
    points: List[BranchPoint]
    omega0: float
    coupling: float = 0.0
    _stack: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self._stack is None:
            st = np.stack([p.profile.u for p in self.points]) if self.points else np.zeros((0, 0))
            object.__setattr__(self, "_stack", st)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([p.a for p in self.points])

    @property
    def omegas(self) -> np.ndarray:
        return np.array([p.omega for p in self.points])

    @property
    def omega_range(self):
        w = self.omegas
        return float(w.min()), float(w.max())

    # U is odd and omega even in a, so both are interpolated in s = a^2
    # through Q(s) = U / a and Omega(s) = omega.  Each interval between
    # consecutive amplitudes owns one 5-node stencil, so the interpolant is a
    # fixed polynomial on the interval and continuous at the nodes.

    def _interval(self, a):
        amps = self.amplitudes
        k = int(np.searchsorted(amps, a))
        return min(max(k, 1), len(amps) - 1)

    def _stencil(self, k, width=5):
        m = len(self.points)
        width = min(width, m)
        lo = min(max(k - width // 2, 0), m - width)
        return np.arange(lo, lo + width)

    def _basis(self, k):
        cache = self.__dict__.setdefault("_basis_cache", {})
        if k not in cache:
            idx = self._stencil(k)
            C = _lagrange_basis(self.amplitudes[idx] ** 2)
            ders = [C]
            for _ in range(2):
                ders.append(np.array([np.polyder(c) for c in ders[-1]]))
            om = self.omegas[idx]
            cache[k] = (idx, ders, [d.T @ om for d in ders])
        return cache[k]

    def _omega_of_a(self, a, der=0, k=None):
        _, _, om = self._basis(self._interval(a) if k is None else k)
        s = a * a
        if der == 0:
            return float(np.polyval(om[0], s))
        o1 = float(np.polyval(om[1], s))
        if der == 1:
            return 2 * a * o1
        return 2 * o1 + 4 * s * float(np.polyval(om[2], s))

    def amplitude_at(self, omega: float) -> float:
        return self._locate(omega)[0]

    def _locate(self, omega):
        """(a, interval index) with omega(a) = omega."""
        lo, hi = self.omega_range
        if not lo <= omega <= hi:
            raise ValueError(f"omega={omega} outside the branch range [{lo}, {hi}]")
        amps, oms = self.amplitudes, self.omegas
        if len(amps) == 1:
            return float(amps[0]), 1
        j = int(np.argmin(np.abs(oms - omega)))
        if oms[j] == omega:
            return float(amps[j]), self._interval(amps[j])
        # bracketing pair of nodes (omega is monotone in a)
        s = np.sign(oms[-1] - oms[0])
        k = int(np.searchsorted(s * oms, s * omega))
        k = min(max(k, 1), len(amps) - 1)

        def f(a):
            return self._omega_of_a(a, 0, k) - omega

        fa, fb = f(amps[k - 1]), f(amps[k])
        if fa * fb > 0:  # omega within rounding of a node
            return float(amps[k - 1] if abs(fa) < abs(fb) else amps[k]), k
        return brentq(f, amps[k - 1], amps[k], xtol=1e-16, rtol=1e-15), k

    def profile_at(self, omega: float, ders: int = 0):
        """U(omega) and, for ``ders`` > 0, its omega-derivatives up to that order (list)."""
        a, k = self._locate(omega)
        idx, C, _ = self._basis(k)
        amps = self.amplitudes[idx]
        Q = self._stack[idx] / amps[:, None]
        s = a * a
        q = [np.array([np.polyval(c, s) for c in C[d]]) @ Q for d in range(ders + 1)]
        grid = self.operator.grid
        U = a * q[0]
        out = [SpinorField(grid, U, U.conj())]
        if ders >= 1:
            w1 = self._omega_of_a(a, 1, k)
            Ua = q[0] + 2 * s * q[1]
            d1 = Ua / w1
            out.append(SpinorField(grid, d1, d1.conj()))
        if ders >= 2:
            w2 = self._omega_of_a(a, 2, k)
            Uaa = 6 * a * q[1] + 4 * a * s * q[2]
            d2 = (Uaa - d1 * w2) / w1 ** 2
            out.append(SpinorField(grid, d2, d2.conj()))
        return out[0] if ders == 0 else out


def _newton(op, nl, a, U, omega, tol, max_iter):
    grid = op.grid
    n = grid.n_points
    dx = grid.dx
    D = op.derivative_matrix
    beta = op.potential.beta
    gm1 = op.potential.gamma - 1.0
    phi = op.u0.u

    def residual(U, omega):
        f = SpinorField(grid, U, U.conj())
        N = eval_nonlinearity(nl, f)
        E = -1j * (D @ U) + (beta - omega) * U + gm1 * U.conj() + N.u
        g = 2 * dx * np.real(np.vdot(phi, U)) - a
        return E, g

    last = np.inf
    for it in range(1, max_iter + 1):
        E, g = residual(U, omega)
        F = np.concatenate([E.real, E.imag, [g]])
        f = SpinorField(grid, U, U.conj())
        V11, V12 = eval_hessian(nl, f)
        A = beta - omega + V11[:, 0, 0] + V12[:, 0, 1]
        B = gm1 + V11[:, 0, 1] + V12[:, 0, 0]
        J = np.zeros((2 * n + 1, 2 * n + 1))
        P, M = A + B, A - B
        J[:n, :n] = np.diag(P.real)
        J[:n, n:2 * n] = D - np.diag(M.imag)
        J[n:2 * n, :n] = -D + np.diag(P.imag)
        J[n:2 * n, n:2 * n] = np.diag(M.real)
        J[:n, -1] = -U.real
        J[n:2 * n, -1] = -U.imag
        J[-1, :n] = 2 * dx * phi.real
        J[-1, n:2 * n] = 2 * dx * phi.imag
        try:
            step = sla.solve(J, -F, check_finite=True)
        except (sla.LinAlgError, ValueError) as exc:
            raise NewtonError(f"singular Newton system at a={a:g}: {exc}") from exc
        U = U + step[:n] + 1j * step[n:2 * n]
        omega = omega + step[-1]
        size = float(np.max(np.abs(step)))
        if size < 1e-14 * max(1.0, float(np.max(np.abs(U)))) or (size > 0.5 * last and size < 1e-11):
            break
        last = size
    E, g = residual(U, omega)
    res = float(np.sqrt(2 * dx) * np.linalg.norm(E))
    if not (res < tol and abs(g) < tol):
        raise NewtonError(f"Newton did not converge at a={a:g}: residual {res:.3e} after {it} iterations")
    return U, float(omega), res, it


def continue_branch(op: DiracOperator, nl: Nonlinearity, a_values, tol: float = NEWTON_TOL,
                    max_iter: int = MAX_ITER) -> SolitonBranch:
    """Continue the soliton branch over increasing positive amplitudes ``a_values``."""
    a_values = np.asarray(a_values, dtype=float)
    if a_values.ndim != 1 or len(a_values) == 0:
        raise ValueError("a_values must be a non-empty 1-D array")
    if np.any(a_values <= 0) or np.any(np.diff(a_values) <= 0):
        raise ValueError("a_values must be positive and strictly increasing")
    omega0 = op.omega0
    u0 = op.u0
    c = coupling_constant(op, nl)
    if abs(c) < 1e-14:
        raise ValueError("<u0, N(u0)> vanishes: no small-amplitude branch")
    p = nl.degree_p
    points: List[BranchPoint] = []
    for a in a_values:
        if not points:
            U = a * u0.u
            omega = omega0 + a ** (2 * p) * c
        else:
            prev = points[-1]
            U = prev.profile.u * (a / prev.a)
            omega = omega0 + (prev.omega - omega0) * (a / prev.a) ** (2 * p)
        U, omega, res, it = _newton(op, nl, a, np.array(U, dtype=complex), omega, tol, max_iter)
        if np.sign(omega - omega0) != np.sign(c):
            raise BranchError(
                f"branch at a={a:g} has omega - omega0 = {omega - omega0:.3e}, "
                f"opposite to sign <u0, N(u0)> = {np.sign(c):+.0f}"
            )
        prof = SpinorField(op.grid, U, U.conj())
        points.append(BranchPoint(float(a), omega, prof, res, it))
    return SolitonBranch(nl, op, points, omega0, c)


def branch_derivatives(branch: SolitonBranch, omega: float):
    """(dU/domega, d||U||^2/domega) at an interior omega of the branch."""
    lo, hi = branch.omega_range
    if not lo < omega < hi:
        raise ValueError(f"omega={omega} is not interior to the branch range ({lo}, {hi})")
    U, dU = branch.profile_at(omega, ders=1)
    return dU, float(2.0 * inner_product(U, dU).real)
