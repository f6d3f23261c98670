"""Linearisation about a gap soliton and its block diagonalisation.

Perturbations are written as [U1; U2] with U2 standing for the conjugate
perturbation, and

    H_w = [[H - w + V11, V12], [conj(V12), conj(H) - w + conj(V11)]],
    L_w = -i sigma H_w,  sigma = diag(I, -I).

The orthogonal 4 x 4 matrix S (acting pointwise) splits H_w into two 2 x 2
Dirac operators H+ and H- when the profile obeys V = conj(U).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from .core import Grid, Nonlinearity, SpinorField, eval_hessian, inner_product
from .dirac_op import DiracOperator, SpectrumError, localized_modes

__all__ = [
    "SymmetryError",
    "LinearizationMatrices",
    "BlockOperators",
    "S_MATRIX",
    "linearization_matrices",
    "full_operator",
    "block_operators",
    "paper_potentials",
    "kernel_identities",
    "jordan_chain_residuals",
    "linearized_spectrum",
    "default_margin",
]

S_MATRIX = np.array([
    [1, 0, 1, 0],
    [0, 1, 0, -1],
    [0, 1, 0, 1],
    [1, 0, -1, 0],
], dtype=float) / np.sqrt(2.0)


class SymmetryError(ValueError):
    """Profile violates V = conj(U); the block form does not apply."""


@dataclass(frozen=True, eq=False)
class LinearizationMatrices:
    """Pointwise 2 x 2 fields V11, V12 (shape (n, 2, 2)) with dN = V11 h + V12 conj(h)."""

    grid: Grid
    v11: np.ndarray = field(repr=False)
    v12: np.ndarray = field(repr=False)

    def apply(self, h: SpinorField) -> SpinorField:
        w = h.stacked().T
        out = np.einsum("nij,nj->ni", self.v11, w) + np.einsum("nij,nj->ni", self.v12, w.conj())
        return SpinorField(self.grid, out[:, 0], out[:, 1])

    def symmetry_defect(self) -> float:
        """max of |V11 - V11^H| and |V12 - V12^T| over the grid."""
        d1 = np.abs(self.v11 - np.conj(np.swapaxes(self.v11, 1, 2))).max()
        d2 = np.abs(self.v12 - np.swapaxes(self.v12, 1, 2)).max()
        return float(max(d1, d2))


def linearization_matrices(nl: Nonlinearity, U: SpinorField) -> LinearizationMatrices:
    v11, v12 = eval_hessian(nl, U)
    return LinearizationMatrices(U.grid, v11, v12)


def _mul(lm_block, i, j):
    return np.diag(lm_block[:, i, j])


def full_operator(op: DiracOperator, omega: float, lm: LinearizationMatrices) -> np.ndarray:
    """Assembled 4n x 4n H_w acting on [u1, v1, u2, v2] stacked node vectors."""
    n = op.grid.n_points
    H = op.matrix() - omega * np.eye(2 * n)
    P11 = np.block([[_mul(lm.v11, 0, 0), _mul(lm.v11, 0, 1)], [_mul(lm.v11, 1, 0), _mul(lm.v11, 1, 1)]])
    P12 = np.block([[_mul(lm.v12, 0, 0), _mul(lm.v12, 0, 1)], [_mul(lm.v12, 1, 0), _mul(lm.v12, 1, 1)]])
    return np.block([[H + P11, P12], [P12.conj(), H.conj() + P11.conj()]])


class BlockOperators(NamedTuple):
    h_plus: np.ndarray
    h_minus: np.ndarray
    omega: float
    block_residual: float
    grid: Grid
    stencil_order: int


def block_operators(op: DiracOperator, omega: float, lm: LinearizationMatrices,
                    profile: SpinorField = None, sym_tol: float = 1e-6) -> BlockOperators:
    """H+ and H- as the diagonal blocks of S^T H_w S; off-diagonal size is reported."""
    if profile is not None:
        defect = float(np.abs(profile.v - profile.u.conj()).max())
        if defect > sym_tol:
            raise SymmetryError(f"profile violates V = conj(U) by {defect:.2e}")
    n = op.grid.n_points
    Hw = full_operator(op, omega, lm)
    B = [[Hw[i * n:(i + 1) * n, j * n:(j + 1) * n] for j in range(4)] for i in range(4)]
    S = S_MATRIX
    T = [[sum(S[i, a] * S[j, b] * B[i][j] for i in range(4) for j in range(4) if S[i, a] and S[j, b])
          for b in range(4)] for a in range(4)]
    off = max(np.abs(T[a][b]).max() for a in range(2) for b in range(2, 4))
    off = max(off, max(np.abs(T[a][b]).max() for a in range(2, 4) for b in range(2)))
    hp = np.block([[T[0][0], T[0][1]], [T[1][0], T[1][1]]])
    hm = np.block([[T[2][2], T[2][3]], [T[3][2], T[3][3]]])
    return BlockOperators(hp, hm, float(omega), float(off), op.grid, op.stencil_order)


def paper_potentials(lm: LinearizationMatrices):
    """V+ and V- assembled entrywise from second derivatives of W_N, shape (n, 2, 2) each.

    Uses W_{UbarU} = V11[0,0], W_{UbarV} = V11[0,1], W_{UV_bar} = V11[1,0],
    W_{UbarUbar} = V12[0,0], W_{UbarVbar} = V12[0,1] and conjugates for the
    holomorphic pairs.
    """
    v11, v12 = lm.v11, lm.v12
    w_bu = v11[:, 0, 0]
    w_bv = v11[:, 0, 1]
    w_u_bv = v11[:, 1, 0]
    w_bb = v12[:, 0, 0]
    w_b_bv = v12[:, 0, 1]
    w_uu = w_bb.conj()
    w_uv = w_b_bv.conj()
    out = []
    for s in (1.0, -1.0):
        V = np.empty((len(w_bu), 2, 2), dtype=complex)
        V[:, 0, 0] = w_bu + s * w_b_bv
        V[:, 0, 1] = w_bb + s * w_bv
        V[:, 1, 0] = w_uu + s * w_u_bv
        V[:, 1, 1] = w_bu + s * w_uv
        out.append(V)
    return tuple(out)


def kernel_identities(op: DiracOperator, omega: float, lm: LinearizationMatrices,
                      U: SpinorField, dU: SpinorField):
    """(res1, res2): L2 residuals of the gauge kernel relation and its Jordan partner."""
    Ub, dUb = U.conj(), dU.conj()

    def v11(h):
        w = np.einsum("nij,nj->ni", lm.v11, h.stacked().T)
        return SpinorField(U.grid, w[:, 0], w[:, 1])

    def v12(h):
        w = np.einsum("nij,nj->ni", lm.v12, h.stacked().T)
        return SpinorField(U.grid, w[:, 0], w[:, 1])

    r1 = op.apply(U) - omega * U + v11(U) - v12(Ub)
    r2 = op.apply(dU) - omega * dU + v11(dU) + v12(dUb) - U
    return r1.norm(), r2.norm()


def jordan_chain_residuals(op: DiracOperator, omega: float, lm: LinearizationMatrices,
                           U: SpinorField, dU: SpinorField):
    """(||L_w F||, ||L_w G - F||) with F = i[U; -conj U], G = -d/dw [U; conj U]."""
    Hw = full_operator(op, omega, lm)
    n = op.grid.n_points
    F = 1j * np.concatenate([U.flat(), -U.conj().flat()])
    G = -np.concatenate([dU.flat(), dU.conj().flat()])
    sigma = np.concatenate([np.ones(2 * n), -np.ones(2 * n)])

    def L(w):
        return -1j * sigma * (Hw @ w)

    dx = op.grid.dx
    nrm = lambda w: float(np.sqrt(dx) * np.linalg.norm(w))  # noqa: E731
    return nrm(L(F)), nrm(L(G) - F)


def default_margin(grid: Grid, stencil_order: int) -> float:
    """Distance kept from the gap edges when collecting eigenvalues.

    Finite differences shift the edges at order dx^stencil_order; with the
    spectral discretisation the shift comes from the finite box instead.
    """
    if stencil_order == 0:
        return 10.0 * (np.pi / (grid.x_max - grid.x_min)) ** 2
    return 10.0 * grid.dx ** 2


def linearized_spectrum(blocks: BlockOperators, window=None):
    """Localised gap eigenvalues of H+ and H- (lists, ascending)."""
    w = blocks.omega
    if window is None:
        m = default_margin(blocks.grid, blocks.stencil_order)
        window = (-1.0 - w + m, 1.0 - w - m)
    lo, hi = window
    if not (-1.0 - w <= lo < hi <= 1.0 - w):
        raise ValueError("window must lie inside the gap (-1 - omega, 1 - omega)")
    res = []
    for M in (blocks.h_plus, blocks.h_minus):
        try:
            vals, vecs = sla.eigh(M, subset_by_value=(lo, hi), driver="evr")
        except (np.linalg.LinAlgError, ValueError) as exc:  # pragma: no cover
            raise SpectrumError(f"eigensolver failed: {exc}") from exc
        res.append([lam for lam, _, _ in localized_modes(vals, vecs, blocks.grid)])
    return res[0], res[1]


def norm_derivative(U: SpinorField, dU: SpinorField) -> float:
    """d/dw ||U||^2 = 2 Re <U, dU>."""
    return float(2.0 * inner_product(U, dU).real)
