"""The linear Dirac operator H = D + V on a grid: assembly, gap spectrum, P_ac."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import List, NamedTuple

import numpy as np
import scipy.linalg as sla

from .core import DimensionError, Grid, PotentialPair, SpinorField, derivative, inner_product

__all__ = [
    "DiracOperator",
    "BoundState",
    "SpectrumError",
    "StateError",
    "DEFAULT_WINDOW",
    "fix_phase",
    "physical_modes",
    "localized_modes",
]

DEFAULT_WINDOW = (-1.0 + 1e-6, 1.0 - 1e-6)


class SpectrumError(RuntimeError):
    """Eigen-solver failure or an unusable discrete spectrum."""


class StateError(RuntimeError):
    """Operation needs a cached single bound state that is not available."""


class BoundState(NamedTuple):
    omega: float
    eigfn: SpinorField
    boundary_amplitude: float
    truncated: bool


def fix_phase(f: SpinorField) -> SpinorField:
    """Rotate ``f`` so that v = conj(u) holds as closely as possible.

    Simple eigenvectors of operators commuting with (u, v) -> (conj v, conj u)
    are fixed by that map up to a phase; this picks the phase. The overall sign
    is chosen so that Re u is positive at the peak of |u|.
    """
    c = inner_product(f, f.swap_conj())
    if abs(c) > 1e-14:
        f = f * np.exp(0.5j * np.angle(c))
    i = int(np.argmax(np.abs(f.u)))
    if f.u[i].real < 0:
        f = -f
    return f


def _high_fraction(vecs: np.ndarray, n: int) -> np.ndarray:
    """Fraction of each column's spectral energy at |q| above half the Nyquist wavenumber."""
    q = np.abs(np.fft.fftfreq(n))
    hi = q > 0.25
    fu = np.fft.fft(vecs[:n], axis=0)
    fv = np.fft.fft(vecs[n:], axis=0)
    e = np.abs(fu) ** 2 + np.abs(fv) ** 2
    return e[hi].sum(axis=0) / e.sum(axis=0)


def physical_modes(vals: np.ndarray, vecs: np.ndarray, n: int, cluster_tol: float = 1e-7):
    """Drop grid-scale eigenvectors (fermion doublers, the Nyquist mode).

    Degenerate clusters are first rotated so that smooth and grid-scale
    content separate, then each vector is kept when less than half of its
    energy sits at high wavenumber.
    """
    keep_vals, keep_vecs = [], []
    i = 0
    m = len(vals)
    while i < m:
        j = i + 1
        while j < m and vals[j] - vals[j - 1] < cluster_tol:
            j += 1
        block = vecs[:, i:j]
        if j - i > 1:
            hi_mask = np.abs(np.fft.fftfreq(n)) > 0.25
            Fu = np.fft.fft(block[:n], axis=0) / np.sqrt(n)
            Fv = np.fft.fft(block[n:], axis=0) / np.sqrt(n)
            P = Fu[hi_mask].conj().T @ Fu[hi_mask] + Fv[hi_mask].conj().T @ Fv[hi_mask]
            _, R = np.linalg.eigh(P)
            block = block @ R
        frac = _high_fraction(block, n)
        for c in range(block.shape[1]):
            if frac[c] < 0.5:
                keep_vals.append(vals[i + c] if j - i == 1 else float(np.mean(vals[i:j])))
                keep_vecs.append(block[:, c])
        i = j
    if keep_vecs:
        return np.array(keep_vals), np.stack(keep_vecs, axis=1)
    return np.array([]), np.zeros((2 * n, 0), dtype=complex)


def localized_modes(vals, vecs, grid: Grid):
    """Physical, localised eigenpairs as (value, normalised phase-fixed field, boundary amplitude).

    Grid-scale vectors are removed by :func:`physical_modes`; extended box
    states of the discretised continuum (boundary amplitude above a tenth of
    the peak) are dropped as well.
    """
    n = grid.n_points
    vals, vecs = physical_modes(vals, vecs, n)
    edge = max(1, n // 100)
    out = []
    for lam, w in zip(vals, vecs.T):
        f = SpinorField.from_flat(grid, w)
        f = fix_phase(f / f.norm())
        mod = f.modulus()
        amp = float(max(mod[:edge].max(), mod[-edge:].max()))
        if amp > 0.1 * mod.max():
            continue
        out.append((float(lam), f, amp))
    return out


@dataclass(frozen=True, eq=False)
class DiracOperator:
    """H = [[-i d/dx + beta, gamma - 1], [gamma - 1, i d/dx + beta]].

    ``stencil_order`` 0 selects Fourier differentiation (the default, and the
    discretisation shared with the split-step evolution); 2 and 4 select
    central finite differences.
    """

    grid: Grid
    potential: PotentialPair
    stencil_order: int = 0

    def __post_init__(self):
        if self.stencil_order not in (0, 2, 4):
            raise ValueError("stencil_order must be 0 (spectral), 2 or 4")
        if self.potential.grid != self.grid:
            raise DimensionError("potential sampled on a different grid")

    @classmethod
    def reference(cls, grid: Grid, stencil_order: int = 0) -> "DiracOperator":
        return cls(grid, PotentialPair.reference(grid), stencil_order)

    @classmethod
    def free(cls, grid: Grid, stencil_order: int = 0) -> "DiracOperator":
        return cls(grid, PotentialPair.zero(grid), stencil_order)

    def with_grid(self, grid: Grid) -> "DiracOperator":
        return DiracOperator(grid, self.potential.on_grid(grid), self.stencil_order)

    def scaled(self, eps: float) -> "DiracOperator":
        """Operator with potential eps * V."""
        p = self.potential
        bf, gf = p.functions()
        pot = PotentialPair(self.grid, eps * p.beta, eps * p.gamma, p.kappa,
                            max(abs(eps), 1e-300) * p.c_bound,
                            lambda x: eps * bf(x), lambda x: eps * gf(x), f"{eps:g}*{p.label}")
        return DiracOperator(self.grid, pot, self.stencil_order)

    # -- assembly -----------------------------------------------------------

    @cached_property
    def derivative_matrix(self) -> np.ndarray:
        """Real skew-symmetric n x n matrix of d/dx."""
        n = self.grid.n_points
        if self.stencil_order == 0:
            d = derivative(np.eye(n), self.grid, 0).real.T
            d = 0.5 * (d - d.T)
        else:
            d = np.zeros((n, n))
            idx = np.arange(n)
            weights = {2: {1: 0.5}, 4: {1: 2.0 / 3.0, 2: -1.0 / 12.0}}[self.stencil_order]
            for s, w in weights.items():
                d[idx[:-s], idx[s:]] += w
                d[idx[s:], idx[:-s]] -= w
            d /= self.grid.dx
        d.flags.writeable = False
        return d

    def matrix(self) -> np.ndarray:
        """Assembled Hermitian 2n x 2n matrix acting on ``SpinorField.flat()``."""
        D = self.derivative_matrix
        b = np.diag(self.potential.beta)
        g = np.diag(self.potential.gamma - 1.0)
        return np.block([[-1j * D + b, g], [g, 1j * D + b]])

    # -- action -------------------------------------------------------------

    def apply(self, f: SpinorField, spectral: bool | None = None) -> SpinorField:
        """H f. ``spectral=True`` forces transform differentiation regardless of stencil."""
        if f.grid != self.grid:
            raise DimensionError("field and operator grids differ")
        order = 0 if spectral else self.stencil_order
        du = derivative(f.u, self.grid, order)
        dv = derivative(f.v, self.grid, order)
        b, g = self.potential.beta, self.potential.gamma - 1.0
        return SpinorField(self.grid, -1j * du + b * f.u + g * f.v, 1j * dv + b * f.v + g * f.u)

    # -- spectrum -----------------------------------------------------------

    def point_spectrum(self, window=DEFAULT_WINDOW) -> List[BoundState]:
        """Gap eigenvalues in ``window`` with L2-normalised eigenfunctions."""
        lo, hi = window
        if not (-1.0 <= lo < hi <= 1.0):
            raise ValueError("window must lie inside (-1, 1)")
        try:
            vals, vecs = sla.eigh(self.matrix(), subset_by_value=(lo, hi), driver="evr")
        except (np.linalg.LinAlgError, ValueError) as exc:  # pragma: no cover
            raise SpectrumError(f"eigensolver failed: {exc}") from exc
        out = []
        for lam, f, amp in localized_modes(vals, vecs, self.grid):
            truncated = amp > 1e-6
            if truncated:
                warnings.warn(
                    f"eigenfunction at omega={lam:.8f} has boundary amplitude {amp:.2e}; "
                    "domain may be too small",
                    RuntimeWarning,
                    stacklevel=2,
                )
            out.append(BoundState(float(lam), f, amp, truncated))
        return out

    @cached_property
    def bound_state(self) -> BoundState:
        """The single gap eigenpair (omega_0, u_0), computed once."""
        modes = self.point_spectrum()
        if len(modes) != 1:
            raise StateError(f"expected exactly one gap eigenvalue, found {len(modes)}")
        return modes[0]

    @property
    def omega0(self) -> float:
        return self.bound_state.omega

    @property
    def u0(self) -> SpinorField:
        return self.bound_state.eigfn

    def pac_project(self, f: SpinorField) -> SpinorField:
        """f - <u0, f> u0."""
        try:
            u0 = self.bound_state.eigfn
        except StateError as exc:
            raise StateError("P_ac needs exactly one cached bound state") from exc
        return f - inner_product(u0, f) * u0

    def resonance_indicator(self):
        """(gamma_plus, gamma_minus) edge-resonance integrals at k = 0."""
        from .scattering import gamma_resonance

        return gamma_resonance(self)
