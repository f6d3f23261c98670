"""Grids, spinor fields, potentials and the nonlinearity catalogue."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels

__all__ = [
    "DimensionError",
    "Grid",
    "SpinorField",
    "PotentialPair",
    "NonlinearityKind",
    "Nonlinearity",
    "eval_nonlinearity",
    "eval_wn",
    "eval_hessian",
    "inner_product",
    "weighted_norm",
    "derivative",
    "japanese",
]


class DimensionError(ValueError):
    """Fields or arrays live on incompatible grids."""


@dataclass(frozen=True)
class Grid:
    """Uniform symmetric grid on ``[x_min, x_max]`` including both ends.

    Transform-based operations treat the grid as periodic with period
    ``n_points * dx``; every field of interest vanishes at the ends.
    """

    x_min: float = -40.0
    x_max: float = 40.0
    n_points: int = 2048

    def __post_init__(self):
        if not isinstance(self.n_points, (int, np.integer)) or isinstance(self.n_points, bool):
            raise ValueError("Grid: n_points must be an integer")
        if self.n_points < 64 or self.n_points % 2:
            raise ValueError(f"Grid: n_points must be even and >= 64 (got {self.n_points})")
        if not self.x_max > self.x_min:
            raise ValueError("Grid: dx must be positive (x_max > x_min)")
        if not np.isclose(self.x_max, -self.x_min, rtol=0, atol=1e-12 * abs(self.x_max)):
            raise ValueError("Grid: domain must be symmetric (x_max = -x_min)")

    @classmethod
    def symmetric(cls, half_width: float, n_points: int) -> "Grid":
        return cls(-float(half_width), float(half_width), int(n_points))

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    @property
    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers in FFT order; the Nyquist entry is zeroed."""
        q = 2 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)
        q[self.n_points // 2] = 0.0
        return q

    def extended(self, factor: int) -> "Grid":
        """Larger grid with the same spacing whose central nodes coincide with ours."""
        if factor < 1 or factor % 2 == 0:
            raise ValueError("extension factor must be a positive odd integer")
        n = (self.n_points - 1) * factor + 1
        return Grid(self.x_min * factor, self.x_max * factor, n)


def japanese(x):
    """The weight <x> = (1 + x^2)^(1/2)."""
    return np.sqrt(1.0 + np.asarray(x) ** 2)


def _fd_weights(order):
    if order == 2:
        return {1: 0.5}
    if order == 4:
        return {1: 2.0 / 3.0, 2: -1.0 / 12.0}
    raise ValueError(f"stencil order must be 2 or 4, got {order}")


def derivative(a: np.ndarray, grid: Grid, order: int = 0) -> np.ndarray:
    """d/dx of samples ``a`` (last axis): spectral for ``order=0``, else central FD.

    FD stencils are truncated at the ends (values beyond the grid read as zero),
    which keeps the discrete operator exactly skew-symmetric.
    """
    a = np.asarray(a)
    if a.shape[-1] != grid.n_points:
        raise DimensionError("array length does not match grid")
    if order == 0:
        return np.fft.ifft(1j * grid.wavenumbers * np.fft.fft(a))
    out = np.zeros(a.shape, dtype=np.result_type(a, float))
    for s, w in _fd_weights(order).items():
        out[..., :-s] += w * a[..., s:]
        out[..., s:] -= w * a[..., :-s]
    return out / grid.dx


@dataclass(frozen=True, eq=False)
class SpinorField:
    """Two-component complex field ``[u, v]`` sampled on ``grid``."""

    grid: Grid
    u: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)

    def __post_init__(self):
        u = np.array(self.u, dtype=np.complex128)
        v = np.array(self.v, dtype=np.complex128)
        n = self.grid.n_points
        if u.shape != (n,) or v.shape != (n,):
            raise DimensionError(f"spinor components must have length {n}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("spinor field has non-finite entries")
        u.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @classmethod
    def zeros(cls, grid: Grid) -> "SpinorField":
        z = np.zeros(grid.n_points, dtype=np.complex128)
        return cls(grid, z, z)

    @classmethod
    def from_stacked(cls, grid: Grid, w: np.ndarray) -> "SpinorField":
        w = np.asarray(w)
        return cls(grid, w[0], w[1])

    def stacked(self) -> np.ndarray:
        return np.stack([self.u, self.v])

    def flat(self) -> np.ndarray:
        """Concatenated ``[u, v]`` vector (the layout of assembled matrices)."""
        return np.concatenate([self.u, self.v])

    @classmethod
    def from_flat(cls, grid: Grid, w: np.ndarray) -> "SpinorField":
        n = grid.n_points
        return cls(grid, w[:n], w[n:])

    def _check(self, other):
        if not isinstance(other, SpinorField):
            return NotImplemented
        if other.grid != self.grid:
            raise DimensionError("spinor fields live on different grids")
        return other

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return SpinorField(self.grid, self.u + other.u, self.v + other.v)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return SpinorField(self.grid, self.u - other.u, self.v - other.v)

    def __mul__(self, c):
        if isinstance(c, SpinorField):
            return NotImplemented
        return SpinorField(self.grid, c * self.u, c * self.v)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return SpinorField(self.grid, self.u / c, self.v / c)

    def __neg__(self):
        return SpinorField(self.grid, -self.u, -self.v)

    def conj(self) -> "SpinorField":
        return SpinorField(self.grid, self.u.conj(), self.v.conj())

    def swap_conj(self) -> "SpinorField":
        """The antiunitary map (u, v) -> (conj v, conj u)."""
        return SpinorField(self.grid, self.v.conj(), self.u.conj())

    def modulus(self) -> np.ndarray:
        return np.sqrt(np.abs(self.u) ** 2 + np.abs(self.v) ** 2)

    def norm(self) -> float:
        return float(np.sqrt(inner_product(self, self).real))

    def embed(self, grid: Grid) -> "SpinorField":
        """Zero-extend onto a larger grid with identical spacing and centred nodes."""
        pad = grid.n_points - self.grid.n_points
        if pad < 0 or pad % 2 or not np.isclose(grid.dx, self.grid.dx, rtol=1e-12, atol=0):
            raise DimensionError("target grid must extend this grid with the same spacing")
        p = pad // 2
        return SpinorField(grid, np.pad(self.u, (p, p)), np.pad(self.v, (p, p)))


@dataclass(frozen=True, eq=False)
class PotentialPair:
    """Real decaying potentials beta, gamma with a decay certificate.

    ``beta_fn`` / ``gamma_fn`` evaluate the potentials off the grid (the Jost
    solver needs them); when absent a cubic spline of the samples is used.
    """

    grid: Grid
    beta: np.ndarray = field(repr=False)
    gamma: np.ndarray = field(repr=False)
    kappa: float
    c_bound: float
    beta_fn: Optional[Callable] = field(default=None, repr=False)
    gamma_fn: Optional[Callable] = field(default=None, repr=False)
    label: str = "custom"

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"PotentialPair decay certificate: kappa must be > 0 (got {self.kappa})")
        if not self.c_bound > 0:
            raise ValueError(f"PotentialPair decay certificate: c_bound must be > 0 (got {self.c_bound})")
        beta = np.asarray(self.beta)
        gamma = np.asarray(self.gamma)
        if np.iscomplexobj(beta) or np.iscomplexobj(gamma):
            if np.abs(np.imag(beta)).max(initial=0) > 0 or np.abs(np.imag(gamma)).max(initial=0) > 0:
                raise ValueError("PotentialPair: beta and gamma must be real")
        beta = np.array(np.real(beta), dtype=float)
        gamma = np.array(np.real(gamma), dtype=float)
        n = self.grid.n_points
        if beta.shape != (n,) or gamma.shape != (n,):
            raise DimensionError("potential samples do not match grid")
        bound = self.c_bound * np.exp(-self.kappa * np.abs(self.grid.x))
        excess = np.abs(beta) + np.abs(gamma) - bound
        if np.any(excess > 1e-12 * self.c_bound):
            i = int(np.argmax(excess))
            raise ValueError(
                "PotentialPair decay certificate violated: "
                f"|beta|+|gamma| exceeds C exp(-kappa|x|) at x={self.grid.x[i]:.6g}"
            )
        beta.flags.writeable = False
        gamma.flags.writeable = False
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def zero(cls, grid: Grid) -> "PotentialPair":
        z = np.zeros(grid.n_points)
        f = lambda x: np.zeros_like(np.asarray(x, dtype=float))  # noqa: E731
        return cls(grid, z, z, kappa=1.0, c_bound=1.0, beta_fn=f, gamma_fn=f, label="none")

    @classmethod
    def sech2(cls, grid: Grid, beta_amp: float = 0.0, gamma_amp: float = 0.0, kappa: float = 2.0):
        """beta = b sech^2(kappa x / 2), gamma = g sech^2(kappa x / 2).

        sech^2(y) <= 4 exp(-2|y|), so the certificate is C = 4(|b| + |g|).
        """
        if not kappa > 0:
            raise ValueError(f"PotentialPair decay certificate: kappa must be > 0 (got {kappa})")

        def bf(x):
            return beta_amp / np.cosh(0.5 * kappa * np.asarray(x, dtype=float)) ** 2

        def gf(x):
            return gamma_amp / np.cosh(0.5 * kappa * np.asarray(x, dtype=float)) ** 2

        c = 4.0 * (abs(beta_amp) + abs(gamma_amp)) or 1.0
        x = grid.x
        return cls(grid, bf(x), gf(x), kappa=kappa, c_bound=c, beta_fn=bf, gamma_fn=gf,
                   label=f"sech2(beta={beta_amp:g}, gamma={gamma_amp:g}, kappa={kappa:g})")

    @classmethod
    def reference(cls, grid: Grid) -> "PotentialPair":
        """beta = -0.6 sech^2(x), gamma = 0: one simple gap eigenvalue, no edge resonance."""
        return cls.sech2(grid, beta_amp=-0.6, gamma_amp=0.0, kappa=2.0)

    @classmethod
    def symmetric_reference(cls, grid: Grid) -> "PotentialPair":
        """beta = 0, gamma = -0.3 sech^2(x): no gap eigenvalue; used for beta = 0 symmetry checks."""
        return cls.sech2(grid, beta_amp=0.0, gamma_amp=-0.3, kappa=2.0)

    def on_grid(self, grid: Grid) -> "PotentialPair":
        """Resample on another grid (needs the analytic callables)."""
        if self.beta_fn is None or self.gamma_fn is None:
            raise ValueError("potential has no analytic form to resample")
        return PotentialPair(grid, self.beta_fn(grid.x), self.gamma_fn(grid.x), self.kappa,
                             self.c_bound, self.beta_fn, self.gamma_fn, self.label)

    def functions(self):
        """(beta(x), gamma(x)) callables valid anywhere; zero outside the grid."""
        if self.beta_fn is not None and self.gamma_fn is not None:
            return self.beta_fn, self.gamma_fn
        from scipy.interpolate import CubicSpline

        x = self.grid.x
        sb, sg = CubicSpline(x, self.beta), CubicSpline(x, self.gamma)

        def bf(y):
            y = np.asarray(y, dtype=float)
            return np.where(np.abs(y) <= self.grid.x_max, sb(y), 0.0)

        def gf(y):
            y = np.asarray(y, dtype=float)
            return np.where(np.abs(y) <= self.grid.x_max, sg(y), 0.0)

        return bf, gf

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.beta) or np.any(self.gamma))

    def support_radius(self, tol: float = 1e-17) -> float:
        """Radius beyond which the certificate puts |beta|+|gamma| below ``tol``."""
        if self.is_zero:
            return 0.0
        return max(0.0, np.log(self.c_bound / tol) / self.kappa)


class NonlinearityKind(str, enum.Enum):
    BRAGG_QUARTIC = "bragg_quartic"
    GROSS_NEVEU = "gross_neveu"
    GENERAL_QUARTIC = "general_quartic"
    FESHBACH_SEXTIC = "feshbach_sextic"
    NONE = "none"


@dataclass(frozen=True)
class Nonlinearity:
    """Gauge-invariant symmetric polynomial W_N and its gradient N = grad_{conj u} W_N.

    Use the preset constructors; ``coefficients`` holds alpha for the named
    kinds and (alpha1, ..., alpha4) for ``general_quartic``.
    """

    kind: NonlinearityKind
    coefficients: tuple
    degree_p: int

    def __post_init__(self):
        kind = NonlinearityKind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        want = 2 if kind is NonlinearityKind.FESHBACH_SEXTIC else 1
        if self.degree_p != want:
            raise ValueError(f"{kind.value}: degree_p must be {want}")
        nc = 4 if kind is NonlinearityKind.GENERAL_QUARTIC else (0 if kind is NonlinearityKind.NONE else 1)
        if len(self.coefficients) != nc:
            raise ValueError(f"{kind.value} takes {nc} coefficient(s)")

    @classmethod
    def bragg_quartic(cls, alpha: float) -> "Nonlinearity":
        return cls(NonlinearityKind.BRAGG_QUARTIC, (alpha,), 1)

    @classmethod
    def gross_neveu(cls, alpha: float) -> "Nonlinearity":
        return cls(NonlinearityKind.GROSS_NEVEU, (alpha,), 1)

    @classmethod
    def general_quartic(cls, a1: float, a2: float, a3: float, a4: float) -> "Nonlinearity":
        return cls(NonlinearityKind.GENERAL_QUARTIC, (a1, a2, a3, a4), 1)

    @classmethod
    def feshbach_sextic(cls, alpha: float) -> "Nonlinearity":
        return cls(NonlinearityKind.FESHBACH_SEXTIC, (alpha,), 2)

    @classmethod
    def none(cls) -> "Nonlinearity":
        return cls(NonlinearityKind.NONE, (), 1)

    @property
    def coef(self) -> np.ndarray:
        """Coefficients on the invariant basis (A^2+B^2, AB, C^2, (A+B)C, (A+B)AB)."""
        k, c = self.kind, self.coefficients
        if k is NonlinearityKind.BRAGG_QUARTIC:
            out = (c[0], 4 * c[0], 0.0, 0.0, 0.0)
        elif k is NonlinearityKind.GROSS_NEVEU:
            out = (0.0, 0.0, c[0], 0.0, 0.0)
        elif k is NonlinearityKind.GENERAL_QUARTIC:
            out = (c[0], c[1], c[2], c[3], 0.0)
        elif k is NonlinearityKind.FESHBACH_SEXTIC:
            out = (0.0, 0.0, 0.0, 0.0, c[0])
        else:
            out = (0.0,) * 5
        return np.array(out, dtype=float)

    @property
    def is_none(self) -> bool:
        return self.kind is NonlinearityKind.NONE or not np.any(self.coef)

    @property
    def rotation_only(self) -> bool:
        """True when W_N depends on |u|^2 and |v|^2 only."""
        c = self.coef
        return c[2] == 0.0 and c[3] == 0.0


def _components(f: SpinorField):
    return np.ascontiguousarray(f.u), np.ascontiguousarray(f.v)


def eval_nonlinearity(nl: Nonlinearity, f: SpinorField) -> SpinorField:
    """Pointwise N(f) = grad_{conj u} W_N(f)."""
    if nl.is_none:
        return SpinorField.zeros(f.grid)
    n1, n2 = kernels.nonlinearity(*_components(f), nl.coef)
    return SpinorField(f.grid, n1, n2)


def eval_wn(nl: Nonlinearity, f: SpinorField) -> np.ndarray:
    """Pointwise W_N(f) (real)."""
    if nl.is_none:
        return np.zeros(f.grid.n_points)
    return kernels.potential_density(*_components(f), nl.coef)


def eval_hessian(nl: Nonlinearity, f: SpinorField):
    """Blocks (V11, V12) of dN at f, each of shape (n, 2, 2).

    dN = V11 h + V12 conj(h) for a perturbation h.
    """
    n = f.grid.n_points
    if nl.is_none:
        z = np.zeros((n, 2, 2), dtype=np.complex128)
        return z, z.copy()
    return kernels.hessian_blocks(*_components(f), nl.coef)


def inner_product(f: SpinorField, g: SpinorField) -> complex:
    """<f, g> = int conj(f) . g dx, trapezoid rule on the periodic grid."""
    if f.grid != g.grid:
        raise DimensionError("inner product of fields on different grids")
    return complex(f.grid.dx * (np.vdot(f.u, g.u) + np.vdot(f.v, g.v)))


def weighted_norm(f: SpinorField, alpha: float, kind: str = "L2") -> float:
    """Norm of <x>^alpha f; ``kind`` is one of L2, Linf, H1 (spectral derivative)."""
    w = japanese(f.grid.x) ** alpha
    wu, wv = w * f.u, w * f.v
    kind = kind.upper()
    if kind == "L2":
        return float(np.sqrt(f.grid.dx * np.sum(np.abs(wu) ** 2 + np.abs(wv) ** 2)))
    if kind == "LINF":
        return float(np.max(np.sqrt(np.abs(wu) ** 2 + np.abs(wv) ** 2)))
    if kind == "H1":
        du, dv = derivative(wu, f.grid), derivative(wv, f.grid)
        s = np.sum(np.abs(wu) ** 2 + np.abs(wv) ** 2 + np.abs(du) ** 2 + np.abs(dv) ** 2)
        return float(np.sqrt(f.grid.dx * s))
    raise ValueError(f"unknown norm kind {kind!r}")
