import numpy as np
import pytest

from diracgap.core import Grid, Nonlinearity, SpinorField, derivative
from diracgap.dirac_op import DiracOperator
from diracgap.soliton import (BranchError, branch_derivatives, continue_branch, coupling_constant,
                              explicit_soliton, stationary_residual)

THIRD = Nonlinearity.bragg_quartic(1.0 / 3.0)


def _h1(f: SpinorField) -> float:
    g = f.grid
    df = SpinorField(g, derivative(f.u, g), derivative(f.v, g))
    return float(np.sqrt(f.norm() ** 2 + df.norm() ** 2))


def test_explicit_soliton_values():
    g = Grid(-40, 40, 512)
    U = explicit_soliton(0.0, g)
    i0 = np.argmin(np.abs(g.x))
    # node closest to 0 is at dx/2; |U|^2 = 1 / cosh(2x) for omega = 0
    assert abs(U.modulus()[i0] ** 2 / 2 - 1 / np.cosh(2 * g.x[i0])) < 1e-12
    assert np.abs(U.v - U.u.conj()).max() == 0
    small = explicit_soliton(-0.99, g)
    assert np.abs(small.u).max() == pytest.approx(np.sqrt(0.01), rel=1e-3)


def test_explicit_soliton_bad_frequency(grid):
    with pytest.raises(ValueError):
        explicit_soliton(1.0, grid)


@pytest.mark.parametrize("omega", [-0.5, 0.0, 0.5])
def test_explicit_soliton_residual_default_grid(omega):
    g = Grid(-40, 40)
    assert stationary_residual(DiracOperator.free(g), THIRD, omega, explicit_soliton(omega, g)) < 1e-6


@pytest.mark.parametrize("order", [2, 4])
def test_explicit_soliton_residual_stencil_order(order):
    r = []
    for n in (512, 1024, 2048):
        g = Grid(-40, 40, n)
        r.append(stationary_residual(DiracOperator.free(g, order), THIRD, -0.5, explicit_soliton(-0.5, g)))
    slopes = np.log2(np.array(r[:-1]) / r[1:])
    assert np.all(np.abs(slopes - order) < 0.1)


def test_branch_points_solve_stationary_problem(ref_op, bragg_branch):
    for p in bragg_branch.points:
        assert p.residual < 1e-10
        assert stationary_residual(ref_op, bragg_branch.nonlinearity, p.omega, p.profile) < 1e-9
        assert np.abs(p.profile.v - p.profile.u.conj()).max() < 1e-14


def test_interpolated_profile_residual(ref_op, bragg_branch):
    w = 0.5 * (bragg_branch.omegas[4] + bragg_branch.omegas[5])
    assert stationary_residual(ref_op, bragg_branch.nonlinearity, w, bragg_branch.profile_at(w)) < 1e-8


def test_amplitude_roundtrip(bragg_branch):
    for p in bragg_branch.points[1:-1]:
        assert bragg_branch.amplitude_at(p.omega) == pytest.approx(p.a, rel=1e-10)


def test_linear_eigenpair_residual(ref_op):
    u0 = ref_op.u0
    assert (ref_op.apply(u0) - ref_op.omega0 * u0).norm() < 1e-10


@pytest.mark.parametrize("which", ["bragg", "sextic"])
def test_bifurcation_scalings(which, bragg_branch, sextic_branch, small_amps, ref_op):
    br = bragg_branch if which == "bragg" else sextic_branch
    p = br.nonlinearity.degree_p
    d = np.abs(br.omegas - br.omega0)
    slope, icpt = np.polyfit(np.log(small_amps), np.log(d), 1)
    assert abs(slope - 2 * p) < 0.05
    assert abs(np.exp(icpt) - abs(br.coupling)) < 0.05 * abs(br.coupling)
    dev = [_h1(pt.profile - pt.a * ref_op.u0) for pt in br.points]
    assert abs(np.polyfit(np.log(small_amps), np.log(dev), 1)[0] - (2 * p + 1)) < 0.1


def test_branch_side_follows_coupling_sign(ref_op, small_amps):
    for alpha in (1.0, -1.0):
        nl = Nonlinearity.bragg_quartic(alpha)
        br = continue_branch(ref_op, nl, small_amps[:5])
        assert np.all(np.sign(br.omegas - br.omega0) == np.sign(coupling_constant(ref_op, nl)))


def test_branch_error_when_forced_wrong_side(ref_op, monkeypatch):
    import diracgap.soliton as sol
    monkeypatch.setattr(sol, "coupling_constant", lambda op, nl: -1.0)
    with pytest.raises(BranchError):
        sol.continue_branch(ref_op, Nonlinearity.bragg_quartic(1.0), [0.02, 0.03])


def test_continue_branch_argument_checks(ref_op):
    nl = Nonlinearity.bragg_quartic(1.0)
    with pytest.raises(ValueError):
        continue_branch(ref_op, nl, [0.1, 0.05])
    with pytest.raises(ValueError):
        continue_branch(ref_op, nl, [])
    with pytest.raises(ValueError):
        continue_branch(ref_op, nl, [-0.1, 0.1])


def test_norm_derivative_matches_finite_difference(bragg_branch, sextic_branch):
    for br in (bragg_branch, sextic_branch):
        i = 5
        w = 0.5 * (br.omegas[i] + br.omegas[i + 1])
        h = 1e-3 * abs(br.omegas[i + 1] - br.omegas[i])
        _, dn = branch_derivatives(br, w)
        n2 = lambda z: br.profile_at(z).norm() ** 2  # noqa: E731
        fd = (n2(w + h) - n2(w - h)) / (2 * h)
        assert abs(dn - fd) < 1e-5 * abs(dn)
        assert np.sign(dn) == np.sign(br.coupling)


def test_norm_derivative_leading_order(ref_op, sextic_branch):
    # ||U||^2 ~ a^2 and omega - omega0 ~ c a^(2p) give dn/domega ~ 1 / (p c a^(2p - 2))
    br = sextic_branch
    p = br.nonlinearity.degree_p
    a = 0.05
    w = br.omega0 + br.coupling * a ** (2 * p)
    _, dn = branch_derivatives(br, w)
    lead = 1.0 / (p * br.coupling * a ** (2 * p - 2))
    assert abs(dn / lead - 1) < 0.1


def test_branch_derivatives_interior_only(bragg_branch):
    lo, hi = bragg_branch.omega_range
    with pytest.raises(ValueError):
        branch_derivatives(bragg_branch, hi + 1e-6)
