import numpy as np
import pytest

from diracgap.core import Grid, PotentialPair
from diracgap.dirac_op import DiracOperator
from diracgap.scattering import (JostError, ResonanceError, alpha, resolvent_branches, resolvent_kernel,
                                 scattering_coefficients, solve_jost, upper_branch_jost, volterra_residual,
                                 weighted_kernel_sup, wronskian)


@pytest.fixture(scope="module")
def sym_op(grid):
    return DiracOperator(grid, PotentialPair.symmetric_reference(grid))


def test_alpha_product():
    for k in np.linspace(-4, 4, 9):
        assert abs(alpha(k, "plus") * alpha(k, "minus") - 1.0) < 1e-14


def test_free_coefficients(free_op):
    c = scattering_coefficients(free_op, np.linspace(-5, 5, 20))
    assert np.abs(c.a_plus - 1).max() < 1e-12
    assert np.abs(c.b_plus).max() < 1e-12 and np.abs(c.b_minus).max() < 1e-12


def test_free_jost_is_constant(free_op):
    for side in ("plus", "minus"):
        j = solve_jost(free_op, 1.3, side)
        assert np.abs(j.m.flat() - np.repeat(j.m_infinity, free_op.grid.n_points)).max() < 1e-13


def test_k_zero_rejected(ref_op):
    with pytest.raises(ValueError):
        scattering_coefficients(ref_op, [-1.0, 0.0, 1.0])


def test_k_out_of_range(ref_op):
    with pytest.raises(JostError):
        solve_jost(ref_op, 50.0)


def test_identities_reference(ref_op):
    ks = np.array([-4.0, -1.5, -0.3, 0.7, 2.0, 4.5])
    c = scattering_coefficients(ref_op, ks)
    for name, r in c.residuals().items():
        assert r.max() < 1e-10, name
    assert np.abs(c.a_plus).min() >= 1 - 1e-8


@pytest.mark.parametrize("k", [-2.0, 0.5, 3.0])
def test_wronskian_constant(ref_op, k):
    W = wronskian(solve_jost(ref_op, k, "plus"), solve_jost(ref_op, k, "minus"))
    assert W.deviation < 1e-10


def test_wronskian_argument_checks(ref_op):
    jp = solve_jost(ref_op, 0.5, "plus")
    with pytest.raises(ValueError):
        wronskian(jp, jp)
    with pytest.raises(ValueError):
        wronskian(jp, solve_jost(ref_op, 0.6, "minus"))


def test_volterra_residual(ref_op):
    for side in ("plus", "minus"):
        assert volterra_residual(ref_op, solve_jost(ref_op, 1.0, side)) < 1e-8


def test_k_zero_profile_grows_linearly(ref_op):
    # at the edge the far-side Jost profile is affine in x outside the potential
    j = solve_jost(ref_op, 0.0, "plus")
    x = np.array([-30.0, -20.0, -10.0])
    m = j.profile(x)
    second = m[0] - 2 * m[1] + m[2]
    assert np.abs(second).max() < 1e-8 * np.abs(m).max()
    assert np.abs(m[0]).min() > 2 * np.abs(m[2]).max()


def test_large_negative_k_normalised_profile(ref_op):
    r = [np.abs(solve_jost(ref_op, k, "minus").m.v).max() / abs(k) for k in (-10.0, -20.0)]
    assert abs(r[0] - r[1]) / r[1] < 1e-2
    assert r[1] == pytest.approx(2.0, rel=1e-2)


@pytest.mark.parametrize("k", [0.7, -1.3])
def test_upper_branch_symmetry_route(sym_op, k):
    a = upper_branch_jost(sym_op, k, "plus", "symmetry")
    b = upper_branch_jost(sym_op, k, "plus", "direct")
    assert np.abs(a.m.flat() - b.m.flat()).max() < 1e-8


def test_upper_branch_free_profile(free_op):
    u = upper_branch_jost(free_op, 0.7, "minus", "direct")
    assert np.allclose(u.m.u, -u.alpha_side, atol=1e-13)
    assert np.allclose(u.m.v, 1.0, atol=1e-13)


def test_upper_branch_symmetry_needs_beta_zero(ref_op):
    with pytest.raises(ValueError):
        upper_branch_jost(ref_op, 0.5, "plus", "symmetry")


def test_resolvent_resonance_guard(grid):
    # the free operator has a threshold resonance: gamma = 0
    with pytest.raises(ResonanceError):
        resolvent_kernel(DiracOperator.free(grid), -1.5, "plus", 0.0, 1.0)


def test_resolvent_kernel_jump(ref_op):
    """The kernel is discontinuous on the diagonal; the jump is a fixed unitary-modulus matrix."""
    right, left = resolvent_branches(ref_op, -1.4, "plus", 0.3, 0.3)
    jump = right - left
    lo = resolvent_kernel(ref_op, -1.4, "plus", 0.3 - 1e-9, 0.3)
    hi = resolvent_kernel(ref_op, -1.4, "plus", 0.3 + 1e-9, 0.3)
    assert np.abs((hi - lo) - jump).max() < 1e-6
    assert np.abs(np.abs(np.linalg.eigvals(jump)) - 1).max() < 1e-8


def test_resolvent_reciprocity(ref_op):
    # the limiting kernel inherits R(x, y) = sigma_1 R(y, x)^T sigma_1 from the symmetric Wronskian form
    s1 = np.array([[0, 1], [1, 0]])
    A = resolvent_kernel(ref_op, -1.7, "plus", -1.0, 2.0)
    B = resolvent_kernel(ref_op, -1.7, "plus", 2.0, -1.0)
    assert np.abs(A - s1 @ B.T @ s1).max() < 1e-10


def test_weighted_sup_converges_in_lambda_sampling(ref_op):
    pts = np.linspace(-6, 6, 7)
    s9 = weighted_kernel_sup(ref_op, np.linspace(-5, -1, 9), pts)
    s17 = weighted_kernel_sup(ref_op, np.linspace(-5, -1, 17), pts)
    assert np.isfinite(s9) and s9 > 0
    assert abs(s17 - s9) / s9 < 1e-2


def test_threads_are_deterministic(grid):
    ks = np.array([-2.0, -0.5, 1.0, 3.0])
    a = scattering_coefficients(DiracOperator.reference(grid), ks, threads=1)
    b = scattering_coefficients(DiracOperator.reference(grid), ks, threads=4)
    for f in ("a_plus", "b_plus", "a_minus", "b_minus"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


def test_grid_free_of_scaling(ref_op):
    # coefficients come from ODE integrals, not the grid
    ks = [0.9, -2.2]
    a = scattering_coefficients(ref_op, ks)
    b = scattering_coefficients(DiracOperator.reference(Grid(-30, 30, 256)), ks)
    assert np.abs(a.a_plus - b.a_plus).max() < 1e-10
