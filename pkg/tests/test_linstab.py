import numpy as np
import pytest

from diracgap.core import Nonlinearity, SpinorField, eval_nonlinearity
from diracgap.linstab import (S_MATRIX, SymmetryError, block_operators, full_operator, jordan_chain_residuals,
                              kernel_identities, linearization_matrices, linearized_spectrum, paper_potentials)

IDX = (2, 5, 8)


@pytest.fixture(scope="module")
def setups(ref_op, bragg_branch, sextic_branch):
    out = {}
    for name, br in (("bragg", bragg_branch), ("sextic", sextic_branch)):
        rows = []
        for i in IDX:
            p = br.points[i]
            lm = linearization_matrices(br.nonlinearity, p.profile)
            _, dU = br.profile_at(p.omega, 1)
            rows.append((p, lm, dU, block_operators(ref_op, p.omega, lm, p.profile)))
        out[name] = (br, rows)
    return out


def test_s_matrix_orthogonal():
    assert np.abs(S_MATRIX @ S_MATRIX.T - np.eye(4)).max() < 1e-15


def test_directional_derivative(bragg_branch, rng):
    p = bragg_branch.points[5]
    nl, U = bragg_branch.nonlinearity, p.profile
    g = U.grid
    env = np.exp(-(g.x / 4) ** 2)
    h = SpinorField(g, env * (rng.standard_normal(g.n_points) + 1j), env * rng.standard_normal(g.n_points))
    lm = linearization_matrices(nl, U)
    errs = []
    for eps in (1e-3, 5e-4):
        dN = eval_nonlinearity(nl, U + eps * h) - eval_nonlinearity(nl, U)
        errs.append((dN - eps * lm.apply(h)).norm())
    assert abs(np.log2(errs[0] / errs[1]) - 2) < 0.1


def test_hessian_symmetry(bragg_branch):
    lm = linearization_matrices(bragg_branch.nonlinearity, bragg_branch.points[7].profile)
    assert lm.symmetry_defect() < 1e-12
    # V = conj(U) makes the two diagonal entries of V11 coincide
    assert np.abs(lm.v11[:, 0, 0] - lm.v11[:, 1, 1]).max() < 1e-12


def test_zero_profile_limit(grid):
    for nl in (Nonlinearity.bragg_quartic(1.0), Nonlinearity.feshbach_sextic(1.0)):
        lm = linearization_matrices(nl, SpinorField.zeros(grid))
        assert not np.any(lm.v11) and not np.any(lm.v12)


@pytest.mark.parametrize("name", ["bragg", "sextic"])
def test_block_decomposition(ref_op, setups, name):
    n = ref_op.grid.n_points
    sig3 = np.concatenate([np.ones(n), -np.ones(n)])
    H0 = ref_op.matrix()
    for p, lm, dU, bo in setups[name][1]:
        assert bo.block_residual < 1e-10
        Vp, Vm = paper_potentials(lm)

        def assemble(V):
            return np.block([[np.diag(V[:, 0, 0]), np.diag(V[:, 0, 1])],
                             [np.diag(V[:, 1, 0]), np.diag(V[:, 1, 1])]])

        hp = H0 - p.omega * np.eye(2 * n) + assemble(Vp)
        hm = sig3[:, None] * H0 * sig3[None, :] - p.omega * np.eye(2 * n) + assemble(Vm)
        assert np.abs(bo.h_plus - hp).max() < 1e-12
        assert np.abs(bo.h_minus - hm).max() < 1e-12
        U = p.profile
        assert np.sqrt(ref_op.grid.dx) * np.linalg.norm(bo.h_minus @ np.r_[U.u, -U.v]) < 1e-8


@pytest.mark.parametrize("name", ["bragg", "sextic"])
def test_kernel_and_jordan_chain(ref_op, setups, name):
    for p, lm, dU, _ in setups[name][1]:
        r1, r2 = kernel_identities(ref_op, p.omega, lm, p.profile, dU)
        assert r1 < 1e-8
        assert r2 < 1e-6  # branch-interpolated d/domega U
        jf, jg = jordan_chain_residuals(ref_op, p.omega, lm, p.profile, dU)
        assert jf < 1e-8 and jg < 1e-6


def test_full_operator_hermitian(ref_op, setups):
    p, lm, _, _ = setups["bragg"][1][1]
    Hw = full_operator(ref_op, p.omega, lm)
    assert np.abs(Hw - Hw.conj().T).max() < 1e-12


@pytest.mark.parametrize("name", ["bragg", "sextic"])
def test_linearized_spectrum(setups, small_amps, name):
    br, rows = setups[name]
    w1 = []
    for p, _, _, bo in rows:
        ep, em = linearized_spectrum(bo)
        assert len(ep) == 1  # the continued linear eigenvalue
        assert len(em) == 1 and abs(em[0]) < 1e-10  # gauge zero mode
        w1.append(abs(ep[0]))
    a = small_amps[list(IDX)]
    slope = np.polyfit(np.log(a), np.log(w1), 1)[0]
    assert abs(slope - 2 * br.nonlinearity.degree_p) < 0.2


def test_window_validation(setups):
    bo = setups["bragg"][1][0][3]
    with pytest.raises(ValueError):
        linearized_spectrum(bo, window=(-5.0, 0.0))


def test_symmetry_error(ref_op, bragg_branch):
    p = bragg_branch.points[3]
    bad = SpinorField(p.profile.grid, p.profile.u, 1.1 * p.profile.v)
    lm = linearization_matrices(bragg_branch.nonlinearity, bad)
    with pytest.raises(SymmetryError):
        block_operators(ref_op, p.omega, lm, bad)
