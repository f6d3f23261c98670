import numpy as np
import pytest

from diracgap.core import Grid, Nonlinearity, SpinorField, inner_product
from diracgap.dirac_op import DiracOperator
from diracgap.evolve import (BlowUpError, EvolutionConfig, ModulationBreakdown, ModulationState, NormTracker,
                             SplitStepper, causal_grid, evolve_modulated, initial_state, linear_force_terms,
                             modulation_forces, modulation_matrix, modulation_rhs, semigroup_decay, sobolev_norm,
                             step_full, symplectic_residuals)
from diracgap.soliton import continue_branch

SEXTIC = Nonlinearity.feshbach_sextic(1.0)


def _bump(g, shift=0.0):
    x = g.x
    return SpinorField(g, np.exp(-(x - shift) ** 2 / 4) * (1 + 0.5j), np.exp(-(x - shift - 1) ** 2 / 4))


def _orbit_error(op, U, w, dt, T=10.0):
    st = SplitStepper(op, SEXTIC, dt)
    u, v = U.u, U.v
    for _ in range(int(round(T / dt))):
        u, v = st.step(u, v)
    return (SpinorField(op.grid, u, v) - np.exp(-1j * w * T) * U).norm()


def test_free_plane_wave_phase(free_op):
    g = free_op.grid
    k = g.wavenumbers[7]
    lam = np.sqrt(1 + k * k)
    e = np.exp(1j * k * g.x)
    f = SpinorField(g, e, (lam + k) * e)
    h = step_full(f, free_op, Nonlinearity.none(), 0.05)
    assert (h - np.exp(1j * lam * 0.05) * f).modulus().max() < 1e-12


def test_orbit_fidelity_and_order(ref_op, sextic_large):
    p = sextic_large.points[4]
    e1 = _orbit_error(ref_op, p.profile, p.omega, 0.02)
    e2 = _orbit_error(ref_op, p.profile, p.omega, 0.01)
    assert e2 < 1e-5
    assert abs(np.log2(e1 / e2) - 2) < 0.2


@pytest.mark.parametrize("nl,scheme,tol", [
    (SEXTIC, "strang_split", 1e-10),
    (Nonlinearity.gross_neveu(1.0), "strang_split", 1e-10),
    (SEXTIC, "rk4", 1e-8),
])
def test_charge_conservation(ref_op, nl, scheme, tol):
    g = ref_op.grid
    x = g.x
    f = SpinorField(g, 0.8 * np.exp(-x ** 2 / 2) * (1 + 0.3j), 0.6 * np.exp(-(x - 1) ** 2 / 3))
    st = SplitStepper(ref_op, nl, 1e-2, scheme)
    u, v = f.u, f.v
    q0 = f.norm() ** 2
    for _ in range(500):
        u, v = st.step(u, v)
    assert abs(SpinorField(g, u, v).norm() ** 2 / q0 - 1) < tol


def test_blow_up_detection(ref_op):
    g = ref_op.grid
    f = SpinorField(g, 2e3 * np.exp(-g.x ** 2), np.zeros(g.n_points))
    with pytest.raises(BlowUpError):
        step_full(f, ref_op, SEXTIC, 0.01)


def test_config_validation(grid):
    with pytest.raises(ValueError):
        EvolutionConfig(dt=-1)
    with pytest.raises(ValueError):
        EvolutionConfig(scheme="euler")
    with pytest.raises(ValueError):
        EvolutionConfig(dt=grid.dx).check_grid(grid)
    EvolutionConfig(dt=0.5 * grid.dx).check_grid(grid)


def test_sobolev_norm_zero_order(ref_op):
    f = _bump(ref_op.grid)
    assert sobolev_norm(f, 0.0) == pytest.approx(f.norm(), rel=1e-12)


# -- modulation ---------------------------------------------------------------------


@pytest.fixture(scope="module")
def soliton_data(sextic_large):
    w = sextic_large.points[4].omega
    U, dU, d2U = sextic_large.profile_at(w, ders=2)
    return w, U, dU, d2U


def test_unperturbed_matrix_and_forces(soliton_data):
    w, U, dU, d2U = soliton_data
    Z = SpinorField.zeros(U.grid)
    M = modulation_matrix(U, dU, d2U, Z)
    half = inner_product(U, dU).real
    assert np.abs(M - half * np.eye(2)).max() < 1e-14 * abs(half)
    assert modulation_forces(SEXTIC, U, dU, Z) == (0.0, 0.0)


def test_matrix_off_diagonal_linear(soliton_data):
    w, U, dU, d2U = soliton_data
    p = _bump(U.grid, 0.5)
    eps = np.array([1e-3, 1e-2, 1e-1])
    off = [abs(modulation_matrix(U, dU, d2U, e * p)[0, 1]) + abs(modulation_matrix(U, dU, d2U, e * p)[1, 0])
           for e in eps]
    assert abs(np.polyfit(np.log(eps), np.log(off), 1)[0] - 1) < 0.1


def test_force_quadratic_and_cancellation(soliton_data):
    w, U, dU, _ = soliton_data
    p = _bump(U.grid)
    eps = np.array([1e-3, 1e-2, 1e-1])
    F = [sum(map(abs, modulation_forces(SEXTIC, U, dU, e * p))) for e in eps]
    assert abs(np.polyfit(np.log(eps), np.log(F), 1)[0] - 2) < 0.1
    for e in eps:
        assert max(map(abs, linear_force_terms(SEXTIC, U, dU, e * p))) < 1e-10


def test_modulation_breakdown(sextic_large, soliton_data, ref_op):
    w, U, _, _ = soliton_data
    # Y = -U removes the soliton entirely: the projected system degenerates
    a = inner_product(ref_op.u0, -U)
    st = ModulationState(0.0, w, 0.0, a, -U - a * ref_op.u0, ref_op.u0)
    with pytest.raises(ModulationBreakdown):
        modulation_rhs(st, sextic_large, SEXTIC)


def test_rhs_without_branch(ref_op):
    st = ModulationState(0.0, 0.3, 0.0, 0j, SpinorField.zeros(ref_op.grid), ref_op.u0)
    assert modulation_rhs(st, None, SEXTIC) == (0.0, 0.0)


def test_initial_state_invariants(ref_op, sextic_large):
    w = sextic_large.points[4].omega
    big = ref_op.grid.extended(3)
    init = initial_state(sextic_large, ref_op, w, 1e-2, big)
    assert abs(inner_product(init.u0, init.z)) < 1e-10
    assert init.z.grid == big
    U = sextic_large.profile_at(w).embed(big)
    r = symplectic_residuals(sextic_large, U + init.y, w, 0.0)
    assert max(map(abs, r)) < 1e-12


def test_zero_perturbation_stays_on_orbit():
    g = Grid.symmetric(40, 256)
    op = DiracOperator.reference(g)
    br = continue_branch(op, SEXTIC, np.linspace(0.2, 0.6, 9))
    w = br.points[4].omega
    tr = evolve_modulated(initial_state(br, op, w, 0.0), br, op, SEXTIC,
                          EvolutionConfig(dt=0.01, t_final=50, record_stride=100))
    assert tr.t[-1] == pytest.approx(50.0)
    assert np.ptp(tr.omega) < 1e-10
    assert np.abs(tr.theta_shift).max() < 1e-8
    assert tr.y_sup.max() < 1e-6


def test_trajectory_bookkeeping(ref_op, sextic_large):
    w = sextic_large.points[4].omega
    init = initial_state(sextic_large, ref_op, w, 1e-2, ref_op.grid.extended(3))
    tr = evolve_modulated(init, sextic_large, ref_op, SEXTIC, EvolutionConfig(dt=0.025, t_final=2, record_stride=8))
    assert tr.decomposition.max() < 1e-12
    assert tr.orthogonality.max() < 1e-10
    assert tr.projection.max() < 1e-10
    assert tr.rows().shape == (len(tr.t), len(tr.columns()))
    assert abs(tr.charge[-1] / tr.charge[0] - 1) < 1e-10


# -- norms and the linear flow ---------------------------------------------------------


def test_tracker_zero_and_monotone(ref_op):
    g = ref_op.grid
    z = NormTracker(g)
    for t in np.linspace(0, 1, 5):
        z.update(t, SpinorField.zeros(g))
    assert all(v == 0 for v in z.values().values())
    tr = NormTracker(g)
    f = _bump(g)
    prev = None
    for i, t in enumerate(np.linspace(0, 2, 9)):
        tr.update(t, (1 + 0.3 * np.sin(i)) * f)
        cur = tr.values()
        if prev is not None:
            assert all(cur[k] >= prev[k] for k in cur)
        prev = cur
    with pytest.raises(ValueError):
        tr.update(1.0, f)


def test_tracker_additivity(ref_op):
    g = ref_op.grid
    x = g.x
    f = ref_op.pac_project(SpinorField(g, np.exp(-x ** 2 / 2), 0.5 * np.exp(-(x - 1) ** 2 / 2)))
    a, z = inner_product(ref_op.u0, f), f - inner_product(ref_op.u0, f) * ref_op.u0
    init = ModulationState(0.0, 0.0, 0.0, a, z, ref_op.u0)
    dt = 0.05
    whole = evolve_modulated(init, None, ref_op, Nonlinearity.none(), EvolutionConfig(dt=dt, t_final=4))
    first = evolve_modulated(init, None, ref_op, Nonlinearity.none(), EvolutionConfig(dt=dt, t_final=2))
    second = evolve_modulated(first.final, None, ref_op, Nonlinearity.none(), EvolutionConfig(dt=dt, t_final=2),
                              tracker=first.tracker)
    vw, vs = whole.tracker.values(), second.tracker.values()
    for key in ("L4t_Linfx", "local_L2t", "local_L2t_dx"):
        assert vs[key] == pytest.approx(vw[key], rel=1e-12)


def test_linear_flow_matches_semigroup(ref_op):
    g = ref_op.grid
    x = g.x
    f = ref_op.pac_project(SpinorField(g, np.exp(-x ** 2 / 2), 0.5 * np.exp(-(x - 1) ** 2 / 2)))
    T = 5.0
    n = int(np.ceil(T / (0.5 * g.dx)))
    dt = T / n
    a = inner_product(ref_op.u0, f)
    init = ModulationState(0.0, 0.0, 0.0, a, f - a * ref_op.u0, ref_op.u0)
    tr = evolve_modulated(init, None, ref_op, Nonlinearity.none(), EvolutionConfig(dt=dt, t_final=T))
    rep = semigroup_decay(ref_op, f, T, dt=dt, causal=False)
    assert (tr.final.y - rep.final).norm() < 1e-8
    assert tr.tracker.values()["local_L2t"] == pytest.approx(rep.tracker.values()["local_L2t"], rel=1e-8)


def test_semigroup_zero_data(ref_op):
    rep = semigroup_decay(ref_op, SpinorField.zeros(ref_op.grid), 4.0)
    assert np.all(rep.mizumachi == 0) and np.all(rep.strichartz == 0)
    assert not rep.contaminated


def test_semigroup_requires_pac_data(ref_op):
    with pytest.raises(ValueError):
        semigroup_decay(ref_op, ref_op.u0, 1.0)


def test_radiation_return_detected():
    g = Grid.symmetric(25, 320)
    op = DiracOperator.reference(g)
    f = op.pac_project(_bump(g))
    assert semigroup_decay(op, f, 40.0, causal=False).contaminated
    rep = semigroup_decay(op, f, 10.0)
    assert rep.grid.x_max > 10.0 + 5.0 and not rep.contaminated


def test_causal_grid_odd_extension(grid):
    big = causal_grid(grid, 100.0)
    assert big.x_max >= 100.0 and big.dx == pytest.approx(grid.dx)
    assert ((big.n_points - 1) // (grid.n_points - 1)) % 2 == 1
