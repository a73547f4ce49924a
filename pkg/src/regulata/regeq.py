"""Steady-state (regulator) matrix equations.

Each solver reduces its equation to one call of
``numkit.solve_linear_matrix_equation`` and re-verifies the result by
substitution, so every residual reported downstream is recomputable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numkit
from .numkit import NoSolutionError

__all__ = [
    "RegulatorSolution",
    "solve_continuous_regulator_equations",
    "solve_pi_zeta",
    "verify_discrete_regulator_equations",
    "solve_washout_steady_state",
    "build_pi_z",
]


@dataclass
class RegulatorSolution:
    """Steady-state gains of one design, with substitution residuals.

    Pi_x maps exosystem state to plant steady state, Psi to steady input;
    Y_m = C_m Pi_x + Q_m is the steady extra measurement. The remaining
    blocks are filled in by the hold-based design: Pi_zeta (hold device),
    Pi_f (washout filter), Pi_eta = Pi_zeta S_D (discrete internal model),
    and their stack Pi_z for the assembled controller.
    """

    Pi_x: np.ndarray
    Psi: np.ndarray
    Y_m: np.ndarray
    Pi_zeta: np.ndarray | None = None
    Pi_f: np.ndarray | None = None
    Pi_eta: np.ndarray | None = None
    Pi_z: np.ndarray | None = None
    residuals: dict = field(default_factory=dict)


def solve_continuous_regulator_equations(plant, tol: float | None = None):
    """Solve  Pi_x S = A Pi_x + B Psi + P,  0 = C_e Pi_x + Q_e.

    Parameters
    ----------
    plant : PlantModel
        Plant and exosystem matrices.
    tol : float, optional
        Residual/rank tolerance; defaults to the package tolerance.

    Returns
    -------
    (Pi_x, Psi) : ndarray pair
        Steady-state plant state and input maps, shapes (n, d) and (m, d).
        When the input is fat (m > q_e) and the solution set is a continuum,
        the minimum-norm Psi is returned.

    Raises
    ------
    NoSolutionError
        When an exosystem frequency resonates with a transmission zero of
        (A, B, C_e); the offending eigenvalue(s) are named.
    """
    from .assumptions import check_non_resonance

    if tol is None:
        tol = numkit.default_tol()
    A, B, P = plant.A, plant.B, plant.P
    C_e, Q_e, S = plant.C_e, plant.Q_e, plant.S
    n, m, d, q_e = plant.n, plant.m, plant.d, plant.q_e

    # Unknown U = col(Pi_x, Psi); rows of the stacked equation are the state
    # line over the error line.
    pick_x = np.hstack([np.eye(n), np.zeros((n, m))])
    L1 = np.vstack([pick_x, np.zeros((q_e, n + m))])
    L2 = np.vstack([-np.hstack([A, B]), np.hstack([C_e, np.zeros((q_e, m))])])
    rhs = np.vstack([P, -Q_e])
    try:
        sol = numkit.solve_linear_matrix_equation([(L1, S), (L2, np.eye(d))], rhs, tol=tol)
    except NoSolutionError as exc:
        ok, witnesses = check_non_resonance(A, B, C_e, S, tol)
        if not ok:
            lams = ", ".join(f"{lam:.6g}" for lam, _ in witnesses)
            raise NoSolutionError(
                f"regulator equations unsolvable: resonance at exosystem eigenvalue(s) {lams}"
            ) from exc
        raise

    U = sol.X
    if not sol.unique and m > q_e:
        U = _min_norm_psi(U, [(L1, S), (L2, np.eye(d))], n, m, d, tol)
    Pi_x, Psi = U[:n, :], U[n:, :]
    return Pi_x, Psi


def _min_norm_psi(U0, coeffs, n, m, d, tol):
    """Shift U0 along the operator null space to minimize ||vec(Psi)||."""
    op = sum(np.kron(R.T, L) for L, R in coeffs)
    _, sv, Vh = np.linalg.svd(op)
    rank = int(np.sum(sv > tol * sv[0])) if sv.size else 0
    null = Vh[rank:].conj().T
    if null.shape[1] == 0:
        return U0
    # Rows of vec(U) belonging to Psi: within each of the d columns of U,
    # the last m of (n + m) entries.
    psi_rows = np.concatenate([np.arange(n, n + m) + k * (n + m) for k in range(d)])
    u0 = U0.reshape(-1, order="F")
    c, *_ = np.linalg.lstsq(null[psi_rows, :], -u0[psi_rows], rcond=None)
    return (u0 + null @ c).reshape(U0.shape, order="F")


def solve_pi_zeta(Phi, L, Psi, S, tol: float | None = None):
    """Solve  Pi_zeta S = (Phi kron I) Pi_zeta,  Psi = L Pi_zeta  for the unique Pi_zeta.

    Uniqueness comes from observability of (Phi kron I, L), which is checked
    up front; an unobservable pair raises ValueError.
    """
    if tol is None:
        tol = numkit.default_tol()
    Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
    L = np.atleast_2d(np.asarray(L, dtype=float))
    Psi = np.atleast_2d(np.asarray(Psi, dtype=float))
    S = np.atleast_2d(np.asarray(S, dtype=float))
    dbar = Phi.shape[0]
    p = L.shape[1]
    if p % dbar != 0:
        raise ValueError(f"L has {p} columns, not a multiple of the companion degree {dbar}")
    q = p // dbar
    big = np.kron(Phi, np.eye(q))

    for lam in _all_distinct_eigs(big):
        pencil = np.vstack([big - lam * np.eye(p), L.astype(complex)])
        if numkit.rank_svd(pencil, tol) < p:
            raise ValueError(
                f"precondition violated: (Phi kron I, L) unobservable at eigenvalue {lam:.6g}"
            )

    d = S.shape[0]
    m = L.shape[0]
    L1 = np.vstack([np.eye(p), np.zeros((m, p))])
    L2 = np.vstack([-big, L])
    rhs = np.vstack([np.zeros((p, d)), Psi])
    sol = numkit.solve_linear_matrix_equation([(L1, S), (L2, np.eye(d))], rhs, tol=tol)
    return sol.X


def _all_distinct_eigs(M, tol=1e-8):
    eigs = numkit.eigenvalues(M)
    scale = max(1.0, float(np.max(np.abs(eigs))) if eigs.size else 1.0)
    reps = []
    for lam in eigs:
        if not any(abs(lam - r) <= tol * scale for r in reps):
            reps.append(lam)
    return reps


def verify_discrete_regulator_equations(Pi_x, Pi_zeta, disc) -> dict:
    """Substitution residuals of the sampled steady-state equations.

    ``disc`` is a DiscretizedPlant; the three lines checked are the sampled
    state equation, the internal-model invariance of Pi_zeta, and the error
    annihilation row.
    """
    plant = disc.plant
    q_e = plant.q_e
    big = np.kron(disc.Phi_D, np.eye(q_e))
    r_state = np.linalg.norm(
        Pi_x @ disc.S_D - disc.A_D @ Pi_x - disc.L_D @ Pi_zeta - disc.P_D)
    r_im = np.linalg.norm(Pi_zeta @ disc.S_D - big @ Pi_zeta)
    r_err = np.linalg.norm(plant.C_e @ Pi_x + plant.Q_e)
    return {"state": float(r_state), "internal_model": float(r_im), "error": float(r_err)}


def solve_washout_steady_state(F_f, G_f, Gamma_f, Y_m, S_D, tol: float | None = None):
    """Unique steady state Pi_f of the washout filter:
    Pi_f S_D = F_f Pi_f + G_f Y_m  with  Y_m = Gamma_f Pi_f.

    F_f Schur against the unit-circle spectrum of S_D makes the first line a
    nonsingular Stein-type equation; the second line then holds automatically
    and is re-verified here.
    """
    if tol is None:
        tol = numkit.default_tol()
    F_f = np.atleast_2d(np.asarray(F_f, dtype=float))
    G_f = np.atleast_2d(np.asarray(G_f, dtype=float))
    Gamma_f = np.atleast_2d(np.asarray(Gamma_f, dtype=float))
    Y_m = np.atleast_2d(np.asarray(Y_m, dtype=float))
    S_D = np.atleast_2d(np.asarray(S_D, dtype=float))
    if F_f.size == 0:
        return np.zeros((0, S_D.shape[0]))
    r = F_f.shape[0]
    d = S_D.shape[0]
    sol = numkit.solve_linear_matrix_equation(
        [(np.eye(r), S_D), (-F_f, np.eye(d))], G_f @ Y_m, tol=tol)
    if not sol.unique:
        raise numkit.SynthesisError(
            "washout steady-state equation is singular; expected F_f Schur "
            "and S_D with unit-circle spectrum")
    Pi_f = sol.X
    scale = max(1.0, float(np.linalg.norm(Y_m)))
    blocking = float(np.linalg.norm(Y_m - Gamma_f @ Pi_f))
    if blocking > 1e-6 * scale:
        raise numkit.SynthesisError(
            f"washout blocking identity violated: ||Y_m - Gamma_f Pi_f|| = {blocking:.3e}")
    return Pi_f


def build_pi_z(Pi_f, Pi_eta, n_z: int):
    """Stack col(Pi_f, Pi_eta, 0) up to the controller state dimension n_z."""
    Pi_f = np.atleast_2d(np.asarray(Pi_f, dtype=float))
    Pi_eta = np.atleast_2d(np.asarray(Pi_eta, dtype=float))
    d = Pi_eta.shape[1] if Pi_eta.size else Pi_f.shape[1]
    used = Pi_f.shape[0] + Pi_eta.shape[0]
    if n_z < used:
        raise ValueError(f"dimension mismatch: n_z = {n_z} < stacked rows {used}")
    return np.vstack([Pi_f.reshape(-1, d), Pi_eta.reshape(-1, d), np.zeros((n_z - used, d))])
