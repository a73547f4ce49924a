"""Emulation-based design: a continuous-time output regulator, its exact
zero-order-hold digitization, and a quadratic certificate bounding the
sampling periods for which the digitized loop stays stable.

The continuous regulator mirrors the sampled-data construction used by the
hold-based design: a washout filter on the extra measurements, a replicated
internal model of the exosystem, and an LQG output-feedback stabilizer for
the augmented system. The source model only asserts such a regulator exists;
this construction is our own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import numkit, regeq
from .assumptions import CompanionForm, companion_from_minimal_polynomial

__all__ = [
    "EmulationRegulator",
    "build_continuous_regulator",
    "emulate",
    "find_kappa_gamma",
    "tau_max",
    "build_emulation_regulator",
]


@dataclass
class EmulationRegulator:
    """Continuous regulator (A_c, B_c, C_c), its sampled update (M, Gamma),
    and the certificate (P, kappa, gamma_star, tau_max).

    A_loop is the continuous closed-loop matrix [[A, B C_c], [B_c C, A_c]];
    B_loop injects the sample-and-hold error; C_loop maps the loop state to
    the derivatives of (y, u), which is what the certificate bounds. k_em
    scales the asymptotic error bound (reported, never asserted).
    """

    A_c: np.ndarray
    B_c: np.ndarray
    C_c: np.ndarray
    Pi_xc: np.ndarray
    M: np.ndarray
    Gamma: np.ndarray
    A_loop: np.ndarray
    B_loop: np.ndarray
    C_loop: np.ndarray
    P: np.ndarray
    kappa: float
    gamma_star: float
    tau_max: float
    k_em: float
    solution: regeq.RegulatorSolution

    @property
    def n_c(self) -> int:
        return self.A_c.shape[0]


def _selector(dbar: int, width: int) -> np.ndarray:
    """First-block-coordinate selector (e_1^T kron I_width)."""
    e1 = np.zeros((1, dbar))
    if dbar:
        e1[0, 0] = 1.0
    return np.kron(e1, np.eye(width))


def _weight(value, size):
    """Normalize an LQG weight: None -> I, scalar -> scalar * I, 1-D -> diag,
    else matrix."""
    if value is None:
        return np.eye(size)
    if np.isscalar(value):
        return float(value) * np.eye(size)
    value = np.asarray(value, dtype=float)
    if value.ndim == 1:
        return np.diag(value)
    return np.atleast_2d(value)


def _care_gain(A, B, Q=None, R=None):
    """State-feedback gain K with A - B K Hurwitz, via the Riccati equation."""
    n = A.shape[0]
    if B.shape[1] == 0:
        if not numkit.is_hurwitz(A):
            raise numkit.SynthesisError("no inputs and flow matrix not Hurwitz")
        return np.zeros((0, n))
    Q = _weight(Q, n)
    R = _weight(R, B.shape[1])
    try:
        X = sla.solve_continuous_are(A, B, Q, R)
    except Exception as exc:
        raise numkit.SynthesisError(f"continuous Riccati solve failed: {exc}") from exc
    return np.linalg.solve(R, B.T @ X)


def build_continuous_regulator(plant, companion, weights=None):
    """Build a continuous-time output regulator for the plant.

    Parameters
    ----------
    plant : PlantModel
    companion : CompanionForm or ndarray
        Companion matrix of the exosystem's minimal polynomial.
    weights : dict, optional
        LQG weight overrides: 'Q', 'R' (state feedback), 'Qo', 'Ro'
        (observer), 'washout_Qo', 'washout_Ro' (washout filter gain), each a
        scalar or matrix; identity defaults. 'ltr': q requests
        loop-transfer-recovery observer shaping Qo = q B̂B̂' + I/q, which is
        what actually damps the internal-model estimates — they are nearly
        unobservable, so isotropic Qo leaves the filter poles pinned near
        the imaginary axis no matter how Ro is scaled.

    Returns
    -------
    (A_c, B_c, C_c, Pi_xc)
        Regulator matrices driven by y = col(e, y_m), plus the steady-state
        regulator state map Pi_xc. The closed loop is verified Hurwitz and
        Pi_xc is verified to reproduce the steady input (residual <= 1e-8 of
        the defining equations); violations raise SynthesisError.
    """
    Phi = companion.Phi if isinstance(companion, CompanionForm) else np.atleast_2d(companion)
    dbar = Phi.shape[0]
    n, m, q_e, q_m, d = plant.n, plant.m, plant.q_e, plant.q_m, plant.d
    weights = weights or {}

    # Washout filter on y_m: F_w + G Gamma_w = Phi kron I_qm with F_w Hurwitz.
    Gamma_w = _selector(dbar, q_m)
    big_m = np.kron(Phi, np.eye(q_m))
    n_f = dbar * q_m
    if q_m > 0:
        G = _care_gain(big_m.T, Gamma_w.T,
                       weights.get("washout_Qo"), weights.get("washout_Ro")).T
        F_w = big_m - G @ Gamma_w
    else:
        G = np.zeros((0, 0))
        F_w = np.zeros((0, 0))

    # Internal model replicated per input channel (equals the error count in
    # the square case); u = L_c eta + v_u.
    L_c = _selector(dbar, m)
    big_u = np.kron(Phi, np.eye(m))
    n_im = dbar * m

    # Augmented system (xi, x, eta) with inputs (v_u, v_eta), outputs (e, y_f).
    n_aug = n_f + n + n_im
    A_hat = np.zeros((n_aug, n_aug))
    A_hat[:n_f, :n_f] = F_w
    A_hat[:n_f, n_f:n_f + n] = G @ plant.C_m
    A_hat[n_f:n_f + n, n_f:n_f + n] = plant.A
    A_hat[n_f:n_f + n, n_f + n:] = plant.B @ L_c
    A_hat[n_f + n:, n_f + n:] = big_u
    B_hat = np.zeros((n_aug, m + n_im))
    B_hat[n_f:n_f + n, :m] = plant.B
    B_hat[n_f + n:, m:] = np.eye(n_im)
    C_hat = np.zeros((q_e + q_m, n_aug))
    C_hat[:q_e, n_f:n_f + n] = plant.C_e
    C_hat[q_e:, :n_f] = -Gamma_w
    C_hat[q_e:, n_f:n_f + n] = plant.C_m

    K = _care_gain(A_hat, B_hat, weights.get("Q"), weights.get("R"))
    if "Qo" in weights or "ltr" not in weights:
        Qo = weights.get("Qo")
    else:
        q_ltr = float(weights["ltr"])
        Qo = q_ltr * (B_hat @ B_hat.T) + np.eye(n_aug) / q_ltr
    H = _care_gain(A_hat.T, C_hat.T, Qo, weights.get("Ro")).T
    if not numkit.is_hurwitz(A_hat - B_hat @ K) or not numkit.is_hurwitz(A_hat - H @ C_hat):
        raise numkit.SynthesisError(
            "LQG synthesis for the augmented continuous system failed; "
            "check stabilizability/detectability witnesses")
    K_u, K_eta = K[:m, :], K[m:, :]
    H_e, H_f = H[:, :q_e], H[:, q_e:]

    # Regulator state x_c = (xi, eta, theta), input y = (e, y_m).
    n_c = n_f + n_im + n_aug
    A_c = np.zeros((n_c, n_c))
    A_c[:n_f, :n_f] = F_w
    A_c[n_f:n_f + n_im, n_f:n_f + n_im] = big_u
    A_c[n_f:n_f + n_im, n_f + n_im:] = -K_eta
    A_c[n_f + n_im:, :n_f] = -H_f @ Gamma_w
    A_c[n_f + n_im:, n_f + n_im:] = A_hat - B_hat @ K - H @ C_hat
    B_c = np.zeros((n_c, q_e + q_m))
    B_c[:n_f, q_e:] = G
    B_c[n_f + n_im:, :q_e] = H_e
    B_c[n_f + n_im:, q_e:] = H_f
    C_c = np.zeros((m, n_c))
    C_c[:, n_f:n_f + n_im] = L_c
    C_c[:, n_f + n_im:] = -K_u

    A_loop = np.block([[plant.A, plant.B @ C_c], [B_c @ plant.C, A_c]])
    if not numkit.is_hurwitz(A_loop):
        raise numkit.SynthesisError(
            f"closed loop not Hurwitz (spectral abscissa "
            f"{numkit.spectral_abscissa(A_loop):.3e})")

    Pi_xc = _solve_condition_ii(plant, A_c, B_c, C_c)
    return A_c, B_c, C_c, Pi_xc


def _solve_condition_ii(plant, A_c, B_c, C_c):
    """Steady regulator state: Pi_xc S = A_c Pi_xc + B_c col(0, Y_m), Psi = C_c Pi_xc."""
    Pi_x, Psi = regeq.solve_continuous_regulator_equations(plant)
    Y_m = plant.C_m @ Pi_x + plant.Q_m
    n_c, d, m = A_c.shape[0], plant.d, plant.m
    forced = B_c @ np.vstack([np.zeros((plant.q_e, d)), Y_m])
    L1 = np.vstack([np.eye(n_c), np.zeros((m, n_c))])
    L2 = np.vstack([-A_c, C_c])
    rhs = np.vstack([forced, Psi])
    sol = numkit.solve_linear_matrix_equation([(L1, plant.S), (L2, np.eye(d))], rhs)
    check = max(
        np.linalg.norm(sol.X @ plant.S - A_c @ sol.X - forced),
        np.linalg.norm(C_c @ sol.X - Psi),
    )
    if check > 1e-8 * max(1.0, float(np.linalg.norm(Psi))):
        raise numkit.SynthesisError(
            f"steady regulator state check failed (residual {check:.3e})")
    return sol.X


def emulate(A_c, B_c, C_c, T: float):
    """Exact sampled update of the regulator state: returns (M, Gamma) with
    x_c[k+1] = M x_c[k] + Gamma y[k], M = e^{A_c T}, Gamma = int_0^T e^{A_c s} ds B_c."""
    if T <= 0:
        raise ValueError(f"sampling period must be positive, got {T}")
    A_c = np.atleast_2d(np.asarray(A_c, dtype=float))
    B_c = np.atleast_2d(np.asarray(B_c, dtype=float))
    M, integral = numkit.matexp_with_integral(A_c, T)
    return M, integral @ B_c


def _certificate_block(P, A, B, C, kappa, gamma):
    n = A.shape[0]
    q = B.shape[1]
    top = A.T @ P + P @ A + 2.0 * kappa * P + (2.0 / gamma) * (C.T @ C)
    return np.block([[top, P @ B], [B.T @ P, -gamma * np.eye(q)]])


def find_kappa_gamma(A_loop, B_loop, C_loop, feas_tol: float = 1e-8,
                     grid: int = 24):
    """Search the quadratic certificate: P from A^T P + P A = -I, then the
    (kappa, gamma) pair maximizing tau_max subject to the block matrix
    [[A^T P + P A + 2 kappa P + (2/gamma) C^T C, P B], [B^T P, -gamma I]] <= 0.

    For each kappa below its feasibility ceiling 1/(2 max eig P), the
    smallest feasible gamma is found by bisection; among those pairs the one
    with the largest tau_max is returned. Larger kappa alone is worthless —
    it drives gamma (and the admissible period) through the floor.

    Returns (P, kappa, gamma_star). Raises SynthesisError when no pair on
    the search grid is feasible.
    """
    A = np.atleast_2d(np.asarray(A_loop, dtype=float))
    B = np.atleast_2d(np.asarray(B_loop, dtype=float))
    C = np.atleast_2d(np.asarray(C_loop, dtype=float))
    if not numkit.is_hurwitz(A):
        raise numkit.SynthesisError("certificate needs a Hurwitz closed loop")
    P = sla.solve_continuous_lyapunov(A.T, -np.eye(A.shape[0]))
    P = 0.5 * (P + P.T)

    def feasible(kappa, gamma):
        block = _certificate_block(P, A, B, C, kappa, gamma)
        return float(np.max(np.linalg.eigvalsh(block))) <= feas_tol

    kappa_cap = 1.0 / (2.0 * float(np.max(np.linalg.eigvalsh(P))))
    best = None
    for kappa in np.linspace(kappa_cap / grid, kappa_cap * (1.0 - 1e-6), grid):
        hi = max(kappa, 1e-6)
        for _ in range(80):
            if feasible(kappa, hi):
                break
            hi *= 2.0
            if hi > 1e12:
                break
        else:
            continue
        if not feasible(kappa, hi):
            continue
        lo = 1e-9
        if feasible(kappa, lo):
            gamma = lo
        else:
            for _ in range(70):
                mid = math.sqrt(lo * hi)
                if feasible(kappa, mid):
                    hi = mid
                else:
                    lo = mid
            gamma = hi
        cand = (tau_max(kappa, gamma), float(kappa), float(gamma))
        if best is None or cand[0] > best[0]:
            best = cand
    if best is None:
        raise numkit.SynthesisError(
            "no feasible (kappa, gamma) found on the search grid; "
            "this indicates numerical conditioning, not a theory failure")
    _, kappa, gamma = best
    return P, kappa, gamma


def tau_max(kappa: float, gamma: float) -> float:
    """Largest certified sampling period for certificate constants (kappa, gamma).

    Three branches depending on gamma vs kappa, all continuous across the
    r -> 0 junction where the value is 1/kappa.
    """
    if kappa <= 0 or gamma <= 0:
        raise ValueError("kappa and gamma must be positive")
    ratio = gamma / kappa
    r = math.sqrt(abs(ratio * ratio - 1.0))
    if r < 1e-12:
        return 1.0 / kappa
    if gamma > kappa:
        return math.atan(r) / (kappa * r)
    # atanh(r) written as log((1+r)/ratio): algebraically identical for
    # r = sqrt(1-ratio^2) but immune to r rounding up to 1.0 when
    # gamma/kappa underflows the sqrt.
    return math.log((1.0 + r) / ratio) / (kappa * r)


def build_emulation_regulator(scenario) -> EmulationRegulator:
    """Full emulation pipeline for a scenario: continuous design, sampled
    update at the scenario period, certificate, and admissible-period bound."""
    plant = scenario.plant
    companion = companion_from_minimal_polynomial(plant.S)
    weights = _weights_from_config(scenario.stabilizer_weights)
    A_c, B_c, C_c, Pi_xc = build_continuous_regulator(plant, companion, weights)
    M, Gamma = emulate(A_c, B_c, C_c, scenario.sampling.T)
    A_loop = np.block([[plant.A, plant.B @ C_c], [B_c @ plant.C, A_c]])
    B_loop = np.block([[np.zeros((plant.n, plant.q)), plant.B],
                       [B_c, np.zeros((A_c.shape[0], plant.m))]])
    C_loop = np.block([[plant.C @ plant.A, plant.C @ plant.B @ C_c],
                       [C_c @ B_c @ plant.C, C_c @ A_c]])
    P, kappa, gamma = find_kappa_gamma(A_loop, B_loop, C_loop)
    Pi_x, Psi = regeq.solve_continuous_regulator_equations(plant)
    Y_m = plant.C_m @ Pi_x + plant.Q_m
    k_em = (np.linalg.norm(plant.C_e, 2) * scenario.w_bound
            / math.sqrt(np.linalg.norm(P, 2)))
    return EmulationRegulator(
        A_c=A_c, B_c=B_c, C_c=C_c, Pi_xc=Pi_xc, M=M, Gamma=Gamma,
        A_loop=A_loop, B_loop=B_loop, C_loop=C_loop,
        P=P, kappa=kappa, gamma_star=gamma, tau_max=tau_max(kappa, gamma),
        k_em=float(k_em),
        solution=regeq.RegulatorSolution(Pi_x=Pi_x, Psi=Psi, Y_m=Y_m),
    )


def _weights_from_config(raw):
    """Pick the LQG weight overrides out of a scenario's stabilizer config.

    A scenario may namespace weights per design family ("emulation", "hold");
    a flat layout applies to every method.
    """
    if not raw:
        return None
    if isinstance(raw.get("emulation"), dict):
        raw = raw["emulation"]
    keys = ("Q", "R", "Qo", "Ro", "ltr", "washout_Qo", "washout_Ro")
    out = {key: raw[key] for key in keys if key in raw}
    return out or None
