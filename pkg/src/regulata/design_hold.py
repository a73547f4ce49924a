"""Generalized-hold regulator design for sampled measurements.

The pipeline: build the hold device from the exosystem's companion form,
discretize the plant/hold/exosystem cascade exactly over one sampling
period, build a washout filter that removes the steady component of the
extra measurements, replicate a discrete internal model, stabilize the
augmented system with discrete LQG, and assemble everything into one
sampled controller

    z+ = A_z z + B_z y,      v = K_z z + L_z y,

whose outputs split into the residual input v_u and the hold reset v_zeta.
A ClosedLoopCertificate records the closed-loop spectral radius and the
substitution residuals of the steady-state identities, including the
steady-state of the full sampled-data (flow + jump) loop on a grid of
intra-sample times.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numkit, regeq
from .assumptions import (CompanionForm, check_pathological,
                          companion_from_minimal_polynomial, pbh_detectable,
                          pbh_stabilizable)

__all__ = [
    "DiscretizedPlant",
    "AugmentedSystem",
    "StabilizerGains",
    "ClosedLoopCertificate",
    "HoldRegulator",
    "build_hold",
    "discretize_extended",
    "build_washout",
    "assemble_augmented",
    "synthesize_stabilizer",
    "assemble_controller",
    "build_hold_regulator",
]


def _selector(dbar: int, width: int) -> np.ndarray:
    """First-block-coordinate selector (e_1^T kron I_width)."""
    e1 = np.zeros((1, dbar))
    if dbar:
        e1[0, 0] = 1.0
    return np.kron(e1, np.eye(width))


def _dare_gain(A, B, Q, R) -> np.ndarray:
    """LQ gain K = (R + B'XB)^{-1} B'XA for the verified DARE solution X."""
    X = numkit.solve_dare(A, B, Q, R)
    return np.linalg.solve(R + B.T @ X @ B, B.T @ X @ A)


@dataclass
class DiscretizedPlant:
    """One-period-exact discretization of plant, hold device, and exosystem.

    S_D, A_D are plain matrix exponentials; B_D is the zero-order-hold input
    map; L_D propagates the hold state through the plant over one period;
    P_D does the same for the exosystem disturbance; Phi_D samples the hold
    flow. All integrals are evaluated by augmented-block exponentials.
    """

    S_D: np.ndarray
    A_D: np.ndarray
    B_D: np.ndarray
    L_D: np.ndarray
    P_D: np.ndarray
    Phi_D: np.ndarray
    plant: object
    Phi: np.ndarray
    hold_flow: np.ndarray
    L: np.ndarray
    T: float

    @property
    def dbar(self) -> int:
        return self.Phi.shape[0]

    @property
    def rep(self) -> int:
        """Internal-model replication width (one copy per input channel)."""
        return self.hold_flow.shape[0] // max(self.dbar, 1)


@dataclass
class AugmentedSystem:
    """Sampled design plant: washout filter + plant + hold + internal model.

    State (xi, x, zeta, eta); inputs (v_u, vbar_zeta, v_eta); outputs
    (e, y_f) where y_f is the washed extra measurement.
    """

    A_hat: np.ndarray
    B_hat: np.ndarray
    C_hat: np.ndarray
    n_f: int
    n_x: int
    p: int


@dataclass
class StabilizerGains:
    """Discrete LQG output-feedback stabilizer (observer + state feedback)."""

    A_theta: np.ndarray
    B_theta: np.ndarray
    C_theta: np.ndarray
    D_theta: np.ndarray


@dataclass
class ClosedLoopCertificate:
    """Stability and steady-state evidence for the assembled sampled loop."""

    A_cl: np.ndarray
    rho: float
    Pi_z: np.ndarray
    residuals: dict
    manifold_residual: float
    tau_points: int

    @property
    def valid(self) -> bool:
        return (self.rho < 1.0
                and all(r <= 1e-8 for r in self.residuals.values())
                and self.manifold_residual <= 1e-8)


@dataclass
class HoldRegulator:
    """Everything the simulator and CLI need for the hold-based loop."""

    Phi: np.ndarray
    hold_flow: np.ndarray
    L: np.ndarray
    F_f: np.ndarray
    G_f: np.ndarray
    Gamma_f: np.ndarray
    stabilizer: StabilizerGains
    A_z: np.ndarray
    B_z: np.ndarray
    K_z: np.ndarray
    L_z: np.ndarray
    disc: DiscretizedPlant
    solution: regeq.RegulatorSolution
    certificate: ClosedLoopCertificate
    dims: dict = field(default_factory=dict)

    @property
    def n_z(self) -> int:
        return self.A_z.shape[0]

    @property
    def m(self) -> int:
        return self.disc.plant.m

    @property
    def K_zu(self) -> np.ndarray:
        return self.K_z[:self.m, :]

    @property
    def K_zzeta(self) -> np.ndarray:
        return self.K_z[self.m:, :]

    @property
    def L_zu(self) -> np.ndarray:
        return self.L_z[:self.m, :]

    @property
    def L_zzeta(self) -> np.ndarray:
        return self.L_z[self.m:, :]


def build_hold(plant, companion):
    """Hold device flow matrix Phi kron I and its output gain L.

    The hold state is one copy of the companion dynamics per input channel;
    L reads the first companion coordinate of each copy, which makes the
    pair observable by construction (verified anyway).
    """
    Phi = companion.Phi if isinstance(companion, CompanionForm) else np.atleast_2d(companion)
    dbar = Phi.shape[0]
    rep = plant.m
    hold_flow = np.kron(Phi, np.eye(rep))
    L = _selector(dbar, rep)
    obs = np.vstack([L @ np.linalg.matrix_power(hold_flow, i) for i in range(dbar)])
    if numkit.rank_svd(obs) != dbar * rep:
        raise numkit.SynthesisError("hold pair unexpectedly unobservable")
    return hold_flow, L


def discretize_extended(plant, hold, T: float, companion=None) -> DiscretizedPlant:
    """Exact discretization of the plant/hold/exosystem cascade at period T.

    Raises ValueError when T is pathological for the combined spectrum of A
    and S (sampling would alias modes onto each other and lose
    detectability).
    """
    hold_flow, L = hold
    pathological, witnesses = check_pathological(plant.A, plant.S, T)
    if pathological:
        pairs = "; ".join(f"{a:.6g} vs {b:.6g} (k={k})" for a, b, k in witnesses)
        raise ValueError(
            f"precondition violated: sampling period T={T} is pathological "
            f"for eigenvalue pair(s) {pairs}")
    if companion is None:
        companion = companion_from_minimal_polynomial(plant.S)
    Phi = companion.Phi if isinstance(companion, CompanionForm) else np.atleast_2d(companion)
    _, int_eA = numkit.matexp_with_integral(plant.A, T)
    return DiscretizedPlant(
        S_D=numkit.matexp(plant.S, T),
        A_D=numkit.matexp(plant.A, T),
        B_D=int_eA @ plant.B,
        L_D=numkit.cross_integral(plant.A, plant.B @ L, hold_flow, T),
        P_D=numkit.cross_integral(plant.A, plant.P, plant.S, T),
        Phi_D=numkit.matexp(Phi, T),
        plant=plant, Phi=Phi, hold_flow=hold_flow, L=L, T=float(T),
    )


def build_washout(Phi_D, q_m: int, weights=None):
    """Washout filter (F_f, G_f, Gamma_f) for the sampled extra measurements.

    Gamma_f reads the first companion coordinate per measurement channel;
    G_f is a Kalman-style gain from the dual Riccati equation making
    F_f := Phi_D kron I - G_f Gamma_f Schur. The reconstruction identity
    F_f + G_f Gamma_f = Phi_D kron I is then enforced bit-exactly by
    absorbing the (one or two ulp) addition rounding into F_f.
    """
    Phi_D = np.atleast_2d(np.asarray(Phi_D, dtype=float))
    dbar = Phi_D.shape[0]
    if q_m == 0:
        return np.zeros((0, 0)), np.zeros((0, 0)), np.zeros((0, 0))
    weights = weights or {}
    M = np.kron(Phi_D, np.eye(q_m))
    p = dbar * q_m
    Gamma_f = _selector(dbar, q_m)
    Qo, Ro = weights.get("washout_Qo"), weights.get("washout_Ro")
    Qo = np.eye(p) if Qo is None else (float(Qo) * np.eye(p) if np.isscalar(Qo) else np.asarray(Qo, float))
    Ro = np.eye(q_m) if Ro is None else (float(Ro) * np.eye(q_m) if np.isscalar(Ro) else np.asarray(Ro, float))
    G_f = _dare_gain(M.T, Gamma_f.T, Qo, Ro).T
    F_f = M - G_f @ Gamma_f

    # Gamma_f is a 0/1 selector, so G_f Gamma_f is an exact placement of G_f
    # into the first block column; only the subtraction/addition rounding in
    # F_f's first block column needs absorbing.
    for _ in range(50):
        gap = M - (F_f + G_f @ Gamma_f)
        if not gap.any():
            break
        F_f = F_f + gap
    else:
        raise numkit.SynthesisError("washout reconstruction did not reach bit-exactness")
    if not numkit.is_schur(F_f):
        raise numkit.SynthesisError("washout filter lost Schur stability")
    obs = np.vstack([Gamma_f @ np.linalg.matrix_power(M, i) for i in range(dbar)])
    if numkit.rank_svd(obs) != p:
        raise numkit.SynthesisError("washout pair unexpectedly unobservable")
    return F_f, G_f, Gamma_f


def assemble_augmented(disc: DiscretizedPlant, washout) -> AugmentedSystem:
    """Stack washout + discretized plant + hold + internal model for stabilization.

    Stabilizability and detectability of the stack are checked by discrete
    PBH tests; a failure names the offending eigenvalue (it signals an
    upstream assumption violation, e.g. an uncontrollable exosystem mode).
    """
    F_f, G_f, Gamma_f = washout
    plant = disc.plant
    n, m, q_e, q_m = plant.n, plant.m, plant.q_e, plant.q_m
    big = np.kron(disc.Phi_D, np.eye(disc.rep))
    p = big.shape[0]
    n_f = F_f.shape[0]

    n_hat = n_f + n + 2 * p
    A_hat = np.zeros((n_hat, n_hat))
    A_hat[:n_f, :n_f] = F_f
    A_hat[:n_f, n_f:n_f + n] = G_f @ plant.C_m
    A_hat[n_f:n_f + n, n_f:n_f + n] = disc.A_D
    A_hat[n_f:n_f + n, n_f + n:n_f + n + p] = disc.L_D
    A_hat[n_f + n:n_f + n + p, n_f + n + p:] = np.eye(p)
    A_hat[n_f + n + p:, n_f + n + p:] = big
    B_hat = np.zeros((n_hat, m + 2 * p))
    B_hat[n_f:n_f + n, :m] = disc.B_D
    B_hat[n_f + n:n_f + n + p, m:m + p] = np.eye(p)
    B_hat[n_f + n + p:, m + p:] = np.eye(p)
    C_hat = np.zeros((q_e + q_m, n_hat))
    C_hat[:q_e, n_f:n_f + n] = plant.C_e
    C_hat[q_e:, :n_f] = -Gamma_f
    C_hat[q_e:, n_f:n_f + n] = plant.C_m

    ok, wit = pbh_stabilizable(A_hat, B_hat, discrete=True)
    if not ok:
        lams = ", ".join(f"{lam:.6g}" for lam, _ in wit)
        raise numkit.SynthesisError(
            f"augmented system not stabilizable at eigenvalue(s) {lams}")
    ok, wit = pbh_detectable(C_hat, A_hat, discrete=True)
    if not ok:
        lams = ", ".join(f"{lam:.6g}" for lam, _ in wit)
        raise numkit.SynthesisError(
            f"augmented system not detectable at eigenvalue(s) {lams}")
    return AugmentedSystem(A_hat=A_hat, B_hat=B_hat, C_hat=C_hat, n_f=n_f, n_x=n, p=p)


def synthesize_stabilizer(aug: AugmentedSystem, weights=None) -> StabilizerGains:
    """Discrete LQG stabilizer for the augmented system (identity weights by
    default, overridable per scenario). The augmented closed loop is
    verified Schur.

    Weight keys: Q, R (state feedback), Qo, Ro (observer), each a scalar or
    full matrix. Alternatively "ltr": q shapes the process noise at the
    control input, Qo = q B̂B̂' + I/q — the loop-transfer-recovery covariance,
    which speeds up the observer far more than scaling an isotropic Qo can
    (isotropic noise saturates the filter poles at the cheap-noise limit).
    """
    weights = weights or {}
    A, B, C = aug.A_hat, aug.B_hat, aug.C_hat
    n = A.shape[0]

    def w(val, size):
        if val is None:
            return np.eye(size)
        if np.isscalar(val):
            return float(val) * np.eye(size)
        val = np.asarray(val, dtype=float)
        return np.diag(val) if val.ndim == 1 else np.atleast_2d(val)

    if "Qo" in weights or "ltr" not in weights:
        Qo = w(weights.get("Qo"), n)
    else:
        q = float(weights["ltr"])
        Qo = q * (B @ B.T) + np.eye(n) / q
    K = _dare_gain(A, B, w(weights.get("Q"), n), w(weights.get("R"), B.shape[1]))
    H = _dare_gain(A.T, C.T, Qo, w(weights.get("Ro"), C.shape[0])).T
    gains = StabilizerGains(
        A_theta=A - B @ K - H @ C,
        B_theta=H,
        C_theta=-K,
        D_theta=np.zeros((B.shape[1], C.shape[0])),
    )
    loop = np.block([[A, B @ gains.C_theta], [gains.B_theta @ C, gains.A_theta]])
    if not numkit.is_schur(loop):
        raise numkit.SynthesisError(
            f"LQG failed to stabilize the augmented system "
            f"(spectral radius {numkit.spectral_radius(loop):.6f})")
    return gains


def assemble_controller(disc: DiscretizedPlant, washout, stabilizer: StabilizerGains):
    """Cascade washout -> internal model -> stabilizer into one sampled
    controller and certify the closed loop.

    Controller state z = (xi, eta, theta); input is the sampled y = (e, y_m).
    Returns a HoldRegulator whose certificate records the closed-loop
    spectral radius, the steady-state identity residuals, and the
    intra-sample steady-state residual on a tau grid. A spectral radius
    >= 1 raises SynthesisError (certification failure).
    """
    F_f, G_f, Gamma_f = washout
    plant = disc.plant
    n, m, q_e, q_m, d = plant.n, plant.m, plant.q_e, plant.q_m, plant.d
    big = np.kron(disc.Phi_D, np.eye(disc.rep))
    p = big.shape[0]
    n_f = F_f.shape[0]
    n_th = stabilizer.A_theta.shape[0]
    n_z = n_f + p + n_th

    # Output ybar = (e, y_f) of the augmented system, as a function of the
    # controller state (through xi) and the raw sampled y.
    Cy_xi = np.vstack([np.zeros((q_e, n_f)), -Gamma_f])
    sel_m = np.hstack([np.zeros((q_m, q_e)), np.eye(q_m)])
    D_u = stabilizer.D_theta[:m, :]
    D_zeta = stabilizer.D_theta[m:m + p, :]
    D_eta = stabilizer.D_theta[m + p:, :]
    C_u = stabilizer.C_theta[:m, :]
    C_zeta = stabilizer.C_theta[m:m + p, :]
    C_eta = stabilizer.C_theta[m + p:, :]

    A_z = np.zeros((n_z, n_z))
    A_z[:n_f, :n_f] = F_f
    A_z[n_f:n_f + p, :n_f] = D_eta @ Cy_xi
    A_z[n_f:n_f + p, n_f:n_f + p] = big
    A_z[n_f:n_f + p, n_f + p:] = C_eta
    A_z[n_f + p:, :n_f] = stabilizer.B_theta @ Cy_xi
    A_z[n_f + p:, n_f + p:] = stabilizer.A_theta
    B_z = np.vstack([G_f @ sel_m, D_eta, stabilizer.B_theta])
    K_z = np.zeros((m + p, n_z))
    K_z[:m, :n_f] = D_u @ Cy_xi
    K_z[:m, n_f + p:] = C_u
    K_z[m:, :n_f] = D_zeta @ Cy_xi
    K_z[m:, n_f:n_f + p] = np.eye(p)
    K_z[m:, n_f + p:] = C_zeta
    L_z = np.vstack([D_u, D_zeta])

    # Steady-state chain and its residuals.
    Pi_x, Psi = regeq.solve_continuous_regulator_equations(plant)
    Y_m = plant.C_m @ Pi_x + plant.Q_m
    Pi_zeta = regeq.solve_pi_zeta(disc.Phi, disc.L, Psi, plant.S)
    Pi_f = regeq.solve_washout_steady_state(F_f, G_f, Gamma_f, Y_m, disc.S_D)
    Pi_eta = Pi_zeta @ disc.S_D
    Pi_z = regeq.build_pi_z(Pi_f, Pi_eta, n_z)
    y_ss = np.vstack([np.zeros((q_e, d)), Y_m])

    K_zu, K_zzeta = K_z[:m, :], K_z[m:, :]
    L_zu, L_zzeta = L_z[:m, :], L_z[m:, :]
    residuals = dict(regeq.verify_discrete_regulator_equations(Pi_x, Pi_zeta, disc))
    residuals["controller_state"] = float(np.linalg.norm(
        Pi_z @ disc.S_D - A_z @ Pi_z - B_z @ y_ss))
    residuals["input_zero_row"] = float(np.linalg.norm(
        K_zu @ Pi_z + L_zu @ y_ss))
    residuals["hold_reproduction"] = float(np.linalg.norm(
        Pi_zeta @ disc.S_D - K_zzeta @ Pi_z - L_zzeta @ y_ss))

    C_bar = plant.C
    A_cl = np.block([
        [disc.A_D + disc.B_D @ L_zu @ C_bar, disc.L_D, disc.B_D @ K_zu],
        [L_zzeta @ C_bar, np.zeros((p, p)), K_zzeta],
        [B_z @ C_bar, np.zeros((n_z, p)), A_z],
    ])
    rho = numkit.spectral_radius(A_cl)

    manifold = _manifold_residual(
        disc, plant, Pi_x, Pi_zeta, Pi_z, Y_m,
        K_zu, K_zzeta, L_zu, L_zzeta, A_z, B_z, tau_points=34)

    certificate = ClosedLoopCertificate(
        A_cl=A_cl, rho=float(rho), Pi_z=Pi_z, residuals=residuals,
        manifold_residual=manifold, tau_points=34)
    solution = regeq.RegulatorSolution(
        Pi_x=Pi_x, Psi=Psi, Y_m=Y_m, Pi_zeta=Pi_zeta, Pi_f=Pi_f,
        Pi_eta=Pi_eta, Pi_z=Pi_z, residuals=residuals)
    regulator = HoldRegulator(
        Phi=disc.Phi, hold_flow=disc.hold_flow, L=disc.L,
        F_f=F_f, G_f=G_f, Gamma_f=Gamma_f, stabilizer=stabilizer,
        A_z=A_z, B_z=B_z, K_z=K_z, L_z=L_z, disc=disc,
        solution=solution, certificate=certificate,
        dims={"n_f": n_f, "p": p, "n_theta": n_th, "n_z": n_z},
    )
    if rho >= 1.0:
        raise numkit.SynthesisError(
            f"certification failure: closed-loop spectral radius {rho:.6f} >= 1")
    return regulator


def _manifold_residual(disc, plant, Pi_x, Pi_zeta, Pi_z, Y_m,
                       K_zu, K_zzeta, L_zu, L_zzeta, A_z, B_z, tau_points):
    """Max residual of the intra-sample steady-state equations.

    The loop state rho = (x, zeta, e_held, ym_held, z) in steady state is
    rho(t) = M(tau) w(t) with M(tau) = col(Pi_x, Pi_zeta, 0, Y_m e^{-S tau},
    Pi_z e^{-S tau}); M must satisfy M'(tau) + M(tau) S = F M(tau) + P_F
    along the flow and M(0) = J M(T) + P_J across the jump.
    """
    n, m, q_e, q_m, d = plant.n, plant.m, plant.q_e, plant.q_m, plant.d
    p = Pi_zeta.shape[0]
    n_z = Pi_z.shape[0]
    S, T = plant.S, disc.T
    dim = n + p + q_e + q_m + n_z

    F = np.zeros((dim, dim))
    F[:n, :n] = plant.A
    F[:n, n:n + p] = plant.B @ disc.L
    F[:n, n + p:n + p + q_e] = plant.B @ L_zu[:, :q_e]
    F[:n, n + p + q_e:n + p + q_e + q_m] = plant.B @ L_zu[:, q_e:]
    F[:n, n + p + q_e + q_m:] = plant.B @ K_zu
    F[n:n + p, n:n + p] = disc.hold_flow
    P_F = np.vstack([plant.P, np.zeros((dim - n, d))])

    def M_of(tau):
        decay = numkit.matexp(S, -tau)
        return np.vstack([Pi_x, Pi_zeta, np.zeros((q_e, d)), Y_m @ decay, Pi_z @ decay])

    def M_prime(tau):
        decay = numkit.matexp(S, -tau)
        return np.vstack([np.zeros((n + p + q_e, d)), -Y_m @ decay @ S, -Pi_z @ decay @ S])

    worst = 0.0
    for tau in np.linspace(0.0, T, tau_points):
        R = M_prime(tau) + M_of(tau) @ S - F @ M_of(tau) - P_F
        worst = max(worst, float(np.linalg.norm(R)))

    C_bar, Q_bar = plant.C, plant.Q
    J = np.zeros((dim, dim))
    J[:n, :n] = np.eye(n)
    J[n:n + p, n + p:n + p + q_e] = L_zzeta[:, :q_e]
    J[n:n + p, n + p + q_e:n + p + q_e + q_m] = L_zzeta[:, q_e:]
    J[n:n + p, n + p + q_e + q_m:] = K_zzeta
    J[n + p:n + p + q_e + q_m, :n] = C_bar
    J[n + p + q_e + q_m:, n + p:n + p + q_e] = B_z[:, :q_e]
    J[n + p + q_e + q_m:, n + p + q_e:n + p + q_e + q_m] = B_z[:, q_e:]
    J[n + p + q_e + q_m:, n + p + q_e + q_m:] = A_z
    P_J = np.vstack([np.zeros((n + p, d)), Q_bar, np.zeros((n_z, d))])
    jump = float(np.linalg.norm(M_of(0.0) - J @ M_of(T) - P_J))
    return max(worst, jump)


def build_hold_regulator(scenario) -> HoldRegulator:
    """Full hold-design pipeline for a scenario.

    Stabilizer weights come from the scenario; a "hold" sub-dict takes
    precedence over a flat layout when the scenario namespaces its weights
    per design family.
    """
    plant = scenario.plant
    weights = scenario.stabilizer_weights or {}
    if isinstance(weights.get("hold"), dict):
        weights = weights["hold"]
    companion = companion_from_minimal_polynomial(plant.S)
    hold = build_hold(plant, companion)
    disc = discretize_extended(plant, hold, scenario.sampling.T, companion)
    washout = build_washout(disc.Phi_D, plant.q_m, weights)
    aug = assemble_augmented(disc, washout)
    stabilizer = synthesize_stabilizer(aug, weights)
    return assemble_controller(disc, washout, stabilizer)
