"""Purely digital multi-rate regulator: the hold-design gains executed at a
faster control period T/N, with the hold state flowed inside the controller
and sampled at every control tick.

Also computes the (deliberately conservative) sufficient rate N* from the
closed-loop Lyapunov data; N* is reported, never enforced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import numkit
from .design_hold import HoldRegulator, build_hold_regulator

__all__ = [
    "MultiRateRegulator",
    "RateEstimate",
    "build_multirate",
    "estimate_N_star",
    "build_multirate_regulator",
]


@dataclass
class MultiRateRegulator:
    """Hold-design gains plus the sub-period propagators of the hold state.

    props[i] = e^{(Phi kron I) i T / N} for i = 0..N; the controller's output
    at tick i of a measurement interval is L props[i] zeta + K_zu z + L_zu y.
    """

    base: HoldRegulator
    N: int
    props: list

    @property
    def control_period(self) -> float:
        return self.base.disc.T / self.N


@dataclass
class RateEstimate:
    """Sufficient control-rate bound from the closed-loop Lyapunov function."""

    lambda_cl: float
    k1: float
    phi1: float
    phi2: float
    alpha_star: float
    sigma_min: float
    N_star: int
    P_cl: np.ndarray


def build_multirate(hold: HoldRegulator, N: int) -> MultiRateRegulator:
    """Precompute the tick propagators for rate multiplier N (N >= 1)."""
    if int(N) != N or N < 1:
        raise ValueError(f"rate multiplier N must be an integer >= 1, got {N}")
    N = int(N)
    T = hold.disc.T
    props = [numkit.matexp(hold.hold_flow, i * T / N) for i in range(N + 1)]
    return MultiRateRegulator(base=hold, N=N, props=props)


def _max_norm_over(f, T: float, coarse: int = 4096):
    """Max of a scalar function on [0, T]: coarse grid + golden refinement."""
    grid = np.linspace(0.0, T, coarse + 1)
    vals = np.array([f(t) for t in grid])
    i = int(np.argmax(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, coarse)]
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(60):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = f(d)
    return max(float(vals[i]), fc, fd)


def _min_scalar(f, lo: float, hi: float, iters: int = 120):
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = f(d)
    x = c if fc < fd else d
    return x, min(fc, fd)


def estimate_N_star(certificate, plant, T: float, L=None, Phi=None) -> RateEstimate:
    """Sufficient rate bound N* for the multi-rate loop.

    Parameters
    ----------
    certificate : ClosedLoopCertificate
        Hold-design certificate; its A_cl must be Schur.
    plant : PlantModel
    T : float
        Measurement period.
    L, Phi : ndarray, optional
        Hold output gain and companion matrix; both default to zero-width
        matrices only in the degenerate no-hold case and are normally taken
        from the hold design.

    Notes
    -----
    lambda_cl is taken as rho(A_cl)^2 + 1e-6 (the contraction of the squared
    norm per period certified by any Lyapunov function of the sampled loop);
    P_cl solves A_cl' P_cl A_cl - lambda_cl P_cl = -I. The bound is

        N* = (32 phi1^2 e^{a*} + 8 phi2 lambda_cl)
             / (a* k1^2 sigma_min(P_cl) lambda_cl^2)

    minimized over a* in (0, 50] by golden-section, with
    phi1 = max_tau ||e^{-A tau} B|| ||P_cl||, phi2 = ||L|| max_tau ||Phi e^{Phi tau}||,
    and k1 = ln(1/lambda_cl)/T. The estimate is conservative by construction.
    """
    rho = numkit.spectral_radius(certificate.A_cl)
    lam = rho * rho + 1e-6
    if lam >= 1.0:
        raise ValueError(
            f"precondition violated: lambda_cl = {lam:.6f} >= 1 (loop not contractive)")
    A_cl = certificate.A_cl
    scaled = A_cl / math.sqrt(lam)
    P_cl = sla.solve_discrete_lyapunov(scaled.T, np.eye(A_cl.shape[0]) / lam)
    P_cl = 0.5 * (P_cl + P_cl.T)

    A, B = plant.A, plant.B
    phi1 = _max_norm_over(lambda t: np.linalg.norm(numkit.matexp(A, -t) @ B, 2), T) \
        * np.linalg.norm(P_cl, 2)
    if L is None or Phi is None or np.asarray(L).size == 0:
        phi2 = 0.0
    else:
        L = np.atleast_2d(np.asarray(L, dtype=float))
        Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
        phi2 = np.linalg.norm(L, 2) * _max_norm_over(
            lambda t: np.linalg.norm(Phi @ numkit.matexp(Phi, t), 2), T)

    k1 = math.log(1.0 / lam) / T
    sigma_min = float(np.min(np.linalg.eigvalsh(P_cl)))

    def objective(alpha):
        return (32.0 * phi1 ** 2 * math.exp(alpha) + 8.0 * phi2 * lam) / alpha

    alpha_star, best = _min_scalar(objective, 1e-8, 50.0)
    raw = best / (k1 ** 2 * sigma_min * lam ** 2)
    return RateEstimate(
        lambda_cl=float(lam), k1=float(k1), phi1=float(phi1), phi2=float(phi2),
        alpha_star=float(alpha_star), sigma_min=sigma_min,
        N_star=max(1, math.ceil(raw)), P_cl=P_cl)


def build_multirate_regulator(scenario):
    """Full multi-rate pipeline: hold design, tick propagators, rate estimate."""
    hold = build_hold_regulator(scenario)
    reg = build_multirate(hold, scenario.sampling.N)
    estimate = estimate_N_star(
        hold.certificate, scenario.plant, scenario.sampling.T,
        L=hold.L, Phi=hold.Phi)
    return reg, estimate
