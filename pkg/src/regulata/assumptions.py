"""Eigenvector-test (PBH) checks, sampling-resonance detection, and the
companion form of the exosystem's minimal polynomial.

Everything here is a pure function of matrices; the report produced by
``check_assumptions`` is what the ``check`` CLI subcommand renders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import numkit

__all__ = [
    "AssumptionReport",
    "CompanionForm",
    "pbh_stabilizable",
    "pbh_detectable",
    "check_non_resonance",
    "check_pathological",
    "companion_from_minimal_polynomial",
    "check_assumptions",
]


@dataclass
class AssumptionReport:
    """Outcome of the design preconditions for one plant/sampling pair.

    ``detectable_errors_only`` is informational: designs here only need the
    full measurement stack col(C_e, C_m) to be detectable, so ``satisfied``
    ignores that flag (its witnesses are still recorded).
    """

    stabilizable: bool
    detectable_full: bool
    detectable_errors_only: bool
    non_resonant: bool
    pathological: bool
    witnesses: dict = field(default_factory=dict)

    @property
    def satisfied(self) -> bool:
        return (self.stabilizable and self.detectable_full
                and self.non_resonant and not self.pathological)

    def as_dict(self) -> dict:
        return {
            "stabilizable": self.stabilizable,
            "detectable_full": self.detectable_full,
            "detectable_errors_only": self.detectable_errors_only,
            "non_resonant": self.non_resonant,
            "pathological": self.pathological,
            "satisfied": self.satisfied,
            "witnesses": {
                name: [[_c2l(v) for v in item] for item in items]
                for name, items in self.witnesses.items()
            },
        }


def _c2l(value):
    """Complex scalar -> JSON-friendly [re, im]; plain numbers pass through."""
    if isinstance(value, complex) or isinstance(value, np.complexfloating):
        return [float(np.real(value)), float(np.imag(value))]
    return float(value) if isinstance(value, (np.floating, np.integer)) else value


@dataclass
class CompanionForm:
    """Companion matrix of the minimal polynomial p(s) = s^degree + sum s_i s^i."""

    Phi: np.ndarray
    coefficients: np.ndarray
    degree: int

    def polynomial_at(self, M: np.ndarray) -> np.ndarray:
        """Evaluate the minimal polynomial at a square matrix argument."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        out = np.linalg.matrix_power(M, self.degree)
        for i, s_i in enumerate(self.coefficients):
            out = out + s_i * np.linalg.matrix_power(M, i)
        return out


def _distinct(eigs, tol):
    reps = []
    for lam in eigs:
        if not any(abs(lam - r) <= tol for r in reps):
            reps.append(lam)
    return reps


def _pbh(A, B_or_C, tol, discrete, dual):
    """Shared PBH loop: rank [A - lam I, B] (or its dual) at every bad-region eigenvalue."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    M = np.atleast_2d(np.asarray(B_or_C, dtype=float))
    n = A.shape[0]
    eigs = numkit.eigenvalues(A)
    scale = max(1.0, float(np.max(np.abs(eigs))) if eigs.size else 1.0)
    witnesses = []
    for lam in _distinct(eigs, 1e-8 * scale):
        if discrete:
            unstable = abs(lam) >= 1.0 - tol
        else:
            unstable = lam.real >= -tol * scale
        if not unstable:
            continue
        shifted = A - lam * np.eye(n)
        pencil = np.vstack([shifted, M]) if dual else np.hstack([shifted, M])
        deficiency = n - numkit.rank_svd(pencil, tol)
        if deficiency > 0:
            witnesses.append((lam, deficiency))
    return len(witnesses) == 0, witnesses


def pbh_stabilizable(A, B, tol: float | None = None, discrete: bool = False):
    """PBH stabilizability: rank [A - lam I, B] = n at each unstable eigenvalue.

    The unstable region is Re lam >= 0 for continuous time, |lam| >= 1 with
    ``discrete=True``. Returns (flag, witnesses) with witnesses a list of
    (eigenvalue, rank deficiency) pairs for the failures.
    """
    if tol is None:
        tol = numkit.default_tol()
    return _pbh(A, B, tol, discrete, dual=False)


def pbh_detectable(C, A, tol: float | None = None, discrete: bool = False):
    """PBH detectability: rank [A - lam I; C] = n at each unstable eigenvalue."""
    if tol is None:
        tol = numkit.default_tol()
    return _pbh(A, C, tol, discrete, dual=True)


def check_non_resonance(A, B, C_e, S, tol: float | None = None):
    """Check rank [[A - lam I, B], [C_e, 0]] = n + q_e for every lam in the spectrum of S.

    Full rank at every exosystem frequency is what makes the steady-state
    (regulator) equations solvable.
    """
    if tol is None:
        tol = numkit.default_tol()
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    C_e = np.atleast_2d(np.asarray(C_e, dtype=float))
    n, m = B.shape
    q_e = C_e.shape[0]
    eigs = numkit.eigenvalues(np.atleast_2d(np.asarray(S, dtype=float)))
    scale = max(1.0, float(np.max(np.abs(eigs))) if eigs.size else 1.0)
    witnesses = []
    for lam in _distinct(eigs, 1e-8 * scale):
        pencil = np.block([
            [A - lam * np.eye(n), B],
            [C_e.astype(complex), np.zeros((q_e, m))],
        ])
        deficiency = (n + q_e) - numkit.rank_svd(pencil, tol)
        if deficiency > 0:
            witnesses.append((lam, deficiency))
    return len(witnesses) == 0, witnesses


def check_pathological(A, S, T: float, tol: float = 1e-7):
    """Detect pathological sampling of the combined plant/exosystem spectrum.

    The period T is pathological when two distinct eigenvalues of A or S
    differ by 2*pi*k*sqrt(-1)/T for a nonzero integer k — such modes alias
    onto each other under sampling. Returns (pathological, witnesses) with
    witnesses a list of (lam_i, lam_j, k) triples.
    """
    if T <= 0:
        raise ValueError(f"sampling period must be positive, got T={T}")
    eigs = np.concatenate([
        numkit.eigenvalues(np.atleast_2d(np.asarray(A, dtype=float))),
        numkit.eigenvalues(np.atleast_2d(np.asarray(S, dtype=float))),
    ])
    scale = max(1.0, float(np.max(np.abs(eigs))) if eigs.size else 1.0)
    reps = _distinct(eigs, 1e-8 * scale)
    witnesses = []
    for i, lam_i in enumerate(reps):
        for lam_j in reps[i + 1:]:
            diff = lam_i - lam_j
            k_max = math.ceil(abs(diff.imag) * T / (2.0 * math.pi)) + 1
            for k in range(1, k_max + 1):
                target = 2.0 * math.pi * k * 1j / T
                if min(abs(diff - target), abs(diff + target)) <= tol * max(1.0, abs(diff)):
                    witnesses.append((lam_i, lam_j, k))
                    break
    return len(witnesses) > 0, witnesses


def companion_from_minimal_polynomial(S, tol: float = 1e-9) -> CompanionForm:
    """Companion matrix of the minimal polynomial of S.

    The degree is found by successive rank tests on the vectorized powers
    I, S, S^2, ...: the first power that fails to enlarge the span is a
    combination of the earlier ones, and the combination coefficients are
    (minus) the polynomial coefficients. The result is verified by
    substitution; an inconclusive rank decision raises SynthesisError.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    d = S.shape[0]
    powers = [np.eye(d)]
    for _ in range(d):
        powers.append(powers[-1] @ S)
    vecs = [P.reshape(-1, order="F") for P in powers]
    norms = [max(1.0, float(np.linalg.norm(v))) for v in vecs]

    degree = None
    for k in range(1, d + 1):
        basis = np.column_stack([v / s for v, s in zip(vecs[:k], norms[:k])])
        extended = np.column_stack([basis, vecs[k] / norms[k]])
        if numkit.rank_svd(extended, tol) == numkit.rank_svd(basis, tol):
            degree = k
            break
    if degree is None:
        # Cayley-Hamilton guarantees dependence at k = d; reaching here means
        # the rank test contradicted it.
        raise numkit.SynthesisError(
            "degenerate rank test: no power of S was recognized as dependent "
            f"up to degree {d}; adjust the tolerance (tol={tol})"
        )

    V = np.column_stack(vecs[:degree])
    combo, *_ = np.linalg.lstsq(V, vecs[degree], rcond=None)
    coefficients = -combo  # p(s) = s^degree + sum coefficients[i] * s^i
    residual = float(np.linalg.norm(vecs[degree] - V @ combo))
    if residual > 1e3 * tol * norms[degree]:
        raise numkit.SynthesisError(
            f"degenerate rank test: dependence at degree {degree} has residual "
            f"{residual:.3e}, inconsistent with tolerance {tol}"
        )

    Phi = np.zeros((degree, degree))
    if degree > 1:
        Phi[:-1, 1:] = np.eye(degree - 1)
    Phi[-1, :] = -coefficients
    return CompanionForm(Phi=Phi, coefficients=coefficients, degree=degree)


def check_assumptions(plant, T: float, tol: float | None = None) -> AssumptionReport:
    """Run every design precondition for a plant at measurement period T."""
    if tol is None:
        tol = numkit.default_tol()
    stab, w_stab = pbh_stabilizable(plant.A, plant.B, tol)
    det_full, w_full = pbh_detectable(plant.C, plant.A, tol)
    det_err, w_err = pbh_detectable(plant.C_e, plant.A, tol)
    nonres, w_res = check_non_resonance(plant.A, plant.B, plant.C_e, plant.S, tol)
    path, w_path = check_pathological(plant.A, plant.S, T)
    witnesses = {}
    if not stab:
        witnesses["stabilizable"] = w_stab
    if not det_full:
        witnesses["detectable_full"] = w_full
    if not det_err:
        witnesses["detectable_errors_only"] = w_err
    if not nonres:
        witnesses["non_resonant"] = w_res
    if path:
        witnesses["pathological"] = w_path
    return AssumptionReport(
        stabilizable=stab,
        detectable_full=det_full,
        detectable_errors_only=det_err,
        non_resonant=nonres,
        pathological=path,
        witnesses=witnesses,
    )
