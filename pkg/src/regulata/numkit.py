"""Dense linear-algebra kernel shared by every other module.

Matrix exponentials and their integrals (augmented-block construction, so
sampled-data system matrices come out exact to solver precision rather than
quadrature accuracy), spectra, SVD rank, Kronecker products, a general
linear-matrix-equation solver, and a verified discrete Riccati wrapper.

All functions are pure and operate on plain ``numpy`` arrays.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

__all__ = [
    "NoSolutionError",
    "SynthesisError",
    "LinearMatrixSolution",
    "default_tol",
    "matexp",
    "matexp_with_integral",
    "cross_integral",
    "eigenvalues",
    "rank_svd",
    "kron",
    "solve_linear_matrix_equation",
    "solve_dare",
    "is_schur",
    "is_hurwitz",
    "spectral_radius",
    "spectral_abscissa",
]


class NoSolutionError(ValueError):
    """A linear matrix equation has no solution at the requested tolerance."""


class SynthesisError(RuntimeError):
    """A Riccati-based synthesis step failed or failed verification."""


def default_tol() -> float:
    """Global numeric tolerance, overridable via the REGULATA_TOL env var."""
    raw = os.environ.get("REGULATA_TOL")
    if raw is None:
        return 1e-9
    try:
        tol = float(raw)
    except ValueError as exc:
        raise ValueError(f"REGULATA_TOL is not a number: {raw!r}") from exc
    if not (tol > 0.0 and np.isfinite(tol)):
        raise ValueError(f"REGULATA_TOL must be a positive finite number, got {raw!r}")
    return tol


def _as_square(M, name="M") -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    return M


def matexp(M, t: float = 1.0) -> np.ndarray:
    """e^{M t} by scaling-and-squaring with Pade approximation."""
    M = _as_square(M)
    if not np.isfinite(t):
        raise ValueError(f"t must be finite, got {t}")
    return sla.expm(M * t)


def matexp_with_integral(M, t: float):
    """Return (e^{Mt}, int_0^t e^{Mr} dr).

    Both come out of a single exponential of the augmented block
    [[M, I], [0, 0]] scaled by t, so the integral carries no quadrature
    error.
    """
    M = _as_square(M)
    n = M.shape[0]
    blk = np.zeros((2 * n, 2 * n))
    blk[:n, :n] = M
    blk[:n, n:] = np.eye(n)
    E = sla.expm(blk * t)
    return E[:n, :n], E[:n, n:]


def cross_integral(M1, K, M2, t: float) -> np.ndarray:
    """int_0^t e^{M1 (t-r)} K e^{M2 r} dr via one augmented exponential.

    The integrand's value is read off the upper-right block of
    exp([[M1, K], [0, M2]] * t).
    """
    M1 = _as_square(M1, "M1")
    M2 = _as_square(M2, "M2")
    K = np.atleast_2d(np.asarray(K, dtype=float))
    n1, n2 = M1.shape[0], M2.shape[0]
    if K.shape != (n1, n2):
        raise ValueError(
            f"K must be {n1}x{n2} to conform with M1, M2; got {K.shape}"
        )
    blk = np.zeros((n1 + n2, n1 + n2))
    blk[:n1, :n1] = M1
    blk[:n1, n1:] = K
    blk[n1:, n1:] = M2
    E = sla.expm(blk * t)
    return E[:n1, n1:]


def eigenvalues(M) -> np.ndarray:
    """Full spectrum of a square matrix (complex ndarray)."""
    return np.linalg.eigvals(_as_square(M))


def rank_svd(M, tol: float | None = None) -> int:
    """Numerical rank: number of singular values above tol * sigma_max."""
    if tol is None:
        tol = default_tol()
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    M = np.atleast_2d(np.asarray(M))
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def kron(A, B) -> np.ndarray:
    return np.kron(np.atleast_2d(np.asarray(A)), np.atleast_2d(np.asarray(B)))


@dataclass
class LinearMatrixSolution:
    """Solution record for ``solve_linear_matrix_equation``."""

    X: np.ndarray
    residual: float
    unique: bool


def solve_linear_matrix_equation(coeffs, rhs, tol: float | None = None) -> LinearMatrixSolution:
    """Solve sum_i  L_i @ X @ R_i  =  rhs  for X by Kronecker vectorization.

    Parameters
    ----------
    coeffs : sequence of (L_i, R_i) pairs
        Left/right coefficient matrices. All L_i must share row count p and
        column count r; all R_i must share row count c and column count s,
        where X is r-by-c and rhs is p-by-s.
    rhs : (p, s) array
    tol : float, optional
        Relative tolerance for rank and consistency decisions.

    Returns
    -------
    LinearMatrixSolution
        X minimizing the residual, the achieved residual norm, and a
        uniqueness flag (False when the vectorized operator is
        rank-deficient but the system is still consistent).

    Raises
    ------
    NoSolutionError
        If the system is inconsistent at the tolerance.
    """
    if tol is None:
        tol = default_tol()
    rhs = np.atleast_2d(np.asarray(rhs, dtype=float))
    pairs = [
        (np.atleast_2d(np.asarray(L, dtype=float)), np.atleast_2d(np.asarray(R, dtype=float)))
        for L, R in coeffs
    ]
    if not pairs:
        raise ValueError("coeffs must contain at least one (L, R) pair")
    r = pairs[0][0].shape[1]
    c = pairs[0][1].shape[0]
    p, s = rhs.shape
    for L, R in pairs:
        if L.shape != (p, r) or R.shape != (c, s):
            raise ValueError(
                "coefficient shapes inconsistent: expected "
                f"L {p}x{r} and R {c}x{s}, got L {L.shape}, R {R.shape}"
            )
    # Column-major vec: vec(L X R) = (R^T kron L) vec(X).
    op = np.zeros((p * s, r * c))
    for L, R in pairs:
        op += np.kron(R.T, L)
    b = rhs.flatten(order="F")

    U, sv, Vt = np.linalg.svd(op, full_matrices=False)
    cutoff = tol * (sv[0] if sv.size and sv[0] > 0 else 1.0)
    rank = int(np.count_nonzero(sv > cutoff))
    inv = np.zeros_like(sv)
    inv[:rank] = 1.0 / sv[:rank]
    x = Vt.T @ (inv * (U.T @ b))

    residual = float(np.linalg.norm(op @ x - b))
    scale = 1.0 + float(np.linalg.norm(b))
    if residual > tol * scale:
        raise NoSolutionError(
            f"linear matrix equation inconsistent: residual {residual:.3e} "
            f"exceeds tolerance {tol * scale:.3e} (operator rank {rank} of {op.shape[1]})"
        )
    unique = rank == op.shape[1]
    X = x.reshape((r, c), order="F")
    return LinearMatrixSolution(X=X, residual=residual, unique=unique)


def solve_dare(A, B, Q, R, tol: float = 1e-9) -> np.ndarray:
    """Stabilizing solution of A'XA - X - A'XB (R+B'XB)^{-1} B'XA + Q = 0.

    The result is verified: symmetric, residual below tol, and the closed
    loop A - B(R+B'XB)^{-1}B'XA is Schur. Failures raise SynthesisError.
    """
    A = _as_square(A, "A")
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Q = _as_square(Q, "Q")
    R = _as_square(R, "R")
    if B.shape[0] != A.shape[0]:
        raise ValueError(f"B must have {A.shape[0]} rows, got {B.shape}")
    try:
        X = sla.solve_discrete_are(A, B, Q, R)
    except Exception as exc:  # scipy raises LinAlgError on non-stabilizable pairs
        raise SynthesisError(f"discrete Riccati solve failed: {exc}") from exc
    X = 0.5 * (X + X.T)
    gain = np.linalg.solve(R + B.T @ X @ B, B.T @ X @ A)
    closed = A - B @ gain
    if not is_schur(closed):
        raise SynthesisError("discrete Riccati solution is not stabilizing")
    residual = np.linalg.norm(
        A.T @ X @ A - X - (A.T @ X @ B) @ gain + Q, ord="fro"
    )
    scale = max(1.0, np.linalg.norm(X, ord="fro"))
    if residual > tol * scale:
        raise SynthesisError(
            f"discrete Riccati residual {residual:.3e} exceeds {tol:.1e} (relative)"
        )
    return X


def spectral_radius(M) -> float:
    return float(np.max(np.abs(eigenvalues(M)))) if np.asarray(M).size else 0.0


def spectral_abscissa(M) -> float:
    return float(np.max(np.real(eigenvalues(M)))) if np.asarray(M).size else -np.inf


def is_schur(M, tol: float | None = None) -> bool:
    """True iff every eigenvalue has modulus < 1 - tol."""
    if tol is None:
        tol = default_tol()
    M = np.asarray(M)
    if M.size == 0:
        return True
    return spectral_radius(M) < 1.0 - tol


def is_hurwitz(M, tol: float | None = None) -> bool:
    """True iff every eigenvalue has real part < -tol."""
    if tol is None:
        tol = default_tol()
    M = np.asarray(M)
    if M.size == 0:
        return True
    return spectral_abscissa(M) < -tol
