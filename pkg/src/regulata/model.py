"""Plant/exosystem data model, scenario files, and the bundled demo plant.

A scenario bundles a plant (with its error/extra-measurement output
partition), a sampling configuration, and simulation initial data. Scenario
files are plain JSON; see ``load_scenario`` for the schema.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import numkit

__all__ = [
    "ScenarioError",
    "PlantModel",
    "SamplingConfig",
    "Scenario",
    "load_scenario",
    "parse_scenario",
    "serialize_scenario",
    "exosystem_bound",
    "build_pendulum",
]

METHODS = ("emulation", "hold", "multirate")


class ScenarioError(ValueError):
    """Scenario file malformed or violating a model invariant."""


def _mat(value, rows, cols, name):
    try:
        M = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"field {name!r} is not a numeric matrix: {exc}") from exc
    if M.ndim == 1 and cols == 1:
        M = M.reshape(-1, 1)
    if M.ndim == 0 and rows == 1 and cols == 1:
        M = M.reshape(1, 1)
    if M.size == 0 and rows * cols == 0:
        M = M.reshape(rows, cols)
    if M.shape != (rows, cols):
        raise ScenarioError(
            f"dimension error: field {name!r} must be {rows}x{cols}, got {M.shape}"
        )
    if not np.all(np.isfinite(M)):
        raise ScenarioError(f"field {name!r} contains non-finite entries")
    return M


@dataclass
class PlantModel:
    """Linear plant  dx = A x + B u + P w  driven by the exosystem  dw = S w.

    Measurements split into regulation errors  e = C_e x + Q_e w  (to be
    driven to zero) and extra measurements  y_m = C_m x + Q_m w  (no
    regulation requirement).
    """

    A: np.ndarray
    B: np.ndarray
    P: np.ndarray
    S: np.ndarray
    C_e: np.ndarray
    Q_e: np.ndarray
    C_m: np.ndarray
    Q_m: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = self.A.shape[0]
        self.B = _mat(self.B, n, np.atleast_2d(np.asarray(self.B)).reshape(n, -1).shape[1], "B")
        self.S = np.atleast_2d(np.asarray(self.S, dtype=float))
        d = self.S.shape[0]
        self.P = _mat(self.P, n, d, "P")
        self.C_e = np.atleast_2d(np.asarray(self.C_e, dtype=float))
        self.C_m = np.atleast_2d(np.asarray(self.C_m, dtype=float))
        self.Q_e = _mat(self.Q_e, self.C_e.shape[0], d, "Qe")
        self.Q_m = _mat(self.Q_m, self.C_m.shape[0], d, "Qm")
        self.validate_dimensions()

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def d(self) -> int:
        return self.S.shape[0]

    @property
    def q_e(self) -> int:
        return self.C_e.shape[0]

    @property
    def q_m(self) -> int:
        return self.C_m.shape[0]

    @property
    def q(self) -> int:
        return self.q_e + self.q_m

    @property
    def C(self) -> np.ndarray:
        """Stacked measurement matrix col(C_e, C_m)."""
        return np.vstack([self.C_e, self.C_m])

    @property
    def Q(self) -> np.ndarray:
        return np.vstack([self.Q_e, self.Q_m])

    def validate_dimensions(self):
        if self.A.shape != (self.n, self.n):
            raise ScenarioError("dimension error: A must be square")
        if self.S.shape != (self.d, self.d):
            raise ScenarioError("dimension error: S must be square")
        if self.C_e.shape[1] != self.n:
            raise ScenarioError(f"dimension error: Ce must have {self.n} columns")
        if self.C_m.shape[1] != self.n:
            raise ScenarioError(f"dimension error: Cm must have {self.n} columns")

    def validate_exosystem(self, tol: float | None = None):
        """Check S neutrally stable: spectrum on the imaginary axis, semisimple.

        Semisimplicity of an eigenvalue lam is tested by comparing the ranks
        of (S - lam I) and its square; a rank drop under squaring exposes a
        nontrivial Jordan block.
        """
        if tol is None:
            tol = numkit.default_tol()
        eigs = numkit.eigenvalues(self.S)
        scale = max(1.0, float(np.max(np.abs(eigs))) if eigs.size else 1.0)
        for lam in eigs:
            if abs(lam.real) > tol * scale:
                raise ScenarioError(
                    f"invariant violated: S not neutrally stable, eigenvalue {lam:.6g} "
                    "has nonzero real part"
                )
        rank_tol = max(tol, 1e-9)
        for lam in _cluster(eigs, 1e-7 * scale):
            M = self.S - lam * np.eye(self.d)
            if numkit.rank_svd(M, rank_tol) != numkit.rank_svd(M @ M, rank_tol):
                raise ScenarioError(
                    f"invariant violated: eigenvalue {lam:.6g} of S is not semisimple"
                )

    def perturbed(self, rel: float, rng: np.random.Generator) -> "PlantModel":
        """Copy with A, B, C_e, C_m, P, Q_e, Q_m entries perturbed by +-rel (S fixed)."""

        def jiggle(M):
            return M * (1.0 + rel * rng.uniform(-1.0, 1.0, size=M.shape))

        return PlantModel(
            A=jiggle(self.A), B=jiggle(self.B), P=jiggle(self.P), S=self.S.copy(),
            C_e=jiggle(self.C_e), Q_e=jiggle(self.Q_e),
            C_m=jiggle(self.C_m), Q_m=jiggle(self.Q_m),
        )


def _cluster(eigs, tol):
    """Representative values of eigenvalues grouped within tol."""
    reps = []
    for lam in eigs:
        if not any(abs(lam - r) <= tol for r in reps):
            reps.append(lam)
    return reps


@dataclass
class SamplingConfig:
    """Measurement period T and control-rate multiplier N (control period T/N)."""

    T: float
    N: int = 1

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise ScenarioError(f"invariant violated: sampling period T must be > 0, got {self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise ScenarioError(f"invariant violated: rate multiplier N must be an integer >= 1, got {self.N}")
        self.N = int(self.N)


@dataclass
class Scenario:
    name: str
    plant: PlantModel
    sampling: SamplingConfig
    method: str
    horizon: float
    x0: np.ndarray
    w0: np.ndarray
    w_bound: float | None = None
    stabilizer_weights: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ScenarioError(
                f"invariant violated: method must be one of {METHODS}, got {self.method!r}"
            )
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ScenarioError(f"invariant violated: horizon must be > 0, got {self.horizon}")
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        self.w0 = np.asarray(self.w0, dtype=float).reshape(-1)
        if self.x0.shape[0] != self.plant.n:
            raise ScenarioError(
                f"dimension error: x0 must have length {self.plant.n}, got {self.x0.shape[0]}"
            )
        if self.w0.shape[0] != self.plant.d:
            raise ScenarioError(
                f"dimension error: w0 must have length {self.plant.d}, got {self.w0.shape[0]}"
            )
        if self.w_bound is None:
            self.w_bound = exosystem_bound(self.plant.S, self.w0)
        elif self.w_bound < np.linalg.norm(self.w0) - 1e-12:
            raise ScenarioError(
                "invariant violated: exosystem bound |W| must be >= ||w0||"
            )

    def with_method(self, method: str, N: int | None = None) -> "Scenario":
        sampling = self.sampling if N is None else replace(self.sampling, N=N)
        return replace(self, method=method, sampling=sampling)


def exosystem_bound(S, w0, samples: int = 512) -> float:
    """Orbit maximum of ||e^{St} w0|| over one fundamental period.

    Neutral stability makes orbits bounded; the slowest nonzero frequency
    fixes the period. A frequency-free exosystem (S with zero spectrum)
    has constant orbits, so the bound reduces to ||w0||.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    w0 = np.asarray(w0, dtype=float).reshape(-1)
    freqs = np.abs(np.imag(numkit.eigenvalues(S)))
    freqs = freqs[freqs > 1e-12]
    if freqs.size == 0 or np.linalg.norm(w0) == 0.0:
        return float(np.linalg.norm(w0))
    period = 2.0 * math.pi / float(np.min(freqs))
    step = numkit.matexp(S, period / samples)
    w = w0.copy()
    best = np.linalg.norm(w)
    for _ in range(samples):
        w = step @ w
        best = max(best, np.linalg.norm(w))
    return float(best)


def _expect(obj, key, path):
    if key not in obj:
        raise ScenarioError(f"missing field {key!r} in {path}")
    return obj[key]


def parse_scenario(text: str, origin: str = "<string>") -> Scenario:
    """Parse and validate a scenario from JSON text."""

    def reject_constant(token):
        raise ScenarioError(f"non-finite number {token!r} not accepted in scenario files")

    try:
        raw = json.loads(text, parse_constant=reject_constant)
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"parse error in {origin}: line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(raw, dict):
        raise ScenarioError(f"parse error in {origin}: top level must be a JSON object")

    dims = _expect(raw, "dims", origin)
    for key in ("n", "m", "d", "qe", "qm"):
        if key not in dims:
            raise ScenarioError(f"missing field dims.{key!r} in {origin}")
    n, m, d = int(dims["n"]), int(dims["m"]), int(dims["d"])
    qe, qm = int(dims["qe"]), int(dims["qm"])

    plant = PlantModel(
        A=_mat(_expect(raw, "A", origin), n, n, "A"),
        B=_mat(_expect(raw, "B", origin), n, m, "B"),
        P=_mat(_expect(raw, "P", origin), n, d, "P"),
        S=_mat(_expect(raw, "S", origin), d, d, "S"),
        C_e=_mat(_expect(raw, "Ce", origin), qe, n, "Ce"),
        Q_e=_mat(_expect(raw, "Qe", origin), qe, d, "Qe"),
        C_m=_mat(_expect(raw, "Cm", origin), qm, n, "Cm"),
        Q_m=_mat(_expect(raw, "Qm", origin), qm, d, "Qm"),
    )
    plant.validate_exosystem()

    samp = _expect(raw, "sampling", origin)
    sampling = SamplingConfig(T=float(_expect(samp, "T", "sampling")), N=int(samp.get("N", 1)))

    scenario = Scenario(
        name=str(_expect(raw, "name", origin)),
        plant=plant,
        sampling=sampling,
        method=str(_expect(raw, "method", origin)),
        horizon=float(_expect(raw, "horizon", origin)),
        x0=np.asarray(_expect(raw, "x0", origin), dtype=float),
        w0=np.asarray(_expect(raw, "w0", origin), dtype=float),
        w_bound=float(raw["w_bound"]) if "w_bound" in raw else None,
        stabilizer_weights=dict(raw.get("stabilizer_weights", {})),
    )
    return scenario


def load_scenario(path) -> Scenario:
    """Load a scenario JSON file; all invariants are enforced on load."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ScenarioError(f"file not found: {path}") from None
    return parse_scenario(text, origin=str(path))


def serialize_scenario(scenario: Scenario) -> str:
    """Render a Scenario back to JSON text (round-trips exactly)."""
    plant = scenario.plant
    doc = {
        "name": scenario.name,
        "dims": {"n": plant.n, "m": plant.m, "d": plant.d, "qe": plant.q_e, "qm": plant.q_m},
        "A": plant.A.tolist(),
        "B": plant.B.tolist(),
        "P": plant.P.tolist(),
        "S": plant.S.tolist(),
        "Ce": plant.C_e.tolist(),
        "Qe": plant.Q_e.tolist(),
        "Cm": plant.C_m.tolist(),
        "Qm": plant.Q_m.tolist(),
        "sampling": {"T": scenario.sampling.T, "N": scenario.sampling.N},
        "method": scenario.method,
        "horizon": scenario.horizon,
        "x0": scenario.x0.tolist(),
        "w0": scenario.w0.tolist(),
        "w_bound": scenario.w_bound,
    }
    if scenario.stabilizer_weights:
        doc["stabilizer_weights"] = scenario.stabilizer_weights
    return json.dumps(doc, indent=2)


def build_pendulum(P1=(1.0, 0.0), P2=(0.0, 1.0), T: float = 0.1, method: str = "hold",
                   horizon: float = 20.0, N: int = 1) -> Scenario:
    """Inverted pendulum on a cart, linearized about the upright position.

    State x = col(q + l*theta, dq + l*dtheta, theta, dtheta), where q is the
    cart position and theta the pendulum angle. The regulated output is the
    angle; the extra measurement is q + l*theta. Perturbations enter the
    cart and angle dynamics through the rows P1 and P2 (defaults pick out
    the two exosystem coordinates), and the exosystem is a harmonic
    oscillator at Omega = 5 rad/s.

    Initial data defaults to x0 = 0, w0 = (1, 0) — conventions of this
    package. The bundled stabilizer weights are namespaced per design
    family. Both select loop-transfer-recovery observer shaping
    ("ltr": 1e3): identity-weight LQG stabilizes this plant too, but its
    observer is too sluggish to show convergence within a 20 s window. The
    emulation entry additionally de-weights the internal-model correction
    channels and puts an expensive penalty on the physical input — the
    continuous loop must tolerate the sample-and-hold phase lag near the
    stick-balancing frequency, which identity weights do not.
    """
    m0, m, mu_f, g, ell = 0.5, 2.0, 0.2, 9.8, 0.3
    omega = 5.0
    P1 = np.asarray(P1, dtype=float).reshape(1, 2)
    P2 = np.asarray(P2, dtype=float).reshape(1, 2)
    A = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, g, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, mu_f / (m0 * ell), (m0 + m) * g / (m0 * ell), -mu_f / m0],
    ])
    B = np.array([[0.0], [0.0], [0.0], [-1.0 / (m0 * ell)]])
    P = np.vstack([
        np.zeros((1, 2)),
        (P1 + P2) / m0,
        np.zeros((1, 2)),
        P2 / (m0 * ell),
    ])
    S = np.array([[0.0, 1.0], [-omega ** 2, 0.0]])
    plant = PlantModel(
        A=A, B=B, P=P, S=S,
        C_e=np.array([[0.0, 0.0, 1.0, 0.0]]), Q_e=np.zeros((1, 2)),
        C_m=np.array([[1.0, 0.0, 0.0, 0.0]]), Q_m=np.zeros((1, 2)),
    )
    plant.validate_exosystem()
    return Scenario(
        name="pendulum",
        plant=plant,
        sampling=SamplingConfig(T=T, N=N),
        method=method,
        horizon=horizon,
        x0=np.zeros(4),
        w0=np.array([1.0, 0.0]),
        stabilizer_weights={
            "hold": {"ltr": 1000.0},
            "emulation": {"R": [100.0, 3e-4, 3e-4], "Ro": 3e-3, "ltr": 1000.0},
        },
    )


def build_constant_load(T: float = 0.1, method: str = "multirate", N: int = 2,
                        horizon: float = 20.0) -> Scenario:
    """Scalar plant x' = -x + u + w under a constant load (S = 0), e = x.

    The exosystem is the zero matrix, so the steady input is constant and a
    piecewise-constant hold reproduces it exactly — the corner case where
    the multi-rate regulator achieves exact (not just practical) regulation
    at any rate.

    There is no extra measurement channel: a washout filter would notch
    constants out of y_m, and with S = 0 every steady signal is constant.
    """
    plant = PlantModel(
        A=np.array([[-1.0]]), B=np.array([[1.0]]), P=np.array([[1.0]]),
        S=np.zeros((1, 1)),
        C_e=np.array([[1.0]]), Q_e=np.zeros((1, 1)),
        C_m=np.zeros((0, 1)), Q_m=np.zeros((0, 1)),
    )
    return Scenario(
        name="constant-load",
        plant=plant,
        sampling=SamplingConfig(T=T, N=N),
        method=method,
        horizon=horizon,
        x0=np.array([0.5]),
        w0=np.array([1.0]),
        stabilizer_weights={"hold": {"ltr": 1000.0}},
    )
