"""regulata: output regulation of linear plants under sampled measurements.

Design toolkit and exact hybrid simulator for continuous-time linear plants
driven by a neutrally stable exosystem, where measurements arrive only at
sampling instants. Three regulator syntheses are provided — discretizing a
continuous design by emulation, a generalized-hold regulator that achieves
exact asymptotic regulation, and its multi-rate variant updating the input
N times per sample — together with assumption checking, steady-state
(regulator-equation) solvers, closed-loop certification, and a CLI.
"""

from .assumptions import (
    AssumptionReport,
    CompanionForm,
    check_assumptions,
    check_non_resonance,
    check_pathological,
    companion_from_minimal_polynomial,
    pbh_detectable,
    pbh_stabilizable,
)
from .design_emulation import (
    EmulationRegulator,
    build_continuous_regulator,
    build_emulation_regulator,
    emulate,
    find_kappa_gamma,
    tau_max,
)
from .design_hold import (
    ClosedLoopCertificate,
    DiscretizedPlant,
    HoldRegulator,
    assemble_augmented,
    assemble_controller,
    build_hold,
    build_hold_regulator,
    build_washout,
    discretize_extended,
    synthesize_stabilizer,
)
from .design_multirate import (
    MultiRateRegulator,
    RateEstimate,
    build_multirate,
    build_multirate_regulator,
    estimate_N_star,
)
from .hybridsim import (
    HybridTrajectory,
    SimulationReport,
    compute_metrics,
    simulate,
    write_csv,
)
from .model import (
    PlantModel,
    SamplingConfig,
    Scenario,
    ScenarioError,
    build_constant_load,
    build_pendulum,
    load_scenario,
    parse_scenario,
    serialize_scenario,
)
from .numkit import NoSolutionError, SynthesisError, default_tol
from .regeq import (
    RegulatorSolution,
    build_pi_z,
    solve_continuous_regulator_equations,
    solve_pi_zeta,
    solve_washout_steady_state,
    verify_discrete_regulator_equations,
)

__version__ = "0.1.0"

__all__ = [
    "AssumptionReport", "CompanionForm", "check_assumptions",
    "check_non_resonance", "check_pathological",
    "companion_from_minimal_polynomial", "pbh_detectable", "pbh_stabilizable",
    "EmulationRegulator", "build_continuous_regulator",
    "build_emulation_regulator", "emulate", "find_kappa_gamma", "tau_max",
    "ClosedLoopCertificate", "DiscretizedPlant", "HoldRegulator",
    "assemble_augmented", "assemble_controller", "build_hold",
    "build_hold_regulator", "build_washout", "discretize_extended",
    "synthesize_stabilizer",
    "MultiRateRegulator", "RateEstimate", "build_multirate",
    "build_multirate_regulator", "estimate_N_star",
    "HybridTrajectory", "SimulationReport", "compute_metrics", "simulate",
    "write_csv",
    "PlantModel", "SamplingConfig", "Scenario", "ScenarioError",
    "build_constant_load", "build_pendulum", "load_scenario", "parse_scenario", "serialize_scenario",
    "NoSolutionError", "SynthesisError", "default_tol",
    "RegulatorSolution", "build_pi_z", "solve_continuous_regulator_equations",
    "solve_pi_zeta", "solve_washout_steady_state",
    "verify_discrete_regulator_equations",
    "__version__",
]
