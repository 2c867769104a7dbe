"""Frequency-stability certificates for structure-preserving power networks.

Build a :class:`NetworkModel`, solve its synchronous solution, check the
decentralized stability certificates (small incremental gain, secant,
Popov-like positive realness), and validate them by simulating the
nonlinear dynamics while sampling the storage functions.
"""

from .certificates import (CascadeBlock, CascadeDecomposition,
                           CertificateReport, block_l2_gain,
                           cascade_decompose, lemma3_psd_check,
                           max_droop_search, popov_check, secant_check,
                           secant_factor, small_gain_check)
from .dynamics import (DeadbandMap, FirstOrder, LinearMap, LinearSS,
                       SecondOrder, StaticMonotone, droop_lag2)
from .equilibrium import (SynchronousSolution, equilibrium_residual,
                          security_check, sigma_with_overrides,
                          solve_equilibrium_dae, solve_power_flow,
                          sync_frequency_linear, tree_feasibility)
from .lti import (PositiveRealVerdict, RationalTransfer, StateSpace,
                  bus_transfer, is_positive_real, pbh_controllable,
                  pbh_observable, popov_realization, popov_transform,
                  screen_bus)
from .network import (BusParams, Line, NetworkModel, active_power,
                      coupling_bound_sigma, edge_weights, incidence_matrix,
                      laplacian)
from .simulate import (SimState, StorageEval, Trajectory, equilibrium_state,
                       passivity_identity_check, perturbed_state, popov_Z,
                       simulate_dae, simulate_ode, storage_S,
                       write_trajectory_csv)

__version__ = "0.1.0"

__all__ = [
    "BusParams", "CascadeBlock", "CascadeDecomposition", "CertificateReport",
    "DeadbandMap", "FirstOrder", "Line", "LinearMap", "LinearSS",
    "NetworkModel", "PositiveRealVerdict", "RationalTransfer", "SecondOrder",
    "SimState", "StateSpace", "StaticMonotone", "StorageEval",
    "SynchronousSolution", "Trajectory", "active_power", "block_l2_gain",
    "bus_transfer", "cascade_decompose", "coupling_bound_sigma",
    "droop_lag2", "edge_weights", "equilibrium_residual",
    "equilibrium_state", "incidence_matrix", "is_positive_real", "laplacian",
    "lemma3_psd_check", "max_droop_search", "passivity_identity_check",
    "pbh_controllable", "pbh_observable", "perturbed_state", "popov_Z",
    "popov_check", "popov_realization", "popov_transform", "screen_bus",
    "secant_check", "secant_factor", "security_check",
    "sigma_with_overrides", "simulate_dae", "simulate_ode",
    "small_gain_check", "solve_equilibrium_dae", "solve_power_flow",
    "storage_S", "sync_frequency_linear", "tree_feasibility",
    "write_trajectory_csv", "__version__",
]
