"""Networks of double integrators coupled by virtual spring-dampers.

The closed-loop port-Hamiltonian dynamics are simulated in :mod:`.dynamics`;
:mod:`.game` certifies the reached configurations as Nash equilibria of the
exact potential game whose potential is the network Hamiltonian.
"""
from .couplings import CouplingSet, CouplingSpec, SpringModel, edge_force, spring_gradient, spring_potential
from .dynamics import (
    IntegratorSettings,
    NetworkState,
    Trajectory,
    closed_loop_rhs,
    control_law,
    detect_equilibrium,
    hamiltonian,
    hamiltonian_gradient,
    open_loop_rhs,
    simulate,
)
from .errors import DomainViolation, GraphError, ScenarioError, SingularConfiguration
from .game import (
    DecisionBox,
    EquilibriumReport,
    certify_equilibrium,
    check_exact_potential,
    local_objective,
    potential_function,
    pseudo_gradient,
)
from .graph import ConstraintGraph, build_incidence, is_connected_acyclic, relative_distances
from .scenario import Scenario, load_scenario, serialize_scenario

__version__ = "0.1.0"
