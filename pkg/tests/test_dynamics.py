import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phgame import _kernels
from phgame.couplings import CouplingSet, CouplingSpec, SpringModel
from phgame.dynamics import (
    CONVERGED,
    DOMAIN_VIOLATION,
    T_MAX_REACHED,
    IntegratorSettings,
    NetworkState,
    closed_loop_rhs,
    collective_matrix,
    control_law,
    control_law_distributed,
    detect_equilibrium,
    hamiltonian,
    hamiltonian_gradient,
    hamiltonian_rate,
    open_loop_rhs,
    simulate,
    simulate_port,
    state_map,
)
from phgame.errors import InfeasibleInitialCondition
from phgame.graph import ConstraintGraph
from phgame.sampling import random_feasible_positions

from conftest import random_connected_graph, random_couplings


def pair(k=1.0, r=1.0, d=2.0):
    graph = ConstraintGraph.from_one_based(2, [(1, 2)], 1)
    cs = CouplingSet.uniform(CouplingSpec.scalar(SpringModel.constant(k, r), d, 1), 1)
    return graph, cs


def random_state(graph, cs, rng):
    q = random_feasible_positions(graph, cs, rng, margin=0.02)
    return NetworkState.from_positions(graph, q, rng.normal(size=q.shape))


def test_control_law_two_agents_by_hand():
    graph, cs = pair(k=3.0, r=0.0, d=1.0)
    state = NetworkState.from_positions(graph, [0.0, 2.0])
    np.testing.assert_allclose(control_law(graph, cs, state), [6.0, -6.0])


def test_state_map_and_hamiltonian_by_hand():
    graph, cs = pair(k=2.0, r=1.0)
    state = NetworkState.from_positions(graph, [0.5, 2.0], [1.0, -3.0])
    np.testing.assert_array_equal(state.z, [1.5])
    np.testing.assert_array_equal(state_map(graph) @ state.x, state.x_pH)
    # 1/2 (1 + 9) + 1/2 * 2 * 0.5^2
    assert hamiltonian(graph, cs, state) == pytest.approx(5.25, rel=1e-15)


def test_control_law_dense_and_distributed_agree(sec5_graph, sec5_couplings, rng):
    for _ in range(20):
        state = random_state(sec5_graph, sec5_couplings, rng)
        np.testing.assert_allclose(control_law_distributed(sec5_graph, sec5_couplings, state),
                                   control_law(sec5_graph, sec5_couplings, state),
                                   rtol=0, atol=1e-12)


def test_closed_loop_is_open_loop_under_control_law(sec5_graph, sec5_couplings, rng):
    state = random_state(sec5_graph, sec5_couplings, rng)
    u = control_law(sec5_graph, sec5_couplings, state)
    zdot_o, pdot_o = open_loop_rhs(sec5_graph, sec5_couplings, state, u)
    zdot_c, pdot_c = closed_loop_rhs(sec5_graph, sec5_couplings, state)
    np.testing.assert_allclose(zdot_c, zdot_o, atol=1e-14)
    np.testing.assert_allclose(pdot_c, pdot_o, atol=1e-12)


def test_closed_loop_equals_minus_collective_matrix_times_gradient(sec5_graph, sec5_couplings, rng):
    K = collective_matrix(sec5_graph, sec5_couplings)
    eig = np.linalg.eigvalsh(0.5 * (K + K.T))
    assert eig.min() >= -1e-12
    for _ in range(5):
        state = random_state(sec5_graph, sec5_couplings, rng)
        grad = np.concatenate(hamiltonian_gradient(sec5_graph, sec5_couplings, state))
        np.testing.assert_allclose(np.concatenate(closed_loop_rhs(sec5_graph, sec5_couplings, state)),
                                   -K @ grad, atol=1e-12)


def test_hamiltonian_rate_matches_chain_rule(sec5_graph, sec5_couplings, rng):
    for _ in range(20):
        state = random_state(sec5_graph, sec5_couplings, rng)
        grad = np.concatenate(hamiltonian_gradient(sec5_graph, sec5_couplings, state))
        rhs = np.concatenate(closed_loop_rhs(sec5_graph, sec5_couplings, state))
        rate = hamiltonian_rate(sec5_graph, sec5_couplings, state)
        assert rate == pytest.approx(float(grad @ rhs), rel=1e-10, abs=1e-12)
        assert rate <= 0.0


def test_open_loop_rejects_wrong_input_shape(sec5_graph, sec5_couplings, rng):
    state = random_state(sec5_graph, sec5_couplings, rng)
    with pytest.raises(ValueError):
        open_loop_rhs(sec5_graph, sec5_couplings, state, np.zeros(3))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_compiled_kernel_matches_numpy_rhs(seed):
    rng = np.random.default_rng(seed)
    graph = random_connected_graph(rng, int(rng.integers(3, 8)), int(rng.integers(0, 4)))
    cs = random_couplings(rng, graph.num_edges)
    state = random_state(graph, cs, rng)
    tails = np.array([a for a, _ in graph.edges], dtype=np.int64)
    heads = np.array([b for _, b in graph.edges], dtype=np.int64)
    out = np.empty_like(state.q)
    status = _kernels.accel(state.q, state.p, tails, heads, graph.dimension, *cs.kernel_args(), out)
    assert status == _kernels.OK
    _, pdot = closed_loop_rhs(graph, cs, state)
    np.testing.assert_allclose(out, pdot, rtol=0, atol=1e-12 * max(1.0, np.abs(pdot).max()))
    status, H = _kernels.energy(state.q, state.p, tails, heads, graph.dimension, *cs.kernel_args()[:-1])
    assert H == pytest.approx(hamiltonian(graph, cs, state), rel=1e-13)


def overdamped_pair_oracle(t, e0=0.5):
    # relative error e = |z| - r obeys e'' + 2d e' + 2k e = 0; k=1, d=2
    l1, l2 = -2.0 + math.sqrt(2.0), -2.0 - math.sqrt(2.0)
    a = e0 * l2 / (l2 - l1)
    b = e0 - a
    return a * np.exp(l1 * t) + b * np.exp(l2 * t)


def test_overdamped_pair_matches_closed_form():
    graph, cs = pair()
    traj = simulate(graph, cs, [0.0, 1.5], settings=IntegratorSettings(t_max=40.0))
    assert traj.termination == CONVERGED
    e = traj.distances[:, 0] - 1.0
    np.testing.assert_allclose(e, overdamped_pair_oracle(traj.t), atol=1e-11)
    assert np.all(np.diff(e) <= 0.0)
    assert np.all(e >= 0.0)


def test_overdamped_pair_step_refinement():
    graph, cs = pair()
    coarse = simulate(graph, cs, [0.0, 1.5], settings=IntegratorSettings(dt=1e-2, t_max=5.0, output_interval=0.1))
    fine = simulate(graph, cs, [0.0, 1.5], settings=IntegratorSettings(dt=1e-3, t_max=5.0, output_interval=0.1))
    np.testing.assert_allclose(coarse.q, fine.q, atol=1e-8)


def test_free_mass_under_constant_input_is_a_parabola():
    graph, cs = pair(k=1.0, r=0.5)
    q0, p0, u = np.array([0.0, 1.0]), np.array([0.3, -0.2]), np.array([0.5, -0.25])
    rec = simulate_port(graph, cs, q0, p0, lambda t: u, t_final=2.0, dt=1e-2)
    t = rec.t[:, None]
    np.testing.assert_allclose(rec.q, q0 + p0 * t + 0.5 * u * t * t, atol=1e-12)
    np.testing.assert_allclose(rec.p, p0 + u * t, atol=1e-12)
    # supplied energy equals the change of kinetic energy exactly
    np.testing.assert_allclose(rec.margin("kinetic"), 0.0, atol=1e-12)


def test_rest_start_converges_at_first_sample(sec5_couplings):
    graph = ConstraintGraph.from_one_based(3, [(1, 2), (2, 3)], 2)
    cs = CouplingSet.uniform(sec5_couplings[0], 2)
    traj = simulate(graph, cs, [0.0, 0.0, 0.6, 0.0, 1.2, 0.0])
    assert traj.termination == CONVERGED
    assert len(traj) == 2
    np.testing.assert_array_equal(traj.t, [0.0, 0.01])
    np.testing.assert_array_equal(traj.q[1], traj.q[0])


def test_t_max_reached_keeps_every_sample():
    graph, cs = pair(d=0.05)
    traj = simulate(graph, cs, [0.0, 1.5], settings=IntegratorSettings(t_max=1.0, output_interval=0.1))
    assert traj.termination == T_MAX_REACHED
    np.testing.assert_allclose(traj.t, np.arange(11) * 0.1, atol=1e-12)


def test_unresolvable_domain_violation_aborts_with_partial_trajectory(barrier_spring):
    graph = ConstraintGraph.from_one_based(2, [(1, 2)], 1)
    cs = CouplingSet.uniform(CouplingSpec.scalar(barrier_spring, 0.1, 1), 1)
    settings = IntegratorSettings(dt=0.05, dt_min=0.05, output_interval=0.05)
    traj = simulate(graph, cs, [0.0, 0.5], [-5.0, 5.0], settings)
    assert traj.termination == DOMAIN_VIOLATION
    assert "critical distance" in traj.message
    assert len(traj) >= 1 and np.all(traj.distances < 1.0)


def test_energy_guard_resolves_a_coarse_step_into_the_barrier(barrier_spring):
    graph = ConstraintGraph.from_one_based(2, [(1, 2)], 1)
    cs = CouplingSet.uniform(CouplingSpec.scalar(barrier_spring, 0.1, 1), 1)
    settings = IntegratorSettings(dt=0.05, output_interval=0.05, t_max=2.0, energy_guard=True)
    traj = simulate(graph, cs, [0.0, 0.5], [-1.0, 1.0], settings)
    assert traj.termination == T_MAX_REACHED
    assert traj.halvings > 0
    assert traj.max_step_increase <= settings.eps_int
    assert np.all(traj.distances < 1.0)


def test_infeasible_start_is_rejected(barrier_spring):
    graph = ConstraintGraph.from_one_based(2, [(1, 2)], 2)
    cs = CouplingSet.uniform(CouplingSpec.scalar(barrier_spring, 0.1, 2), 1)
    with pytest.raises(InfeasibleInitialCondition) as info:
        simulate(graph, cs, [0.0, 0.0, 1.5, 0.0])
    assert info.value.field == "edges[0]"


@pytest.mark.parametrize("kwargs", [
    dict(dt=0.0), dict(t_max=-1.0), dict(dt=1e-3, output_interval=1.5e-3),
    dict(dt=1e-3, dt_min=1e-2), dict(tol_p=float("nan")),
])
def test_invalid_integrator_settings(kwargs):
    with pytest.raises(ValueError):
        IntegratorSettings(**kwargs)


def test_energy_guard_does_not_change_a_dissipative_run():
    rng = np.random.default_rng(4)
    graph = random_connected_graph(rng, 4, 2)
    cs = random_couplings(rng, graph.num_edges)
    q0 = random_feasible_positions(graph, cs, rng, margin=0.05)
    plain = simulate(graph, cs, q0, settings=IntegratorSettings(t_max=5.0))
    guarded = simulate(graph, cs, q0, settings=IntegratorSettings(t_max=5.0, energy_guard=True))
    assert guarded.halvings == 0
    np.testing.assert_array_equal(plain.q, guarded.q)


def test_detect_equilibrium_reports_residuals():
    graph, cs = pair(k=2.0, r=1.0)
    at_rest = NetworkState.from_positions(graph, [0.0, 1.0])
    assert detect_equilibrium(graph, cs, at_rest).converged
    stretched = NetworkState.from_positions(graph, [0.0, 1.25], [1e-7, 0.0])
    check = detect_equilibrium(graph, cs, stretched)
    assert not check.converged
    assert check.force_residual == pytest.approx(0.5)
    assert check.momentum_residual == pytest.approx(1e-7)


def test_trajectory_diagnostics(sec5_graph, sec5_couplings):
    rng = np.random.default_rng(0)
    q0 = random_feasible_positions(sec5_graph, sec5_couplings, rng, margin=0.05)
    traj = simulate(sec5_graph, sec5_couplings, q0, settings=IntegratorSettings(t_max=2.0, output_interval=0.1))
    assert traj.constraint_flags(sec5_couplings).all()
    assert traj.bound(sec5_graph) >= np.linalg.norm(sec5_graph.incidence.expanded @ q0)
    np.testing.assert_allclose(traj.u_norm, np.linalg.norm(traj.u, axis=1))
    state = traj.state(5, sec5_graph)
    np.testing.assert_allclose(traj.u[5], control_law(sec5_graph, sec5_couplings, state), atol=1e-12)
