import numpy as np
import pytest

from phgame.checks import (
    central_difference,
    gradient_error,
    hamiltonian_gradient_suite,
    passivity_suite,
    pseudo_gradient_suite,
    random_input_signal,
    run_checks,
)
from phgame.dynamics import simulate_port
from phgame.sampling import feasible_chain, random_feasible_positions
from phgame.scenario import load_scenario

from conftest import random_connected_graph, random_couplings


def test_central_difference_batched_matches_loop():
    f_scalar = lambda v: float(np.sin(v[0]) * v[1] ** 3 + v[2])
    f_batch = lambda V: np.sin(V[:, 0]) * V[:, 1] ** 3 + V[:, 2]
    x = np.array([0.3, -1.2, 2.0])
    g = central_difference(f_scalar, x)
    np.testing.assert_array_equal(central_difference(f_batch, x, batched=True), g)
    np.testing.assert_allclose(g, [np.cos(0.3) * -1.728, 3 * np.sin(0.3) * 1.44, 1.0], rtol=1e-9)


def test_gradient_error_is_relative_above_one_and_absolute_below():
    assert gradient_error(np.array([101.0]), np.array([100.0])) == pytest.approx(0.01)
    assert gradient_error(np.array([1e-7]), np.array([0.0])) == pytest.approx(1e-7)


def test_input_signal_is_bounded_and_deterministic():
    u1 = random_input_signal(np.random.default_rng(5), 6, amplitude=0.05)
    u2 = random_input_signal(np.random.default_rng(5), 6, amplitude=0.05)
    ts = np.linspace(0.0, 20.0, 401)
    values = np.array([u1(t) for t in ts])
    assert np.abs(values).max() <= 0.05 + 1e-15
    np.testing.assert_array_equal(values, np.array([u2(t) for t in ts]))


def test_feasible_chain_stays_feasible_and_moves(sec5_graph, sec5_couplings):
    chain = feasible_chain(sec5_graph, sec5_couplings, np.random.default_rng(0), margin=0.002)
    previous = None
    for _ in range(200):
        q = next(chain)
        lengths = sec5_couplings.lengths(sec5_graph.incidence.expanded @ q)
        assert np.all(lengths <= 0.998) and np.all(lengths >= 1e-3)
        if previous is not None:
            assert not np.array_equal(q, previous)
        previous = q.copy()


def test_gradient_suites_on_mixed_random_network():
    rng = np.random.default_rng(21)
    graph = random_connected_graph(rng, 6, 3)
    cs = random_couplings(rng, graph.num_edges)
    for suite in (hamiltonian_gradient_suite, pseudo_gradient_suite):
        result = suite(graph, cs, samples=200, seed=2)
        assert result.passed, result


def test_passivity_suite_uses_valid_storage_functions():
    s = load_scenario("triangle_cyclic")
    result = passivity_suite(s.graph, s.coupling_set, signals=3, seed=1, t_final=2.0, dt=2e-3)
    assert result.passed
    assert result.details["open_loop_kinetic"] <= 1e-10
    assert result.details["closed_loop_hamiltonian"] <= 1e-10


def test_full_hamiltonian_is_not_a_storage_function_of_the_open_loop(sec5_graph, sec5_couplings):
    # springs are not driven through the (u, p) port, so their energy changes
    # without any supply: the rate is p^T u + (dH/dz)^T Bbar p
    rng = np.random.default_rng(0)
    q0 = random_feasible_positions(sec5_graph, sec5_couplings, rng, margin=0.1)
    p0 = rng.normal(scale=0.05, size=q0.shape)
    rec = simulate_port(sec5_graph, sec5_couplings, q0, p0, lambda t: np.zeros_like(q0), 2.0, 1e-2)
    np.testing.assert_allclose(rec.supply, 0.0, atol=0.0)
    assert np.nanmax(np.abs(rec.H - rec.H[0])) > 1e-3
    np.testing.assert_allclose(rec.margin("kinetic"), 0.0, atol=1e-15)


def test_run_checks_selects_suites():
    s = load_scenario("triangle_cyclic")
    names = [r.name for r in run_checks(s, "gradients", samples=50)]
    assert names == ["spring_gradient", "hamiltonian_gradient", "pseudo_gradient"]
    (potential,) = run_checks(s, "potential", samples=50)
    assert potential.passed and potential.samples == 50
