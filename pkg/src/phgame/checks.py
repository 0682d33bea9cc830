"""Numerical property suites behind ``phgame check``.

Gradient errors are measured as

    err = |g_fd - g|_inf / max(1, |g|_inf)

i.e. relative where the gradient is large and absolute near its zeros (the
rest-length sphere), with g_fd a central difference of step 1e-6.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .couplings import as_coupling_set, spring_gradient, spring_potential
from .dynamics import NetworkState, hamiltonian_gradient, simulate_port
from .game import (
    check_exact_potential,
    local_objective,
    player_slices,
    pseudo_gradient,
)
from .sampling import feasible_chain, random_feasible_positions

FD_STEP = 1e-6
# keep sample points this far from the origin and from the barrier pole
SINGULAR_MARGIN = 1e-3


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    samples: int
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "worst": self.worst,
                "tolerance": self.tolerance, "samples": self.samples, "details": self.details}


def central_difference(f, x, step=FD_STEP, idx=None, batched=False):
    """Central-difference gradient of scalar ``f`` at ``x`` over coordinates ``idx``.

    With ``batched=True``, ``f`` maps a (k, d) array of points to k values and
    all perturbed points are evaluated in one call.
    """
    x = np.asarray(x, dtype=float)
    idx = np.arange(x.size) if idx is None else np.asarray(idx)
    if batched:
        E = np.zeros((len(idx), x.size))
        E[np.arange(len(idx)), idx] = step
        values = np.asarray(f(np.concatenate([x + E, x - E])))
        return (values[:len(idx)] - values[len(idx):]) / (2 * step)
    g = np.zeros(len(idx))
    for a, k in enumerate(idx):
        xp = x.copy()
        xm = x.copy()
        xp[k] += step
        xm[k] -= step
        g[a] = (f(xp) - f(xm)) / (2 * step)
    return g


def gradient_error(g_fd, g) -> float:
    return float(np.abs(g_fd - g).max() / max(1.0, np.abs(g).max()))


def _random_edge_vector(spring, n, rng):
    """Uniform point of the spring's domain away from the origin and the pole."""
    outer = spring.domain_radius
    if np.isfinite(spring.critical_distance):
        outer = min(outer, spring.critical_distance - 2 * SINGULAR_MARGIN)
    if not np.isfinite(outer):
        outer = max(2.0 * spring.rest_length, 2.0)
    while True:
        z = rng.uniform(-outer, outer, n)
        L = np.linalg.norm(z)
        if SINGULAR_MARGIN < L <= outer:
            return z


def spring_gradient_suite(couplings, samples=1000, seed=0, tol=1e-6) -> CheckResult:
    cs = as_coupling_set(couplings)
    rng = np.random.default_rng(seed)
    springs = sorted(set(c.spring for c in cs.specs), key=repr)
    n = cs.dimension
    worst = 0.0
    for s in range(samples):
        spring = springs[s % len(springs)]
        z = _random_edge_vector(spring, n, rng)
        g = spring_gradient(spring, z)
        g_fd = central_difference(lambda v: spring_potential(spring, v), z)
        worst = max(worst, gradient_error(g_fd, g))
    return CheckResult("spring_gradient", worst <= tol, worst, tol, samples)


def _random_states(graph, cs, rng, count):
    chain = feasible_chain(graph, cs, rng, margin=2 * SINGULAR_MARGIN, min_length=SINGULAR_MARGIN)
    for _ in range(count):
        q = next(chain)
        yield NetworkState.from_positions(graph, q, rng.normal(size=q.shape))


def hamiltonian_gradient_suite(graph, couplings, samples=1000, seed=0, tol=1e-6) -> CheckResult:
    cs = as_coupling_set(couplings)
    rng = np.random.default_rng(seed)
    nM = graph.num_edges * graph.dimension
    worst = 0.0
    for state in _random_states(graph, cs, rng, samples):
        dHdz, dHdp = hamiltonian_gradient(graph, cs, state)

        def H_of(v):
            return 0.5 * np.einsum("ij,ij->i", v[:, nM:], v[:, nM:]) + cs.energies(v[:, :nM])

        g_fd = central_difference(H_of, state.x_pH, batched=True)
        worst = max(worst, gradient_error(g_fd, np.concatenate([dHdz, dHdp])))
    return CheckResult("hamiltonian_gradient", worst <= tol, worst, tol, samples)


def pseudo_gradient_suite(graph, couplings, samples=1000, seed=0, tol=1e-6) -> CheckResult:
    cs = as_coupling_set(couplings)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for state in _random_states(graph, cs, rng, samples):
        x = state.x
        F = pseudo_gradient(x, graph, cs)
        for i in range(graph.num_agents):
            idx = player_slices(i, graph)
            g_fd = central_difference(lambda v, i=i: local_objective(i, v, graph, cs), x, idx=idx,
                                      batched=True)
            worst = max(worst, gradient_error(g_fd, F[idx]))
    return CheckResult("pseudo_gradient", worst <= tol, worst, tol, samples)


def random_input_signal(rng, size, amplitude=0.05, harmonics=3):
    """Bounded smooth input u(t) = sum of sinusoids, |u_k(t)| <= amplitude."""
    a = rng.uniform(-1, 1, (harmonics, size))
    a *= amplitude / np.abs(a).sum(axis=0)
    omega = rng.uniform(0.2, 3.0, (harmonics, size))
    phase = rng.uniform(0, 2 * np.pi, (harmonics, size))

    def u(t):
        return (a * np.sin(omega * t + phase)).sum(axis=0)

    return u


def passivity_suite(graph, couplings, signals=10, seed=0, t_final=5.0, dt=1e-3,
                    tol=1e-6) -> CheckResult:
    """Storage vs. supplied energy along randomly driven runs.

    Open loop (dp/dt = u, y = p): storage is the agents' kinetic energy,
    which changes by exactly the supplied energy.
    Closed loop with an extra input port: storage is the full Hamiltonian,
    and the dampers can only remove energy.
    """
    cs = as_coupling_set(couplings)
    rng = np.random.default_rng(seed)
    worst_open = worst_closed = -np.inf
    for _ in range(signals):
        q0 = random_feasible_positions(graph, cs, rng, margin=0.1)
        p0 = rng.normal(scale=0.05, size=q0.shape)
        u = random_input_signal(rng, q0.size)
        rec = simulate_port(graph, cs, q0, p0, u, t_final, dt, closed_loop=False)
        worst_open = max(worst_open, float(-rec.margin("kinetic").min()))
        rec = simulate_port(graph, cs, q0, p0, u, t_final, dt, closed_loop=True)
        worst_closed = max(worst_closed, float(-rec.margin("hamiltonian").min()))
    worst = max(worst_open, worst_closed)
    return CheckResult("passivity", worst <= tol, worst, tol, signals,
                       {"open_loop_kinetic": worst_open, "closed_loop_hamiltonian": worst_closed})


def run_checks(scenario, which="all", samples=1000) -> list[CheckResult]:
    graph, cs = scenario.graph, scenario.coupling_set
    out = []
    if which in ("potential", "all"):
        res = check_exact_potential(graph, cs, samples, scenario.seed, box=scenario.box,
                                    objective=scenario.objective_fn)
        out.append(CheckResult("exact_potential", res.passed, res.max_deviation, 1e-9,
                               res.samples, {"worst_sample": res.worst}))
    if which in ("gradients", "all"):
        out.append(spring_gradient_suite(cs, samples, scenario.seed))
        out.append(hamiltonian_gradient_suite(graph, cs, samples, scenario.seed))
        out.append(pseudo_gradient_suite(graph, cs, samples, scenario.seed))
    if which in ("passivity", "all"):
        out.append(passivity_suite(graph, cs, seed=scenario.seed))
    return out
