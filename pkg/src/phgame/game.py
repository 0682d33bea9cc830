"""Potential-game view of the coupled network.

Player i decides x_i = (q_i; dq_i/dt). The collective decision is laid out
as x = (q; dq/dt) = (q_1, ..., q_N, v_1, ..., v_N), each block of length n.
Player i minimises its kinetic energy plus the spring energies of the edges
it touches; the network Hamiltonian is an exact potential for that game.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .couplings import as_coupling_set, spring_gradient, spring_potential
from .dynamics import NetworkState, hamiltonian, state_map
from .errors import DomainViolation, SingularConfiguration
from .graph import ConstraintGraph
from .sampling import random_feasible_positions

VARIATIONAL_EQUILIBRIUM = "variational_equilibrium"
NOT_EQUILIBRIUM = "not_equilibrium"
INDETERMINATE = "indeterminate"


def split(x, graph: ConstraintGraph):
    """Return ``(q, v)`` as (N, n) arrays."""
    x = np.asarray(x, dtype=float).reshape(-1)
    nN = graph.num_agents * graph.dimension
    if x.shape[0] != 2 * nN:
        raise ValueError(f"collective decision needs {2 * nN} entries, got {x.shape[0]}")
    return x[:nN].reshape(-1, graph.dimension), x[nN:].reshape(-1, graph.dimension)


def to_state(x, graph: ConstraintGraph) -> NetworkState:
    q, v = split(x, graph)
    return NetworkState.from_positions(graph, q.reshape(-1), v.reshape(-1))


def local_objective(i: int, x, graph: ConstraintGraph, couplings):
    """J_i: own kinetic energy plus the potentials of every edge touching i.

    ``x`` may carry leading batch axes, in which case an array of values is
    returned.
    """
    cs = as_coupling_set(couplings)
    x = np.asarray(x, dtype=float)
    n, nN = graph.dimension, graph.num_agents * graph.dimension
    if x.shape[-1] != 2 * nN:
        raise ValueError(f"collective decision needs {2 * nN} entries, got {x.shape[-1]}")
    v = x[..., nN + i * n:nN + (i + 1) * n]
    J = 0.5 * np.einsum("...k,...k->...", v, v)
    edges = graph.incident_edges(i)
    if edges:
        rows = np.concatenate([np.arange(j * n, (j + 1) * n) for j in edges])
        z = x[..., :nN] @ graph.incidence.expanded[rows].T
        J = J + cs.subset(edges).energies(z)
    return float(J) if x.ndim == 1 else J


def scaled_objective(player: int, edge: int, scale: float) -> Callable:
    """Objective family where ``player`` weighs one incident edge by ``scale``.

    Used as a negative control: for scale != 1 the game is no longer an
    exact potential game with potential H.
    """

    def objective(i, x, graph, couplings):
        J = local_objective(i, x, graph, couplings)
        if i == player and edge in graph.incident_edges(i):
            q, _ = split(x, graph)
            tail, head = graph.edges[edge]
            J += (scale - 1.0) * spring_potential(as_coupling_set(couplings)[edge].spring,
                                                  q[head] - q[tail])
        return J

    return objective


def potential_function(x, graph: ConstraintGraph, couplings) -> float:
    """H evaluated at the mapped port-Hamiltonian state."""
    return hamiltonian(graph, couplings, to_state(x, graph))


def potential_bsi(x, graph: ConstraintGraph, couplings, order=None) -> float:
    """Potential in bilateral-symmetric-interaction form.

    Each player contributes its kinetic energy plus the edges shared with
    players that precede it in ``order`` (natural order by default), so
    every edge is counted exactly once.
    """
    cs = as_coupling_set(couplings)
    q, v = split(x, graph)
    N = graph.num_agents
    order = list(range(N)) if order is None else list(order)
    rank = {player: pos for pos, player in enumerate(order)}
    total = 0.0
    for i in order:
        total += 0.5 * float(v[i] @ v[i])
        for j in graph.incident_edges(i):
            tail, head = graph.edges[j]
            other = head if tail == i else tail
            if rank[other] < rank[i]:
                total += spring_potential(cs[j].spring, q[head] - q[tail])
    return total


def pseudo_gradient(x, graph: ConstraintGraph, couplings) -> np.ndarray:
    """F(x) = (grad_{x_i} J_i)_i, position blocks first, then velocity blocks."""
    cs = as_coupling_set(couplings)
    q, v = split(x, graph)
    Fq = np.zeros_like(q)
    for i in range(graph.num_agents):
        for j in graph.incident_edges(i):
            tail, head = graph.edges[j]
            sign = -1.0 if i == tail else 1.0
            Fq[i] += sign * spring_gradient(cs[j].spring, q[head] - q[tail])
    return np.concatenate([Fq.reshape(-1), v.reshape(-1)])


def pseudo_gradient_factorized(x, graph: ConstraintGraph, couplings) -> np.ndarray:
    """blockdiag(Bbar^T, I) grad H(x_pH)."""
    cs = as_coupling_set(couplings)
    state = to_state(x, graph)
    grad = np.concatenate([cs.gradient(state.z), state.p])
    T = state_map(graph)
    return T.T @ grad


def player_slices(i: int, graph: ConstraintGraph):
    """Index arrays of player i's position and velocity entries in x."""
    n, nN = graph.dimension, graph.num_agents * graph.dimension
    pos = np.arange(i * n, (i + 1) * n)
    return np.concatenate([pos, pos + nN])


@dataclass(frozen=True)
class DecisionBox:
    """Product of per-player boxes, stored as bounds over the collective x."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise ValueError("decision box needs lower < upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def uniform(cls, graph: ConstraintGraph, position, velocity):
        """Same (lo, hi) interval for every position and every velocity entry."""
        nN = graph.num_agents * graph.dimension
        lo = np.concatenate([np.full(nN, position[0]), np.full(nN, velocity[0])])
        hi = np.concatenate([np.full(nN, position[1]), np.full(nN, velocity[1])])
        return cls(lo, hi)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def interior(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x > self.lower) and np.all(x < self.upper))

    def sample(self, rng, idx=None):
        lo = self.lower if idx is None else self.lower[idx]
        hi = self.upper if idx is None else self.upper[idx]
        return rng.uniform(lo, hi)


def default_decision_box(graph: ConstraintGraph, couplings, q0, p0=None, t_max: float = 100.0) -> DecisionBox:
    """A box that the closed-loop trajectory from (q0, p0) cannot leave before t_max.

    Speeds are bounded through the energy, |v_i| <= sqrt(2 H0). Each agent
    stays within (N - 1) edge lengths of its component's centroid, which
    drifts at most sqrt(2 H0) per unit time. Edge lengths are bounded by rc
    for barrier springs and by r + sqrt(2 H0 / k) for constant ones.
    """
    cs = as_coupling_set(couplings)
    n, N = graph.dimension, graph.num_agents
    q0 = np.asarray(q0, dtype=float).reshape(-1)
    p0 = np.zeros_like(q0) if p0 is None else np.asarray(p0, dtype=float).reshape(-1)
    H0 = hamiltonian(graph, cs, NetworkState.from_positions(graph, q0, p0))
    vmax = math.sqrt(2.0 * H0)
    edge_bound = 0.0
    for c in cs.specs:
        s = c.spring
        if s.kind == "barrier":
            edge_bound = max(edge_bound, s.critical_distance)
        else:
            edge_bound = max(edge_bound, s.rest_length + math.sqrt(2.0 * H0 / s.k))
    Q = q0.reshape(N, n)
    centre = Q.mean(axis=0)
    spread = np.abs(Q - centre).max()
    half = spread + 2.0 * (N - 1) * edge_bound + vmax * t_max + 1.0
    vhalf = 2.0 * vmax + 1.0
    lo = np.concatenate([np.tile(centre - half, N), np.full(n * N, -vhalf)])
    hi = np.concatenate([np.tile(centre + half, N), np.full(n * N, vhalf)])
    return DecisionBox(lo, hi)


@dataclass(frozen=True)
class PotentialCheck:
    passed: bool
    max_deviation: float
    samples: int
    worst: dict = field(default_factory=dict)


def _feasible(graph, cs, q) -> bool:
    z = graph.incidence.expanded @ q.reshape(-1)
    L = cs.lengths(z)
    return bool(np.all(L <= cs.domain_radii) and np.all((L > 0) | (cs.rest_lengths == 0)))


def _sample_position(i, q, graph, cs, box, rng, max_tries=10000):
    """Uniform draw of q_i over the feasible part of player i's position box."""
    n = graph.dimension
    idx = np.arange(i * n, (i + 1) * n)
    lo, hi = box.lower[idx], box.upper[idx]
    anchors = [j for j in graph.incident_edges(i) if math.isfinite(cs.domain_radii[j])]
    for _ in range(max_tries):
        if anchors:
            # feasible set lies inside the ball around this neighbour
            j = anchors[0]
            tail, head = graph.edges[j]
            other = head if tail == i else tail
            radius = cs.domain_radii[j]
            while True:
                offset = rng.uniform(-radius, radius, n)
                if offset @ offset <= radius * radius:
                    break
            cand = q[other] + offset
            if np.any(cand < lo) or np.any(cand > hi):
                continue
        else:
            cand = rng.uniform(lo, hi)
        trial = q.copy()
        trial[i] = cand
        if _feasible(graph, cs, trial):
            return cand
    raise RuntimeError(f"no feasible deviation found for player {i + 1}")


def check_exact_potential(graph: ConstraintGraph, couplings, sample_count: int, rng_seed: int,
                          box: DecisionBox | None = None, objective: Callable = local_objective,
                          tol: float = 1e-9) -> PotentialCheck:
    """Sample unilateral deviations and compare the change of J_i with that of H.

    Each sample draws a feasible collective x in the box, a player i and a
    feasible replacement y_i for x_i, then checks
    |dJ_i - dH| <= tol * max(1, |dH|).
    """
    cs = as_coupling_set(couplings)
    rng = np.random.default_rng(rng_seed)
    n, N = graph.dimension, graph.num_agents
    nN = n * N
    if box is None:
        q = random_feasible_positions(graph, cs, rng).reshape(N, n)
        box = default_decision_box(graph, cs, q.reshape(-1))
    else:
        centre = 0.5 * (box.lower[:nN] + box.upper[:nN]).reshape(N, n).mean(axis=0)
        for _ in range(1000):
            q = random_feasible_positions(graph, cs, rng, center=centre).reshape(N, n)
            if np.all(q.reshape(-1) >= box.lower[:nN]) and np.all(q.reshape(-1) <= box.upper[:nN]):
                break
        else:
            raise RuntimeError("decision box admits no feasible configuration near its centre")
    worst_dev, worst = 0.0, {}
    passed = True
    for s in range(sample_count):
        # Gibbs move: redraw one agent from its feasible conditional
        g = int(rng.integers(N))
        q[g] = _sample_position(g, q, graph, cs, box, rng)
        v = box.sample(rng)[nN:].reshape(N, n)
        x = np.concatenate([q.reshape(-1), v.reshape(-1)])
        i = int(rng.integers(N))
        y = x.copy()
        y[i * n:(i + 1) * n] = _sample_position(i, q, graph, cs, box, rng)
        y[nN + i * n:nN + (i + 1) * n] = box.sample(rng, np.arange(nN + i * n, nN + (i + 1) * n))
        dJ = objective(i, x, graph, cs) - objective(i, y, graph, cs)
        dH = potential_function(x, graph, cs) - potential_function(y, graph, cs)
        dev = abs(dJ - dH) / max(1.0, abs(dH))
        if dev > worst_dev:
            worst_dev, worst = dev, {"sample": s, "player": i + 1, "dJ": dJ, "dH": dH}
        if dev > tol:
            passed = False
    return PotentialCheck(passed, worst_dev, sample_count, worst)


@dataclass(frozen=True)
class EquilibriumReport:
    pseudo_gradient_norm: float
    momentum_norm: float
    potential_value: float
    is_variational_equilibrium: bool
    per_player_gradient_norms: tuple[float, ...]
    status: str
    interior: bool
    tolerance: float
    max_rest_deviation: float
    # "rest_lengths" when every edge sits at its rest length, else "alternative"
    equilibrium_kind: str

    def to_dict(self) -> dict:
        return {
            "pseudo_gradient_norm": self.pseudo_gradient_norm,
            "momentum_norm": self.momentum_norm,
            "potential_value": self.potential_value,
            "is_variational_equilibrium": self.is_variational_equilibrium,
            "per_player_gradient_norms": list(self.per_player_gradient_norms),
            "status": self.status,
            "interior": self.interior,
            "tolerance": self.tolerance,
            "max_rest_deviation": self.max_rest_deviation,
            "equilibrium_kind": self.equilibrium_kind,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EquilibriumReport":
        data = dict(data)
        data["per_player_gradient_norms"] = tuple(data["per_player_gradient_norms"])
        return cls(**data)


def certify_equilibrium(x, graph: ConstraintGraph, couplings, tol: float = 1e-6,
                        box: DecisionBox | None = None, rest_tol: float = 1e-3) -> EquilibriumReport:
    """Variational-equilibrium certificate for an interior point.

    An interior x with |F(x)|_inf <= tol solves the variational inequality
    on the decision box and is therefore a Nash equilibrium of the game.
    Points on the box boundary are reported as indeterminate.
    """
    cs = as_coupling_set(couplings)
    x = np.asarray(x, dtype=float).reshape(-1)
    n, N = graph.dimension, graph.num_agents
    nN = n * N
    try:
        F = pseudo_gradient(x, graph, cs)
        H = potential_function(x, graph, cs)
    except (DomainViolation, SingularConfiguration):
        F = np.full(2 * nN, np.inf)
        H = math.inf
    per_player = tuple(float(np.linalg.norm(F[player_slices(i, graph)])) for i in range(N))
    F_norm = float(np.abs(F).max())
    interior = True if box is None else box.interior(x)
    small = F_norm <= tol
    if not interior:
        status = INDETERMINATE
    elif small:
        status = VARIATIONAL_EQUILIBRIUM
    else:
        status = NOT_EQUILIBRIUM
    lengths = cs.lengths(graph.incidence.expanded @ x[:nN])
    rest_dev = float(np.abs(lengths - cs.rest_lengths).max())
    return EquilibriumReport(
        pseudo_gradient_norm=F_norm,
        momentum_norm=float(np.abs(x[nN:]).max()),
        potential_value=H,
        is_variational_equilibrium=status == VARIATIONAL_EQUILIBRIUM,
        per_player_gradient_norms=per_player,
        status=status,
        interior=interior,
        tolerance=tol,
        max_rest_deviation=rest_dev,
        equilibrium_kind="rest_lengths" if rest_dev <= rest_tol else "alternative",
    )
