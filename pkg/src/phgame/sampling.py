"""Random feasible configurations for scenarios and property checks."""
from __future__ import annotations

import math

import numpy as np

from .couplings import as_coupling_set
from .graph import ConstraintGraph


def _edge_radius(spring, margin: float) -> float:
    radius = spring.domain_radius
    if math.isfinite(spring.critical_distance):
        radius = min(radius, spring.critical_distance - margin)
    if not math.isfinite(radius):
        # unconstrained spring: stay within a couple of rest lengths
        radius = max(2.0 * spring.rest_length, 1.0)
    return radius


def _uniform_ball(rng, n, radius, count=64):
    """Up to ``count`` uniform points of the n-ball (cube draws that land inside)."""
    v = rng.uniform(-radius, radius, (count, n))
    return v[np.einsum("ij,ij->i", v, v) <= radius * radius]


def random_feasible_positions(graph: ConstraintGraph, couplings, rng: np.random.Generator, *,
                              margin: float = 0.0, min_length: float = 1e-3,
                              center=None, max_restarts: int = 200) -> np.ndarray:
    """Stacked positions q (length nN) with every edge length in [min_length, radius_j].

    ``radius_j`` is the spring's domain radius, pulled in by ``margin`` below
    the critical distance. Agents are placed one at a time, each uniformly in
    a ball around an already placed neighbor, and rejected until every edge
    to the placed set is feasible. The configuration is then shifted so its
    centroid sits at ``center`` (origin by default).
    """
    cs = as_coupling_set(couplings)
    n, N = graph.dimension, graph.num_agents
    radii = np.array([_edge_radius(c.spring, margin) for c in cs.specs])
    neighbors = [[] for _ in range(N)]
    for j, (a, b) in enumerate(graph.edges):
        neighbors[a].append((b, j))
        neighbors[b].append((a, j))

    for _ in range(max_restarts):
        q = np.full((N, n), np.nan)
        placed = np.zeros(N, dtype=bool)
        order = []
        for root in rng.permutation(N):
            if placed[root]:
                continue
            q[root] = rng.uniform(-1.0, 1.0, n) * (radii.max() * N)
            placed[root] = True
            order.append(root)
            frontier = [root]
            while frontier:
                v = frontier.pop(0)
                for w, _ in neighbors[v]:
                    if not placed[w]:
                        placed[w] = True
                        order.append(w)
                        frontier.append(w)
        placed[:] = False
        ok = True
        for v in order:
            anchors = [(w, j) for w, j in neighbors[v] if placed[w]]
            if not anchors:
                placed[v] = True
                continue
            w0, j0 = anchors[0]
            others = q[[w for w, _ in anchors]]
            limits = radii[[j for _, j in anchors]]
            for _attempt in range(200):
                cand = q[w0] + _uniform_ball(rng, n, radii[j0])
                lengths = np.linalg.norm(cand[:, None, :] - others[None, :, :], axis=2)
                hits = np.flatnonzero(((lengths <= limits) & (lengths >= min_length)).all(axis=1))
                if hits.size:
                    q[v] = cand[hits[0]]
                    placed[v] = True
                    break
            else:
                ok = False
                break
        if ok:
            q -= q.mean(axis=0)
            if center is not None:
                q += np.asarray(center, dtype=float)
            return q.reshape(-1)
    raise RuntimeError("could not draw a feasible configuration; constraints may be unsatisfiable")


def feasible_chain(graph: ConstraintGraph, couplings, rng: np.random.Generator, *,
                   margin: float = 0.0, min_length: float = 1e-3, moves: int = 3):
    """Endless stream of feasible configurations from a Gibbs chain.

    The chain starts from :func:`random_feasible_positions` and each yielded
    configuration differs from the previous one by ``moves`` agents redrawn
    from their feasible conditional (a ball around a neighbour, accepted when
    every incident edge stays within its radius). Far cheaper than fresh
    draws when many correlated-but-distinct samples are enough.
    """
    cs = as_coupling_set(couplings)
    n, N = graph.dimension, graph.num_agents
    radii = np.array([_edge_radius(c.spring, margin) for c in cs.specs])
    incident = []
    for i in range(N):
        edges = graph.incident_edges(i)
        others = [b if a == i else a for a, b in (graph.edges[j] for j in edges)]
        incident.append((np.array(others, dtype=int), radii[edges]))
    q = random_feasible_positions(graph, cs, rng, margin=margin, min_length=min_length).reshape(N, n)
    while True:
        for i in rng.integers(N, size=moves):
            others, limits = incident[i]
            if not others.size:
                continue
            pick = int(rng.integers(others.size))
            for _attempt in range(50):
                cand = q[others[pick]] + _uniform_ball(rng, n, limits[pick], 16)
                lengths = np.linalg.norm(cand[:, None, :] - q[others][None, :, :], axis=2)
                hits = np.flatnonzero(((lengths <= limits) & (lengths >= min_length)).all(axis=1))
                if hits.size:
                    q[i] = cand[hits[0]]
                    break
        yield (q - q.mean(axis=0)).reshape(-1)
