"""Oriented constraint graph, incidence matrix and relative positions.

Edges are stored 0-based internally as ``(tail, head)`` pairs. Scenario
files use 1-based indices; :meth:`ConstraintGraph.from_one_based` does the
conversion.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import GraphError


@dataclass(frozen=True)
class ConstraintGraph:
    num_agents: int
    edges: tuple[tuple[int, int], ...]
    dimension: int = 2

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((int(a), int(b)) for a, b in self.edges))
        if self.num_agents < 2:
            raise GraphError(f"need at least 2 agents, got {self.num_agents}")
        if self.dimension < 1:
            raise GraphError(f"dimension must be positive, got {self.dimension}")
        if not self.edges:
            raise GraphError("graph has no edges")
        seen = set()
        for j, (a, b) in enumerate(self.edges):
            for v in (a, b):
                if not 0 <= v < self.num_agents:
                    raise GraphError(
                        f"edge {j + 1} ({a + 1}, {b + 1}): vertex {v + 1} outside 1..{self.num_agents}"
                    )
            if a == b:
                raise GraphError(f"edge {j + 1} is a self-loop on vertex {a + 1}")
            key = frozenset((a, b))
            if key in seen:
                raise GraphError(f"edge {j + 1} ({a + 1}, {b + 1}) duplicates an earlier edge")
            seen.add(key)

    @classmethod
    def from_one_based(cls, num_agents, edges, dimension=2):
        return cls(num_agents, tuple((a - 1, b - 1) for a, b in edges), dimension)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def one_based_edges(self):
        return [(a + 1, b + 1) for a, b in self.edges]

    def incident_edges(self, i: int) -> list[int]:
        """Indices of the edges touching vertex ``i``."""
        return [j for j, (a, b) in enumerate(self.edges) if i in (a, b)]

    def flipped(self, j: int) -> "ConstraintGraph":
        """Copy of the graph with the orientation of edge ``j`` reversed."""
        edges = list(self.edges)
        a, b = edges[j]
        edges[j] = (b, a)
        return ConstraintGraph(self.num_agents, tuple(edges), self.dimension)

    @cached_property
    def incidence(self) -> "IncidenceMatrix":
        return build_incidence(self)


@dataclass(frozen=True)
class IncidenceMatrix:
    """``entries`` is B (N x M); ``expanded`` is B^T kron I_n, so that z = expanded @ q."""

    entries: np.ndarray
    expanded: np.ndarray = field(repr=False)

    @property
    def expanded_T(self) -> np.ndarray:
        return self.expanded.T


def build_incidence(graph: ConstraintGraph) -> IncidenceMatrix:
    B = np.zeros((graph.num_agents, graph.num_edges))
    for j, (tail, head) in enumerate(graph.edges):
        B[tail, j] = -1.0
        B[head, j] = 1.0
    Bbar = np.kron(B.T, np.eye(graph.dimension))
    B.setflags(write=False)
    Bbar.setflags(write=False)
    return IncidenceMatrix(B, Bbar)


def relative_distances(Bbar: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Stacked relative positions z = Bbar q (z_j = q_head - q_tail)."""
    q = np.asarray(q, dtype=float)
    if q.ndim != 1 or Bbar.shape[1] != q.shape[0]:
        raise ValueError(f"position vector of shape {q.shape} does not match incidence {Bbar.shape}")
    return Bbar @ q


def connected_components(graph: ConstraintGraph) -> int:
    adjacency = [[] for _ in range(graph.num_agents)]
    for a, b in graph.edges:
        adjacency[a].append(b)
        adjacency[b].append(a)
    seen = [False] * graph.num_agents
    count = 0
    for start in range(graph.num_agents):
        if seen[start]:
            continue
        count += 1
        stack = [start]
        seen[start] = True
        while stack:
            v = stack.pop()
            for w in adjacency[v]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(w)
    return count


def is_connected_acyclic(graph: ConstraintGraph) -> tuple[bool, bool]:
    """Return ``(connected, acyclic)``.

    Decided combinatorially and cross-checked against the rank of B, which
    equals N minus the number of connected components for any graph.
    """
    components = connected_components(graph)
    rank = np.linalg.matrix_rank(graph.incidence.entries)
    if rank != graph.num_agents - components:
        raise AssertionError(f"rank(B) = {rank} disagrees with {components} components")
    connected = components == 1
    # a forest has M = N - components; cycles add edges beyond that
    acyclic = graph.num_edges == graph.num_agents - components
    return connected, acyclic
