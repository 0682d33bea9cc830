import numpy as np
import pytest

from phgame.couplings import CouplingSet, CouplingSpec, SpringModel
from phgame.graph import ConstraintGraph

SEC5_EDGES = [(1, 2), (1, 4), (1, 8), (1, 9), (2, 3), (2, 6), (2, 7), (3, 5),
              (3, 6), (3, 8), (4, 5), (4, 7), (6, 7), (6, 9), (7, 8), (7, 9)]

BARRIER_PARAMS = dict(k1=0.8, k2=0.06, rest_length=0.6, critical_distance=1.0)


@pytest.fixture
def barrier_spring():
    return SpringModel.barrier(**BARRIER_PARAMS)


@pytest.fixture
def sec5_graph():
    return ConstraintGraph.from_one_based(9, SEC5_EDGES, 2)


@pytest.fixture
def sec5_couplings(barrier_spring):
    return CouplingSet.uniform(CouplingSpec.scalar(barrier_spring, 0.2, 2), 16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_connected_graph(rng, num_agents, extra_edges, dimension=2):
    """Random spanning tree plus ``extra_edges`` distinct chords, random orientations."""
    order = rng.permutation(num_agents)
    edges = set()
    for k in range(1, num_agents):
        a, b = int(order[k]), int(order[rng.integers(k)])
        edges.add((a, b))
    tries = 0
    while len(edges) < num_agents - 1 + extra_edges and tries < 1000:
        tries += 1
        a, b = (int(v) for v in rng.choice(num_agents, 2, replace=False))
        if (a, b) not in edges and (b, a) not in edges:
            edges.add((a, b))
    edges = sorted(edges)
    edges = [(b, a) if rng.random() < 0.5 else (a, b) for a, b in edges]
    return ConstraintGraph(num_agents, tuple(edges), dimension)


def random_couplings(rng, num_edges, dimension=2, barrier_fraction=0.5):
    specs = []
    for _ in range(num_edges):
        if rng.random() < barrier_fraction:
            rc = rng.uniform(0.8, 1.5)
            spring = SpringModel.barrier(rng.uniform(0.3, 1.5), rng.uniform(0.03, 0.3),
                                         rng.uniform(0.2, 0.7) * rc, rc)
        else:
            spring = SpringModel.constant(rng.uniform(0.3, 2.0), rng.uniform(0.0, 1.0))
        A = rng.normal(size=(dimension, dimension))
        D = A @ A.T + rng.uniform(0.3, 1.0) * np.eye(dimension)
        specs.append(CouplingSpec(spring, tuple(map(tuple, D))))
    return CouplingSet(tuple(specs))


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
