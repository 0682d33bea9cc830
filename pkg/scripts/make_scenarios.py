"""Regenerate the bundled scenario files under src/phgame/scenarios/."""
from pathlib import Path

import numpy as np

from phgame.couplings import CouplingSet, CouplingSpec, SpringModel
from phgame.dynamics import IntegratorSettings
from phgame.graph import ConstraintGraph
from phgame.sampling import random_feasible_positions
from phgame.scenario import Scenario, save_scenario

OUT = Path(__file__).resolve().parents[1] / "src" / "phgame" / "scenarios"

SEC5_EDGES = [(1, 2), (1, 4), (1, 8), (1, 9), (2, 3), (2, 6), (2, 7), (3, 5),
              (3, 6), (3, 8), (4, 5), (4, 7), (6, 7), (6, 9), (7, 8), (7, 9)]
BARRIER_SPRING = SpringModel.barrier(k1=0.8, k2=0.06, rest_length=0.6, critical_distance=1.0)


def random_start(num_agents, edges, coupling, n, seed):
    graph = ConstraintGraph.from_one_based(num_agents, edges, n)
    cs = CouplingSet.uniform(coupling, len(edges))
    q = random_feasible_positions(graph, cs, np.random.default_rng(seed), margin=0.05,
                                  min_length=0.05)
    return np.round(q.reshape(num_agents, n), 6)


def build(name, description, num_agents, edges, coupling, n, seed, q=None, **extra):
    if q is None:
        q = random_start(num_agents, edges, coupling, n, seed)
        provenance = {"initial_positions": f"random feasible draw, seed {seed}, rounded to 6 decimals"}
    else:
        provenance = {"initial_positions": "hand-picked"}
    q = np.asarray(q, dtype=float).reshape(num_agents, n)
    return Scenario(
        name=name, dimension=n,
        positions=tuple(tuple(float(v) for v in row) for row in q),
        velocities=tuple((0.0,) * n for _ in range(num_agents)),
        edges=tuple(edges), couplings=(coupling,) * len(edges), seed=seed,
        description=description, provenance={**provenance, **extra.pop("provenance", {})},
        **extra,
    )


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    sec5 = CouplingSpec.scalar(BARRIER_SPRING, 0.2, 2)
    scenarios = [
        build("paper_sec5", "9 agents, 16 distance constraints, barrier springs with r = 0.6 and rc = 1",
              9, SEC5_EDGES, sec5, 2, seed=5,
              provenance={"damping": "0.2 * I (fastest typical convergence among damping values "
                                     "0.05 to 1.0 on random feasible starts)"}),
        build("two_agent_linear", "two agents on a line, linear spring, overdamped",
              2, [(1, 2)], CouplingSpec.scalar(SpringModel.constant(k=1.0, rest_length=1.0), 2.0, 1),
              1, seed=0, q=[[0.0], [1.5]]),
        build("path4_acyclic", "4-agent path graph: acyclic, so the potential reaches its global minimum",
              4, [(1, 2), (2, 3), (3, 4)], CouplingSpec.scalar(BARRIER_SPRING, 0.5, 2), 2, seed=11),
        build("triangle_cyclic", "3-agent cycle with barrier springs",
              3, [(1, 2), (2, 3), (3, 1)], CouplingSpec.scalar(BARRIER_SPRING, 0.5, 2), 2, seed=3),
        build("triangle_asymmetric", "negative control: player 1 double-counts edge 1, so H is "
              "not an exact potential", 3, [(1, 2), (2, 3), (3, 1)],
              CouplingSpec.scalar(BARRIER_SPRING, 0.5, 2), 2, seed=3,
              objective={"player": 1, "edge": 1, "scale": 2.0}),
    ]
    for s in scenarios:
        path = save_scenario(s, OUT / f"{s.name}.json")
        print("wrote", path)


if __name__ == "__main__":
    main()
