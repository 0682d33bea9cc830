"""Run orchestration and result files.

Outputs of :func:`run` in ``output_dir``:

* ``trajectory.csv``: ``t, q_1_x, ..., p_1_x, ..., dist_e1, ..., H, u_norm``
  as shortest round-trip decimals, so values parse back bit-exactly;
* ``equilibrium.json``: the game-side certificate of the final state plus
  the port-Hamiltonian residuals;
* ``summary.json``: termination reason, final H and |F|, wall time.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dynamics
from .dynamics import detect_equilibrium, simulate
from .game import certify_equilibrium

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_VALIDATION = 2
EXIT_NOT_CONVERGED = 3
EXIT_DOMAIN = 4

_EXIT_FOR = {
    dynamics.CONVERGED: EXIT_OK,
    dynamics.T_MAX_REACHED: EXIT_NOT_CONVERGED,
    dynamics.DOMAIN_VIOLATION: EXIT_DOMAIN,
    dynamics.SINGULAR: EXIT_DOMAIN,
}


@dataclass
class RunArtifacts:
    trajectory_path: Path
    report_path: Path
    summary_path: Path
    summary: dict

    @property
    def exit_code(self) -> int:
        return self.summary["exit_code"]


def _axis_names(n):
    return "xyz"[:n] if n <= 3 else [str(c + 1) for c in range(n)]


def trajectory_header(num_agents: int, dimension: int, num_edges: int) -> list[str]:
    axes = _axis_names(dimension)
    cols = ["t"]
    cols += [f"q_{i + 1}_{a}" for i in range(num_agents) for a in axes]
    cols += [f"p_{i + 1}_{a}" for i in range(num_agents) for a in axes]
    cols += [f"dist_e{j + 1}" for j in range(num_edges)]
    return cols + ["H", "u_norm"]


def trajectory_table(traj: dynamics.Trajectory) -> np.ndarray:
    return np.column_stack([traj.t, traj.q, traj.p, traj.distances, traj.H, traj.u_norm])


def write_trajectory(traj: dynamics.Trajectory, graph, path) -> Path:
    path = Path(path)
    header = trajectory_header(graph.num_agents, graph.dimension, graph.num_edges)
    table = trajectory_table(traj)
    with path.open("w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in table:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return path


def read_trajectory(path) -> tuple[list[str], np.ndarray]:
    """Header and numeric table of a trajectory file."""
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
        rows = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
    return header, np.array(rows).reshape(len(rows), len(header))


def _dump(data, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(data, indent=2) + "\n")
    return path


def run(scenario, output_dir) -> RunArtifacts:
    """Simulate a scenario, certify the final state and write all artifacts."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    graph, cs = scenario.graph, scenario.coupling_set
    settings = scenario.integrator

    start = time.perf_counter()
    traj = simulate(graph, cs, scenario.q0, scenario.p0, settings)
    wall = time.perf_counter() - start

    final = traj.final_state(graph)
    eq = detect_equilibrium(graph, cs, final, settings.tol_p, settings.tol_f)
    report = certify_equilibrium(final.x, graph, cs, tol=max(settings.tol_p, settings.tol_f),
                                 box=scenario.box)
    report_data = {
        "scenario": scenario.name,
        "time": float(traj.t[-1]),
        **report.to_dict(),
        "port_hamiltonian": {
            "in_equilibrium_set": eq.converged,
            "momentum_residual": eq.momentum_residual,
            "force_residual": eq.force_residual,
            "tol_p": settings.tol_p,
            "tol_f": settings.tol_f,
        },
        "final_distances": [float(d) for d in traj.distances[-1]],
    }
    exit_code = _EXIT_FOR[traj.termination]
    summary = {
        "scenario": scenario.name,
        "termination": traj.termination,
        "message": traj.message,
        "converged": traj.converged,
        "final_time": float(traj.t[-1]),
        "final_H": float(traj.H[-1]),
        "final_pseudo_gradient_norm": report.pseudo_gradient_norm,
        "certified_equilibrium": report.is_variational_equilibrium,
        "equilibrium_kind": report.equilibrium_kind,
        "max_step_energy_increase": traj.max_step_increase,
        "constraints_held": bool(traj.constraint_flags(cs).all()),
        "samples": len(traj),
        "steps": traj.steps,
        "step_halvings": traj.halvings,
        "integrator": traj.integrator,
        "dt": settings.dt,
        "wall_time_s": wall,
        "exit_code": exit_code,
    }
    return RunArtifacts(
        trajectory_path=write_trajectory(traj, graph, out / "trajectory.csv"),
        report_path=_dump(report_data, out / "equilibrium.json"),
        summary_path=_dump(summary, out / "summary.json"),
        summary=summary,
    )
