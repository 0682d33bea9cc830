"""Port-Hamiltonian network dynamics and the fixed-step integrator.

The state is carried as absolute positions and momenta (q, p) with unit
masses, so p = dq/dt. Relative positions are always derived as z = Bbar q,
which keeps the redundant (z, p) description consistent by construction.

Closed loop, with D = diag(D_j):

    dz/dt = Bbar dH/dp
    dp/dt = -Bbar^T dH/dz - Bbar^T D Bbar dH/dp
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels
from .couplings import CouplingSet, as_coupling_set, edge_force
from .errors import DomainViolation, InfeasibleInitialCondition, SingularConfiguration
from .graph import ConstraintGraph

log = logging.getLogger(__name__)

CONVERGED = "converged"
T_MAX_REACHED = "t_max_reached"
DOMAIN_VIOLATION = "domain_violation"
SINGULAR = "singular_configuration"


@dataclass(frozen=True)
class NetworkState:
    q: np.ndarray
    p: np.ndarray
    z: np.ndarray

    @classmethod
    def from_positions(cls, graph: ConstraintGraph, q, p=None) -> "NetworkState":
        q = np.asarray(q, dtype=float).reshape(-1)
        size = graph.num_agents * graph.dimension
        if q.shape[0] != size:
            raise ValueError(f"expected {size} position entries, got {q.shape[0]}")
        p = np.zeros_like(q) if p is None else np.asarray(p, dtype=float).reshape(-1)
        if p.shape != q.shape:
            raise ValueError(f"momentum shape {p.shape} differs from position shape {q.shape}")
        return cls(q, p, graph.incidence.expanded @ q)

    @property
    def x_pH(self) -> np.ndarray:
        return np.concatenate([self.z, self.p])

    @property
    def x(self) -> np.ndarray:
        """Collective game decision (q; dq/dt)."""
        return np.concatenate([self.q, self.p])


def state_map(graph: ConstraintGraph) -> np.ndarray:
    """Matrix blockdiag(Bbar, I) taking (q; dq/dt) to (z; p)."""
    Bbar = graph.incidence.expanded
    nN = Bbar.shape[1]
    T = np.zeros((Bbar.shape[0] + nN, 2 * nN))
    T[: Bbar.shape[0], :nN] = Bbar
    T[Bbar.shape[0]:, nN:] = np.eye(nN)
    return T


def hamiltonian(graph, couplings, state: NetworkState) -> float:
    cs = as_coupling_set(couplings)
    return 0.5 * float(state.p @ state.p) + cs.energy(state.z)


def hamiltonian_gradient(graph, couplings, state: NetworkState):
    """Return ``(dH/dz, dH/dp)``; dH/dp = p for unit masses."""
    cs = as_coupling_set(couplings)
    return cs.gradient(state.z), state.p.copy()


def hamiltonian_rate(graph, couplings, state: NetworkState) -> float:
    """Analytic dH/dt = -(dH/dp)^T Bbar^T D Bbar (dH/dp) along the closed loop."""
    cs = as_coupling_set(couplings)
    w = graph.incidence.expanded @ state.p
    return -float(w @ (cs.damping @ w))


def control_law(graph, couplings, state: NetworkState) -> np.ndarray:
    """u = -Bbar^T (D Bbar dH/dp + dH/dz), assembled with dense matrices."""
    cs = as_coupling_set(couplings)
    Bbar = graph.incidence.expanded
    dHdz, dHdp = hamiltonian_gradient(graph, cs, state)
    return -Bbar.T @ (cs.damping @ (Bbar @ dHdp) + dHdz)


def control_law_distributed(graph, couplings, state: NetworkState) -> np.ndarray:
    """Same input as :func:`control_law`, aggregated agent by agent.

    Agent i only touches the edges incident to it: the head of an edge
    receives -f_j and the tail +f_j.
    """
    cs = as_coupling_set(couplings)
    n = graph.dimension
    q = state.q.reshape(-1, n)
    v = state.p.reshape(-1, n)
    u = np.zeros_like(q)
    for i in range(graph.num_agents):
        for j in graph.incident_edges(i):
            tail, head = graph.edges[j]
            f = edge_force(cs[j], q[head] - q[tail], v[head] - v[tail])
            u[i] += f if i == tail else -f
    return u.reshape(-1)


def open_loop_rhs(graph, couplings, state: NetworkState, u):
    """Open loop: dz/dt = Bbar dH/dp, dp/dt = u. Output y = dH/dp."""
    _, dHdp = hamiltonian_gradient(graph, couplings, state)
    u = np.asarray(u, dtype=float)
    if u.shape != dHdp.shape:
        raise ValueError(f"input of shape {u.shape} does not match momenta {dHdp.shape}")
    return graph.incidence.expanded @ dHdp, u.copy()


def closed_loop_rhs(graph, couplings, state: NetworkState):
    cs = as_coupling_set(couplings)
    Bbar = graph.incidence.expanded
    dHdz, dHdp = hamiltonian_gradient(graph, cs, state)
    zdot = Bbar @ dHdp
    pdot = -Bbar.T @ dHdz - Bbar.T @ (cs.damping @ zdot)
    return zdot, pdot


def collective_matrix(graph, couplings) -> np.ndarray:
    """K with d(z; p)/dt = -K grad H(z; p); its symmetric part is PSD."""
    cs = as_coupling_set(couplings)
    Bbar = graph.incidence.expanded
    nM, nN = Bbar.shape
    K = np.zeros((nM + nN, nM + nN))
    K[:nM, nM:] = -Bbar
    K[nM:, :nM] = Bbar.T
    K[nM:, nM:] = Bbar.T @ cs.damping @ Bbar
    return K


@dataclass(frozen=True)
class EquilibriumCheck:
    converged: bool
    momentum_residual: float
    force_residual: float

    def __bool__(self):
        return self.converged


def detect_equilibrium(graph, couplings, state: NetworkState, tol_p=1e-6, tol_f=1e-6) -> EquilibriumCheck:
    """Membership test for {p = 0, dH/dz in ker(Bbar^T)} at the given tolerances."""
    dHdz, _ = hamiltonian_gradient(graph, couplings, state)
    force = graph.incidence.expanded.T @ dHdz
    p_res = float(np.abs(state.p).max(initial=0.0))
    f_res = float(np.abs(force).max(initial=0.0))
    return EquilibriumCheck(p_res <= tol_p and f_res <= tol_f, p_res, f_res)


@dataclass(frozen=True)
class IntegratorSettings:
    dt: float = 1e-3
    t_max: float = 100.0
    output_interval: float = 0.01
    tol_p: float = 1e-6
    tol_f: float = 1e-6
    # reject and halve steps that raise H by more than eps_int
    energy_guard: bool = False
    eps_int: float = 1e-8
    dt_min: float = 1e-9

    def __post_init__(self):
        for name in ("dt", "t_max", "output_interval", "tol_p", "tol_f", "eps_int", "dt_min"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")
        ratio = self.output_interval / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
            raise ValueError(
                f"output_interval {self.output_interval} is not a multiple of dt {self.dt}"
            )
        if self.dt_min > self.dt:
            raise ValueError("dt_min exceeds dt")

    @property
    def steps_per_sample(self) -> int:
        return int(round(self.output_interval / self.dt))

    @property
    def max_samples(self) -> int:
        return int(math.ceil(self.t_max / self.output_interval - 1e-9))


@dataclass
class Trajectory:
    """Time samples of a simulation; row k of every array belongs to ``t[k]``."""

    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    distances: np.ndarray
    H: np.ndarray
    u: np.ndarray
    termination: str
    settings: IntegratorSettings
    integrator: str = "rk4"
    steps: int = 0
    halvings: int = 0
    # largest H(t_{k+1}) - H(t_k) over every integration step taken
    max_step_increase: float = -math.inf
    message: str = ""

    def __len__(self):
        return len(self.t)

    @property
    def converged(self) -> bool:
        return self.termination == CONVERGED

    def state(self, k: int, graph: ConstraintGraph) -> NetworkState:
        return NetworkState.from_positions(graph, self.q[k], self.p[k])

    def final_state(self, graph: ConstraintGraph) -> NetworkState:
        return self.state(-1, graph)

    @property
    def u_norm(self) -> np.ndarray:
        return np.linalg.norm(self.u, axis=1)

    def constraint_flags(self, couplings) -> np.ndarray:
        """Per sample and edge: True while |z_j| < rc."""
        cs = as_coupling_set(couplings)
        return self.distances < cs.critical_distances[None, :]

    def bound(self, graph: ConstraintGraph) -> float:
        """max_t |(z; p)|, a witness for boundedness of the trajectory."""
        z = self.q @ graph.incidence.expanded.T
        return float(np.sqrt((z * z).sum(axis=1) + (self.p * self.p).sum(axis=1)).max())


class _ClosedLoopIntegrator:
    """Fixed-step RK4 on (q, p) backed by the compiled kernels.

    A step that leaves a barrier domain (or, with the energy guard on, raises
    H by more than eps_int) is redone as two half steps, recursively, down to
    ``dt_min``.
    """

    def __init__(self, graph: ConstraintGraph, couplings: CouplingSet, settings: IntegratorSettings):
        self.settings = settings
        tails = np.array([a for a, _ in graph.edges], dtype=np.int64)
        heads = np.array([b for _, b in graph.edges], dtype=np.int64)
        self.args = (tails, heads, graph.dimension) + couplings.kernel_args()
        self.halvings = 0
        self.max_increase = -math.inf

    def energy(self, q, p):
        status, H = _kernels.energy(q, p, *self.args[:-1])
        self._raise(status)
        return H

    def _raise(self, status):
        if status == _kernels.SINGULAR:
            raise SingularConfiguration("an edge with positive rest length collapsed to a point")
        if status == _kernels.DOMAIN:
            raise DomainViolation("an edge reached its critical distance")

    def _try(self, q, p, H, h):
        q_new = np.empty_like(q)
        p_new = np.empty_like(p)
        status = _kernels.rk4_step(q, p, h, *self.args, q_new, p_new)
        if status != _kernels.OK:
            return status, None, None, H
        status, H_new = _kernels.energy(q_new, p_new, *self.args[:-1])
        if status == _kernels.OK and self.settings.energy_guard and H_new > H + self.settings.eps_int:
            status = _kernels.ENERGY
        return status, q_new, p_new, H_new

    def advance(self, q, p, H, h):
        status, q_new, p_new, H_new = self._try(q, p, H, h)
        if status == _kernels.OK:
            self.max_increase = max(self.max_increase, H_new - H)
            return q_new, p_new, H_new
        if status == _kernels.SINGULAR:
            self._raise(status)
        if 0.5 * h < self.settings.dt_min:
            raise DomainViolation(
                f"step rejected down to dt_min = {self.settings.dt_min} "
                + ("(energy guard)" if status == _kernels.ENERGY else "near a critical distance")
            )
        self.halvings += 1
        q, p, H = self.advance(q, p, H, 0.5 * h)
        return self.advance(q, p, H, 0.5 * h)

    def run(self, q, p, H, nsteps):
        """Advance ``nsteps`` steps of size dt in place on copies; returns (q, p, H)."""
        q = q.copy()
        p = p.copy()
        s = self.settings
        remaining = nsteps
        while remaining:
            status, done, H, inc = _kernels.run_steps(
                q, p, H, s.dt, remaining, s.energy_guard, s.eps_int, *self.args
            )
            self.max_increase = max(self.max_increase, inc)
            remaining -= done
            if status == _kernels.OK:
                break
            try:
                q, p, H = self.advance(q, p, H, s.dt)
            except (DomainViolation, SingularConfiguration) as exc:
                # last accepted state, so the caller can keep it as a final sample
                exc.last_state = (q, p, nsteps - remaining)
                raise
            remaining -= 1
        return q, p, H


def check_feasible(graph, couplings, q) -> None:
    """Reject a start with some edge outside its spring's domain or coincident."""
    cs = as_coupling_set(couplings)
    z = graph.incidence.expanded @ np.asarray(q, dtype=float).reshape(-1)
    lengths = cs.lengths(z)
    outside = np.flatnonzero(lengths > cs.domain_radii)
    if outside.size:
        j = int(outside[0])
        a, b = graph.edges[j]
        raise InfeasibleInitialCondition(
            f"edge {j + 1} ({a + 1}, {b + 1}) starts at length {lengths[j]:.6g}, "
            f"beyond domain radius {cs.domain_radii[j]:.6g} (critical distance "
            f"{cs.critical_distances[j]:.6g})",
            field=f"edges[{j}]",
        )
    coincident = np.flatnonzero((lengths < 1e-12) & (cs.rest_lengths > 0))
    if coincident.size:
        j = int(coincident[0])
        raise InfeasibleInitialCondition(
            f"edge {j + 1} starts with coincident endpoints", field=f"edges[{j}]"
        )


def simulate(graph, couplings, q0, p0=None, settings: IntegratorSettings | None = None) -> Trajectory:
    """Integrate the closed loop from (q0, p0) with fixed-step RK4.

    Stops at the first output sample that passes :func:`detect_equilibrium`,
    at ``t_max``, or when a domain violation / singular configuration cannot
    be resolved by step halving.
    """
    settings = settings or IntegratorSettings()
    cs = as_coupling_set(couplings)
    q = np.asarray(q0, dtype=float).reshape(-1).copy()
    p = np.zeros_like(q) if p0 is None else np.asarray(p0, dtype=float).reshape(-1).copy()
    check_feasible(graph, cs, q)

    integ = _ClosedLoopIntegrator(graph, cs, settings)
    Bbar = graph.incidence.expanded
    BbarT = Bbar.T
    rows = {"t": [], "q": [], "p": [], "d": [], "H": [], "u": []}

    def record(t, q, p):
        z = Bbar @ q
        dHdz = cs.gradient(z)
        u = -(BbarT @ (dHdz + cs.apply_damping(Bbar @ p)))
        rows["t"].append(t)
        rows["q"].append(q.copy())
        rows["p"].append(p.copy())
        rows["d"].append(cs.lengths(z))
        rows["H"].append(0.5 * float(p @ p) + cs.energy(z))
        rows["u"].append(u)
        force = BbarT @ dHdz
        return (np.abs(p).max() <= settings.tol_p and np.abs(force).max() <= settings.tol_f)

    def sample_time(step):
        # strip the float noise of step * dt so tables print clean times
        return round(step * settings.dt, 12)

    record(0.0, q, p)
    H = integ.energy(q, p)
    per_sample = settings.steps_per_sample
    termination, message = T_MAX_REACHED, ""
    step = 0
    try:
        for k in range(1, settings.max_samples + 1):
            q, p, H = integ.run(q, p, H, per_sample)
            step += per_sample
            if record(sample_time(step), q, p):
                termination = CONVERGED
                break
    except (DomainViolation, SingularConfiguration) as exc:
        single = isinstance(exc, SingularConfiguration)
        termination, message = (SINGULAR if single else DOMAIN_VIOLATION), str(exc)
        q_last, p_last, done = getattr(exc, "last_state", (q, p, 0))
        if done:
            step += done
            record(sample_time(step), q_last, p_last)
        log.warning("aborting after step %d: %s", step, exc)

    return Trajectory(
        t=np.array(rows["t"]),
        q=np.array(rows["q"]),
        p=np.array(rows["p"]),
        distances=np.array(rows["d"]),
        H=np.array(rows["H"]),
        u=np.array(rows["u"]),
        termination=termination,
        settings=settings,
        steps=step,
        halvings=integ.halvings,
        max_step_increase=integ.max_increase,
        message=message,
    )


@dataclass
class PortRecord:
    """Samples of a run driven through the (u, y = p) port.

    ``supply`` is the running integral of u^T y, integrated as an extra RK4
    state so it carries the same truncation order as the trajectory.
    """

    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    H: np.ndarray
    kinetic: np.ndarray
    supply: np.ndarray

    def margin(self, storage: str = "kinetic") -> np.ndarray:
        """supply(t) - (V(t) - V(0)); nonnegative for a passive map."""
        V = self.kinetic if storage == "kinetic" else self.H
        return self.supply - (V - V[0])


def simulate_port(graph, couplings, q0, p0, input_fn: Callable[[float], np.ndarray],
                  t_final: float, dt: float = 1e-3, closed_loop: bool = False) -> PortRecord:
    """Drive the network with an external input u(t) and log storage vs. supply.

    With ``closed_loop=False`` this is the open loop dp/dt = u. With
    ``closed_loop=True`` the input is added on top of the distributed control
    law, which makes the full Hamiltonian a valid storage function.
    """
    cs = as_coupling_set(couplings)
    Bbar = graph.incidence.expanded
    q = np.asarray(q0, dtype=float).reshape(-1).copy()
    p = np.asarray(p0, dtype=float).reshape(-1).copy()

    def rhs(t, q, p):
        u = np.asarray(input_fn(t), dtype=float)
        a = u.copy()
        if closed_loop:
            a -= Bbar.T @ (cs.gradient(Bbar @ q) + cs.apply_damping(Bbar @ p))
        return p, a, float(u @ p)

    def energy(q, p):
        # the open loop may drive an edge past its barrier; H is undefined there
        try:
            return 0.5 * float(p @ p) + cs.energy(Bbar @ q)
        except DomainViolation:
            if closed_loop:
                raise
            return math.nan

    steps = int(round(t_final / dt))
    t_hist, q_hist, p_hist, H_hist, K_hist, s_hist = [0.0], [q.copy()], [p.copy()], [energy(q, p)], [0.5 * p @ p], [0.0]
    s = 0.0
    for k in range(steps):
        t = k * dt
        k1 = rhs(t, q, p)
        k2 = rhs(t + dt / 2, q + dt / 2 * k1[0], p + dt / 2 * k1[1])
        k3 = rhs(t + dt / 2, q + dt / 2 * k2[0], p + dt / 2 * k2[1])
        k4 = rhs(t + dt, q + dt * k3[0], p + dt * k3[1])
        q = q + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        p = p + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        s = s + dt / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        t_hist.append((k + 1) * dt)
        q_hist.append(q.copy())
        p_hist.append(p.copy())
        H_hist.append(energy(q, p))
        K_hist.append(0.5 * float(p @ p))
        s_hist.append(s)
    return PortRecord(np.array(t_hist), np.array(q_hist), np.array(p_hist), np.array(H_hist),
                      np.array(K_hist), np.array(s_hist))
