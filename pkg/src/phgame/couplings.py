"""Virtual spring-damper couplings attached to graph edges.

Two spring models are supported, both functions of the edge length L = |z_j|
with rest length r:

* ``constant``: h(L) = k/2 (L - r)^2
* ``barrier``:  h(L) = k1 (L - r)^2               for L <= r
                h(L) = k2 (L - r)^2 / (rc - L)    for r < L < rc

The barrier potential diverges at the critical distance rc, which is what
keeps a feasible start feasible along dissipative trajectories.

Scalar helpers (:func:`spring_potential`, :func:`spring_gradient`,
:func:`edge_force`) act on one edge. :class:`CouplingSet` evaluates all edges
of a network at once and is what the integrator uses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainViolation, SingularConfiguration

# barrier evaluations closer than this to rc are domain violations
POLE_GUARD = 1e-9
# edge lengths below this count as coincident agents
SINGULAR_LENGTH = 1e-12
# default feasibility radius below rc when none is given
DOMAIN_MARGIN = 1e-6

CONSTANT = "constant"
BARRIER = "barrier"


@dataclass(frozen=True)
class SpringModel:
    kind: str
    rest_length: float
    k: float = 0.0
    k1: float = 0.0
    k2: float = 0.0
    critical_distance: float = math.inf
    domain_radius: float | None = None

    def __post_init__(self):
        if self.kind not in (CONSTANT, BARRIER):
            raise ValueError(f"unknown spring model {self.kind!r}")
        rc = self.critical_distance
        if not rc > 0:
            raise ValueError(f"critical distance must be positive, got {rc}")
        if not 0 <= self.rest_length <= rc:
            raise ValueError(f"rest length {self.rest_length} outside [0, {rc}]")
        if self.kind == CONSTANT:
            if not self.k > 0:
                raise ValueError(f"stiffness must be positive, got {self.k}")
        else:
            if not (self.k1 > 0 and self.k2 > 0):
                raise ValueError(f"barrier stiffnesses must be positive, got {self.k1}, {self.k2}")
            if not math.isfinite(rc):
                raise ValueError("barrier spring needs a finite critical distance")
            if self.rest_length >= rc:
                raise ValueError("barrier rest length must lie strictly below the critical distance")
        if self.domain_radius is None:
            radius = rc - DOMAIN_MARGIN if self.kind == BARRIER else rc
            object.__setattr__(self, "domain_radius", radius)
        if not self.domain_radius > 0:
            raise ValueError(f"domain radius must be positive, got {self.domain_radius}")
        if self.kind == BARRIER and self.domain_radius >= rc:
            raise ValueError("barrier domain radius must be below the critical distance")

    @classmethod
    def constant(cls, k, rest_length, critical_distance=math.inf, domain_radius=None):
        return cls(CONSTANT, rest_length, k=k, critical_distance=critical_distance,
                   domain_radius=domain_radius)

    @classmethod
    def barrier(cls, k1, k2, rest_length, critical_distance, domain_radius=None):
        return cls(BARRIER, rest_length, k1=k1, k2=k2, critical_distance=critical_distance,
                   domain_radius=domain_radius)


@dataclass(frozen=True)
class CouplingSpec:
    spring: SpringModel
    damping: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        D = np.asarray(self.damping, dtype=float)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise ValueError(f"damping must be a square matrix, got shape {D.shape}")
        if not np.allclose(D, D.T, rtol=0, atol=1e-12 * max(1.0, np.abs(D).max())):
            raise ValueError("damping matrix is not symmetric")
        if np.linalg.eigvalsh(D).min() <= 0:
            raise ValueError("damping matrix is not positive definite")
        object.__setattr__(self, "damping", tuple(tuple(float(v) for v in row) for row in D))

    @classmethod
    def scalar(cls, spring: SpringModel, d: float, dimension: int) -> "CouplingSpec":
        return cls(spring, tuple(tuple(d if a == b else 0.0 for b in range(dimension))
                                 for a in range(dimension)))

    @property
    def damping_matrix(self) -> np.ndarray:
        return np.array(self.damping)

    @property
    def dimension(self) -> int:
        return len(self.damping)


def _check_barrier(spring: SpringModel, length: float):
    if length >= spring.critical_distance - POLE_GUARD:
        raise DomainViolation(
            f"edge length {length!r} reaches the critical distance {spring.critical_distance}"
        )


def _branch_potential(spring: SpringModel, length: float, inner: bool) -> float:
    e = length - spring.rest_length
    if spring.kind == CONSTANT:
        return 0.5 * spring.k * e * e
    if inner:
        return spring.k1 * e * e
    return spring.k2 * e * e / (spring.critical_distance - length)


def _branch_slope_factor(spring: SpringModel, length: float, inner: bool) -> float:
    """phi with dh/dL = phi * (L - r)."""
    if spring.kind == CONSTANT:
        return spring.k
    if inner:
        return 2.0 * spring.k1
    gap = spring.critical_distance - length
    e = length - spring.rest_length
    return spring.k2 * (2.0 / gap + e / (gap * gap))


def _length(z_j) -> float:
    # same reduction as CouplingSet.lengths: near the pole, 1/(rc - L) turns a
    # one-ulp difference in L into visible disagreement between the two paths
    z_j = np.asarray(z_j, dtype=float)
    return float(np.sqrt(np.einsum("i,i->", z_j, z_j)))


def spring_potential(spring: SpringModel, z_j) -> float:
    length = _length(z_j)
    if spring.kind == BARRIER:
        _check_barrier(spring, length)
    return _branch_potential(spring, length, length <= spring.rest_length)


def spring_gradient(spring: SpringModel, z_j) -> np.ndarray:
    """Gradient of the spring potential with respect to z_j."""
    z_j = np.asarray(z_j, dtype=float)
    length = _length(z_j)
    if spring.kind == BARRIER:
        _check_barrier(spring, length)
    r = spring.rest_length
    if r == 0.0:
        ratio = 1.0
    elif length < SINGULAR_LENGTH:
        raise SingularConfiguration(
            f"edge direction undefined: |z| = {length!r} with rest length {r}"
        )
    else:
        ratio = 1.0 - r / length
    return _branch_slope_factor(spring, length, length <= r) * ratio * z_j


def edge_force(coupling: CouplingSpec, z_j, w_j) -> np.ndarray:
    """Spring gradient plus damper force for one edge."""
    return spring_gradient(coupling.spring, z_j) + coupling.damping_matrix @ np.asarray(w_j, float)


@dataclass(frozen=True)
class CouplingSet:
    """Per-edge couplings of a network, packed into arrays for batch evaluation."""

    specs: tuple[CouplingSpec, ...]
    _arrays: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        specs = tuple(self.specs)
        object.__setattr__(self, "specs", specs)
        if not specs:
            raise ValueError("no couplings given")
        dims = {c.dimension for c in specs}
        if len(dims) != 1:
            raise ValueError(f"couplings disagree on dimension: {sorted(dims)}")
        (n,) = dims
        springs = [c.spring for c in specs]
        barrier = np.array([s.kind == BARRIER for s in springs])
        arrays = {
            "n": n,
            "barrier": barrier,
            "any_barrier": bool(barrier.any()),
            "rest": np.array([s.rest_length for s in springs]),
            "k": np.array([s.k for s in springs]),
            "k1": np.array([s.k1 for s in springs]),
            "k2": np.array([s.k2 for s in springs]),
            "rc": np.array([s.critical_distance for s in springs]),
            "radius": np.array([s.domain_radius for s in springs]),
        }
        # inf - inf would poison the constant-spring lanes of the barrier formula
        arrays["rc_safe"] = np.where(barrier, arrays["rc"], 2.0)
        arrays["rest_positive"] = arrays["rest"] > 0
        arrays["any_rest_positive"] = bool(arrays["rest_positive"].any())
        arrays["all_rest_positive"] = bool(arrays["rest_positive"].all())
        arrays["constant"] = ~barrier
        arrays["all_constant"] = not barrier.any()
        arrays["all_barrier"] = bool(barrier.all())
        arrays["half_k"] = 0.5 * arrays["k"]
        arrays["two_k1"] = 2.0 * arrays["k1"]
        arrays["pole"] = np.where(barrier, arrays["rc"] - POLE_GUARD, np.inf)
        D = np.zeros((len(specs) * n, len(specs) * n))
        for j, c in enumerate(specs):
            D[j * n:(j + 1) * n, j * n:(j + 1) * n] = c.damping_matrix
        arrays["damping"] = D
        arrays["scalar_damping"] = _scalar_damping(specs, n)
        object.__setattr__(self, "_arrays", arrays)

    @classmethod
    def uniform(cls, coupling: CouplingSpec, num_edges: int) -> "CouplingSet":
        return cls((coupling,) * num_edges)

    def __len__(self):
        return len(self.specs)

    def __getitem__(self, j) -> CouplingSpec:
        return self.specs[j]

    @property
    def dimension(self) -> int:
        return self._arrays["n"]

    @property
    def rest_lengths(self) -> np.ndarray:
        return self._arrays["rest"]

    @property
    def critical_distances(self) -> np.ndarray:
        return self._arrays["rc"]

    @property
    def domain_radii(self) -> np.ndarray:
        return self._arrays["radius"]

    @property
    def damping(self) -> np.ndarray:
        """Block-diagonal damping matrix diag(D_j), shape (nM, nM)."""
        return self._arrays["damping"]

    def apply_damping(self, w: np.ndarray) -> np.ndarray:
        d = self._arrays["scalar_damping"]
        if d is not None:
            return d * w
        return self._arrays["damping"] @ w

    def lengths(self, z: np.ndarray) -> np.ndarray:
        """Edge lengths for stacked z of shape (..., nM); result has shape (..., M)."""
        z = np.asarray(z, dtype=float)
        zz = z.reshape(z.shape[:-1] + (len(self.specs), -1))
        return np.sqrt(np.einsum("...ij,...ij->...i", zz, zz))

    def _guard(self, lengths):
        a = self._arrays
        if a["any_barrier"] and (lengths >= a["pole"]).any():
            idx = np.flatnonzero((lengths >= a["pole"]).reshape(-1, len(self.specs)).any(axis=0))
            raise DomainViolation(
                f"edges {[int(j) + 1 for j in idx]} reached their critical distance", idx
            )

    def potentials(self, z: np.ndarray) -> np.ndarray:
        """Per-edge spring energies for stacked z (..., nM), batched over leading axes."""
        a = self._arrays
        L = self.lengths(z)
        self._guard(L)
        e = L - a["rest"]
        e2 = e * e
        if a["all_constant"]:
            return a["half_k"] * e2
        h = np.where(L <= a["rest"], a["k1"] * e2, a["k2"] * e2 / (a["rc_safe"] - L))
        if not a["all_barrier"]:
            h = np.where(a["constant"], a["half_k"] * e2, h)
        return h

    def energy(self, z: np.ndarray) -> float:
        return float(self.potentials(z).sum())

    def subset(self, edges) -> "CouplingSet":
        """Couplings of the given edges, in that order (memoized)."""
        key = tuple(int(j) for j in edges)
        memo = self._arrays.setdefault("subsets", {})
        if key not in memo:
            memo[key] = CouplingSet(tuple(self.specs[j] for j in key))
        return memo[key]

    def energies(self, z: np.ndarray) -> np.ndarray:
        """Total spring energy for each row of a batch of stacked z."""
        return self.potentials(z).sum(axis=-1)

    def gradient(self, z: np.ndarray) -> np.ndarray:
        """Stacked spring gradients dH/dz (length nM)."""
        a = self._arrays
        zz = np.asarray(z, dtype=float).reshape(len(self.specs), -1)
        L = np.sqrt(np.einsum("ij,ij->i", zz, zz))
        self._guard(L)
        rest = a["rest"]
        e = L - rest
        # dh/dL = phi * (L - r)
        if a["all_constant"]:
            phi = a["k"]
        else:
            gap = a["rc_safe"] - L
            phi = a["k2"] * (2.0 + e / gap) / gap
            inner = L <= rest
            phi[inner] = a["two_k1"][inner]
            if not a["all_barrier"]:
                phi[a["constant"]] = a["k"][a["constant"]]
        if a["any_rest_positive"] and L.min() < SINGULAR_LENGTH:
            singular = a["rest_positive"] & (L < SINGULAR_LENGTH)
            if singular.any():
                idx = np.flatnonzero(singular)
                raise SingularConfiguration(
                    f"edges {[int(j) + 1 for j in idx]} have coincident endpoints", idx
                )
        if a["all_rest_positive"]:
            ratio = e / L
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(a["rest_positive"], e / L, 1.0)
        return ((phi * ratio)[:, None] * zz).reshape(-1)

    def kernel_args(self):
        """Packed per-edge parameters in the order the compiled kernels expect."""
        a = self._arrays
        n = a["n"]
        blocks = np.array([c.damping_matrix for c in self.specs]).reshape(len(self.specs), n, n)
        return (a["barrier"], a["rest"], a["k"], a["k1"], a["k2"], a["rc_safe"], a["pole"], blocks)

    def forces(self, z: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Stacked edge forces f = dH/dz + D w."""
        return self.gradient(z) + self.apply_damping(w)

    def feasible(self, z: np.ndarray) -> np.ndarray:
        """Per-edge flag: length within the spring's domain radius."""
        return self.lengths(z) <= self._arrays["radius"]


def _scalar_damping(specs: Sequence[CouplingSpec], n: int):
    """Common scalar d when every damping matrix equals d * I, else None."""
    first = specs[0].damping_matrix
    d = first[0, 0]
    if not np.array_equal(first, d * np.eye(n)):
        return None
    for c in specs[1:]:
        if not np.array_equal(c.damping_matrix, first):
            return None
    return float(d)


def as_coupling_set(couplings) -> CouplingSet:
    if isinstance(couplings, CouplingSet):
        return couplings
    return CouplingSet(tuple(couplings))
