"""Scenario files: parsing, validation, defaults and serialization.

A scenario is a JSON document (``format_version`` 1). Vertex indices are
1-based. Minimal example::

    {
      "format_version": 1,
      "name": "two_agent_linear",
      "dimension": 1,
      "agents": [{"q": [0.0]}, {"q": [2.0]}],
      "edges": [[1, 2]],
      "coupling": {
        "spring": {"model": "constant", "k": 1.0, "rest_length": 1.0},
        "damping": 1.5
      }
    }

Every omitted field is filled from the defaults below and written back out
by :func:`serialize_scenario`, so a serialized scenario is fully explicit.
See ``docs/scenario_format.md`` for the full grammar.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, fields, replace
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

from .couplings import BARRIER, CONSTANT, CouplingSet, CouplingSpec, SpringModel
from .dynamics import IntegratorSettings, check_feasible
from .errors import GraphError, InfeasibleInitialCondition, ScenarioError
from .game import DecisionBox, default_decision_box, local_objective, scaled_objective
from .graph import ConstraintGraph

FORMAT_VERSION = 1
DEFAULT_SEED = 0

_TOP_LEVEL = {
    "format_version", "name", "description", "dimension", "agents", "edges", "coupling",
    "integrator", "decision_box", "seed", "objective", "provenance",
}


@dataclass(frozen=True)
class Scenario:
    name: str
    dimension: int
    positions: tuple[tuple[float, ...], ...]
    velocities: tuple[tuple[float, ...], ...]
    edges: tuple[tuple[int, int], ...]
    couplings: tuple[CouplingSpec, ...]
    integrator: IntegratorSettings = IntegratorSettings()
    seed: int = DEFAULT_SEED
    # shared (lo, hi) bounds for every position / velocity entry of every player
    box_position: tuple[float, float] | None = None
    box_velocity: tuple[float, float] | None = None
    # negative control: {"player": i, "edge": j, "scale": s}, 1-based
    objective: dict | None = None
    description: str = ""
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        check_feasible(self.graph, self.coupling_set, self.q0)
        if self.box_position is None or self.box_velocity is None:
            box = default_decision_box(self.graph, self.coupling_set, self.q0, self.p0,
                                       self.integrator.t_max)
            nN = self.num_agents * self.dimension
            if self.box_position is None:
                object.__setattr__(self, "box_position",
                                   (float(box.lower[:nN].min()), float(box.upper[:nN].max())))
            if self.box_velocity is None:
                object.__setattr__(self, "box_velocity",
                                   (float(box.lower[nN:].min()), float(box.upper[nN:].max())))

    @property
    def num_agents(self) -> int:
        return len(self.positions)

    @cached_property
    def graph(self) -> ConstraintGraph:
        return ConstraintGraph.from_one_based(self.num_agents, self.edges, self.dimension)

    @cached_property
    def coupling_set(self) -> CouplingSet:
        return CouplingSet(self.couplings)

    @property
    def q0(self) -> np.ndarray:
        return np.array(self.positions, dtype=float).reshape(-1)

    @property
    def p0(self) -> np.ndarray:
        return np.array(self.velocities, dtype=float).reshape(-1)

    @property
    def box(self) -> DecisionBox:
        return DecisionBox.uniform(self.graph, self.box_position, self.box_velocity)

    @property
    def objective_fn(self):
        if self.objective is None:
            return local_objective
        return scaled_objective(self.objective["player"] - 1, self.objective["edge"] - 1,
                                self.objective["scale"])

    def with_settings(self, **overrides) -> "Scenario":
        """Copy with integrator settings replaced (None values are ignored)."""
        overrides = {k: v for k, v in overrides.items() if v is not None}
        if not overrides:
            return self
        return replace(self, integrator=replace(self.integrator, **overrides))

    def with_initial(self, q, p=None) -> "Scenario":
        n = self.dimension
        q = np.asarray(q, dtype=float).reshape(-1, n)
        p = np.zeros_like(q) if p is None else np.asarray(p, dtype=float).reshape(-1, n)
        return replace(self, positions=_rows(q), velocities=_rows(p),
                       box_position=None, box_velocity=None)


def _rows(a) -> tuple[tuple[float, ...], ...]:
    return tuple(tuple(float(v) for v in row) for row in np.asarray(a, dtype=float))


_STEP = re.compile(r"([^.\[\]]+)|\[(\d+)\]")


def _skip_string(text: str, pos: int) -> int:
    """Index just past the JSON string starting at ``pos``."""
    pos += 1
    while text[pos] != '"':
        pos += 2 if text[pos] == "\\" else 1
    return pos + 1


def _element_start(text: str, pos: int, index: int) -> int | None:
    """Start of element ``index`` of the JSON array whose '[' sits at ``pos``."""
    depth, count, pos = 0, 0, pos + 1
    expect = True
    while pos < len(text):
        c = text[pos]
        if c == '"':
            if depth == 0 and expect:
                if count == index:
                    return pos
                expect = False
            pos = _skip_string(text, pos)
            continue
        if c in "[{":
            if depth == 0 and expect:
                if count == index:
                    return pos
                expect = False
            depth += 1
        elif c in "]}":
            if depth == 0:
                return None
            depth -= 1
        elif c == "," and depth == 0:
            count += 1
            expect = True
        elif not c.isspace() and depth == 0 and expect:
            if count == index:
                return pos
            expect = False
        pos += 1
    return None


def _line_of(text: str | None, path: str) -> int | None:
    """Best-effort source line of a dotted/indexed path such as ``agents[2].q``.

    Falls back to the deepest prefix of the path that can be located.
    """
    if not text:
        return None
    pos, found = 0, None
    for key, index in _STEP.findall(path):
        if key:
            m = re.compile(r'"%s"\s*:\s*' % re.escape(key)).search(text, pos)
            if m is None:
                break
            pos = m.end()
        else:
            if pos >= len(text) or text[pos] != "[":
                break
            start = _element_start(text, pos, int(index))
            if start is None:
                break
            pos = start
        found = pos
    return None if found is None else text.count("\n", 0, found) + 1


class _Parser:
    def __init__(self, text: str | None):
        self.text = text

    def fail(self, message, path, key=None):
        line = _line_of(self.text, path)
        if line is None and key is not None:
            line = _line_of(self.text, key)
        raise ScenarioError(message, field=path, line=line)

    def number(self, value, path, positive=False, nonneg=False):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(f"expected a number, got {value!r}", path)
        value = float(value)
        if not math.isfinite(value):
            self.fail(f"expected a finite number, got {value!r}", path)
        if positive and value <= 0:
            self.fail(f"must be positive, got {value!r}", path)
        if nonneg and value < 0:
            self.fail(f"must be nonnegative, got {value!r}", path)
        return value

    def vector(self, value, n, path):
        if not isinstance(value, list) or len(value) != n:
            self.fail(f"expected a list of {n} numbers, got {value!r}", path)
        return tuple(self.number(v, f"{path}[{c}]") for c, v in enumerate(value))

    def spring(self, data, path) -> SpringModel:
        if not isinstance(data, dict):
            self.fail("expected an object", path)
        model = data.get("model")
        allowed = {"model", "rest_length", "critical_distance", "domain_radius"}
        try:
            if model == CONSTANT:
                allowed |= {"k"}
                self._unknown(data, allowed, path)
                rc = data.get("critical_distance")
                return SpringModel.constant(
                    self.number(data.get("k"), f"{path}.k", positive=True),
                    self.number(data.get("rest_length"), f"{path}.rest_length", nonneg=True),
                    math.inf if rc is None else self.number(rc, f"{path}.critical_distance", positive=True),
                    self._optional(data, "domain_radius", path),
                )
            if model == BARRIER:
                allowed |= {"k1", "k2"}
                self._unknown(data, allowed, path)
                return SpringModel.barrier(
                    self.number(data.get("k1"), f"{path}.k1", positive=True),
                    self.number(data.get("k2"), f"{path}.k2", positive=True),
                    self.number(data.get("rest_length"), f"{path}.rest_length", nonneg=True),
                    self.number(data.get("critical_distance"), f"{path}.critical_distance", positive=True),
                    self._optional(data, "domain_radius", path),
                )
        except ValueError as exc:
            if isinstance(exc, ScenarioError):
                raise
            self.fail(str(exc), path)
        self.fail(f"unknown spring model {model!r} (expected 'constant' or 'barrier')", f"{path}.model")

    def _optional(self, data, key, path):
        value = data.get(key)
        return None if value is None else self.number(value, f"{path}.{key}", positive=True)

    def _unknown(self, data, allowed, path):
        extra = sorted(set(data) - allowed)
        if extra:
            self.fail(f"unknown keys {extra}", path, extra[0])

    def coupling(self, data, n, path) -> CouplingSpec:
        if not isinstance(data, dict):
            self.fail("expected an object with 'spring' and 'damping'", path)
        self._unknown(data, {"spring", "damping"}, path)
        spring = self.spring(data.get("spring"), f"{path}.spring")
        damping = data.get("damping")
        try:
            if isinstance(damping, list):
                rows = [self.vector(row, n, f"{path}.damping[{a}]") for a, row in enumerate(damping)]
                if len(rows) != n:
                    self.fail(f"damping matrix must be {n}x{n}", f"{path}.damping")
                return CouplingSpec(spring, tuple(rows))
            return CouplingSpec.scalar(spring, self.number(damping, f"{path}.damping", positive=True), n)
        except ValueError as exc:
            if isinstance(exc, ScenarioError):
                raise
            self.fail(str(exc), f"{path}.damping")


def parse_scenario(data: dict, text: str | None = None) -> Scenario:
    """Validate a decoded scenario document and apply defaults."""
    P = _Parser(text)
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    extra = sorted(set(data) - _TOP_LEVEL)
    if extra:
        P.fail(f"unknown top-level keys {extra}", extra[0])
    version = data.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        P.fail(f"unsupported format_version {version!r} (this build reads {FORMAT_VERSION})", "format_version")
    name = data.get("name")
    if not isinstance(name, str) or not name:
        P.fail("missing scenario name", "name")
    n = data.get("dimension", 2)
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        P.fail(f"dimension must be a positive integer, got {n!r}", "dimension")

    agents = data.get("agents")
    if not isinstance(agents, list) or len(agents) < 2:
        P.fail("need a list of at least two agents", "agents")
    positions, velocities = [], []
    for i, agent in enumerate(agents):
        path = f"agents[{i}]"
        if not isinstance(agent, dict) or "q" not in agent:
            P.fail("each agent needs an initial position 'q'", path, "agents")
        P._unknown(agent, {"q", "v"}, path)
        positions.append(P.vector(agent["q"], n, f"{path}.q"))
        velocities.append(P.vector(agent.get("v", [0.0] * n), n, f"{path}.v"))

    default = data.get("coupling")
    default_spec = None if default is None else P.coupling(default, n, "coupling")
    edges, couplings = [], []
    raw_edges = data.get("edges")
    if not isinstance(raw_edges, list) or not raw_edges:
        P.fail("need a non-empty list of edges", "edges")
    for j, entry in enumerate(raw_edges):
        path = f"edges[{j}]"
        spec = default_spec
        if isinstance(entry, dict):
            P._unknown(entry, {"edge", "coupling"}, path)
            pair = entry.get("edge")
            if "coupling" in entry:
                spec = P.coupling(entry["coupling"], n, f"{path}.coupling")
        else:
            pair = entry
        if (not isinstance(pair, list) or len(pair) != 2
                or not all(isinstance(v, int) and not isinstance(v, bool) for v in pair)):
            P.fail(f"edge must be a pair of 1-based vertex indices, got {pair!r}", path, "edges")
        if spec is None:
            P.fail("edge has no coupling and no default 'coupling' is given", path, "edges")
        edges.append((pair[0], pair[1]))
        couplings.append(spec)
    try:
        graph = ConstraintGraph.from_one_based(len(positions), edges, n)
    except GraphError as exc:
        P.fail(str(exc), "edges")

    integ = data.get("integrator", {})
    if not isinstance(integ, dict):
        P.fail("expected an object", "integrator")
    known = {f.name for f in fields(IntegratorSettings)}
    extra = sorted(set(integ) - known)
    if extra:
        P.fail(f"unknown integrator keys {extra}", "integrator", extra[0])
    settings_kw = {}
    for key, value in integ.items():
        if key == "energy_guard":
            if not isinstance(value, bool):
                P.fail("expected true or false", "integrator.energy_guard", key)
            settings_kw[key] = value
        else:
            settings_kw[key] = P.number(value, f"integrator.{key}", positive=True)
    try:
        settings = IntegratorSettings(**settings_kw)
    except ValueError as exc:
        P.fail(str(exc), "integrator")

    seed = data.get("seed", DEFAULT_SEED)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        P.fail(f"seed must be a nonnegative integer, got {seed!r}", "seed")

    box_position = box_velocity = None
    box = data.get("decision_box")
    if box is not None:
        if not isinstance(box, dict):
            P.fail("expected an object with 'position' and 'velocity' intervals", "decision_box")
        P._unknown(box, {"position", "velocity"}, "decision_box")
        for key in ("position", "velocity"):
            if key in box:
                lo, hi = P.vector(box[key], 2, f"decision_box.{key}")
                if not lo < hi:
                    P.fail("interval needs lo < hi", f"decision_box.{key}", key)
                if key == "position":
                    box_position = (lo, hi)
                else:
                    box_velocity = (lo, hi)

    objective = data.get("objective")
    if objective is not None:
        if not isinstance(objective, dict) or set(objective) != {"player", "edge", "scale"}:
            P.fail("objective override needs exactly 'player', 'edge' and 'scale'", "objective")
        player, edge = objective["player"], objective["edge"]
        if not (isinstance(player, int) and 1 <= player <= len(positions)):
            P.fail(f"player {player!r} out of range", "objective.player", "player")
        if not (isinstance(edge, int) and 1 <= edge <= len(edges)):
            P.fail(f"edge {edge!r} out of range", "objective.edge", "edge")
        if player - 1 not in graph.edges[edge - 1]:
            P.fail(f"edge {edge} does not touch player {player}", "objective.edge", "edge")
        objective = {"player": player, "edge": edge,
                     "scale": P.number(objective["scale"], "objective.scale", positive=True)}

    description = data.get("description", "")
    provenance = data.get("provenance", {})
    if not isinstance(description, str):
        P.fail("expected a string", "description")
    if not isinstance(provenance, dict):
        P.fail("expected an object", "provenance")

    try:
        scenario = Scenario(
            name=name, dimension=n, positions=tuple(positions), velocities=tuple(velocities),
            edges=tuple(edges), couplings=tuple(couplings), integrator=settings, seed=seed,
            box_position=box_position, box_velocity=box_velocity, objective=objective,
            description=description, provenance=provenance,
        )
    except InfeasibleInitialCondition as exc:
        raise InfeasibleInitialCondition(exc.detail, field=exc.field,
                                         line=_line_of(text, exc.field)) from None
    if not scenario.box.contains(np.concatenate([scenario.q0, scenario.p0])):
        P.fail("initial state lies outside the decision box", "decision_box")
    return scenario


def parse_scenario_text(text: str, source: str = "<string>") -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{source}: {exc.msg} (column {exc.colno})", line=exc.lineno) from None
    return parse_scenario(data, text)


def bundled_names() -> list[str]:
    folder = resources.files("phgame") / "scenarios"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


def bundled_text(name: str) -> str:
    return (resources.files("phgame") / "scenarios" / f"{name}.json").read_text()


def load_scenario(path_or_name) -> Scenario:
    """Load a scenario from a file path or by bundled name (e.g. ``paper_sec5``)."""
    path = Path(path_or_name)
    if path.is_file():
        return parse_scenario_text(path.read_text(), str(path))
    name = str(path_or_name)
    if name in bundled_names():
        return parse_scenario_text(bundled_text(name), name)
    raise ScenarioError(f"no scenario file or bundled scenario named {name!r}")


def _spring_dict(s: SpringModel) -> dict:
    out = {"model": s.kind}
    if s.kind == CONSTANT:
        out["k"] = s.k
    else:
        out["k1"] = s.k1
        out["k2"] = s.k2
    out["rest_length"] = s.rest_length
    if math.isfinite(s.critical_distance):
        out["critical_distance"] = s.critical_distance
    if math.isfinite(s.domain_radius):
        out["domain_radius"] = s.domain_radius
    return out


def _coupling_dict(c: CouplingSpec) -> dict:
    D = c.damping_matrix
    scalar = D[0, 0]
    damping = scalar if np.array_equal(D, scalar * np.eye(len(D))) else [list(r) for r in c.damping]
    return {"spring": _spring_dict(c.spring), "damping": damping}


def scenario_to_dict(s: Scenario) -> dict:
    data = {"format_version": FORMAT_VERSION, "name": s.name}
    if s.description:
        data["description"] = s.description
    data["dimension"] = s.dimension
    data["seed"] = s.seed
    data["agents"] = [{"q": list(q), "v": list(v)} for q, v in zip(s.positions, s.velocities)]
    if len(set(s.couplings)) == 1:
        data["coupling"] = _coupling_dict(s.couplings[0])
        data["edges"] = [list(e) for e in s.edges]
    else:
        data["edges"] = [{"edge": list(e), "coupling": _coupling_dict(c)}
                         for e, c in zip(s.edges, s.couplings)]
    data["integrator"] = {f.name: getattr(s.integrator, f.name) for f in fields(IntegratorSettings)}
    data["decision_box"] = {"position": list(s.box_position), "velocity": list(s.box_velocity)}
    if s.objective is not None:
        data["objective"] = dict(s.objective)
    if s.provenance:
        data["provenance"] = s.provenance
    return data


def serialize_scenario(s: Scenario) -> str:
    """Fully explicit JSON text; floats use shortest round-trip repr."""
    text = json.dumps(scenario_to_dict(s), indent=2)
    # keep short numeric vectors on one line
    text = re.sub(r"\[\s+([^\[\]{}]*?)\s+\]",
                  lambda m: "[" + ", ".join(v.strip() for v in m.group(1).split(",")) + "]", text)
    return text + "\n"


def save_scenario(s: Scenario, path) -> Path:
    path = Path(path)
    path.write_text(serialize_scenario(s))
    return path
