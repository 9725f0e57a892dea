"""Scenario files and the built-in five-agent, three-topic scenarios.

A scenario is a YAML document::

    name: fig5
    agents: 5
    topics: 3
    edges: [[1, 2], [1, 3], [2, 3], [3, 4], [4, 5]]
    coupling:            # one entry per edge, matrices as row lists
      - edge: [1, 2]
        K: [[1, 1, 0], [1, 1, 0], [0, 0, 0]]
        anti: [[false, ...], ...]      # optional
    feedback: {mode: inverse, smoothing: sigmoid, k_e: 50, c0: 1, c1: 1, c2: 0, alpha: 0.5}
    initial: [[1, 2, 3], [2, 4, 4], ...]
    solver: {h: 0.001, t_f: 30, cluster_tol: 0.001, settle_tol: 1.0e-6, stride: 100}
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .core import CouplingSpec, FeedbackConfig, Topology, validate, validate_topology

SOLVER_DEFAULTS = {"h": 1e-3, "t_f": 20.0, "cluster_tol": 1e-3, "settle_tol": 1e-6, "stride": 100}


class ScenarioError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("\n".join(problems))


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    topology: Topology
    spec: CouplingSpec
    config: FeedbackConfig
    initial: np.ndarray
    h: float = 1e-3
    t_f: float = 20.0
    cluster_tol: float = 1e-3
    settle_tol: float = 1e-6
    stride: int = 100
    description: str = ""

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if f.name == "spec":
                same = len(a.gains) == len(b.gains) and all(
                    np.array_equal(x, y) for x, y in zip(a.gains + a.anti, b.gains + b.anti)
                )
            elif isinstance(a, np.ndarray):
                same = np.array_equal(a, b)
            else:
                same = a == b
            if not same:
                return False
        return True

    def with_solver(self, **overrides) -> "Scenario":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def _line_map(text: str) -> dict[tuple, int]:
    """Map key paths in a YAML document to 1-based line numbers."""
    out: dict[tuple, int] = {}

    def walk(node, path):
        out[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                walk(v, path + (k.value,))
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, path + (i,))

    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return out
    if root is not None:
        walk(root, ())
    return out


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    """Parse and validate scenario text; raises :class:`ScenarioError` listing every problem."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError([f"{source}: YAML parse error: {exc}"]) from None
    if not isinstance(doc, dict):
        raise ScenarioError([f"{source}: expected a mapping at top level"])
    lines = _line_map(text)

    def where(*path) -> str:
        while path and path not in lines:
            path = path[:-1]
        return f"{source}:{lines.get(path, 1)}"

    problems: list[str] = []
    for key in ("agents", "topics", "initial"):
        if key not in doc:
            problems.append(f"{where()}: missing field '{key}'")
    if problems:
        raise ScenarioError(problems)

    n, d = int(doc["agents"]), int(doc["topics"])
    raw_edges = doc.get("edges") or []
    edges = []
    for k, e in enumerate(raw_edges):
        if not isinstance(e, (list, tuple)) or len(e) != 2:
            problems.append(f"{where('edges', k)}: edge must be a pair of agent indices")
            continue
        edges.append((min(int(e[0]), int(e[1])), max(int(e[0]), int(e[1]))))
    topology = Topology(n, d, tuple(edges))
    problems += [f"{where('edges')}: {p}" for p in validate_topology(topology)]

    coupling = doc.get("coupling") or []
    gains: list = [None] * len(edges)
    anti: list = [None] * len(edges)
    for c, entry in enumerate(coupling):
        if not isinstance(entry, dict) or "edge" not in entry or "K" not in entry:
            problems.append(f"{where('coupling', c)}: coupling entry needs 'edge' and 'K'")
            continue
        i, j = (int(v) for v in entry["edge"])
        try:
            k = topology.edge_index(i, j)
        except KeyError:
            problems.append(f"{where('coupling', c, 'edge')}: edge ({i},{j}) is not in the edge list")
            continue
        if gains[k] is not None:
            problems.append(f"{where('coupling', c, 'edge')}: duplicate coupling for edge ({i},{j})")
            continue
        K = np.array(entry["K"], dtype=float)
        if K.shape != (d, d):
            problems.append(f"{where('coupling', c, 'K')}: K for edge ({i},{j}) has shape {K.shape}, expected ({d},{d})")
            continue
        flags = np.array(entry["anti"], dtype=bool) if "anti" in entry else np.zeros((d, d), dtype=bool)
        if flags.shape != (d, d):
            problems.append(f"{where('coupling', c, 'anti')}: anti mask for edge ({i},{j}) has wrong shape")
            continue
        gains[k], anti[k] = K, flags
    for k, g in enumerate(gains):
        if g is None:
            problems.append(f"{where('coupling')}: no coupling matrix for edge {edges[k]}")
    if problems:
        raise ScenarioError(problems)
    spec = CouplingSpec(tuple(gains), tuple(anti))
    for p in validate(topology, spec):
        problems.append(f"{where('coupling')}: {p}")

    try:
        config = FeedbackConfig(**(doc.get("feedback") or {}))
    except (TypeError, ValueError) as exc:
        problems.append(f"{where('feedback')}: {exc}")
        config = None

    x0 = np.array(doc["initial"], dtype=float)
    if x0.shape != (n, d):
        problems.append(f"{where('initial')}: initial opinions have shape {x0.shape}, expected ({n},{d})")
    elif not np.all(np.isfinite(x0)):
        problems.append(f"{where('initial')}: initial opinions must be finite")

    solver = dict(SOLVER_DEFAULTS)
    for key, value in (doc.get("solver") or {}).items():
        if key not in solver:
            problems.append(f"{where('solver', key)}: unknown solver setting '{key}'")
        else:
            solver[key] = type(SOLVER_DEFAULTS[key])(value)
    if solver["h"] <= 0 or solver["t_f"] <= 0 or solver["stride"] < 1:
        problems.append(f"{where('solver')}: h, t_f must be positive and stride >= 1")
    if problems:
        raise ScenarioError(problems)
    return Scenario(
        name=str(doc.get("name", Path(source).stem)),
        topology=topology,
        spec=spec,
        config=config,
        initial=x0,
        description=str(doc.get("description", "")),
        **solver,
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(), source=str(path))


def _num(v: float):
    v = float(v)
    return int(v) if v.is_integer() else v


def dump_scenario(s: Scenario) -> str:
    cfg = s.config
    doc = {
        "name": s.name,
        "description": s.description,
        "agents": s.topology.n,
        "topics": s.topology.d,
        "edges": [list(e) for e in s.topology.edges],
        "coupling": [],
        "feedback": {
            "mode": cfg.mode.value,
            "smoothing": cfg.smoothing.value,
            "k_e": float(cfg.k_e),
            "alpha": float(cfg.alpha),
            "c0": float(cfg.c0),
            "c1": float(cfg.c1),
            "c2": float(cfg.c2),
        },
        "initial": [[_num(v) for v in row] for row in s.initial],
        "solver": {
            "h": float(s.h),
            "t_f": float(s.t_f),
            "cluster_tol": float(s.cluster_tol),
            "settle_tol": float(s.settle_tol),
            "stride": int(s.stride),
        },
    }
    for e, g, a in zip(s.topology.edges, s.spec.gains, s.spec.anti):
        entry = {"edge": list(e), "K": [[_num(v) for v in row] for row in g]}
        if a.any():
            entry["anti"] = a.tolist()
        doc["coupling"].append(entry)
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, width=100)


def write_scenario(s: Scenario, path) -> Path:
    path = Path(path)
    path.write_text(dump_scenario(s))
    return path


# five agents on a triangle (1,2,3) with a tail 3-4-5
REFERENCE_EDGES = ((1, 2), (1, 3), (2, 3), (3, 4), (4, 5))
REFERENCE_INITIAL = np.array([[1, 2, 3], [2, 4, 4], [3, 1, 5], [4, 3, 2], [5, 6, 1]], dtype=float)

_PSD = {
    (1, 2): [[1, 1, 0], [1, 1, 0], [0, 0, 0]],
    (1, 3): [[1, 0, 0], [0, 1, 1], [0, 1, 1]],
    (2, 3): [[2, 0, 1], [0, 2, 1], [1, 1, 2]],
    (3, 4): [[1, 1, 1], [1, 1, 1], [1, 1, 1]],
    (4, 5): [[1, 0, 1], [0, 1, 0], [1, 0, 1]],
}
_NO_TOPIC1 = [[0, 0, 0], [0, 1, 1], [0, 1, 1]]
_TRI = [[1, 1, 0], [1, 1, 1], [0, 1, 1]]
_STAR2 = [[0, 1, 0], [1, 1, 1], [0, 1, 0]]
_ADJ = [[0, 1, 1], [1, 0, 1], [1, 1, 0]]

_BUILTIN_COUPLINGS = {
    "fig5": (_PSD, "PSD couplings, every topic consensus graph connected: complete consensus"),
    "fig6": (
        {**_PSD, (1, 3): _NO_TOPIC1, (3, 4): _NO_TOPIC1},
        "PSD couplings with topic 1 cut between agents 3 and 4: topic 1 splits {1,2,3} | {4,5}",
    ),
    "homogeneous": (
        {e: _TRI for e in REFERENCE_EDGES},
        "indefinite but identical couplings, all-topic coupled: complete consensus",
    ),
    "fig7": (
        {**{e: _TRI for e in REFERENCE_EDGES}, (3, 4): [[0, 1, 0], [1, 0, 1], [0, 1, 1]]},
        "topics 1 and 2 lose their same-topic gain on edge (3,4): topic 1 splits, topic 2 agrees",
    ),
    "fig7prime": (
        {**{e: _TRI for e in REFERENCE_EDGES}, (3, 4): [[1, 1, 0], [1, 0, 1], [0, 1, 1]]},
        "only topic 2 loses its same-topic gain on edge (3,4): consensus without all-topic coupling",
    ),
    "fig8": (
        {**{e: _TRI for e in REFERENCE_EDGES}, (1, 3): _STAR2, (2, 3): _STAR2},
        "only topic 2 coupled directly across (1,3),(2,3): topics 1 and 3 split {1,2} | {3,4,5}",
    ),
    "fig9": (
        {e: _ADJ for e in REFERENCE_EDGES},
        "no same-topic gains, complete cross coupling: no topic reaches consensus",
    ),
}

BUILTIN_NAMES = tuple(_BUILTIN_COUPLINGS)


def builtin(name: str, **solver) -> Scenario:
    """One of the built-in five-agent scenarios; ``t_f`` defaults to 30 so runs settle."""
    try:
        couplings, text = _BUILTIN_COUPLINGS[name]
    except KeyError:
        raise KeyError(f"unknown built-in scenario {name!r}; choose from {', '.join(BUILTIN_NAMES)}") from None
    topology = Topology.from_edges(5, 3, REFERENCE_EDGES)
    spec = CouplingSpec.from_matrices(np.array(couplings[e], dtype=float) for e in topology.edges)
    settings = {**SOLVER_DEFAULTS, "t_f": 30.0, **solver}
    return Scenario(
        name=name,
        topology=topology,
        spec=spec,
        config=settings.pop("config", FeedbackConfig()),
        initial=REFERENCE_INITIAL.copy(),
        description=text,
        **settings,
    )
