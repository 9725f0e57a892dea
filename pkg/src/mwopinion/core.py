"""Domain types for matrix-weighted multi-topic opinion networks.

Agents are numbered ``1..n`` and topics ``1..d`` at every public surface
(reports, scenario files, cluster listings). Internally arrays are
zero-based; the stacked opinion vector is agent-major, topic-minor, so
``x[(i - 1) * d + (p - 1)]`` is agent ``i``'s opinion on topic ``p``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

Edge = tuple[int, int]
Partition = tuple[tuple[int, ...], ...]


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Topology:
    """Undirected interaction graph with a fixed orientation per edge.

    ``edges[k] = (tail, head)``. Use :meth:`from_edges` to build a
    validated instance; the bare constructor stores whatever it is given
    so that :func:`validate` can report problems in raw input.
    """

    n: int
    d: int
    edges: tuple[Edge, ...] = ()

    @classmethod
    def from_edges(cls, n: int, d: int, edges: Iterable[Sequence[int]]) -> "Topology":
        """Orient every edge lowest-index-first and reject invalid graphs."""
        oriented = tuple((min(int(i), int(j)), max(int(i), int(j))) for i, j in edges)
        topo = cls(int(n), int(d), oriented)
        problems = validate_topology(topo)
        if problems:
            raise ValueError("invalid topology: " + "; ".join(problems))
        return topo

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def tails(self) -> np.ndarray:
        return np.array([i - 1 for i, _ in self.edges], dtype=int)

    @property
    def heads(self) -> np.ndarray:
        return np.array([j - 1 for _, j in self.edges], dtype=int)

    def neighbors(self, i: int) -> list[int]:
        out = []
        for a, b in self.edges:
            if a == i:
                out.append(b)
            elif b == i:
                out.append(a)
        return sorted(out)

    def edge_index(self, i: int, j: int) -> int:
        """Index of the undirected edge {i, j}; KeyError if absent."""
        key = (min(i, j), max(i, j))
        for k, (a, b) in enumerate(self.edges):
            if (min(a, b), max(a, b)) == key:
                return k
        raise KeyError(f"no edge ({i},{j})")


@dataclass(frozen=True)
class CouplingSpec:
    """Per-edge coupling gains ``K^{ij}`` plus per-entry anti-coupling flags.

    ``gains[k]`` belongs to ``topology.edges[k]`` and holds nonnegative
    magnitudes; ``anti[k][p, q]`` set means the entry enters negated.
    """

    gains: tuple[np.ndarray, ...]
    anti: tuple[np.ndarray, ...] = field(default=())

    def __post_init__(self):
        gains = tuple(_frozen(np.array(g, dtype=float)) for g in self.gains)
        if self.anti:
            anti = tuple(_frozen(np.array(a, dtype=bool)) for a in self.anti)
        else:
            anti = tuple(_frozen(np.zeros(g.shape, dtype=bool)) for g in gains)
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "anti", anti)

    @classmethod
    def from_matrices(cls, matrices: Iterable, anti: Iterable | None = None) -> "CouplingSpec":
        return cls(tuple(matrices), tuple(anti) if anti is not None else ())

    @property
    def cooperative(self) -> bool:
        return not any(a[g != 0].any() for g, a in zip(self.gains, self.anti))

    def signed(self, k: int) -> np.ndarray:
        """Coupling matrix of edge ``k`` with anti-coupled entries negated."""
        return np.where(self.anti[k], -self.gains[k], self.gains[k])

    def stacked(self) -> np.ndarray:
        """All signed coupling matrices as an ``(m, d, d)`` array."""
        if not self.gains:
            return np.zeros((0, 0, 0))
        return np.stack([self.signed(k) for k in range(len(self.gains))])


class Mode(str, Enum):
    INVERSE = "inverse"
    PROPORTIONAL = "proportional"


class Smoothing(str, Enum):
    EXACT = "exact"
    SIGMOID = "sigmoid"
    SIGNUM = "signum"


@dataclass(frozen=True)
class FeedbackConfig:
    """Feedback law and sign-smoothing choice for the edge weights.

    ``c0, c1, c2`` only matter in proportional mode, where the diagonal
    denominator is ``c2*|D|^2 + c1*|D| + c0`` and each off-diagonal factor
    is ``c1*|D| + c0``.
    """

    mode: Mode = Mode.INVERSE
    c0: float = 1.0
    c1: float = 1.0
    c2: float = 0.0
    smoothing: Smoothing = Smoothing.SIGMOID
    k_e: float = 50.0
    alpha: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "smoothing", Smoothing(self.smoothing))
        if self.mode is Mode.PROPORTIONAL and not self.c0 > 0:
            raise ValueError("proportional feedback requires c0 > 0")
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("c1 and c2 must be nonnegative")
        if not (np.isfinite(self.k_e) and self.k_e > 0):
            raise ValueError("k_e must be finite and positive")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")

    @property
    def discontinuous(self) -> bool:
        return self.smoothing is Smoothing.EXACT


def opinion_state(x, n: int, d: int) -> np.ndarray:
    """Flatten ``x`` (shape ``(n, d)`` or ``(n*d,)``) into a checked state vector."""
    arr = np.asarray(x, dtype=float).reshape(-1)
    if arr.size != n * d:
        raise ValueError(f"opinion state has {arr.size} entries, expected n*d = {n * d}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("opinion state has non-finite entries")
    return arr


@dataclass(frozen=True)
class TopicConsensusGraph:
    topic: int
    n: int
    edges: tuple[Edge, ...]

    @property
    def components(self) -> Partition:
        return connected_components(self.n, self.edges)

    @property
    def connected(self) -> bool:
        return len(self.components) == 1


@dataclass(frozen=True)
class ClusterPartition:
    """Per-topic agent groupings and the global clusters they induce."""

    topics: tuple[Partition, ...]
    clusters: Partition

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(len(t) for t in self.topics)


@dataclass(frozen=True)
class Classification:
    p_coupled: tuple[bool, ...]
    all_topic_coupled: bool
    homogeneous: bool
    phi_zero: bool
    complete_coupling_graphs: bool


def connected_components(n: int, edges: Iterable[Sequence[int]]) -> Partition:
    """Components of an undirected graph on ``1..n``, each sorted, ordered by smallest member."""
    adj: dict[int, list[int]] = {v: [] for v in range(1, n + 1)}
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    seen: set[int] = set()
    comps = []
    for root in range(1, n + 1):
        if root in seen:
            continue
        seen.add(root)
        comp = [root]
        queue = deque([root])
        while queue:
            v = queue.popleft()
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    comp.append(w)
                    queue.append(w)
        comps.append(tuple(sorted(comp)))
    return tuple(comps)


def meet_partitions(n: int, partitions: Iterable[Partition]) -> Partition:
    """Common refinement: agents share a block iff they share one in every partition."""
    labels: dict[int, tuple[int, ...]] = {i: () for i in range(1, n + 1)}
    for part in partitions:
        where = {a: b for b, block in enumerate(part) for a in block}
        for i in labels:
            labels[i] = labels[i] + (where[i],)
    groups: dict[tuple[int, ...], list[int]] = {}
    for i in range(1, n + 1):
        groups.setdefault(labels[i], []).append(i)
    return tuple(sorted((tuple(g) for g in groups.values()), key=lambda b: b[0]))


def validate_topology(topology: Topology) -> list[str]:
    problems = []
    if topology.n < 1:
        problems.append(f"agent count n={topology.n} must be >= 1")
    if topology.d < 1:
        problems.append(f"topic count d={topology.d} must be >= 1")
    seen: set[tuple[int, int]] = set()
    for k, (i, j) in enumerate(topology.edges):
        if i == j:
            problems.append(f"edge {k} ({i},{j}): self-loop")
        if not (1 <= i <= topology.n and 1 <= j <= topology.n):
            problems.append(f"edge {k} ({i},{j}): agent index outside 1..{topology.n}")
        key = (min(i, j), max(i, j))
        if key in seen:
            problems.append(f"edge {k} ({i},{j}): duplicate edge")
        seen.add(key)
    return problems


def validate(topology: Topology, spec: CouplingSpec, tol: float = 0.0) -> list[str]:
    """List every broken invariant of the pair; empty means valid."""
    problems = validate_topology(topology)
    d = topology.d
    if len(spec.gains) != topology.m:
        problems.append(f"coupling spec has {len(spec.gains)} matrices for {topology.m} edges")
    for k, (g, a) in enumerate(zip(spec.gains, spec.anti)):
        name = f"edge {k} {topology.edges[k]}" if k < topology.m else f"matrix {k}"
        if g.shape != (d, d):
            problems.append(f"{name}: coupling matrix shape {g.shape}, expected ({d},{d})")
            continue
        if a.shape != g.shape:
            problems.append(f"{name}: anti-flag mask shape {a.shape} does not match")
            continue
        if not np.all(np.isfinite(g)):
            problems.append(f"{name}: non-finite gain")
        for p, q in zip(*np.nonzero(g < 0)):
            problems.append(f"{name} entry ({p + 1},{q + 1}): negative gain (use the anti flag)")
        for p, q in zip(*np.nonzero(np.abs(g - g.T) > tol)):
            if p < q:
                problems.append(
                    f"{name} entry ({p + 1},{q + 1}): intra-edge symmetry "
                    f"k[{p + 1},{q + 1}]={g[p, q]:g} != k[{q + 1},{p + 1}]={g[q, p]:g}"
                )
        for p, q in zip(*np.nonzero(a != a.T)):
            if p < q:
                problems.append(f"{name} entry ({p + 1},{q + 1}): anti flag not symmetric")
    return problems


def incidence_matrix(topology: Topology) -> tuple[np.ndarray, np.ndarray]:
    """Return ``H`` (m x n, -1 at tail, +1 at head) and ``H ⊗ I_d``."""
    H = np.zeros((topology.m, topology.n))
    for k, (i, j) in enumerate(topology.edges):
        H[k, i - 1] = -1.0
        H[k, j - 1] = 1.0
    return H, np.kron(H, np.eye(topology.d))


def classify(topology: Topology, spec: CouplingSpec) -> Classification:
    d = topology.d
    nonzero = [g != 0 for g in spec.gains]
    p_coupled = []
    for p in range(d):
        edges = [e for e, nz in zip(topology.edges, nonzero) if nz[p, p]]
        p_coupled.append(len(connected_components(topology.n, edges)) == 1)
    homogeneous = all(np.array_equal(nz, nonzero[0]) for nz in nonzero)
    phi_zero = all(not np.diag(nz).any() for nz in nonzero)
    off = ~np.eye(d, dtype=bool)
    complete = all(nz[off].all() for nz in nonzero)
    return Classification(
        p_coupled=tuple(p_coupled),
        all_topic_coupled=all(p_coupled),
        homogeneous=homogeneous,
        phi_zero=phi_zero,
        complete_coupling_graphs=complete,
    )
