"""Simulation-free consensus prediction from coupling structure."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import (
    Classification,
    CouplingSpec,
    FeedbackConfig,
    Partition,
    TopicConsensusGraph,
    Topology,
    classify,
)
from .weights import assemble_laplacian

PSD_TOL = 1e-9


class MatrixClass(str, Enum):
    PD = "PD"
    PSD = "PSD"
    NSD = "NSD"
    INDEFINITE = "indefinite"


class Regime(str, Enum):
    COMPLETE = "complete-consensus"
    PARTIAL = "partial-consensus"
    NO_GUARANTEE = "no-guarantee"


@dataclass(frozen=True)
class PsdResult:
    eigenvalues: np.ndarray
    cls: MatrixClass

    @property
    def is_psd(self) -> bool:
        return self.cls in (MatrixClass.PD, MatrixClass.PSD)


def psd_check(matrix, tol: float = PSD_TOL) -> PsdResult:
    """Classify a symmetric matrix by the signs of its eigenvalues (ascending)."""
    M = np.asarray(matrix, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if M.size and np.max(np.abs(M - M.T)) > tol:
        raise ValueError("matrix is not symmetric")
    lam = np.linalg.eigvalsh(M) if M.size else np.zeros(0)
    lo = lam[0] if lam.size else 0.0
    hi = lam[-1] if lam.size else 0.0
    if lo > tol:
        cls = MatrixClass.PD
    elif lo >= -tol:
        cls = MatrixClass.PSD
    elif hi <= tol:
        cls = MatrixClass.NSD
    else:
        cls = MatrixClass.INDEFINITE
    return PsdResult(lam, cls)


@dataclass(frozen=True)
class SpectralVerdict:
    edges: tuple[PsdResult, ...]

    @property
    def all_psd(self) -> bool:
        return all(e.is_psd for e in self.edges)

    @property
    def all_pd(self) -> bool:
        return all(e.cls is MatrixClass.PD for e in self.edges)


def spectral_verdict(spec: CouplingSpec, tol: float = PSD_TOL) -> SpectralVerdict:
    return SpectralVerdict(tuple(psd_check(spec.signed(k), tol) for k in range(len(spec.gains))))


def consensus_matrix(K) -> np.ndarray:
    """``c_pp = 1`` iff topic ``p`` carries any coupling on the edge; off-diagonals 0."""
    K = np.asarray(K)
    return np.diag((K != 0).any(axis=1).astype(int))


def topic_consensus_graphs(topology: Topology, spec: CouplingSpec) -> list[TopicConsensusGraph]:
    C = [np.diag(consensus_matrix(g)) for g in spec.gains]
    return [
        TopicConsensusGraph(
            topic=p + 1,
            n=topology.n,
            edges=tuple(e for e, c in zip(topology.edges, C) if c[p]),
        )
        for p in range(topology.d)
    ]


def cluster_bound(counts) -> int:
    """Upper bound on global clusters given per-topic component counts."""
    return sum(c - 1 for c in counts) + 1


@dataclass(frozen=True)
class AnalysisReport:
    spectral: SpectralVerdict
    graphs: tuple[TopicConsensusGraph, ...]
    components: tuple[Partition, ...]
    regime: Regime
    cluster_bound: int
    flags: Classification
    warnings: tuple[str, ...] = field(default=())
    reasons: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "regime": self.regime.value,
            "cluster_bound": self.cluster_bound,
            "all_psd": self.spectral.all_psd,
            "edges": [
                {"eigenvalues": [float(v) for v in e.eigenvalues], "class": e.cls.value}
                for e in self.spectral.edges
            ],
            "topics": [
                {
                    "topic": g.topic,
                    "consensus_edges": [list(e) for e in g.edges],
                    "components": [list(c) for c in comps],
                    "connected": len(comps) == 1,
                }
                for g, comps in zip(self.graphs, self.components)
            ],
            "classification": {
                "p_coupled": list(self.flags.p_coupled),
                "all_topic_coupled": self.flags.all_topic_coupled,
                "homogeneous": self.flags.homogeneous,
                "phi_zero": self.flags.phi_zero,
                "complete_coupling_graphs": self.flags.complete_coupling_graphs,
            },
            "reasons": list(self.reasons),
            "warnings": list(self.warnings),
        }


def predict(topology: Topology, spec: CouplingSpec) -> AnalysisReport:
    """Predict the consensus regime without simulating.

    Complete consensus is predicted when every coupling matrix is PSD and
    every topic consensus graph is connected, or when the network is
    all-topic coupled (which holds for indefinite couplings too). PSD specs
    with a disconnected topic graph give partial consensus whose per-topic
    groups are the graph components. Anything else gets no prediction,
    only warnings about known failure patterns.
    """
    if not spec.cooperative:
        raise ValueError("prediction covers cooperative specs only (anti-couplings present)")
    spectral = spectral_verdict(spec)
    flags = classify(topology, spec)
    graphs = topic_consensus_graphs(topology, spec)
    components = tuple(g.components for g in graphs)
    connected = all(len(c) == 1 for c in components)

    reasons: list[str] = []
    if spectral.all_psd and connected:
        regime = Regime.COMPLETE
        reasons.append("all coupling matrices PSD and every topic consensus graph connected")
    elif flags.all_topic_coupled:
        regime = Regime.COMPLETE
        reasons.append("all-topic coupled: every same-topic gain graph is connected")
    elif spectral.all_psd:
        regime = Regime.PARTIAL
        split = [g.topic for g, c in zip(graphs, components) if len(c) > 1]
        reasons.append(f"all coupling matrices PSD; topic consensus graph disconnected for topics {split}")
    else:
        regime = Regime.NO_GUARANTEE
        reasons.append("indefinite coupling and not all-topic coupled: outcome depends on the trajectory")

    notes: list[str] = []
    d = topology.d
    off = ~np.eye(d, dtype=bool)
    if d > 1:
        for k, g in enumerate(spec.gains):
            nz = g != 0
            if not np.diag(nz).any() and nz[off].all():
                notes.append(
                    f"edge {topology.edges[k]}: adjacency-only coupling => Laplacian has negative eigenvalues"
                )
    if flags.phi_zero and flags.complete_coupling_graphs and topology.m:
        notes.append("phi=0 with complete coupling graphs => some topic may not converge")
    if not flags.homogeneous and not flags.all_topic_coupled:
        notes.append("heterogeneous, not p-coupled => complete consensus not ensured")
    if flags.homogeneous and not flags.phi_zero and not flags.all_topic_coupled and regime is not Regime.COMPLETE:
        notes.append("homogeneous with some zero same-topic gains => complete consensus not ensured")

    bound = 1 if regime is Regime.COMPLETE else cluster_bound(len(c) for c in components)
    return AnalysisReport(
        spectral=spectral,
        graphs=tuple(graphs),
        components=components,
        regime=regime,
        cluster_bound=bound,
        flags=flags,
        warnings=tuple(notes),
        reasons=tuple(reasons),
    )


@dataclass(frozen=True)
class NullSpace:
    dimension: int
    basis: np.ndarray


def laplacian_nullspace(
    x: np.ndarray,
    topology: Topology,
    spec: CouplingSpec,
    config: FeedbackConfig,
    tol: float = 1e-9,
) -> NullSpace:
    """Numerical kernel of ``L(x)`` at a single state.

    The basis columns are orthonormal right singular vectors whose singular
    values fall below ``tol * max(1, largest singular value)``.
    """
    if not spec.cooperative:
        raise ValueError("null-space analysis needs a cooperative spec")
    if not spectral_verdict(spec).all_psd:
        warnings.warn(
            "some coupling matrix is indefinite; the kernel only describes this state",
            RuntimeWarning,
            stacklevel=2,
        )
    L = assemble_laplacian(x, topology, spec, config)
    _, sv, vt = np.linalg.svd(L)
    cutoff = tol * max(1.0, sv[0] if sv.size else 0.0)
    mask = sv <= cutoff
    basis = vt[mask].T
    return NullSpace(int(mask.sum()), basis)
