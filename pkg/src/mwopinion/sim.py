"""Trajectory integration, Lyapunov monitoring and cluster detection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analysis import AnalysisReport, Regime
from .core import (
    ClusterPartition,
    CouplingSpec,
    FeedbackConfig,
    Partition,
    Smoothing,
    Topology,
    meet_partitions,
    opinion_state,
)
from .weights import LaplacianOperator, quadratic_parts

DIVERGENCE_FACTOR = 1e6
CLUSTER_TOL = 1e-3
SETTLE_TOL = 1e-6


class DivergenceError(RuntimeError):
    """State grew past the divergence guard or became non-finite."""


@dataclass(frozen=True)
class Trajectory:
    topology: Topology
    spec: CouplingSpec
    config: FeedbackConfig
    h: float
    times: np.ndarray
    states: np.ndarray
    V: np.ndarray
    V_dot: np.ndarray
    phi: np.ndarray
    psi: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def opinions(self, k: int = -1) -> np.ndarray:
        """State at step ``k`` as an ``(n, d)`` array."""
        return self.states[k].reshape(self.topology.n, self.topology.d)


def rk4_step(f, x: np.ndarray, h: float) -> np.ndarray:
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(
    x0,
    topology: Topology,
    spec: CouplingSpec,
    config: FeedbackConfig | None = None,
    h: float = 1e-3,
    t_f: float = 20.0,
    allow_unstable: bool = False,
) -> Trajectory:
    """Integrate ``x' = -L(x) x`` with classical fixed-step RK4.

    The Laplacian is re-evaluated at every stage. ``t_f`` is rounded to a
    whole number of steps. Anti-coupled specs need ``allow_unstable=True``;
    the divergence guard stays active either way.
    """
    config = config or FeedbackConfig()
    if not h > 0 or not t_f > 0:
        raise ValueError("step h and horizon t_f must be positive")
    if not spec.cooperative and not allow_unstable:
        raise ValueError("anti-coupled spec: pass allow_unstable=True to simulate it")
    x = opinion_state(x0, topology.n, topology.d)
    steps = max(1, int(round(t_f / h)))
    op = LaplacianOperator(topology, spec, config)

    def f(z):
        return -op(z)

    limit = DIVERGENCE_FACTOR * max(np.max(np.abs(x), initial=0.0), 1.0)
    states = np.empty((steps + 1, x.size))
    states[0] = x
    for k in range(steps):
        x = rk4_step(f, x, h)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x), initial=0.0) > limit:
            raise DivergenceError(f"divergence guard tripped at t={(k + 1) * h:g}")
        states[k + 1] = x

    times = h * np.arange(steps + 1)
    phi, psi = quadratic_parts(states, topology, spec, config)
    V = 0.5 * np.einsum("ij,ij->i", states, states)
    return Trajectory(
        topology=topology,
        spec=spec,
        config=config,
        h=h,
        times=times,
        states=states,
        V=V,
        V_dot=-(phi + psi),
        phi=phi,
        psi=psi,
    )


@dataclass(frozen=True)
class LyapunovTrace:
    V: np.ndarray
    V_dot: np.ndarray
    monotone: bool
    max_violation: float


def lyapunov_trace(traj: Trajectory, rel_tol: float = 1e-9) -> LyapunovTrace:
    """Check that ``V = |x|^2 / 2`` never grows by more than ``rel_tol * V(0)``."""
    increase = np.diff(traj.V)
    worst = float(increase.max(initial=0.0))
    eps = rel_tol * traj.V[0]
    return LyapunovTrace(traj.V, traj.V_dot, bool(worst <= eps), max(worst, 0.0))


def conservation_check(traj: Trajectory) -> float:
    """Largest deviation of the per-topic opinion sum from its initial value."""
    n, d = traj.topology.n, traj.topology.d
    sums = traj.states.reshape(-1, n, d).sum(axis=1)
    return float(np.max(np.abs(sums - sums[0]), initial=0.0))


def group_values(values, tol: float) -> Partition:
    """Chain agents whose sorted values are within ``tol`` of the previous one."""
    values = np.asarray(values)
    order = np.argsort(values, kind="stable")
    groups: list[list[int]] = []
    prev = None
    for idx in order:
        if prev is None or values[idx] - prev > tol:
            groups.append([])
        groups[-1].append(int(idx) + 1)
        prev = values[idx]
    return tuple(sorted((tuple(sorted(g)) for g in groups), key=lambda b: b[0]))


@dataclass(frozen=True)
class SimOutcome:
    partition: ClusterPartition
    consensus: tuple[bool, ...]
    values: tuple[tuple[float, ...], ...]
    settled: bool
    speed: float
    lyapunov_monotone: bool
    lyapunov_violation: float
    drift: float
    tol: float

    @property
    def topic_components(self) -> tuple[Partition, ...]:
        return self.partition.topics

    @property
    def clusters(self) -> Partition:
        return self.partition.clusters

    def to_dict(self) -> dict:
        return {
            "settled": self.settled,
            "final_speed": self.speed,
            "cluster_tol": self.tol,
            "topics": [
                {
                    "topic": p + 1,
                    "verdict": "consensus" if c else "clustered",
                    "components": [list(b) for b in comps],
                    "values": list(vals),
                }
                for p, (c, comps, vals) in enumerate(zip(self.consensus, self.partition.topics, self.values))
            ],
            "clusters": [list(b) for b in self.partition.clusters],
            "lyapunov_monotone": self.lyapunov_monotone,
            "lyapunov_max_increase": self.lyapunov_violation,
            "conservation_drift": self.drift,
        }


def final_speed(traj: Trajectory, window: float = 1.0) -> float:
    """``|x'|_inf`` at the end of the run.

    With exact signs the field is discontinuous and chatters, so the
    instantaneous value is meaningless; the mean velocity over the last
    ``window`` time units is used instead.
    """
    if traj.config.smoothing is Smoothing.EXACT:
        back = min(len(traj.times) - 1, max(1, int(round(window / traj.h))))
        if back == 0:
            return 0.0
        dx = traj.states[-1] - traj.states[-1 - back]
        return float(np.max(np.abs(dx)) / (back * traj.h))
    op = LaplacianOperator(traj.topology, traj.spec, traj.config)
    return float(np.max(np.abs(op(traj.final)), initial=0.0))


def detect_clusters(traj: Trajectory, tol: float = CLUSTER_TOL, settle_tol: float = SETTLE_TOL) -> SimOutcome:
    """Group final opinions per topic and intersect the groupings."""
    n, d = traj.topology.n, traj.topology.d
    X = traj.opinions()
    topics = tuple(group_values(X[:, p], tol) for p in range(d))
    clusters = meet_partitions(n, topics)
    values = tuple(
        tuple(float(np.mean([X[i - 1, p] for i in block])) for block in comps)
        for p, comps in enumerate(topics)
    )
    speed = final_speed(traj)
    lyap = lyapunov_trace(traj)
    return SimOutcome(
        partition=ClusterPartition(topics=topics, clusters=clusters),
        consensus=tuple(len(t) == 1 for t in topics),
        values=values,
        settled=speed < settle_tol,
        speed=speed,
        lyapunov_monotone=lyap.monotone,
        lyapunov_violation=lyap.max_violation,
        drift=conservation_check(traj),
        tol=tol,
    )


@dataclass(frozen=True)
class Reconciliation:
    status: str
    regime: Regime
    notes: tuple[str, ...] = field(default=())

    @property
    def passed(self) -> bool:
        return self.status != "FAIL"

    def to_dict(self) -> dict:
        return {"status": self.status, "regime": self.regime.value, "notes": list(self.notes)}


def compare(report: AnalysisReport, outcome: SimOutcome) -> Reconciliation:
    """Reconcile a static prediction with a simulated outcome.

    Complete regime passes iff every topic reached consensus. Partial regime
    passes iff the per-topic groups match the predicted components and the
    global cluster count respects the bound. No-guarantee is informational.
    """
    notes: list[str] = []
    observed = outcome.topic_components
    if report.regime is Regime.COMPLETE:
        missing = [p + 1 for p, c in enumerate(outcome.consensus) if not c]
        if missing:
            notes.append(f"predicted complete consensus; topics {missing} did not converge")
        else:
            notes.append("predicted complete consensus; observed on every topic")
        status = "FAIL" if missing else "PASS"
    elif report.regime is Regime.PARTIAL:
        status = "PASS"
        for p, (pred, obs) in enumerate(zip(report.components, observed)):
            if pred != obs:
                status = "FAIL"
                notes.append(f"topic {p + 1}: predicted {list(map(list, pred))}, observed {list(map(list, obs))}")
        count = len(outcome.clusters)
        if count > report.cluster_bound:
            status = "FAIL"
            notes.append(f"{count} global clusters exceed bound {report.cluster_bound}")
        else:
            notes.append(f"{count} global clusters <= bound {report.cluster_bound}")
    else:
        status = "INFO"
        if all(outcome.consensus):
            notes.append("consensus observed")
        else:
            for p, obs in enumerate(observed):
                verdict = "consensus" if len(obs) == 1 else f"clustered {list(map(list, obs))}"
                notes.append(f"topic {p + 1}: {verdict}")
    if not outcome.settled:
        notes.append(f"trajectory not settled (final speed {outcome.speed:.3g})")
    return Reconciliation(status, report.regime, tuple(notes))
