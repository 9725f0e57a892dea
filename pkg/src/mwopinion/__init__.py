"""Matrix-weighted opinion dynamics over multiple interdependent topics."""

from .analysis import AnalysisReport, Regime, consensus_matrix, laplacian_nullspace, predict, psd_check, topic_consensus_graphs
from .core import (
    ClusterPartition,
    CouplingSpec,
    FeedbackConfig,
    Mode,
    Smoothing,
    TopicConsensusGraph,
    Topology,
    classify,
    incidence_matrix,
    validate,
)
from .scenarios import Scenario, builtin, load_scenario, write_scenario
from .sim import DivergenceError, compare, conservation_check, detect_clusters, integrate, lyapunov_trace
from .weights import (
    assemble_laplacian,
    edge_weight_matrix,
    factorize_laplacian,
    quadratic_form,
    smoothed_sign,
)

__version__ = "0.1.0"
