import numpy as np
import pytest

from mwopinion.core import CouplingSpec, Topology
from mwopinion.scenarios import REFERENCE_EDGES, REFERENCE_INITIAL, builtin


@pytest.fixture
def ref_topology():
    return Topology.from_edges(5, 3, REFERENCE_EDGES)


@pytest.fixture
def ref_x0():
    return REFERENCE_INITIAL.ravel().copy()


@pytest.fixture
def fig5_spec():
    return builtin("fig5").spec


def random_topology(rng, n_max=6, d_max=4):
    """Random connected topology: a random spanning tree plus extra edges."""
    n = int(rng.integers(2, n_max + 1))
    d = int(rng.integers(1, d_max + 1))
    edges = set()
    order = rng.permutation(n) + 1
    for k in range(1, n):
        parent = order[rng.integers(0, k)]
        edges.add((min(order[k], parent), max(order[k], parent)))
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            if rng.random() < 0.3:
                edges.add((i, j))
    return Topology.from_edges(n, d, sorted(edges))


def random_psd(rng, d):
    rank = int(rng.integers(1, d + 1))
    B = rng.random((rank, d)) * (rng.random((rank, d)) < 0.7)
    return B.T @ B


def random_symmetric(rng, d, density=0.6):
    M = rng.random((d, d)) * (rng.random((d, d)) < density)
    return np.triu(M) + np.triu(M, 1).T


def random_spec(rng, topology, psd=False):
    make = random_psd if psd else random_symmetric
    return CouplingSpec.from_matrices(make(rng, topology.d) for _ in topology.edges)
