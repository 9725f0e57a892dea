"""State-dependent edge weights and the stacked Laplacian.

Every edge ``k`` with orientation ``(i, j)`` carries the difference
``D = x_j - x_i``. Functions here accept a single state of shape
``(n*d,)`` or a batch ``(..., n*d)`` where noted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .core import CouplingSpec, FeedbackConfig, Mode, Smoothing, Topology, incidence_matrix


def smoothed_sign(delta, config: FeedbackConfig):
    """Sign surrogate used in the cross-coupling products.

    Exact gives +1 at zero. Signum mode returns the combined factor
    ``sign(delta) * |delta|**alpha``, which replaces the sign outright.
    """
    delta = np.asarray(delta, dtype=float)
    if config.smoothing is Smoothing.EXACT:
        out = np.where(delta >= 0, 1.0, -1.0)
    elif config.smoothing is Smoothing.SIGMOID:
        # tanh(k*delta/2) == 2/(1+exp(-k*delta)) - 1, without overflow
        out = np.tanh(0.5 * config.k_e * delta)
    else:
        out = np.sign(delta) * np.abs(delta) ** config.alpha
    return out if out.ndim else float(out)


def edge_differences(x: np.ndarray, topology: Topology) -> np.ndarray:
    """``x_head - x_tail`` per edge, shape ``(..., m, d)``."""
    X = np.asarray(x, dtype=float).reshape(*np.shape(x)[:-1], topology.n, topology.d)
    return X[..., topology.heads, :] - X[..., topology.tails, :]


def _weights_from_delta(delta: np.ndarray, K: np.ndarray, config: FeedbackConfig) -> np.ndarray:
    if K.size == 0:
        return np.zeros((*delta.shape, delta.shape[-1]))
    s = smoothed_sign(delta, config)
    s = np.asarray(s)
    absd = np.abs(delta)
    d = K.shape[-1]
    eye = np.eye(d, dtype=bool)
    if config.mode is Mode.INVERSE:
        cross = s[..., :, None] * s[..., None, :]
        diag = np.ones_like(delta)
    else:
        g = s / (config.c1 * absd + config.c0)
        cross = g[..., :, None] * g[..., None, :]
        diag = 1.0 / (config.c2 * absd**2 + config.c1 * absd + config.c0)
    A = K * cross
    A = np.where(eye, K * (diag[..., :, None] * eye), A)
    return A


def edge_weights(x: np.ndarray, topology: Topology, spec: CouplingSpec, config: FeedbackConfig) -> np.ndarray:
    """All edge weight matrices ``A^{ij}`` at state ``x``, shape ``(..., m, d, d)``."""
    delta = edge_differences(x, topology)
    return _weights_from_delta(delta, spec.stacked(), config)


def edge_weight_matrix(
    k: int, x: np.ndarray, topology: Topology, spec: CouplingSpec, config: FeedbackConfig
) -> np.ndarray:
    """Weight matrix of edge ``k`` at state ``x``.

    Inverse-proportional: ``a_pp = k_pp`` and ``a_pq = k_pq * s_p * s_q``.
    Proportional: ``a_pp = k_pp / (c2 D_p^2 + c1|D_p| + c0)`` and
    ``a_pq = k_pq * s_p * s_q / ((c1|D_p| + c0)(c1|D_q| + c0))``.
    Anti-coupled entries enter with the opposite sign.
    """
    x = np.asarray(x, dtype=float)
    i, j = topology.edges[k]
    d = topology.d
    delta = x[(j - 1) * d : j * d] - x[(i - 1) * d : i * d]
    return _weights_from_delta(delta, spec.signed(k), config)


def assemble_laplacian(
    x: np.ndarray, topology: Topology, spec: CouplingSpec, config: FeedbackConfig
) -> np.ndarray:
    """Stacked ``(n*d) x (n*d)`` Laplacian at state ``x``."""
    n, d = topology.n, topology.d
    L = np.zeros((n, d, n, d))
    A = edge_weights(x, topology, spec, config)
    for k, (i, j) in enumerate(topology.edges):
        a, b = i - 1, j - 1
        L[a, :, a, :] += A[k]
        L[b, :, b, :] += A[k]
        L[a, :, b, :] -= A[k]
        L[b, :, a, :] -= A[k]
    return L.reshape(n * d, n * d)


def laplacian_action(
    x: np.ndarray, topology: Topology, spec: CouplingSpec, config: FeedbackConfig
) -> np.ndarray:
    """``L(x) @ x`` computed edge by edge; accepts batched states."""
    x = np.asarray(x, dtype=float)
    delta = edge_differences(x, topology)
    A = _weights_from_delta(delta, spec.stacked(), config)
    flow = np.einsum("...kpq,...kq->...kp", A, delta)
    H, _ = incidence_matrix(topology)
    # tail i gains A(x_j - x_i) in x_dot, so (L x) at the tail loses it
    out = np.einsum("kn,...kd->...nd", H, flow)
    return out.reshape(x.shape)


@dataclass(frozen=True)
class LaplacianFactors:
    """Pieces of ``L = Hbar^T (S K S + R) Hbar``.

    ``sign_blocks`` is ``blkdg(diag(S^{ij}))``, ``coupling_blocks`` is
    ``blkdg(K)``, ``residual_blocks`` is the diagonal correction that makes
    the diagonal gains come out as the feedback law prescribes. The
    residual vanishes for inverse-proportional feedback with exact signs
    and is nonnegative whenever ``|s| <= 1`` and ``c2 = 0``.
    """

    incidence: np.ndarray
    sign_blocks: np.ndarray
    coupling_blocks: np.ndarray
    residual_blocks: np.ndarray

    def product(self) -> np.ndarray:
        H = self.incidence
        S = self.sign_blocks
        middle = S @ self.coupling_blocks @ S + self.residual_blocks
        return H.T @ middle @ H


def factorize_laplacian(
    x: np.ndarray, topology: Topology, spec: CouplingSpec, config: FeedbackConfig
) -> LaplacianFactors:
    if not spec.cooperative:
        raise ValueError("factorization needs a cooperative spec (anti-couplings present)")
    if config.mode is Mode.PROPORTIONAL and config.c2 != 0:
        raise ValueError("proportional factorization is only defined for c2 = 0")
    delta = edge_differences(x, topology)
    s = np.atleast_2d(smoothed_sign(delta, config)).reshape(delta.shape)
    absd = np.abs(delta)
    if config.mode is Mode.INVERSE:
        S = s
        w = np.ones_like(delta)
    else:
        S = s / (config.c1 * absd + config.c0)
        w = 1.0 / (config.c2 * absd**2 + config.c1 * absd + config.c0)
    K = spec.stacked()
    kdiag = np.diagonal(K, axis1=-2, axis2=-1) if topology.m else np.zeros((0, topology.d))
    R = kdiag * (w - S**2)
    _, Hbar = incidence_matrix(topology)
    md = topology.m * topology.d
    if topology.m == 0:
        empty = np.zeros((0, 0))
        return LaplacianFactors(Hbar, empty, empty, empty)
    return LaplacianFactors(
        incidence=Hbar,
        sign_blocks=np.diag(S.reshape(md)),
        coupling_blocks=block_diag(*K),
        residual_blocks=np.diag(R.reshape(md)),
    )


@dataclass(frozen=True)
class QuadraticForm:
    total: float
    phi: float
    psi: float


def quadratic_form(
    x: np.ndarray, topology: Topology, spec: CouplingSpec, config: FeedbackConfig
) -> QuadraticForm:
    """``x^T L x`` split into same-topic (phi) and cross-topic (psi) parts."""
    phi, psi = quadratic_parts(x, topology, spec, config)
    return QuadraticForm(float(phi + psi), float(phi), float(psi))


def quadratic_parts(x, topology: Topology, spec: CouplingSpec, config: FeedbackConfig):
    """Batched ``(phi, psi)``; each has the batch shape of ``x``."""
    delta = edge_differences(x, topology)
    A = _weights_from_delta(delta, spec.stacked(), config)
    terms = A * delta[..., :, None] * delta[..., None, :]
    diag = np.diagonal(terms, axis1=-2, axis2=-1).sum(axis=(-2, -1))
    return diag, terms.sum(axis=(-3, -2, -1)) - diag


class LaplacianOperator:
    """Precomputed ``x -> L(x) @ x`` for repeated evaluation inside an integrator.

    Uses ``(A D)_p = a_pp D_p + g_p sum_{q != p} k_pq g_q D_q`` per edge, with
    ``g = s`` (inverse) or ``s / (c1|D| + c0)`` (proportional), so the weight
    matrices are never materialized.
    """

    def __init__(self, topology: Topology, spec: CouplingSpec, config: FeedbackConfig):
        self.topology = topology
        self.config = config
        n, d, m = topology.n, topology.d, topology.m
        self._shape = (n, d)
        self._tails = topology.tails
        self._heads = topology.heads
        K = spec.stacked() if m else np.zeros((0, d, d))
        self._kdiag = np.diagonal(K, axis1=-2, axis2=-1).copy()
        self._koff = K * ~np.eye(d, dtype=bool)
        self._H = incidence_matrix(topology)[0]
        self._HT = np.ascontiguousarray(self._H.T)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        cfg = self.config
        X = x.reshape(self._shape)
        delta = X[self._heads] - X[self._tails]
        if cfg.smoothing is Smoothing.SIGMOID:
            s = np.tanh((0.5 * cfg.k_e) * delta)
        else:
            s = smoothed_sign(delta, cfg)
        if cfg.mode is Mode.INVERSE:
            g = s
            direct = self._kdiag * delta
        else:
            absd = np.abs(delta)
            g = s / (cfg.c1 * absd + cfg.c0)
            direct = self._kdiag * delta / (cfg.c2 * absd * absd + cfg.c1 * absd + cfg.c0)
        cross = g * np.einsum("kpq,kq->kp", self._koff, g * delta)
        return (self._HT @ (direct + cross)).reshape(x.shape)
