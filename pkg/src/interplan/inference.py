"""Sum-product message passing over sampled trajectory configurations.

Approximates per-actor marginals of p(config) proportional to
exp(-joint_energy) by loopy belief propagation on the actor interaction
graph, entirely in the log domain. The pairwise factor between actors i
and j is exp(-2*gamma) per colliding sample pair, matching the
ordered-pair double counting used by joint_energy, so BP is exact (not
just consistent) on acyclic interaction graphs.

An exact enumeration oracle over all K^N configurations backs every
approximation claim.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .energy import CollisionEdges, UnaryTable
from .errors import ContractViolation, EnumerationBudgetError

DEFAULT_ITERS = 5
DEFAULT_TOL = 1e-6
ENUMERATION_BUDGET = 10**7


@dataclass(frozen=True)
class BPReport:
    """Per-run convergence record for one message-passing invocation."""

    iterations: int
    residuals: tuple
    converged: bool
    tol: float

    def __post_init__(self):
        if len(self.residuals) != self.iterations:
            raise ContractViolation("one residual per iteration required")

    def to_json_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "residuals": [float(r) for r in self.residuals],
            "converged": bool(self.converged),
            "tol": self.tol,
        }


def _as_energies(unary) -> np.ndarray:
    e = unary.energies if isinstance(unary, UnaryTable) else np.asarray(unary, dtype=np.float64)
    if e.ndim != 2:
        raise ContractViolation(f"unary energies must be (N, K), got shape {e.shape}")
    if not np.all(np.isfinite(e)):
        raise ContractViolation("non-finite unary energy")
    return e


def _row_softmax(log_p: np.ndarray) -> np.ndarray:
    log_p = log_p - logsumexp(log_p, axis=-1, keepdims=True)
    return np.exp(log_p)


def run_bp(
    unary,
    edges: CollisionEdges,
    gamma: float,
    iters: int = DEFAULT_ITERS,
    tol: float = DEFAULT_TOL,
    damping: float = 0.0,
):
    """Loopy sum-product marginals. Returns ((N, K) marginals, BPReport).

    Messages start uniform and update synchronously; each round every
    directed message is renormalized (log-sum-exp zero) and the round
    residual is the L-infinity change across all messages in log domain.
    The inner sum over the sender's samples uses the two-level structure
    of the collision factor: with b the sender's belief mass and C the
    collision matrix, the outgoing message is
    (total - C.T b) + exp(-2*gamma) * (C.T b), one masked matrix-vector
    product per directed edge.
    """
    e = _as_energies(unary)
    n, k = e.shape
    if iters < 1:
        raise ContractViolation("iters must be >= 1")
    if not 0.0 <= damping < 1.0:
        raise ContractViolation("damping must be in [0, 1)")
    log_phi = -e
    pair_factor = float(np.exp(-2.0 * gamma))

    # Directed edges in reverse-adjacent order: edge idx and idx^1 are the
    # two directions of one pair, so the reverse message is O(1) to find.
    directed = []  # (src, dst, matrix mapping src samples -> dst samples)
    for (i, j), mat in zip(edges.pairs, edges.matrices):
        m = mat.astype(np.float64)
        directed.append((i, j, m.T))  # masked mass at dst: m.T @ b_src
        directed.append((j, i, m))

    msgs = np.full((len(directed), k), -np.log(k))
    residuals = []
    converged = False
    iterations = 0
    for _ in range(iters):
        iterations += 1
        if not directed:
            residuals.append(0.0)
            converged = True
            break
        incoming = np.zeros((n, k))
        for idx, (_, dst, _) in enumerate(directed):
            incoming[dst] += msgs[idx]
        new = np.empty_like(msgs)
        for idx, (src, dst, mat_t) in enumerate(directed):
            pre = log_phi[src] + incoming[src] - msgs[idx ^ 1]
            shift = pre.max()
            b = np.exp(pre - shift)
            masked = mat_t @ b
            # exact lower bound guards the subtraction against cancellation;
            # tiny floor keeps huge gammas finite instead of log(0)
            m_lin = np.maximum((b.sum() - masked) + pair_factor * masked, pair_factor * masked)
            new[idx] = shift + np.log(np.maximum(m_lin, 1e-300))
        if damping > 0.0:
            new = np.logaddexp(np.log1p(-damping) + new, np.log(damping) + msgs)
        new = new - logsumexp(new, axis=1, keepdims=True)
        if not np.all(np.isfinite(new)):
            raise ContractViolation("non-finite message during propagation")
        residual = float(np.max(np.abs(new - msgs)))
        residuals.append(residual)
        msgs = new
        if residual < tol:
            converged = True
            break

    log_marg = log_phi.copy()
    for idx, (src, dst, _) in enumerate(directed):
        log_marg[dst] += msgs[idx]
    marginals = _row_softmax(log_marg)
    report = BPReport(
        iterations=iterations, residuals=tuple(residuals), converged=converged, tol=tol
    )
    return marginals, report


def exact_marginals(
    unary, edges: CollisionEdges, gamma: float, budget: int = ENUMERATION_BUDGET
) -> np.ndarray:
    """Exact per-actor marginals by full K^N enumeration.

    Builds the joint log-weight tensor over (K,)*N, applies every
    pairwise collision factor (2*gamma per colliding pair), and
    marginalizes with log-sum-exp reductions. Refuses when K^N exceeds
    the enumeration budget.
    """
    e = _as_energies(unary)
    n, k = e.shape
    if k**n > budget:
        raise EnumerationBudgetError(f"K^N = {k}**{n} exceeds enumeration budget {budget}")
    log_w = np.zeros((k,) * n)
    for i in range(n):
        shape = [1] * n
        shape[i] = k
        log_w = log_w + (-e[i]).reshape(shape)
    for (i, j), mat in zip(edges.pairs, edges.matrices):
        shape = [1] * n
        shape[i] = k
        shape[j] = k
        log_w = log_w + np.where(mat, -2.0 * gamma, 0.0).reshape(shape)
    log_z = logsumexp(log_w)
    out = np.empty((n, k))
    for i in range(n):
        axes = tuple(a for a in range(n) if a != i)
        out[i] = np.exp(logsumexp(log_w, axis=axes) - log_z)
    return out


def map_configuration(
    unary,
    edges: CollisionEdges,
    gamma: float,
    iters: int = DEFAULT_ITERS,
    tol: float = DEFAULT_TOL,
) -> np.ndarray:
    """Per-actor marginal-argmax sample indices (ties go to the lowest index)."""
    marginals, _ = run_bp(unary, edges, gamma, iters=iters, tol=tol)
    return np.argmax(marginals, axis=1)
