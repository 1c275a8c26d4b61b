"""Posterior post-processing: similarity, consensus labels, scores, curves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from .kernels import KernelAssignment, zellner_delta
from .model import Hyperparams, ModelState, posterior_params

__all__ = [
    "SimilarityMatrix",
    "ClusterResult",
    "posterior_similarity",
    "consensus_clusters",
    "ari",
    "k_posterior",
    "k_mode",
    "procrustes_align",
    "curve_fits",
]


@dataclass(frozen=True)
class SimilarityMatrix:
    """Pairwise co-clustering frequencies across stored draws."""

    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("similarity matrix must be square")

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]


@dataclass
class ClusterResult:
    """Consensus clustering.  Labels run over 1..k_hat with every label used."""

    labels: np.ndarray
    k_hat: int
    ari: float | None = None
    curves: dict | None = None


def _draws_matrix(samples) -> np.ndarray:
    z = samples.z if hasattr(samples, "z") else np.asarray(samples)
    z = np.asarray(z)
    if z.ndim != 2:
        raise ValueError("expected a (draws, nodes) label matrix")
    if z.shape[0] < 1:
        raise ValueError("need at least one stored draw")
    return z.astype(np.int64, copy=False)


def posterior_similarity(samples) -> SimilarityMatrix:
    """Fraction of draws in which each node pair shares a community.

    Label values are irrelevant, only co-occurrence counts, so the result
    is unaffected by label switching across draws.
    """
    z = _draws_matrix(samples)
    n_draws, n = z.shape
    sim = np.zeros((n, n))
    chunk = max(1, int(2e7) // max(n, 1))
    for lo in range(0, n_draws, chunk):
        block = z[lo : lo + chunk]
        kmax = int(block.max()) + 1
        onehot = np.zeros((n, block.shape[0] * kmax), dtype=np.float32)
        for s, row in enumerate(block):
            onehot[np.arange(n), s * kmax + row] = 1.0
        sim += (onehot @ onehot.T).astype(np.float64)
    sim /= n_draws
    sim = (sim + sim.T) / 2.0
    np.clip(sim, 0.0, 1.0, out=sim)
    np.fill_diagonal(sim, 1.0)
    return SimilarityMatrix(sim)


def k_posterior(samples) -> dict:
    """Normalised histogram of the number of non-empty communities."""
    ks = np.asarray(samples.k_nonempty)
    if ks.size < 1:
        raise ValueError("need at least one stored draw")
    values, counts = np.unique(ks, return_counts=True)
    return {int(k): c / ks.size for k, c in zip(values, counts)}


def k_mode(samples) -> int:
    """Posterior-mode number of non-empty communities (smallest on ties)."""
    hist = k_posterior(samples)
    best = max(hist.values())
    return min(k for k, p in hist.items() if p == best)


def consensus_clusters(sim: SimilarityMatrix, k: int | None = None,
                       samples=None) -> ClusterResult:
    """Average-linkage consensus labels from the similarity matrix.

    The dendrogram over distance ``1 - similarity`` is cut at ``k`` when
    given, otherwise at the posterior-mode non-empty community count taken
    from ``samples``.
    """
    values = sim.values if isinstance(sim, SimilarityMatrix) else np.asarray(sim)
    n = values.shape[0]
    if k is None:
        if samples is None:
            raise ValueError("give k or samples to pick the cut height")
        k = k_mode(samples)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}]")
    dist = 1.0 - values
    np.fill_diagonal(dist, 0.0)
    np.clip(dist, 0.0, None, out=dist)
    tree = linkage(squareform(dist, checks=False), method="average")
    raw = fcluster(tree, t=k, criterion="maxclust")
    labels = np.zeros(n, dtype=np.int64)
    seen: dict = {}
    for i, lab in enumerate(raw):  # relabel in first-appearance order
        labels[i] = seen.setdefault(lab, len(seen) + 1)
    return ClusterResult(labels=labels, k_hat=len(seen))


def ari(labels_a, labels_b) -> float:
    """Adjusted Rand index between two partitions of the same nodes."""
    a = np.asarray(labels_a).ravel()
    b = np.asarray(labels_b).ravel()
    if a.shape != b.shape:
        raise ValueError("label vectors must have equal length")
    n = a.size
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)

    def _pairs(x):
        return float((x * (x - 1) // 2).sum())

    sum_cells = _pairs(table)
    sum_rows = _pairs(table.sum(axis=1))
    sum_cols = _pairs(table.sum(axis=0))
    total = n * (n - 1) / 2
    expected = sum_rows * sum_cols / total if total else 0.0
    max_index = (sum_rows + sum_cols) / 2.0
    if max_index == expected:
        return 1.0
    return (sum_cells - expected) / (max_index - expected)


def procrustes_align(x_hat, x_target):
    """Best orthogonal alignment of one configuration onto another.

    Returns ``(x_hat @ Q, residual)`` where ``Q`` minimises the Frobenius
    distance over rotations and reflections (no scaling or translation).
    """
    a = np.asarray(x_hat, dtype=float)
    b = np.asarray(x_target, dtype=float)
    if a.shape != b.shape:
        raise ValueError("configurations must have equal shapes")
    u, _, vt = np.linalg.svd(a.T @ b)
    q = u @ vt
    aligned = a @ q
    return aligned, float(np.linalg.norm(aligned - b))


def curve_fits(samples, embedding, labels, kernels, hyper: Hyperparams,
               grid=None, n_grid: int = 200) -> dict:
    """Posterior-mean curve per (community, dimension) on a coordinate grid.

    Uses the consensus ``labels`` (1-based) and the posterior-mean node
    coordinates.  ``kernels`` is a per-dimension spec vector shared by all
    communities or a full assignment over the consensus communities.  The
    default grid spans each community's coordinate range with ``n_grid``
    points.  Returns ``{(community, dimension): (grid, values)}`` with
    1-based community keys.
    """
    x = np.asarray(
        embedding.positions if hasattr(embedding, "positions") else embedding,
        dtype=float,
    )
    labels = np.asarray(labels, dtype=np.int64)
    theta = np.asarray(samples.theta).mean(axis=0)
    k_hat = int(labels.max())
    z = labels - 1
    if isinstance(kernels, KernelAssignment):
        assignment = kernels
    else:
        assignment = KernelAssignment.shared(tuple(kernels), k_hat)
    cache: dict = {}

    def _concrete(spec):
        if spec.is_identity or isinstance(spec.delta, np.ndarray):
            return spec
        if spec.basis not in cache:
            cache[spec.basis] = zellner_delta(spec.basis, theta)
        return spec.with_delta(cache[spec.basis])

    assignment = KernelAssignment(
        tuple(tuple(_concrete(s) for s in comm) for comm in assignment.communities)
    )
    state = ModelState(x, z, theta, k_hat, assignment, hyper.resolve(x[:, 0]))
    out = {}
    for k in range(k_hat):
        members = state.members(k)
        if grid is None:
            t_k = theta[members]
            lo, hi = (t_k.min(), t_k.max()) if t_k.size else (0.0, 1.0)
            g = np.linspace(lo, hi, n_grid)
        else:
            g = np.asarray(grid, dtype=float)
        for j in range(state.n_dims):
            spec = assignment.communities[k][j]
            if spec.is_identity:
                out[(k + 1, j + 1)] = (g, g.copy())
            else:
                params = posterior_params(state, k, j)
                out[(k + 1, j + 1)] = (g, params.mean_fn(g))
    return out
