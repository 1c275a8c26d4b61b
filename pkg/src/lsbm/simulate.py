"""Synthetic graph generators: latent curves, scores and Bernoulli edges."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import AdjacencyMatrix, Graph

__all__ = [
    "Curve",
    "LsbmSpec",
    "sample_latent",
    "sample_rdpg",
    "preset",
    "PRESETS",
]

_VALIDITY_TOL = 1e-9


@dataclass(frozen=True)
class Curve:
    """A polynomial latent curve: row j of ``coeffs`` holds the coefficients
    of output dimension j in increasing powers of the score."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 2:
            raise ValueError("coeffs must be (dims, degree+1)")
        object.__setattr__(self, "coeffs", c)

    @property
    def n_dims(self) -> int:
        return self.coeffs.shape[0]

    def __call__(self, theta) -> np.ndarray:
        t = np.atleast_1d(np.asarray(theta, dtype=float))
        vander = np.vander(t, N=self.coeffs.shape[1], increasing=True)
        return vander @ self.coeffs.T

    def to_config(self) -> list:
        return self.coeffs.tolist()


@dataclass(frozen=True)
class LsbmSpec:
    """A mixture of latent curves sharing one score distribution.

    ``theta_law`` is ``("uniform", lo, hi)`` or ``("beta", a, b, scale)``;
    the beta draw is multiplied by ``scale``.  Construction verifies on a
    dense score grid that every pairwise inner product of curve values
    stays inside [0, 1], so the mixture defines a valid edge-probability
    model.
    """

    weights: tuple
    curves: tuple
    theta_law: tuple
    n: int = 1000

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size != len(self.curves):
            raise ValueError("one weight per curve required")
        if np.any(w < 0) or not np.isclose(w.sum(), 1.0):
            raise ValueError("weights must be nonnegative and sum to one")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))
        object.__setattr__(self, "curves", tuple(self.curves))
        dims = {c.n_dims for c in self.curves}
        if len(dims) != 1:
            raise ValueError("curves must share the output dimension")
        if self.n < 1:
            raise ValueError("n must be positive")
        self._check_theta_law()
        self._check_validity()

    def _check_theta_law(self):
        law = self.theta_law
        if law[0] == "uniform":
            if len(law) != 3 or law[1] >= law[2]:
                raise ValueError("uniform law is ('uniform', lo, hi) with lo < hi")
        elif law[0] == "beta":
            if len(law) != 4 or law[1] <= 0 or law[2] <= 0 or law[3] <= 0:
                raise ValueError("beta law is ('beta', a, b, scale), all positive")
        else:
            raise ValueError(f"unknown score law {law[0]!r}")

    def support(self) -> tuple[float, float]:
        law = self.theta_law
        if law[0] == "uniform":
            return float(law[1]), float(law[2])
        return 0.0, float(law[3])

    def _check_validity(self, n_grid: int = 1000):
        lo, hi = self.support()
        grid = np.linspace(lo, hi, n_grid)
        values = np.vstack([c(grid) for c in self.curves])
        inner = values @ values.T
        if inner.min() < -_VALIDITY_TOL or inner.max() > 1.0 + _VALIDITY_TOL:
            raise ValueError(
                "curves produce inner products outside [0, 1] "
                f"(range [{inner.min():.4f}, {inner.max():.4f}])"
            )

    @property
    def n_communities(self) -> int:
        return len(self.curves)

    @property
    def n_dims(self) -> int:
        return self.curves[0].n_dims

    def sample_theta(self, size: int, rng) -> np.ndarray:
        law = self.theta_law
        if law[0] == "uniform":
            return rng.uniform(law[1], law[2], size=size)
        return law[3] * rng.beta(law[1], law[2], size=size)

    def to_config(self) -> dict:
        return {
            "weights": list(self.weights),
            "curves": [c.to_config() for c in self.curves],
            "theta_law": list(self.theta_law),
            "n": self.n,
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "LsbmSpec":
        return cls(
            weights=tuple(cfg["weights"]),
            curves=tuple(Curve(np.asarray(c, dtype=float)) for c in cfg["curves"]),
            theta_law=tuple(cfg["theta_law"]),
            n=int(cfg.get("n", 1000)),
        )


def sample_latent(spec: LsbmSpec, n: int, rng):
    """Draw labels, scores and latent positions from the mixture."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    z = rng.choice(spec.n_communities, size=n, p=np.asarray(spec.weights))
    theta = spec.sample_theta(n, rng)
    x = np.empty((n, spec.n_dims))
    for k, curve in enumerate(spec.curves):
        mask = z == k
        if mask.any():
            x[mask] = curve(theta[mask])
    return z.astype(np.int64), theta, x


def sample_rdpg(x, rng, mode: str = "undirected", x_right=None) -> AdjacencyMatrix:
    """Bernoulli adjacency matrix with inner-product edge probabilities.

    Undirected mode samples each unordered pair once and symmetrises;
    directed mode samples every ordered pair; bipartite mode uses
    ``x_right`` for the destination side.  The diagonal is zero except in
    bipartite mode, where the sides are disjoint.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    x = np.asarray(x, dtype=float)
    right = x if x_right is None else np.asarray(x_right, dtype=float)
    if mode == "bipartite" and x_right is None:
        raise ValueError("bipartite sampling requires x_right")
    probs = x @ right.T
    if probs.min() < -_VALIDITY_TOL or probs.max() > 1.0 + _VALIDITY_TOL:
        raise ValueError(
            f"inner products outside [0, 1]: range [{probs.min():.4f}, {probs.max():.4f}]"
        )
    np.clip(probs, 0.0, 1.0, out=probs)
    draw = rng.random(probs.shape)
    adj = (draw < probs).astype(float)
    if mode == "undirected":
        adj = np.triu(adj, k=1)
        adj = adj + adj.T
        symmetric = True
    elif mode == "directed":
        np.fill_diagonal(adj, 0.0)
        symmetric = False
    elif mode == "bipartite":
        symmetric = False
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    return AdjacencyMatrix(sp.csr_array(adj), symmetric=symmetric)


def adjacency_to_graph(adj: AdjacencyMatrix, mode: str) -> Graph:
    """Edge set of a sampled adjacency matrix, keeping isolated nodes."""
    coo = adj.matrix.tocoo()
    edges = set()
    for i, j in zip(coo.row, coo.col):
        i, j = int(i), int(j)
        if mode == "undirected":
            if i < j:
                edges.add((i, j))
        else:
            edges.add((i, j))
    n, m = adj.shape
    return Graph(n, m, frozenset(edges), mode)


def _block_curves(nu: np.ndarray, degree_corrected: bool):
    """Point curves (constant) or rays through the origin for block models."""
    curves = []
    for row in nu:
        if degree_corrected:
            coeffs = np.column_stack([np.zeros(row.size), row])
        else:
            coeffs = row[:, None]
        curves.append(Curve(coeffs))
    return tuple(curves)


_NU = np.array([[0.75, 0.25], [0.25, 0.75]])


def _preset_sbm() -> LsbmSpec:
    """Two point communities at [3/4, 1/4] and [1/4, 3/4]."""
    return LsbmSpec(
        weights=(0.5, 0.5),
        curves=_block_curves(_NU, degree_corrected=False),
        theta_law=("beta", 1.0, 1.0, 1.0),
        n=1000,
    )


def _preset_dcsbm() -> LsbmSpec:
    """Two rays through the origin toward [3/4, 1/4] and [1/4, 3/4]."""
    return LsbmSpec(
        weights=(0.5, 0.5),
        curves=_block_curves(_NU, degree_corrected=True),
        theta_law=("beta", 1.0, 1.0, 1.0),
        n=1000,
    )


def _preset_quadratic() -> LsbmSpec:
    """Two planar quadratics through the origin.

    The first coordinate carries the score linearly (unit slope, no
    intercept) and the second follows ``theta + a_k * theta**2`` with
    quadratic coefficients -1 and -4 and unit linear terms.  The Beta(2, 1)
    score is scaled to [0, 1/2]: the pairwise inner products factor as
    ``t * t' * (1 + (1 + a t)(1 + a' t'))``, which stays inside [0, 1]
    exactly up to that range and leaves it beyond.
    """
    curves = (
        Curve(np.array([[0.0, 1.0, 0.0], [0.0, 1.0, -1.0]])),
        Curve(np.array([[0.0, 1.0, 0.0], [0.0, 1.0, -4.0]])),
    )
    return LsbmSpec(
        weights=(0.5, 0.5),
        curves=curves,
        theta_law=("beta", 2.0, 1.0, 0.5),
        n=1000,
    )


def _preset_hardy_weinberg() -> LsbmSpec:
    """Two permutations of the Hardy-Weinberg curve on the 2-simplex:
    ((1-t)^2, t^2, 2t(1-t)) and (t^2, 2t(1-t), (1-t)^2) with uniform scores."""
    hw_a = Curve(np.array([
        [1.0, -2.0, 1.0],   # (1-t)^2
        [0.0, 0.0, 1.0],    # t^2
        [0.0, 2.0, -2.0],   # 2t(1-t)
    ]))
    hw_b = Curve(np.array([
        [0.0, 0.0, 1.0],
        [0.0, 2.0, -2.0],
        [1.0, -2.0, 1.0],
    ]))
    return LsbmSpec(
        weights=(0.5, 0.5),
        curves=(hw_a, hw_b),
        theta_law=("uniform", 0.0, 1.0),
        n=1000,
    )


PRESETS = {
    "sbm_fig3a": _preset_sbm,
    "dcsbm_fig3b": _preset_dcsbm,
    "quadratic_fig3c": _preset_quadratic,
    "hardy_weinberg": _preset_hardy_weinberg,
}


def preset(name: str) -> LsbmSpec:
    """Named generator configurations for the bundled experiments."""
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        ) from None
