"""Estimator-style front ends compatible with scikit-learn pipelines."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .graph import AdjacencyMatrix
from .kernels import BasisFamily, KernelSpec, identity_spec
from .model import Hyperparams
from .sampler import McmcConfig, run_chains
from .spectral import ase, dase, joint_embedding, select_dim
from .summary import consensus_clusters, curve_fits, k_mode, k_posterior, posterior_similarity

__all__ = ["LsbmClustering", "AdjacencyEmbedding", "kernel_specs"]

KERNEL_PRESETS = (
    "constant",
    "linear",
    "quadratic",
    "quadratic_intercept",
    "cubic",
    "spline",
)


def default_spline_knots(first_column, n_knots: int = 3) -> tuple:
    """Equispaced interior knots over the range of the first coordinate."""
    lo, hi = float(np.min(first_column)), float(np.max(first_column))
    return tuple(np.linspace(lo, hi, n_knots + 2)[1:-1])


def kernel_specs(kernel: str, n_dims: int, first_column=None) -> tuple:
    """Per-dimension kernel spec vector for a named configuration.

    ``constant`` models point clusters on every dimension;
    ``quadratic_intercept`` puts a full quadratic on every dimension; the
    remaining names tie dimension 0 to the latent coordinate and model the
    others with rays (``linear``), origin-anchored quadratics
    (``quadratic``), full cubics (``cubic``) or cubic truncated-power
    splines (``spline``, knots from the range of ``first_column``).
    """
    if kernel not in KERNEL_PRESETS:
        raise ValueError(f"unknown kernel configuration {kernel!r}")
    if kernel == "constant":
        return tuple(KernelSpec(BasisFamily.constant()) for _ in range(n_dims))
    if kernel == "quadratic_intercept":
        return tuple(
            KernelSpec(BasisFamily.polynomial(2, intercept=True)) for _ in range(n_dims)
        )
    if kernel == "linear":
        rest = BasisFamily.homogeneous_linear()
    elif kernel == "quadratic":
        rest = BasisFamily.homogeneous_polynomial(2)
    elif kernel == "cubic":
        rest = BasisFamily.polynomial(3, intercept=True)
    else:
        if first_column is None:
            raise ValueError("spline kernels need the first embedding column for knots")
        rest = BasisFamily.truncated_power_spline(default_spline_knots(first_column))
    return (identity_spec(),) + tuple(KernelSpec(rest) for _ in range(n_dims - 1))


class LsbmClustering(ClusterMixin, BaseEstimator):
    """Bayesian clustering of embedding rows around latent curves.

    Fits the collapsed Gibbs sampler to an ``(n, d)`` embedding, then cuts
    the posterior similarity matrix with average linkage.  With
    ``n_communities=None`` the number of communities is inferred and the
    tree is cut at its posterior mode.

    Parameters
    ----------
    n_communities : int or None
        Fixed community count, or None to infer it.
    kernel : str or sequence of KernelSpec
        Named configuration (see :func:`kernel_specs`) or an explicit
        per-dimension spec vector.
    n_samples, burn_in, thinning : int
        Stored draws, burn-in sweeps, and thinning stride.
    theta_init : str
        ``noisy_first`` or ``sqrt_abs`` coordinate initialisation.
    n_chains : int
        Independent chains to run and merge.
    a0, b0, sigma2_theta, nu, omega, sigma2_prop, sigma2_init : float
        Model hyperparameters; see :class:`lsbm.Hyperparams`.
    k_init : int or None
        Starting community count when inferring K (default 2).
    random_state : int
        Seed for the whole run.

    Attributes
    ----------
    labels_ : consensus labels in 1..k_hat_
    k_hat_ : number of consensus communities
    similarity_ : posterior co-clustering matrix
    samples_ : raw posterior draws
    k_posterior_ : histogram of the non-empty community count
    acceptance_rates_ : per-move acceptance fractions
    """

    def __init__(
        self,
        n_communities: int | None = 2,
        kernel="quadratic",
        n_samples: int = 10000,
        burn_in: int = 1000,
        thinning: int = 1,
        theta_init: str = "noisy_first",
        n_chains: int = 1,
        a0: float = 1.0,
        b0: float = 0.001,
        sigma2_theta: float = 10.0,
        nu: float = 1.0,
        omega: float = 0.1,
        sigma2_prop: float = 0.01,
        sigma2_init: float = 0.01,
        k_init: int | None = None,
        random_state: int = 0,
    ):
        self.n_communities = n_communities
        self.kernel = kernel
        self.n_samples = n_samples
        self.burn_in = burn_in
        self.thinning = thinning
        self.theta_init = theta_init
        self.n_chains = n_chains
        self.a0 = a0
        self.b0 = b0
        self.sigma2_theta = sigma2_theta
        self.nu = nu
        self.omega = omega
        self.sigma2_prop = sigma2_prop
        self.sigma2_init = sigma2_init
        self.k_init = k_init
        self.random_state = random_state

    def _specs(self, x):
        if isinstance(self.kernel, str):
            return kernel_specs(self.kernel, x.shape[1], x[:, 0])
        return tuple(self.kernel)

    def fit(self, X, y=None):
        x = check_array(X, dtype=float, ensure_min_features=1)
        hyper = Hyperparams(
            a0=self.a0, b0=self.b0, sigma2_theta=self.sigma2_theta, nu=self.nu,
            omega=self.omega, sigma2_prop=self.sigma2_prop, sigma2_init=self.sigma2_init,
        )
        k_init = self.k_init if self.n_communities is None else None
        if self.n_communities is None and k_init is None:
            k_init = 2
        config = McmcConfig(
            n_samples=self.n_samples,
            burn_in=self.burn_in,
            thinning=self.thinning,
            seed=self.random_state,
            k_known=self.n_communities,
            k_init=k_init,
            init_mode=self.theta_init,
        )
        specs = self._specs(x)
        samples = run_chains(x, config, hyper, specs, n_chains=self.n_chains)
        self.samples_ = samples
        self.similarity_ = posterior_similarity(samples)
        self.k_posterior_ = k_posterior(samples)
        k_cut = self.n_communities if self.n_communities is not None else k_mode(samples)
        result = consensus_clusters(self.similarity_, k=k_cut)
        self.labels_ = result.labels
        self.k_hat_ = result.k_hat
        self.theta_ = samples.theta.mean(axis=0)
        self.acceptance_rates_ = samples.acceptance_rates()
        self._hyper = hyper
        self._specs_used = specs
        self._x = x
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_

    def curves(self, grid=None, n_grid: int = 200) -> dict:
        """Posterior-mean curve per (community, dimension) after fitting."""
        check_is_fitted(self, "labels_")
        return curve_fits(
            self.samples_, self._x, self.labels_, self._specs_used, self._hyper,
            grid=grid, n_grid=n_grid,
        )


class AdjacencyEmbedding(TransformerMixin, BaseEstimator):
    """Spectral embedding transformer for adjacency matrices.

    Symmetric input uses the eigendecomposition; asymmetric or rectangular
    input uses the singular value decomposition and returns the
    concatenated left and right positions.  With ``n_components=None`` the
    dimension is chosen at the requested scree-plot elbow.
    """

    def __init__(self, n_components: int | None = None, elbow: int = 2,
                 n_spectrum: int = 50):
        self.n_components = n_components
        self.elbow = elbow
        self.n_spectrum = n_spectrum

    def _pick_dim(self, a, dmax: int) -> int:
        if self.n_components is not None:
            return self.n_components
        probe = min(self.n_spectrum, dmax)
        mat = a.matrix if isinstance(a, AdjacencyMatrix) else a
        arr = mat.toarray() if sp.issparse(mat) else np.asarray(mat, dtype=float)
        spectrum = np.linalg.svd(arr, compute_uv=False)[:probe]
        spectrum = spectrum[spectrum > 1e-12]
        return select_dim(spectrum, elbow_index=self.elbow)

    def fit(self, X, y=None):
        a = X
        if isinstance(a, AdjacencyMatrix):
            symmetric = a.symmetric
            shape = a.shape
        else:
            arr = a.toarray() if sp.issparse(a) else np.asarray(a, dtype=float)
            shape = arr.shape
            symmetric = shape[0] == shape[1] and np.allclose(arr, arr.T, atol=1e-10)
        d = self._pick_dim(a, min(shape))
        if symmetric:
            emb = ase(a, d)
            self.embedding_ = emb.positions
            self.spectrum_ = emb.spectrum
            self.left_, self.right_ = None, None
        else:
            left, right = dase(a, d)
            joint = joint_embedding(left, right)
            self.embedding_ = joint.positions
            self.spectrum_ = joint.spectrum
            self.left_, self.right_ = left, right
        self.n_components_ = d
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X).embedding_

    def transform(self, X):
        check_is_fitted(self, "embedding_")
        return self.embedding_
