"""Collapsed Bayesian model for clustered embeddings near latent curves.

Each embedding row is modelled, given its community ``z_i`` and scalar
coordinate ``theta_i``, as independent Gaussians per dimension centred on
community curves that carry Gaussian-process priors with inverse-gamma
variance scales.  Integrating out the curves, the variances and the
mixture weights leaves closed-form Student-t predictives and marginal
likelihoods in ``(z, theta, K)``, implemented here with plain dense linear
algebra.  This module is the readable reference; the sampler runs an
algebraically identical sufficient-statistic engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import gammaln

from .kernels import KernelAssignment, gram

__all__ = [
    "Hyperparams",
    "ModelState",
    "PosteriorParams",
    "posterior_params",
    "predictive_logpdf",
    "marginal_loglik",
    "total_marginal_loglik",
    "log_prior_z",
    "conditional_prior_z",
    "log_prior_theta",
    "log_prior_K",
    "joint_log_score",
]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Hyperparams:
    """Prior hyperparameters.

    ``a0, b0`` parameterise the inverse-gamma prior on the per-dimension
    variance scales; ``mu_theta, sigma2_theta`` the normal prior on the
    node coordinates (``mu_theta=None`` is resolved at initialisation to
    the mean of the first embedding column); ``nu`` is the total Dirichlet
    concentration over communities; ``omega`` the geometric prior success
    probability for the number of communities; ``sigma2_prop`` the variance
    of the random-walk coordinate proposal; and ``sigma2_init`` the noise
    added to the first embedding column when initialising coordinates.
    """

    a0: float = 1.0
    b0: float = 0.001
    mu_theta: float | None = None
    sigma2_theta: float = 10.0
    nu: float = 1.0
    omega: float = 0.1
    sigma2_prop: float = 0.01
    sigma2_init: float = 0.01

    def __post_init__(self):
        for name in ("a0", "b0", "sigma2_theta", "nu", "sigma2_prop", "sigma2_init"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.omega < 1.0:
            raise ValueError("omega must lie in (0, 1)")

    def resolve(self, x_first_column) -> "Hyperparams":
        if self.mu_theta is not None:
            return self
        return replace(self, mu_theta=float(np.mean(x_first_column)))


@dataclass
class ModelState:
    """Complete sampler state: data, allocations, coordinates and kernels.

    ``K`` counts all communities, empty ones included; ``z`` holds labels
    in ``0..K-1``.  ``kernels.communities`` has exactly ``K`` entries.
    """

    X: np.ndarray
    z: np.ndarray
    theta: np.ndarray
    K: int
    kernels: KernelAssignment
    hyper: Hyperparams

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.z = np.asarray(self.z, dtype=np.int64)
        self.theta = np.asarray(self.theta, dtype=float)
        n, d = self.X.shape
        if self.z.shape != (n,) or self.theta.shape != (n,):
            raise ValueError("z and theta must have one entry per node")
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.z.size and (self.z.min() < 0 or self.z.max() >= self.K):
            raise ValueError("labels must lie in 0..K-1")
        if self.kernels.n_communities != self.K:
            raise ValueError("kernel assignment must cover exactly K communities")
        if self.kernels.n_dims != d:
            raise ValueError("kernel assignment must cover every embedding dimension")
        if not self.kernels.is_resolved:
            raise ValueError("kernel scaling matrices are not resolved")
        if self.hyper.mu_theta is None:
            raise ValueError("hyper.mu_theta is unresolved; call Hyperparams.resolve")

    @property
    def n_nodes(self) -> int:
        return self.X.shape[0]

    @property
    def n_dims(self) -> int:
        return self.X.shape[1]

    @property
    def identity_first(self) -> bool:
        return self.kernels.identity_first

    def counts(self) -> np.ndarray:
        return np.bincount(self.z, minlength=self.K)

    def members(self, k: int, exclude: int | None = None) -> np.ndarray:
        idx = np.flatnonzero(self.z == k)
        if exclude is not None:
            idx = idx[idx != exclude]
        return idx

    def copy(self) -> "ModelState":
        return ModelState(
            self.X.copy(), self.z.copy(), self.theta.copy(), self.K,
            self.kernels, self.hyper,
        )


@dataclass
class PosteriorParams:
    """Updated curve posterior for one (community, dimension) pair.

    ``shape`` and ``scale`` are the updated inverse-gamma parameters;
    ``mean_fn`` maps a coordinate grid to the posterior mean curve and
    ``cov_fn`` two grids to the posterior covariance (both before the
    inverse-gamma scale).
    """

    shape: float
    scale: float
    mean_fn: Callable[[np.ndarray], np.ndarray]
    cov_fn: Callable[[np.ndarray, np.ndarray], np.ndarray]


def _log_t(x: float, dof: float, loc: float, scale2: float) -> float:
    """Log density of a location-scale Student t with squared scale."""
    return (
        math.lgamma((dof + 1.0) / 2.0)
        - math.lgamma(dof / 2.0)
        - 0.5 * math.log(dof * math.pi * scale2)
        - (dof + 1.0) / 2.0 * math.log1p((x - loc) ** 2 / (dof * scale2))
    )


def posterior_params(state: ModelState, k: int, j: int) -> PosteriorParams:
    """Posterior curve parameters for community ``k`` on dimension ``j``.

    With no members the prior is returned unchanged.  Raises for the fixed
    identity dimension, which has no free curve.
    """
    spec = state.kernels.communities[k][j]
    if spec.is_identity:
        raise ValueError("the identity dimension has no curve posterior")
    hyper = state.hyper
    idx = state.members(k)
    m = idx.size
    shape = hyper.a0 + m / 2.0
    if m == 0:
        return PosteriorParams(
            shape=hyper.a0,
            scale=hyper.b0,
            mean_fn=lambda t: np.zeros(np.atleast_1d(t).shape, dtype=float),
            cov_fn=lambda t, u: gram(spec, t, u),
        )
    t_k = state.theta[idx]
    x_k = state.X[idx, j]
    cov = gram(spec, t_k) + np.eye(m)
    try:
        factor = cho_factor(cov, lower=True)
    except np.linalg.LinAlgError:
        cov = cov + 1e-10 * np.trace(cov) / m * np.eye(m)
        factor = cho_factor(cov, lower=True)  # surfaced if still degenerate
    alpha = cho_solve(factor, x_k)
    scale = hyper.b0 + 0.5 * float(x_k @ alpha)

    def mean_fn(t):
        return gram(spec, np.atleast_1d(t), t_k) @ alpha

    def cov_fn(t, u):
        kt = gram(spec, np.atleast_1d(t), t_k)
        ku = gram(spec, np.atleast_1d(u), t_k)
        return gram(spec, np.atleast_1d(t), np.atleast_1d(u)) - kt @ cho_solve(
            factor, ku.T
        )

    return PosteriorParams(shape=shape, scale=scale, mean_fn=mean_fn, cov_fn=cov_fn)


def _identity_predictive(state, idx, theta_i):
    """Degrees of freedom, location and squared scale on the identity dimension."""
    hyper = state.hyper
    m = idx.size
    a = hyper.a0 + m / 2.0
    resid = state.X[idx, 0] - state.theta[idx]
    b = hyper.b0 + 0.5 * float(resid @ resid)
    return 2.0 * a, theta_i, b / a


def _curve_predictive(state, spec, idx, j, theta_i):
    hyper = state.hyper
    m = idx.size
    a = hyper.a0 + m / 2.0
    prior_var = float(gram(spec, [theta_i])[0, 0])
    if m == 0:
        return 2.0 * a, 0.0, (hyper.b0 / a) * (1.0 + prior_var)
    t_k = state.theta[idx]
    x_k = state.X[idx, j]
    cov = gram(spec, t_k) + np.eye(m)
    factor = cho_factor(cov, lower=True)
    alpha = cho_solve(factor, x_k)
    kvec = gram(spec, [theta_i], t_k)[0]
    mu = float(kvec @ alpha)
    xi = prior_var - float(kvec @ cho_solve(factor, kvec))
    b = hyper.b0 + 0.5 * float(x_k @ alpha)
    return 2.0 * a, mu, (b / a) * (1.0 + max(xi, 0.0))


def predictive_logpdf(state: ModelState, i: int, k: int, leave_out: bool = True) -> float:
    """Log predictive density of row ``i`` under community ``k``.

    With ``leave_out`` the contribution of node ``i`` to its own
    community's statistics is removed first, so evaluating against
    ``k == z_i`` gives the leave-one-out predictive.  An empty candidate
    community yields the prior predictive.
    """
    exclude = i if leave_out else None
    total = 0.0
    for j in range(state.n_dims):
        spec = state.kernels.communities[k][j]
        idx = state.members(k, exclude=exclude)
        if spec.is_identity:
            dof, loc, scale2 = _identity_predictive(state, idx, state.theta[i])
        else:
            dof, loc, scale2 = _curve_predictive(state, spec, idx, j, state.theta[i])
        total += _log_t(state.X[i, j], dof, loc, scale2)
    return total


def marginal_loglik(state: ModelState, k: int, j: int) -> float:
    """Log marginal likelihood of community ``k``'s data on dimension ``j``.

    The density is a zero-mean multivariate Student t over the member
    rows; on the identity dimension it reduces to the closed form driven
    by the residuals ``x - theta``.  Empty communities contribute zero.
    """
    hyper = state.hyper
    spec = state.kernels.communities[k][j]
    idx = state.members(k)
    m = idx.size
    if m == 0:
        return 0.0
    a_m = hyper.a0 + m / 2.0
    base = (
        math.lgamma(a_m)
        - math.lgamma(hyper.a0)
        + hyper.a0 * math.log(hyper.b0)
        - 0.5 * m * _LOG_2PI
    )
    if spec.is_identity:
        resid = state.X[idx, 0] - state.theta[idx]
        b_m = hyper.b0 + 0.5 * float(resid @ resid)
        return base - a_m * math.log(b_m)
    t_k = state.theta[idx]
    x_k = state.X[idx, j]
    cov = gram(spec, t_k) + np.eye(m)
    factor = cho_factor(cov, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    b_m = hyper.b0 + 0.5 * float(x_k @ cho_solve(factor, x_k))
    return base - a_m * math.log(b_m) - 0.5 * logdet


def total_marginal_loglik(state: ModelState) -> float:
    """Sum of the per-(community, dimension) marginal log likelihoods."""
    return sum(
        marginal_loglik(state, k, j)
        for k in range(state.K)
        for j in range(state.n_dims)
    )


def log_prior_z(z, K: int, nu: float) -> float:
    """Log mass of an allocation vector after integrating mixture weights."""
    z = np.asarray(z, dtype=np.int64)
    if K < 1:
        raise ValueError("K must be at least 1")
    if z.size and (z.min() < 0 or z.max() >= K):
        raise ValueError("labels must lie in 0..K-1")
    n = z.size
    counts = np.bincount(z, minlength=K)
    return float(
        gammaln(nu)
        + gammaln(counts + nu / K).sum()
        - K * gammaln(nu / K)
        - gammaln(n + nu)
    )


def conditional_prior_z(state: ModelState, i: int, k: int | None = None):
    """Allocation prior for node ``i`` given all other labels.

    Returns the probability of community ``k``, or the full length-K
    probability vector when ``k`` is omitted.
    """
    nu = state.hyper.nu
    counts = state.counts()
    counts[state.z[i]] -= 1
    probs = (counts + nu / state.K) / (state.n_nodes - 1.0 + nu)
    return probs if k is None else float(probs[k])


def log_prior_theta(theta_i: float, hyper: Hyperparams) -> float:
    """Log density of the normal prior on one node coordinate."""
    d = theta_i - hyper.mu_theta
    return -0.5 * (_LOG_2PI + math.log(hyper.sigma2_theta) + d * d / hyper.sigma2_theta)


def log_prior_K(K: int, omega: float) -> float:
    """Log mass of the geometric prior on the number of communities."""
    if K < 1:
        raise ValueError("K must be at least 1")
    return math.log(omega) + (K - 1) * math.log1p(-omega)


def joint_log_score(state: ModelState) -> float:
    """Collapsed joint log score of data, labels, coordinates and K."""
    hyper = state.hyper
    return (
        total_marginal_loglik(state)
        + log_prior_z(state.z, state.K, hyper.nu)
        + sum(log_prior_theta(t, hyper) for t in state.theta)
        + log_prior_K(state.K, hyper.omega)
    )
