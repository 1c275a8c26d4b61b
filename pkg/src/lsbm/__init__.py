"""Latent structure blockmodels: spectral embedding of graphs followed by
Bayesian clustering of nodes around community-specific latent curves."""

from .graph import AdjacencyMatrix, Graph, load_edge_list, to_adjacency, write_edge_list
from .kernels import (
    BasisFamily,
    KernelAssignment,
    KernelSpec,
    design_matrix,
    gram,
    identity_spec,
    phi,
    zellner_delta,
)
from .model import (
    Hyperparams,
    ModelState,
    PosteriorParams,
    conditional_prior_z,
    joint_log_score,
    log_prior_K,
    log_prior_theta,
    log_prior_z,
    marginal_loglik,
    posterior_params,
    predictive_logpdf,
    total_marginal_loglik,
)
from .sampler import (
    Chain,
    McmcConfig,
    PosteriorSamples,
    empty_community_move,
    gibbs_update_z,
    init_state,
    kernel_resample_move,
    mh_update_theta,
    run,
    run_chains,
    split_merge_move,
)
from .spectral import (
    Embedding,
    JointEmbedding,
    ase,
    dase,
    joint_embedding,
    select_dim,
)
from .simulate import Curve, LsbmSpec, preset, sample_latent, sample_rdpg
from .summary import (
    ClusterResult,
    SimilarityMatrix,
    ari,
    consensus_clusters,
    curve_fits,
    k_mode,
    k_posterior,
    posterior_similarity,
    procrustes_align,
)
from .estimator import AdjacencyEmbedding, LsbmClustering

__version__ = "0.1.0"

__all__ = [
    "AdjacencyEmbedding",
    "AdjacencyMatrix",
    "BasisFamily",
    "Chain",
    "ClusterResult",
    "Curve",
    "Embedding",
    "Graph",
    "Hyperparams",
    "JointEmbedding",
    "KernelAssignment",
    "KernelSpec",
    "LsbmClustering",
    "LsbmSpec",
    "McmcConfig",
    "ModelState",
    "PosteriorParams",
    "PosteriorSamples",
    "SimilarityMatrix",
    "ari",
    "ase",
    "conditional_prior_z",
    "consensus_clusters",
    "curve_fits",
    "dase",
    "design_matrix",
    "empty_community_move",
    "gibbs_update_z",
    "gram",
    "identity_spec",
    "init_state",
    "joint_embedding",
    "joint_log_score",
    "k_mode",
    "k_posterior",
    "kernel_resample_move",
    "load_edge_list",
    "log_prior_K",
    "log_prior_theta",
    "log_prior_z",
    "marginal_loglik",
    "mh_update_theta",
    "phi",
    "posterior_params",
    "posterior_similarity",
    "predictive_logpdf",
    "preset",
    "procrustes_align",
    "run",
    "run_chains",
    "sample_latent",
    "sample_rdpg",
    "select_dim",
    "split_merge_move",
    "to_adjacency",
    "total_marginal_loglik",
    "write_edge_list",
    "zellner_delta",
]
