"""End-to-end pipelines for the bundled synthetic experiments."""

from __future__ import annotations

import numpy as np

from .estimator import kernel_specs
from .model import Hyperparams
from .sampler import McmcConfig, run
from .simulate import preset, sample_latent, sample_rdpg
from .spectral import ase
from .summary import (
    ari,
    consensus_clusters,
    k_mode,
    k_posterior,
    posterior_similarity,
    procrustes_align,
)

__all__ = ["run_blockmodel_row", "run_hardy_weinberg", "TABLE1_ROWS", "HW_VARIANTS"]

TABLE1_ROWS = {
    # preset name -> (kernel configuration, embedding dimension)
    "sbm_fig3a": ("constant", 2),
    "dcsbm_fig3b": ("linear", 2),
    "quadratic_fig3c": ("quadratic", 2),
}

HW_VARIANTS = {
    # variant -> (kernel configuration, coordinate initialisation)
    "quadratic": ("quadratic_intercept", "sqrt_abs"),
    "cubic": ("cubic", "noisy_first"),
}


def run_blockmodel_row(
    preset_name: str,
    seed: int = 0,
    n_samples: int = 10000,
    burn_in: int = 1000,
) -> dict:
    """Simulate a two-community blockmodel preset, embed it, and cluster
    with K fixed at 2.  Returns the ARI against the planted labels."""
    kernel, d = TABLE1_ROWS[preset_name]
    spec = preset(preset_name)
    rng = np.random.default_rng(seed)
    z_true, _, x_true = sample_latent(spec, spec.n, rng)
    adj = sample_rdpg(x_true, rng, mode="undirected")
    emb = ase(adj, d)
    config = McmcConfig(
        n_samples=n_samples, burn_in=burn_in, seed=seed, k_known=2,
    )
    specs = kernel_specs(kernel, d, emb.positions[:, 0])
    samples = run(emb, config, Hyperparams(), specs)
    sim = posterior_similarity(samples)
    result = consensus_clusters(sim, k=2)
    return {
        "preset": preset_name,
        "kernel": kernel,
        "seed": seed,
        "ari": ari(result.labels, z_true),
        "acceptance": samples.acceptance_rates(),
    }


def run_hardy_weinberg(
    variant: str = "quadratic",
    seed: int = 0,
    n_samples: int = 10000,
    burn_in: int = 1000,
    infer_k: bool = False,
) -> dict:
    """Simulate the two-curve simplex preset, embed at d=3, and cluster.

    The embedding is aligned to the planted positions before fitting.  For
    simplex-valued curves the leading raw eigenvector is the near-constant
    degree direction, so the coordinate-wise initialisation of the node
    scores (and the tied first dimension of the cubic variant) is only
    meaningful in the aligned frame, which is also the frame this
    experiment's curve fits are defined in.

    By default the fit fixes two communities and scores the consensus
    partition; the K histogram then counts occupied communities across
    draws.  With ``infer_k`` the run instead leaves the community count
    free (canonical transdimensional ratios) and reports the ARI at the
    posterior-mode count.

    The coordinate proposal variance is set to 1e-4 here: small steps keep
    the informative coordinate initialisation coherent while the partition
    locks onto the two curves (with the default 0.01 roughly half the
    simulation seeds settle in a disorganised mode instead).
    """
    kernel, init_mode = HW_VARIANTS[variant]
    spec = preset("hardy_weinberg")
    rng = np.random.default_rng(seed)
    z_true, _, x_true = sample_latent(spec, spec.n, rng)
    adj = sample_rdpg(x_true, rng, mode="undirected")
    emb = ase(adj, 3)
    positions, _ = procrustes_align(emb.positions, x_true)
    config = McmcConfig(
        n_samples=n_samples, burn_in=burn_in, seed=seed,
        k_known=None if infer_k else 2,
        k_init=2 if infer_k else None,
        init_mode=init_mode,
        transdimensional="canonical",
    )
    specs = kernel_specs(kernel, 3, positions[:, 0])
    samples = run(positions, config, Hyperparams(sigma2_prop=1e-4), specs)
    sim = posterior_similarity(samples)
    mode = k_mode(samples)
    result = consensus_clusters(sim, k=mode if infer_k else 2)
    return {
        "variant": variant,
        "kernel": kernel,
        "seed": seed,
        "infer_k": infer_k,
        "ari": ari(result.labels, z_true),
        "k_mode": mode,
        "k_posterior": k_posterior(samples),
        "acceptance": samples.acceptance_rates(),
    }
