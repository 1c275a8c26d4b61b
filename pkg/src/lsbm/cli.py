"""Command-line pipeline: simulate, embed, fit, evaluate, reproduce."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .estimator import kernel_specs
from .graph import load_edge_list, to_adjacency, write_edge_list
from .kernels import KernelAssignment, KernelSpec
from .model import Hyperparams
from .sampler import McmcConfig, run_chains
from .simulate import LsbmSpec, adjacency_to_graph, preset, sample_latent, sample_rdpg
from .spectral import (
    ase,
    dase,
    joint_embedding,
    load_embedding_binary,
    load_embedding_csv,
    save_embedding_binary,
    save_embedding_csv,
    select_dim,
)
from .summary import ari, consensus_clusters, k_mode, k_posterior, posterior_similarity

CONFIG_VERSION = 1

DEFAULT_CONFIG = {
    "version": CONFIG_VERSION,
    "k": 2,
    "k_init": None,
    "kernel": "quadratic",
    "menu": None,
    "menu_weights": None,
    "hyperparams": {
        "a0": 1.0,
        "b0": 0.001,
        "mu_theta": None,
        "sigma2_theta": 10.0,
        "nu": 1.0,
        "omega": 0.1,
        "sigma2_prop": 0.01,
        "sigma2_init": 0.01,
    },
    "mcmc": {
        "n_samples": 10000,
        "burn_in": 1000,
        "thinning": 1,
        "seed": 0,
        "prob_z": 1.0,
        "prob_theta": 1.0,
        "prob_split_merge": 1.0,
        "prob_empty": 1.0,
        "prob_kernel": 1.0,
        "k_headroom": 64,
    },
    "init": {"theta": "noisy_first", "permutation_search": None},
}


class ConfigError(ValueError):
    pass


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _check_keys(section: dict, allowed, where: str) -> None:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(sorted(unknown))}")


def _merged_config(user: dict) -> dict:
    _check_keys(user, DEFAULT_CONFIG, "config")
    if user.get("version", CONFIG_VERSION) != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {user.get('version')!r}")
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))
    for key, value in user.items():
        if key in ("hyperparams", "mcmc", "init") and value is not None:
            _check_keys(value, DEFAULT_CONFIG[key], key)
            cfg[key].update(value)
        else:
            cfg[key] = value
    return cfg


def _specs_from_config(kernel_cfg, n_dims: int, first_column):
    """Accepts a named configuration, a per-dimension spec list, or a
    per-community assignment {"assignment": [[...], ...]}."""
    if isinstance(kernel_cfg, str):
        return kernel_specs(kernel_cfg, n_dims, first_column)
    if isinstance(kernel_cfg, dict):
        if set(kernel_cfg) != {"assignment"}:
            raise ConfigError("kernel object form takes exactly the key 'assignment'")
        return KernelAssignment.from_config(kernel_cfg["assignment"])
    return tuple(KernelSpec.from_config(s) for s in kernel_cfg)


def _menu_from_config(menu_cfg):
    if menu_cfg is None:
        return ()
    return tuple(tuple(KernelSpec.from_config(s) for s in vec) for vec in menu_cfg)


def _load_embedding(path: str):
    if path.endswith(".bin"):
        return load_embedding_binary(path)
    return load_embedding_csv(path)


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest(out_dir: str, seed, config_payload, started: float) -> None:
    digest = hashlib.sha256(
        json.dumps(config_payload, sort_keys=True).encode()
    ).hexdigest()
    _write_json(
        os.path.join(out_dir, "manifest.json"),
        {
            "version": __version__,
            "seed": seed,
            "config_sha256": digest,
            "wall_clock_seconds": round(time.time() - started, 3),
        },
    )


def _read_labels(path: str) -> np.ndarray:
    values = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.lower().startswith("label"):
                continue
            values.append(line.split(",")[-1])
    return np.asarray([int(float(v)) for v in values], dtype=np.int64)


def cmd_simulate(args) -> int:
    started = time.time()
    if (args.preset is None) == (args.spec_file is None):
        raise ConfigError("give exactly one of --preset or --spec-file")
    if args.preset is not None:
        spec = preset(args.preset)
        spec_cfg = spec.to_config()
    else:
        with open(args.spec_file) as fh:
            spec_cfg = json.load(fh)
        spec = LsbmSpec.from_config(spec_cfg)
    n = args.n if args.n is not None else spec.n
    rng = np.random.default_rng(args.seed)
    z, theta, x = sample_latent(spec, n, rng)
    adj = sample_rdpg(x, rng, mode="undirected")
    graph = adjacency_to_graph(adj, "undirected")
    os.makedirs(args.out, exist_ok=True)
    write_edge_list(graph, os.path.join(args.out, "edges.txt"))
    np.savetxt(os.path.join(args.out, "truth_z.csv"), z, fmt="%d")
    np.savetxt(os.path.join(args.out, "truth_theta.csv"), theta)
    np.savetxt(os.path.join(args.out, "truth_x.csv"), x, delimiter=",")
    _write_json(os.path.join(args.out, "spec.json"), spec_cfg)
    _manifest(args.out, args.seed, {"spec": spec_cfg, "n": n}, started)
    _log(f"simulated {n} nodes, {graph.n_edges} edges -> {args.out}")
    return 0


def cmd_embed(args) -> int:
    started = time.time()
    graph = load_edge_list(args.graph, mode=args.mode, indexing=args.indexing)
    adj = to_adjacency(graph)
    os.makedirs(args.out, exist_ok=True)
    if args.export_adjacency:
        adj.export_coordinates(os.path.join(args.out, "adjacency.csv"))
    if args.d is not None:
        d = args.d
    else:
        probe = min(args.n_spectrum, min(adj.shape))
        dense = adj.matrix.toarray()
        spectrum = np.linalg.svd(dense, compute_uv=False)[:probe]
        spectrum = spectrum[spectrum > 1e-12]
        d = select_dim(spectrum, elbow_index=args.elbow)
        _log(f"selected d={d} at scree-plot elbow {args.elbow}")
    if adj.symmetric:
        emb = ase(adj, d)
    else:
        left, right = dase(adj, d)
        emb = joint_embedding(left, right) if args.joint else left
    save_embedding_csv(emb, os.path.join(args.out, "embedding.csv"))
    save_embedding_binary(emb, os.path.join(args.out, "embedding.bin"))
    _manifest(
        args.out, None,
        {"graph": os.path.abspath(args.graph), "mode": args.mode, "d": d,
         "joint": bool(args.joint)},
        started,
    )
    _log(f"embedded {emb.positions.shape[0]} nodes at d={emb.positions.shape[1]} -> {args.out}")
    return 0


def cmd_fit(args) -> int:
    started = time.time()
    with open(args.config) as fh:
        user_cfg = json.load(fh)
    cfg = _merged_config(user_cfg)
    emb = _load_embedding(args.embedding)
    x = emb.positions
    hp_cfg = cfg["hyperparams"]
    hyper = Hyperparams(**{k: v for k, v in hp_cfg.items()})
    mc = cfg["mcmc"]
    if cfg["k"] is None and cfg["k_init"] is None:
        raise ConfigError("set k, or k_init for an unknown number of communities")
    config = McmcConfig(
        n_samples=mc["n_samples"], burn_in=mc["burn_in"], thinning=mc["thinning"],
        seed=mc["seed"], k_known=cfg["k"], k_init=cfg["k_init"],
        init_mode=cfg["init"]["theta"],
        prob_z=mc["prob_z"], prob_theta=mc["prob_theta"],
        prob_split_merge=mc["prob_split_merge"], prob_empty=mc["prob_empty"],
        prob_kernel=mc["prob_kernel"], k_headroom=mc["k_headroom"],
        menu=_menu_from_config(cfg["menu"]),
        menu_weights=tuple(cfg["menu_weights"] or ()),
    )
    specs = _specs_from_config(cfg["kernel"], x.shape[1], x[:, 0])
    _log(f"fitting: n={x.shape[0]} d={x.shape[1]} sweeps={config.total_sweeps} "
         f"chains={args.chains}")
    samples = run_chains(emb, config, hyper, specs, n_chains=args.chains)
    os.makedirs(args.out, exist_ok=True)
    samples.save(os.path.join(args.out, "samples"))
    sim = posterior_similarity(samples)
    mode = k_mode(samples)
    k_cut = cfg["k"] if cfg["k"] is not None else mode
    result = consensus_clusters(sim, k=k_cut)
    np.savetxt(os.path.join(args.out, "labels.csv"), result.labels, fmt="%d")
    np.savetxt(os.path.join(args.out, "similarity.csv"), sim.values, delimiter=",")
    hist = k_posterior(samples)
    with open(os.path.join(args.out, "k_posterior.csv"), "w") as fh:
        fh.write("k,probability\n")
        for k, p in sorted(hist.items()):
            fh.write(f"{k},{p!r}\n")
    _write_json(
        os.path.join(args.out, "report.json"),
        {
            "k_hat": result.k_hat,
            "k_mode": mode,
            "k_posterior": {str(k): p for k, p in sorted(hist.items())},
            "acceptance_rates": samples.acceptance_rates(),
            "n_samples": samples.n_samples,
        },
    )
    _manifest(args.out, mc["seed"], cfg, started)
    _log(f"fit complete: k_hat={result.k_hat}, k_mode={mode} -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    labels = _read_labels(args.labels)
    truth = _read_labels(args.truth)
    if labels.size != truth.size:
        raise ConfigError(
            f"label files differ in length ({labels.size} vs {truth.size})"
        )
    score = ari(labels, truth)
    la, li = np.unique(labels, return_inverse=True)
    ta, ti = np.unique(truth, return_inverse=True)
    table = np.zeros((la.size, ta.size), dtype=int)
    np.add.at(table, (li, ti), 1)
    payload = {
        "ari": score,
        "contingency": {
            "rows": [int(v) for v in la],
            "cols": [int(v) for v in ta],
            "table": table.tolist(),
        },
    }
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def cmd_defaults(args) -> int:
    json.dump(DEFAULT_CONFIG, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def _markdown_table(headers, rows) -> str:
    lines = ["| " + " | ".join(headers) + " |",
             "| " + " | ".join("---" for _ in headers) + " |"]
    for row in rows:
        lines.append("| " + " | ".join(str(c) for c in row) + " |")
    return "\n".join(lines) + "\n"


def cmd_reproduce_table1(args) -> int:
    from .experiments import TABLE1_ROWS, run_blockmodel_row

    rows = []
    for name in TABLE1_ROWS:
        aris = []
        for seed in range(args.seeds):
            res = run_blockmodel_row(
                name, seed=seed, n_samples=args.n_samples, burn_in=args.burn_in
            )
            aris.append(res["ari"])
            _log(f"{name} seed={seed}: ari={res['ari']:.4f}")
        rows.append((name, TABLE1_ROWS[name][0],
                     f"{np.mean(aris):.3f}", f"{min(aris):.3f}"))
    table = _markdown_table(
        ["preset", "kernel", "mean ARI", "min ARI"], rows
    )
    sys.stdout.write(table)
    if args.out:
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        with open(args.out, "w") as fh:
            fh.write(table)
    return 0


def cmd_reproduce_hw(args) -> int:
    from .experiments import HW_VARIANTS, run_hardy_weinberg

    rows = []
    for variant in HW_VARIANTS:
        aris, modes = [], []
        for seed in range(args.seeds):
            res = run_hardy_weinberg(
                variant, seed=seed, n_samples=args.n_samples, burn_in=args.burn_in,
                infer_k=args.infer_k,
            )
            aris.append(res["ari"])
            modes.append(res["k_mode"])
            _log(f"hw {variant} seed={seed}: ari={res['ari']:.4f} k_mode={res['k_mode']}")
        rows.append((variant, HW_VARIANTS[variant][0],
                     f"{np.mean(aris):.3f}", f"{min(aris):.3f}",
                     ",".join(str(m) for m in modes)))
    table = _markdown_table(
        ["variant", "kernel", "mean ARI", "min ARI", "K modes"], rows
    )
    sys.stdout.write(table)
    if args.out:
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        with open(args.out, "w") as fh:
            fh.write(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lsbm",
        description="Spectral embedding and Bayesian latent-curve clustering for graphs.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample a synthetic graph with ground truth")
    p.add_argument("--preset", choices=("sbm_fig3a", "dcsbm_fig3b", "quadratic_fig3c",
                                        "hardy_weinberg"))
    p.add_argument("--spec-file", help="JSON generator specification")
    p.add_argument("--n", type=int, default=None, help="override node count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("embed", help="spectral embedding of an edge list")
    p.add_argument("--graph", required=True)
    p.add_argument("--mode", choices=("undirected", "directed", "bipartite"),
                   default="undirected")
    p.add_argument("--indexing", type=int, choices=(0, 1), default=0)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--elbow", type=int, default=2,
                   help="scree-plot elbow index used when --d is omitted")
    p.add_argument("--n-spectrum", type=int, default=50)
    p.add_argument("--joint", action="store_true",
                   help="concatenate left and right positions for directed graphs")
    p.add_argument("--export-adjacency", action="store_true",
                   help="also write the adjacency as row,col,value CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("fit", help="run the sampler on an embedding")
    p.add_argument("--embedding", required=True, help="embedding.csv or embedding.bin")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("evaluate", help="ARI and contingency table of two label files")
    p.add_argument("--labels", required=True)
    p.add_argument("--truth", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("defaults", help="print the default fit configuration")
    p.set_defaults(func=cmd_defaults)

    p = sub.add_parser("reproduce-table1", help="blockmodel recovery table")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--n-samples", type=int, default=10000)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--out", default=None, help="also write the markdown table here")
    p.set_defaults(func=cmd_reproduce_table1)

    p = sub.add_parser("reproduce-hw", help="two-curve simplex recovery table")
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--n-samples", type=int, default=10000)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--infer-k", action="store_true",
                   help="leave the community count free instead of fixing 2")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_reproduce_hw)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        _log(f"error: {exc}")
        return 2
    except RuntimeError as exc:
        _log(f"runtime failure: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
