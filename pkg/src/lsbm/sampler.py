"""Collapsed Metropolis-within-Gibbs sampler over labels, coordinates and K."""

from __future__ import annotations

import concurrent.futures
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln
from sklearn.cluster import KMeans

from . import _engine
from .kernels import KernelAssignment, zellner_delta
from .model import Hyperparams, ModelState
from .spectral import Embedding, JointEmbedding

__all__ = [
    "McmcConfig",
    "PosteriorSamples",
    "Chain",
    "init_state",
    "gibbs_update_z",
    "mh_update_theta",
    "split_merge_move",
    "empty_community_move",
    "kernel_resample_move",
    "run",
    "run_chains",
]

_THETA_MODES = ("noisy_first", "sqrt_abs", "user")

_MOVE_NAMES = (
    "gibbs_z",
    "theta",
    "split",
    "merge",
    "empty_add",
    "empty_remove",
    "kernel",
)


@dataclass(frozen=True)
class McmcConfig:
    """Sampler schedule and move configuration.

    The chain performs ``burn_in + n_samples * thinning`` sweeps and stores
    ``n_samples`` draws.  Each sweep runs a full label scan and a full
    coordinate scan, then (when ``k_known`` is unset) one split-or-merge
    attempt and one empty-community attempt, then one kernel draw per
    community when a menu with more than one candidate is configured; the
    ``prob_*`` fields gate each block per sweep.

    ``transdimensional`` picks the split-merge acceptance convention:
    ``exchangeable`` (default) is exactly balanced for the labelled
    allocation model, while ``canonical`` uses the plain partition-space
    ratio, which damps splits by the label multiplicity and so favours
    fewer communities.
    """

    n_samples: int = 10000
    burn_in: int = 1000
    thinning: int = 1
    seed: int = 0
    k_known: int | None = None
    k_init: int | None = None
    init_mode: str = "noisy_first"
    prob_z: float = 1.0
    prob_theta: float = 1.0
    prob_split_merge: float = 1.0
    prob_empty: float = 1.0
    prob_kernel: float = 1.0
    k_headroom: int = 64
    menu: tuple = ()
    menu_weights: tuple = ()
    rebuild_every: int = 512
    transdimensional: str = "exchangeable"

    def __post_init__(self):
        if self.transdimensional not in ("exchangeable", "canonical"):
            raise ValueError(
                "transdimensional must be 'exchangeable' or 'canonical'"
            )
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if self.burn_in < 0 or self.thinning < 1:
            raise ValueError("burn_in must be >= 0 and thinning >= 1")
        for name in ("prob_z", "prob_theta", "prob_split_merge", "prob_empty", "prob_kernel"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.k_known is not None and self.k_known < 1:
            raise ValueError("k_known must be at least 1")
        if self.k_headroom < 1:
            raise ValueError("k_headroom must be at least 1")
        if self.menu_weights and len(self.menu_weights) != len(self.menu):
            raise ValueError("menu_weights must match the menu length")

    @property
    def k_moves_enabled(self) -> bool:
        return self.k_known is None

    @property
    def total_sweeps(self) -> int:
        return self.burn_in + self.n_samples * self.thinning


@dataclass
class PosteriorSamples:
    """Stored MCMC draws plus acceptance bookkeeping.

    ``z`` is (samples, nodes) with dense labels (empty communities may sit
    between non-empty ones); ``k_nonempty`` counts occupied communities per
    draw; ``kernel_ids`` indexes the candidate menu per community slot with
    -1 padding; ``scores`` holds the collapsed joint log score per draw.
    """

    z: np.ndarray
    theta: np.ndarray
    k_nonempty: np.ndarray
    kernel_ids: np.ndarray
    scores: np.ndarray
    acceptance: dict
    seed: int
    burn_in: int
    thinning: int
    candidate_configs: list = field(default_factory=list)

    @property
    def n_samples(self) -> int:
        return self.z.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.z.shape[1]

    def acceptance_rates(self) -> dict:
        rates = {}
        for name, (acc, att) in self.acceptance.items():
            rates[name] = acc / att if att else 0.0
        return rates

    @classmethod
    def merge(cls, parts) -> "PosteriorSamples":
        """Concatenate draws from independent chains."""
        parts = list(parts)
        if not parts:
            raise ValueError("nothing to merge")
        kmax = max(p.kernel_ids.shape[1] for p in parts)
        kid = np.full((sum(p.n_samples for p in parts), kmax), -1, dtype=np.int16)
        row = 0
        for p in parts:
            kid[row : row + p.n_samples, : p.kernel_ids.shape[1]] = p.kernel_ids
            row += p.n_samples
        acceptance = {}
        for name in parts[0].acceptance:
            acc = sum(p.acceptance[name][0] for p in parts)
            att = sum(p.acceptance[name][1] for p in parts)
            acceptance[name] = (acc, att)
        return cls(
            z=np.vstack([p.z for p in parts]),
            theta=np.vstack([p.theta for p in parts]),
            k_nonempty=np.concatenate([p.k_nonempty for p in parts]),
            kernel_ids=kid,
            scores=np.concatenate([p.scores for p in parts]),
            acceptance=acceptance,
            seed=parts[0].seed,
            burn_in=parts[0].burn_in,
            thinning=parts[0].thinning,
            candidate_configs=parts[0].candidate_configs,
        )

    def save(self, directory) -> None:
        """Write the draws as CSV matrices into a directory."""
        import json
        import os

        os.makedirs(directory, exist_ok=True)
        np.savetxt(os.path.join(directory, "z.csv"), self.z, fmt="%d", delimiter=",")
        np.savetxt(os.path.join(directory, "theta.csv"), self.theta, delimiter=",")
        np.savetxt(os.path.join(directory, "k.csv"), self.k_nonempty, fmt="%d", delimiter=",")
        np.savetxt(os.path.join(directory, "kernels.csv"), self.kernel_ids, fmt="%d", delimiter=",")
        np.savetxt(os.path.join(directory, "scores.csv"), self.scores, delimiter=",")
        with open(os.path.join(directory, "acceptance.csv"), "w") as fh:
            fh.write("move,accepted,attempted\n")
            for name, (acc, att) in self.acceptance.items():
                fh.write(f"{name},{acc},{att}\n")
        meta = {
            "seed": self.seed,
            "burn_in": self.burn_in,
            "thinning": self.thinning,
            "candidates": self.candidate_configs,
        }
        with open(os.path.join(directory, "samples.json"), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, directory) -> "PosteriorSamples":
        import json
        import os

        z = np.loadtxt(os.path.join(directory, "z.csv"), dtype=np.int32, delimiter=",", ndmin=2)
        theta = np.loadtxt(os.path.join(directory, "theta.csv"), delimiter=",", ndmin=2)
        k = np.loadtxt(os.path.join(directory, "k.csv"), dtype=np.int32, delimiter=",", ndmin=1)
        kid = np.loadtxt(os.path.join(directory, "kernels.csv"), dtype=np.int16, delimiter=",", ndmin=2)
        scores = np.loadtxt(os.path.join(directory, "scores.csv"), delimiter=",", ndmin=1)
        acceptance = {}
        with open(os.path.join(directory, "acceptance.csv")) as fh:
            next(fh)
            for line in fh:
                name, acc, att = line.strip().split(",")
                acceptance[name] = (int(acc), int(att))
        with open(os.path.join(directory, "samples.json")) as fh:
            meta = json.load(fh)
        return cls(z, theta, k, kid, scores, acceptance,
                   meta["seed"], meta["burn_in"], meta["thinning"], meta["candidates"])


def _as_positions(embedding) -> np.ndarray:
    if isinstance(embedding, (Embedding, JointEmbedding)):
        return np.asarray(embedding.positions, dtype=float)
    x = np.asarray(embedding, dtype=float)
    if x.ndim != 2:
        raise ValueError("embedding must be a 2-d array of positions")
    return x


def _as_rng(rng) -> np.random.Generator:
    if rng is None:
        return np.random.default_rng()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(rng))))


def _resolve_specs(vectors, theta, cache):
    """Resolve data-driven scaling matrices, sharing one matrix per basis."""
    out = []
    for vec in vectors:
        resolved = []
        for spec in vec:
            if spec.is_identity or isinstance(spec.delta, np.ndarray):
                if not spec.is_identity:
                    cache.setdefault(spec.basis, spec.delta)
                resolved.append(spec)
                continue
            if spec.basis in cache:
                resolved.append(spec.with_delta(cache[spec.basis]))
            else:
                delta = zellner_delta(spec.basis, theta)
                cache[spec.basis] = delta
                resolved.append(spec.with_delta(delta))
        out.append(tuple(resolved))
    return out


def init_state(
    embedding,
    k: int,
    hyper: Hyperparams,
    kernels,
    init_mode: str = "noisy_first",
    rng=None,
    z_init=None,
    theta_init=None,
    permutation_search: bool | None = None,
) -> ModelState:
    """Build the starting sampler state.

    Coordinates start at the first embedding column plus small noise
    (``noisy_first``), at the square root of its absolute value
    (``sqrt_abs``), or at ``theta_init`` (``user``).  Labels come from
    k-means with 100 restarts unless ``z_init`` is given.  Data-driven
    kernel scaling matrices are derived from the initial coordinates over
    all nodes and frozen for the run.  When communities carry different
    kernels, the k-means labels are permuted to maximise the collapsed
    marginal likelihood (override with ``permutation_search``).
    """
    from .model import total_marginal_loglik

    x = _as_positions(embedding)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}]")
    if init_mode not in _THETA_MODES:
        raise ValueError(f"unknown init mode {init_mode!r}")
    rng = _as_rng(rng)
    hyper = hyper.resolve(x[:, 0])

    if init_mode == "noisy_first":
        theta = x[:, 0] + math.sqrt(hyper.sigma2_init) * rng.standard_normal(n)
    elif init_mode == "sqrt_abs":
        theta = np.sqrt(np.abs(x[:, 0]))
    else:
        if theta_init is None:
            raise ValueError("init_mode='user' requires theta_init")
        theta = np.asarray(theta_init, dtype=float).copy()
        if theta.shape != (n,):
            raise ValueError("theta_init must have one entry per node")

    if isinstance(kernels, KernelAssignment):
        assignment = kernels
    else:
        assignment = KernelAssignment.shared(tuple(kernels), k)
    if assignment.n_communities != k:
        raise ValueError("kernel assignment must cover exactly k communities")
    assignment = KernelAssignment(
        tuple(_resolve_specs(assignment.communities, theta, {}))
    )

    if z_init is not None:
        z = np.asarray(z_init, dtype=np.int64).copy()
        if z.shape != (n,):
            raise ValueError("z_init must have one entry per node")
        if z.size and (z.min() < 0 or z.max() >= k):
            raise ValueError("z_init labels must lie in 0..k-1")
    else:
        km = KMeans(
            n_clusters=k,
            init="k-means++",
            n_init=100,
            random_state=int(rng.integers(2**31 - 1)),
        )
        z = km.fit_predict(x).astype(np.int64)

    state = ModelState(x, z, theta, k, assignment, hyper)

    if permutation_search is None:
        permutation_search = not assignment.is_homogeneous
    if permutation_search and k > 1:
        import itertools

        best_perm, best_ml = None, -np.inf
        for perm in itertools.permutations(range(k)):
            zp = np.array([perm[zi] for zi in z], dtype=np.int64)
            ml = total_marginal_loglik(
                ModelState(x, zp, theta, k, assignment, hyper)
            )
            if ml > best_ml:
                best_perm, best_ml = perm, ml
        z = np.array([best_perm[zi] for zi in z], dtype=np.int64)
        state = ModelState(x, z, theta, k, assignment, hyper)
    return state


class Chain:
    """A single MCMC chain bound to compiled state.

    Wraps the packed sufficient statistics and exposes the individual
    moves; construct once and call moves or :meth:`sample` repeatedly.
    """

    def __init__(self, state: ModelState, config: McmcConfig | None = None, rng=None):
        if config is None:
            config = McmcConfig(k_known=state.K)
        if config.k_known is not None and config.k_known != state.K:
            raise ValueError("state.K differs from the configured fixed K")
        self.config = config
        self.hyper = state.hyper
        self.X = np.ascontiguousarray(state.X)
        self._identity0 = 1 if state.identity_first else 0
        n, d = self.X.shape

        cache: dict = {}
        assign_vecs = _resolve_specs(state.kernels.communities, state.theta, cache)
        if config.menu:
            menu_assign = KernelAssignment(tuple(config.menu) + tuple(assign_vecs))
            menu_vecs = _resolve_specs(menu_assign.communities[: len(config.menu)],
                                       state.theta, cache)
            self.candidates = list(menu_vecs)
            kid0 = []
            for vec in assign_vecs:
                matches = [c for c, cand in enumerate(self.candidates) if cand == vec]
                if not matches:
                    raise ValueError("initial kernel assignment not found in the menu")
                kid0.append(matches[0])
        else:
            self.candidates = []
            kid0 = []
            for vec in assign_vecs:
                matches = [c for c, cand in enumerate(self.candidates) if cand == vec]
                if matches:
                    kid0.append(matches[0])
                else:
                    kid0.append(len(self.candidates))
                    self.candidates.append(vec)
        weights = (
            np.asarray(config.menu_weights, dtype=float)
            if config.menu_weights
            else np.ones(len(self.candidates))
        )
        if weights.shape != (len(self.candidates),) or np.any(weights <= 0):
            raise ValueError("menu weights must be positive, one per candidate")
        weights = weights / weights.sum()

        self._kmoves = 1 if config.k_moves_enabled else 0
        self._kernel_moves = 1 if (len(self.candidates) > 1 and config.prob_kernel > 0) else 0
        self._exch = 1 if config.transdimensional == "exchangeable" else 0
        self.kmax = state.K + (config.k_headroom if self._kmoves else 0)

        (self._npow, self._pows, self._nknot, self._knots, self._qarr,
         self._dinv, self._dlogdet) = _compile_candidates(self.candidates, d,
                                                          self._identity0)
        self._cprior = np.log(weights)
        self._cprob = weights

        self.z = state.z.astype(np.int64).copy()
        self.theta = state.theta.astype(float).copy()
        self.K = int(state.K)
        qmax = self._dinv.shape[2]
        self.kid = np.zeros(self.kmax, dtype=np.int64)
        self.kid[: self.K] = kid0
        self.nk = np.zeros(self.kmax, dtype=np.int64)
        self.M = np.zeros((self.kmax, d, qmax, qmax))
        self.v = np.zeros((self.kmax, d, qmax))
        self.s2 = np.zeros((self.kmax, d))
        self.r = np.zeros(self.kmax)

        h = self.hyper
        mgrid = np.arange(n + 2, dtype=float)
        a_m = h.a0 + 0.5 * mgrid
        self._tconst = np.asarray(
            gammaln(a_m + 0.5) - gammaln(a_m) - 0.5 * np.log(2.0 * a_m * np.pi)
        )
        self._lgam = np.asarray(gammaln(a_m))

        self._counters = np.zeros((_engine.N_MOVES, 2), dtype=np.int64)
        self._rng = rng if isinstance(rng, np.random.Generator) else _as_rng(
            config.seed if rng is None else rng
        )

        self._lo = np.empty((qmax, qmax))
        self._y = np.empty(qmax)
        self._w = np.empty(qmax)
        self._phibuf = np.empty(qmax)
        self._logp = np.empty(self.kmax)
        self._members = np.empty(n, dtype=np.int64)
        self._sidebuf = np.empty(n, dtype=np.int64)
        self._nkbuf = np.empty(self.kmax + 1, dtype=np.int64)
        self._mbuf = np.empty((qmax, qmax))
        self._vbuf = np.empty(qmax)
        self._wbuf = np.empty(len(self.candidates))
        self._tmpM = np.empty((2, d, qmax, qmax))
        self._tmpv = np.empty((2, d, qmax))
        self._tmps2 = np.empty((2, d))
        self._tmpr = np.empty(2)
        self._tmpn = np.empty(2, dtype=np.int64)
        self._tmpc = np.empty(2, dtype=np.int64)

        _engine._rebuild_all(self.X, self._st, self._menu, self.K,
                             self._identity0, self._phibuf)

    @property
    def _st(self):
        return (self.z, self.theta, self.kid, self.nk, self.M, self.v, self.s2, self.r)

    @property
    def _menu(self):
        return (self._npow, self._pows, self._nknot, self._knots, self._qarr,
                self._dinv, self._dlogdet, self._cprior, self._cprob)

    @property
    def state(self) -> ModelState:
        """Snapshot of the chain as a plain model state."""
        assignment = KernelAssignment(
            tuple(self.candidates[self.kid[k]] for k in range(self.K))
        )
        return ModelState(self.X.copy(), self.z.copy(), self.theta.copy(),
                          self.K, assignment, self.hyper)

    @property
    def acceptance(self) -> dict:
        return {
            name: (int(self._counters[row, 0]), int(self._counters[row, 1]))
            for row, name in enumerate(_MOVE_NAMES)
        }

    def _check(self, res, what):
        if res < 0:
            raise RuntimeError(f"numerical failure during {what}")
        return bool(res)

    def gibbs_update_z(self, i: int) -> bool:
        h = self.hyper
        res = _engine._gibbs_node(
            self.X, self._st, self._menu, self.K, i, self._identity0,
            h.a0, h.b0, h.nu, self._tconst, self._rng,
            self._lo, self._y, self._w, self._phibuf, self._logp,
        )
        changed = self._check(res, "label update")
        self._counters[_engine.MOVE_Z, 0] += res
        self._counters[_engine.MOVE_Z, 1] += 1
        return changed

    def gibbs_conditional(self, i: int) -> np.ndarray:
        """Normalised full-conditional label probabilities for node i."""
        h = self.hyper
        kold = self.z[i]
        _engine._update_node(self.X, self._st, self._menu, i, kold,
                             self._identity0, -1, self._phibuf)
        logp = np.empty(self.K)
        for k in range(self.K):
            ll = _engine._node_loglik(
                self.X, self._st, self._menu, i, k, self._identity0,
                h.a0, h.b0, self._tconst, self._lo, self._y, self._w, self._phibuf,
            )
            logp[k] = math.log(self.nk[k] + h.nu / self.K) + ll
        _engine._update_node(self.X, self._st, self._menu, i, kold,
                             self._identity0, 1, self._phibuf)
        p = np.exp(logp - logp.max())
        return p / p.sum()

    def mh_update_theta(self, i: int) -> bool:
        h = self.hyper
        res = _engine._theta_node(
            self.X, self._st, self._menu, i, self._identity0,
            h.a0, h.b0, h.mu_theta, h.sigma2_theta, h.sigma2_prop,
            self._tconst, self._rng,
            self._lo, self._y, self._w, self._phibuf,
        )
        accepted = self._check(res, "coordinate update")
        self._counters[_engine.MOVE_THETA, 0] += res
        self._counters[_engine.MOVE_THETA, 1] += 1
        return accepted

    def split_merge_move(self) -> bool:
        if not self.config.k_moves_enabled:
            raise ValueError("K moves are disabled when K is fixed")
        if self.X.shape[0] < 2:
            raise ValueError("split-merge needs at least two nodes")
        h = self.hyper
        self.K, acc, row = _engine._split_merge(
            self.X, self._st, self._menu, self.K, self._identity0,
            h.a0, h.b0, h.nu, h.omega, self._exch, self._tconst, self._lgam,
            self._rng, self.kmax,
            self._lo, self._y, self._w, self._phibuf,
            self._members, self._sidebuf, self._nkbuf, self._mbuf, self._vbuf,
            self._tmpM, self._tmpv, self._tmps2, self._tmpr, self._tmpn, self._tmpc,
        )
        accepted = self._check(acc, "split-merge move")
        self._counters[row, 0] += acc
        self._counters[row, 1] += 1
        return accepted

    def empty_community_move(self) -> bool:
        if not self.config.k_moves_enabled:
            raise ValueError("K moves are disabled when K is fixed")
        h = self.hyper
        self.K, acc, row = _engine._empty_move(
            self.X, self._st, self._menu, self.K, self._identity0,
            h.nu, h.omega, self._rng, self.kmax, self._nkbuf,
        )
        self._counters[row, 0] += acc
        self._counters[row, 1] += 1
        return bool(acc)

    def kernel_resample_move(self, k: int) -> bool:
        h = self.hyper
        res = _engine._kernel_move(
            self.X, self._st, self._menu, self.K, k, self._identity0,
            h.a0, h.b0, self._lgam, self._rng,
            self._mbuf, self._vbuf, self._lo, self._y, self._phibuf, self._wbuf,
        )
        changed = self._check(res, "kernel move")
        self._counters[_engine.MOVE_KERNEL, 0] += res
        self._counters[_engine.MOVE_KERNEL, 1] += 1
        return changed

    def kernel_probabilities(self, k: int) -> np.ndarray:
        """Normalised menu probabilities for community k's kernel draw."""
        h = self.hyper
        logw = np.empty(len(self.candidates))
        for c in range(len(self.candidates)):
            ml = _engine._marginal_comm_cand(
                self.X, self._st, self._menu, k, -1, c, self._identity0,
                h.a0, h.b0, self._lgam, self._mbuf, self._vbuf,
                self._lo, self._y, self._phibuf,
            )
            logw[c] = self._cprior[c] + ml
        p = np.exp(logw - logw.max())
        return p / p.sum()

    def joint_log_score(self) -> float:
        h = self.hyper
        return float(_engine._joint_score(
            self.X, self._st, self._menu, self.K, self._identity0,
            h.a0, h.b0, h.mu_theta, h.sigma2_theta, h.nu, h.omega,
            self._lgam, self._lo, self._y,
        ))

    def sample(self, n_samples=None, burn_in=None, thinning=None) -> PosteriorSamples:
        """Run the sweep schedule and collect thinned post-burn-in draws."""
        cfg = self.config
        n_samples = cfg.n_samples if n_samples is None else n_samples
        burn_in = cfg.burn_in if burn_in is None else burn_in
        thinning = cfg.thinning if thinning is None else thinning
        n, d = self.X.shape
        n_sweeps = burn_in + n_samples * thinning
        z_store = np.zeros((n_samples, n), dtype=np.int32)
        th_store = np.zeros((n_samples, n))
        kn_store = np.zeros(n_samples, dtype=np.int32)
        kid_store = np.full((n_samples, self.kmax), -1, dtype=np.int16)
        score_store = np.zeros(n_samples)
        h = self.hyper
        self.K, fail = _engine.run_chain(
            self.X, self.z, self.theta, self.kid, self.nk,
            self.M, self.v, self.s2, self.r, self.K,
            self._npow, self._pows, self._nknot, self._knots, self._qarr,
            self._dinv, self._dlogdet, self._cprior, self._cprob,
            self._identity0, h.a0, h.b0, h.mu_theta, h.sigma2_theta,
            h.nu, h.omega, h.sigma2_prop,
            self._tconst, self._lgam,
            n_sweeps, burn_in, thinning,
            cfg.prob_z, cfg.prob_theta, cfg.prob_split_merge, cfg.prob_empty,
            cfg.prob_kernel, self._kmoves, self._kernel_moves,
            self._exch, self.kmax,
            z_store, th_store, kn_store, kid_store, score_store,
            self._counters, self._rng, cfg.rebuild_every,
        )
        if fail:
            raise RuntimeError(f"numerical failure at sweep {fail}")
        return PosteriorSamples(
            z=z_store,
            theta=th_store,
            k_nonempty=kn_store,
            kernel_ids=kid_store,
            scores=score_store,
            acceptance=self.acceptance,
            seed=cfg.seed,
            burn_in=burn_in,
            thinning=thinning,
            candidate_configs=[[s.to_config() for s in cand] for cand in self.candidates],
        )


def _compile_candidates(candidates, d, identity0):
    """Flatten kernel candidates into the array encoding the engine expects."""
    qmax, knmax = 1, 1
    for cand in candidates:
        for spec in cand:
            if spec.is_identity:
                continue
            qmax = max(qmax, spec.basis.size)
            knmax = max(knmax, len(spec.basis.knots))
    c_count = len(candidates)
    npow = np.zeros((c_count, d), dtype=np.int64)
    pows = np.zeros((c_count, d, qmax), dtype=np.int64)
    nknot = np.zeros((c_count, d), dtype=np.int64)
    knots = np.zeros((c_count, d, knmax))
    qarr = np.zeros((c_count, d), dtype=np.int64)
    dinv = np.zeros((c_count, d, qmax, qmax))
    dlogdet = np.zeros((c_count, d))
    for c, cand in enumerate(candidates):
        if len(cand) != d:
            raise ValueError("kernel candidates must cover every dimension")
        for j, spec in enumerate(cand):
            if spec.is_identity:
                if j != 0 or identity0 != 1:
                    raise ValueError("identity marker is only legal on dimension 0")
                continue
            if j == 0 and identity0 == 1:
                raise ValueError("all candidates must share the identity convention")
            basis = spec.basis
            p = basis.powers
            npow[c, j] = len(p)
            pows[c, j, : len(p)] = p
            if basis.knots:
                nknot[c, j] = len(basis.knots)
                knots[c, j, : len(basis.knots)] = basis.knots
            qarr[c, j] = basis.size
            delta = spec.delta_matrix()
            inv = np.linalg.inv(delta)
            dinv[c, j, : basis.size, : basis.size] = (inv + inv.T) / 2.0
            _, logdet = np.linalg.slogdet(delta)
            dlogdet[c, j] = logdet
    return npow, pows, nknot, knots, qarr, dinv, dlogdet


def gibbs_update_z(state: ModelState, i: int, rng) -> ModelState:
    """One exact label draw for node i from its full conditional."""
    chain = Chain(state, McmcConfig(k_known=state.K), rng=rng)
    chain.gibbs_update_z(i)
    return chain.state


def mh_update_theta(state: ModelState, i: int, rng) -> tuple[ModelState, bool]:
    """One random-walk coordinate update for node i."""
    chain = Chain(state, McmcConfig(k_known=state.K), rng=rng)
    accepted = chain.mh_update_theta(i)
    return chain.state, accepted


def split_merge_move(state: ModelState, rng, menu=None, menu_weights=()) -> tuple[ModelState, bool]:
    """One split-or-merge attempt on the number of communities."""
    cfg = McmcConfig(menu=tuple(menu or ()), menu_weights=tuple(menu_weights))
    chain = Chain(state, cfg, rng=rng)
    accepted = chain.split_merge_move()
    return chain.state, accepted


def empty_community_move(state: ModelState, rng, menu=None, menu_weights=()) -> tuple[ModelState, bool]:
    """One add-or-remove attempt on the empty communities."""
    cfg = McmcConfig(menu=tuple(menu or ()), menu_weights=tuple(menu_weights))
    chain = Chain(state, cfg, rng=rng)
    accepted = chain.empty_community_move()
    return chain.state, accepted


def kernel_resample_move(state: ModelState, k: int, rng, menu=None, menu_weights=()) -> ModelState:
    """Exact kernel draw for community k over the candidate menu."""
    cfg = McmcConfig(k_known=state.K, menu=tuple(menu or ()), menu_weights=tuple(menu_weights))
    chain = Chain(state, cfg, rng=rng)
    chain.kernel_resample_move(k)
    return chain.state


def run(embedding, config: McmcConfig, hyper: Hyperparams, kernels,
        state: ModelState | None = None) -> PosteriorSamples:
    """Initialise (unless a state is given) and run one full chain."""
    seq = np.random.SeedSequence(config.seed)
    init_seq, chain_seq = seq.spawn(2)
    if state is None:
        k0 = config.k_init if config.k_init is not None else config.k_known
        if k0 is None:
            raise ValueError("set k_known or k_init in the config")
        state = init_state(
            embedding, k0, hyper, kernels,
            init_mode=config.init_mode,
            rng=np.random.Generator(np.random.Philox(init_seq)),
        )
    chain = Chain(state, config, rng=np.random.Generator(np.random.Philox(chain_seq)))
    return chain.sample()


def run_chains(embedding, config: McmcConfig, hyper: Hyperparams, kernels,
               n_chains: int = 1) -> PosteriorSamples:
    """Run independent chains differing only by seed and merge their draws."""
    if n_chains < 1:
        raise ValueError("n_chains must be positive")
    if n_chains == 1:
        return run(embedding, config, hyper, kernels)
    configs = [replace(config, seed=config.seed + 1000003 * c) for c in range(n_chains)]
    with concurrent.futures.ThreadPoolExecutor(max_workers=n_chains) as pool:
        futures = [pool.submit(run, embedding, cfg, hyper, kernels) for cfg in configs]
        parts = [f.result() for f in futures]
    return PosteriorSamples.merge(parts)
