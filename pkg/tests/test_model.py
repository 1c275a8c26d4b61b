import itertools
import math

import numpy as np
import pytest
import scipy.stats

from conftest import ALL_BASES, random_state, rng_for, spd
from lsbm.kernels import BasisFamily, KernelAssignment, KernelSpec, identity_spec
from lsbm.model import (
    Hyperparams,
    ModelState,
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

HYPER = Hyperparams(mu_theta=0.0)


def single_community_state(x, theta, spec, hyper=HYPER):
    x = np.asarray(x, dtype=float).reshape(len(theta), -1)
    z = np.zeros(len(theta), dtype=np.int64)
    return ModelState(x, z, np.asarray(theta, float), 1,
                      KernelAssignment.shared((spec,) * x.shape[1], 1), hyper)


def test_hyperparams_validation():
    with pytest.raises(ValueError):
        Hyperparams(a0=-1.0)
    with pytest.raises(ValueError):
        Hyperparams(omega=1.5)
    resolved = Hyperparams().resolve(np.array([1.0, 3.0]))
    assert resolved.mu_theta == 2.0


def test_posterior_params_empty_community_returns_prior():
    spec = KernelSpec(BasisFamily.constant(), np.array([[2.0]]))
    state = ModelState(
        np.array([[0.4]]), np.array([0]), np.array([0.1]), 2,
        KernelAssignment.shared((spec,), 2), HYPER,
    )
    params = posterior_params(state, 1, 0)
    assert params.shape == HYPER.a0
    assert params.scale == HYPER.b0
    np.testing.assert_allclose(params.mean_fn([0.3, -1.0]), [0.0, 0.0])
    np.testing.assert_allclose(params.cov_fn([0.3], [0.3]), [[2.0]])


def test_posterior_scale_single_constant_observation():
    c, x = 2.0, 0.7
    spec = KernelSpec(BasisFamily.constant(), np.array([[c]]))
    state = single_community_state([x], [0.2], spec)
    params = posterior_params(state, 0, 0)
    assert params.shape == HYPER.a0 + 0.5
    np.testing.assert_allclose(params.scale, HYPER.b0 + x**2 / (2 * (c + 1)))


def test_posterior_scale_matches_dense_solve():
    rng = rng_for(3)
    basis = BasisFamily.polynomial(2)
    delta = spd(3, rng)
    spec = KernelSpec(basis, delta)
    theta = rng.normal(size=5)
    x = rng.normal(size=5)
    state = single_community_state(x, theta, spec)
    params = posterior_params(state, 0, 0)
    from lsbm.kernels import design_matrix

    p = design_matrix(basis, theta)
    cov = p @ delta @ p.T + np.eye(5)
    expected = HYPER.b0 + 0.5 * x @ np.linalg.solve(cov, x)
    np.testing.assert_allclose(params.scale, expected, rtol=1e-10)


def test_posterior_params_rejects_identity_dimension():
    state = random_state(rng_for(1), identity=True)
    with pytest.raises(ValueError):
        posterior_params(state, 0, 0)


def test_prior_predictive_is_student_t():
    c = 3.0
    spec = KernelSpec(BasisFamily.constant(), np.array([[c]]))
    state = ModelState(
        np.array([[0.4]]), np.array([0]), np.array([0.1]), 2,
        KernelAssignment.shared((spec,), 2), HYPER,
    )
    got = predictive_logpdf(state, 0, 1, leave_out=True)
    scale2 = HYPER.b0 * (1 + c)
    expected = scipy.stats.t.logpdf(0.4, df=2 * HYPER.a0, loc=0.0, scale=math.sqrt(scale2))
    np.testing.assert_allclose(got, expected, rtol=1e-12)


def test_leave_one_out_equals_reduced_state():
    rng = rng_for(8)
    for identity in (False, True):
        for _ in range(10):
            state = random_state(rng, n=9, d=2, k=2, identity=identity)
            for i in range(state.n_nodes):
                k = int(state.z[i])
                loo = predictive_logpdf(state, i, k, leave_out=True)
                keep = np.arange(state.n_nodes) != i
                reduced = ModelState(
                    np.vstack([state.X[keep], state.X[i]]),
                    np.append(state.z[keep], k),
                    np.append(state.theta[keep], state.theta[i]),
                    state.K, state.kernels, state.hyper,
                )
                scratch = predictive_logpdf(reduced, state.n_nodes - 1, k, leave_out=True)
                assert abs(loo - scratch) < 1e-10


def test_predictive_matches_quadrature_oracle():
    # 4-node constant-kernel community; integrate the normal likelihood over
    # the exact coefficient/variance posterior on a fine grid
    c = 1.5
    x_obs = np.array([0.35, 0.2, 0.5, 0.41])
    x_new = 0.3
    spec = KernelSpec(BasisFamily.constant(), np.array([[c]]))
    state = ModelState(
        np.append(x_obs, x_new)[:, None], np.array([0, 0, 0, 0, 1]),
        np.zeros(5), 2, KernelAssignment.shared((spec,), 2), HYPER,
    )
    got = predictive_logpdf(state, 4, 0, leave_out=True)

    w = np.linspace(-3.0, 3.0, 4001)
    log_s2 = np.linspace(math.log(1e-6), math.log(50.0), 4001)
    s2 = np.exp(log_s2)
    a0, b0 = HYPER.a0, HYPER.b0
    log_post = (
        -(a0 + 1) * np.log(s2)[None, :]
        - b0 / s2[None, :]
        - 0.5 * np.log(s2)[None, :] - w[:, None] ** 2 / (2 * c * s2[None, :])
        + np.sum(
            -0.5 * np.log(s2)[None, :, None]
            - (x_obs[None, None, :] - w[:, None, None]) ** 2 / (2 * s2[None, :, None]),
            axis=2,
        )
        + np.log(s2)[None, :]  # jacobian of the log-variance grid
    )
    log_post -= log_post.max()
    post = np.exp(log_post)
    like = np.exp(
        -0.5 * np.log(2 * math.pi * s2)[None, :]
        - (x_new - w[:, None]) ** 2 / (2 * s2[None, :])
    )
    pred = float((post * like).sum() / post.sum())
    assert abs(math.exp(got) - pred) < 1e-3


def test_predictive_constant_kernel_matches_conjugate_normal_model():
    # independent closed-form: x ~ N(mu, s2), mu | s2 ~ N(0, c s2),
    # s2 ~ IG(a0, b0); posterior predictive is Student t
    rng = rng_for(4)
    c = 2.0
    spec = KernelSpec(BasisFamily.constant(), np.array([[c]]))
    x_obs = rng.normal(0.3, 0.2, size=6)
    x_new = 0.25
    state = ModelState(
        np.append(x_obs, x_new)[:, None], np.array([0] * 6 + [1]),
        np.zeros(7), 2, KernelAssignment.shared((spec,), 2), HYPER,
    )
    got = predictive_logpdf(state, 6, 0, leave_out=True)

    m = len(x_obs)
    prec = 1.0 / c + m
    mu_n = x_obs.sum() / prec
    a_n = HYPER.a0 + m / 2
    b_n = HYPER.b0 + 0.5 * (x_obs @ x_obs - mu_n**2 * prec)
    scale2 = b_n / a_n * (1 + 1 / prec)
    expected = scipy.stats.t.logpdf(x_new, df=2 * a_n, loc=mu_n, scale=math.sqrt(scale2))
    np.testing.assert_allclose(got, expected, rtol=1e-10)


def test_marginal_empty_community_is_zero():
    spec = KernelSpec(BasisFamily.constant(), np.array([[2.0]]))
    state = ModelState(
        np.array([[0.4]]), np.array([0]), np.array([0.1]), 2,
        KernelAssignment.shared((spec,), 2), HYPER,
    )
    assert marginal_loglik(state, 1, 0) == 0.0


def _sequential_sum(x, theta, spec, hyper=HYPER):
    """Chain rule oracle: sum of one-point predictives, members added one
    at a time."""
    total = 0.0
    m = len(theta)
    asg = KernelAssignment.shared((spec,), 2)
    for t in range(m):
        z = np.where(np.arange(m) < t, 0, 1).astype(np.int64)
        state = ModelState(np.asarray(x, float).reshape(m, 1), z,
                           np.asarray(theta, float), 2, asg, hyper)
        total += predictive_logpdf(state, t, 0, leave_out=False)
    return total


@pytest.mark.parametrize("basis", ALL_BASES + [None],
                         ids=[b.variant for b in ALL_BASES] + ["identity"])
def test_marginal_equals_sequential_predictives(basis):
    rng = rng_for(0 if basis is None else basis.size)
    for _ in range(10):
        m = int(rng.integers(2, 9))
        x = rng.normal(0.2, 0.5, size=m)
        theta = rng.normal(0.1, 0.4, size=m)
        spec = identity_spec() if basis is None else KernelSpec(basis, spd(basis.size, rng))
        state = single_community_state(x, theta, spec)
        ml = marginal_loglik(state, 0, 0)
        seq = _sequential_sum(x, theta, spec)
        assert abs(ml - seq) <= 1e-8 * max(abs(ml), 1.0)


def test_identity_marginal_closed_form_agreement():
    # three nodes with coordinates equal to the data: residual scale stays b0
    theta = np.array([0.3, -0.1, 0.55])
    x = theta.copy()
    state = single_community_state(x, theta, identity_spec())
    got = marginal_loglik(state, 0, 0)
    a0, b0 = HYPER.a0, HYPER.b0
    a_n = a0 + 1.5
    closed = (
        math.lgamma(a_n) - math.lgamma(a0)
        + a0 * math.log(b0) - a_n * math.log(b0)
        - 1.5 * math.log(2 * math.pi)
    )
    np.testing.assert_allclose(got, closed, rtol=1e-12)
    seq = _sequential_sum(x, theta, identity_spec())
    np.testing.assert_allclose(got, seq, rtol=1e-10)


def test_marginal_invariant_to_member_order():
    rng = rng_for(6)
    state = random_state(rng, n=10, d=2, k=2, identity=True)
    base = [marginal_loglik(state, k, j) for k in range(2) for j in range(2)]
    perm = rng.permutation(10)
    shuffled = ModelState(state.X[perm], state.z[perm], state.theta[perm],
                          state.K, state.kernels, state.hyper)
    after = [marginal_loglik(shuffled, k, j) for k in range(2) for j in range(2)]
    np.testing.assert_allclose(base, after, rtol=1e-12)


def test_log_prior_z_closed_forms():
    np.testing.assert_allclose(log_prior_z([0, 0], 2, 1.0), math.log(3 / 8), rtol=1e-12)
    np.testing.assert_allclose(log_prior_z([0, 1], 2, 1.0), math.log(1 / 8), rtol=1e-12)


@pytest.mark.parametrize("n,k", [(n, k) for n in range(1, 7) for k in (1, 2, 3)])
def test_log_prior_z_sums_to_one(n, k):
    total = sum(
        math.exp(log_prior_z(z, k, 1.0))
        for z in itertools.product(range(k), repeat=n)
    )
    np.testing.assert_allclose(total, 1.0, rtol=1e-10)


def test_log_prior_z_exchangeable():
    rng = rng_for(10)
    z = rng.integers(0, 3, size=9)
    perm = rng.permutation(9)
    assert log_prior_z(z, 3, 1.7) == pytest.approx(log_prior_z(z[perm], 3, 1.7))


def test_conditional_prior_sums_to_one():
    rng = rng_for(11)
    for _ in range(5):
        state = random_state(rng, n=10, k=3)
        probs = conditional_prior_z(state, 2)
        np.testing.assert_allclose(probs.sum(), 1.0, rtol=1e-12)


def test_conditional_prior_two_node_case():
    spec = KernelSpec(BasisFamily.constant(), np.array([[1.0]]))
    state = ModelState(
        np.zeros((2, 1)), np.array([0, 1]), np.zeros(2), 2,
        KernelAssignment.shared((spec,), 2), HYPER,
    )
    probs = conditional_prior_z(state, 0)
    np.testing.assert_allclose(probs, [0.25, 0.75])


def test_conditional_prior_matches_marginal_ratio():
    rng = rng_for(12)
    state = random_state(rng, n=8, k=3)
    i = 4
    probs = conditional_prior_z(state, i)
    ratios = []
    for k in range(3):
        z_variant = state.z.copy()
        z_variant[i] = k
        ratios.append(math.exp(log_prior_z(z_variant, 3, state.hyper.nu)))
    ratios = np.asarray(ratios) / sum(ratios)
    np.testing.assert_allclose(probs, ratios, rtol=1e-10)


def test_theta_and_K_priors():
    np.testing.assert_allclose(log_prior_K(1, 0.1), math.log(0.1), rtol=1e-12)
    hyper = Hyperparams(mu_theta=0.7)
    np.testing.assert_allclose(
        log_prior_theta(0.7, hyper),
        -0.5 * math.log(2 * math.pi * hyper.sigma2_theta),
        rtol=1e-12,
    )
    ks = np.arange(1, 10**6 + 1)
    total = np.exp(np.log(0.1) + (ks - 1) * np.log(0.9)).sum()
    assert abs(total - 1.0) < 1e-6
    with pytest.raises(ValueError):
        log_prior_K(0, 0.1)


def test_predictive_invariant_to_member_order():
    rng = rng_for(13)
    state = random_state(rng, n=9, d=2, k=2)
    i = 0
    base = predictive_logpdf(state, i, 1, leave_out=True)
    others = np.arange(1, 9)
    perm = np.concatenate([[0], rng.permutation(others)])
    shuffled = ModelState(state.X[perm], state.z[perm], state.theta[perm],
                          state.K, state.kernels, state.hyper)
    after = predictive_logpdf(shuffled, 0, 1, leave_out=True)
    np.testing.assert_allclose(base, after, rtol=1e-10)


def test_joint_log_score_finite():
    rng = rng_for(14)
    for identity in (False, True):
        state = random_state(rng, n=10, d=3, k=3, identity=identity)
        assert math.isfinite(joint_log_score(state))
        assert math.isfinite(total_marginal_loglik(state))
