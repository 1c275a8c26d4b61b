import numpy as np
import pytest

from lsbm.simulate import Curve, LsbmSpec, adjacency_to_graph, preset, sample_latent, sample_rdpg


def test_hardy_weinberg_curve_values():
    spec = preset("hardy_weinberg")
    f1, f2 = spec.curves
    np.testing.assert_allclose(f2(0.0), [[0.0, 0.0, 1.0]], atol=1e-15)
    np.testing.assert_allclose(f1(0.5), [[0.25, 0.25, 0.5]], atol=1e-15)
    np.testing.assert_allclose(f1(0.0), [[1.0, 0.0, 0.0]], atol=1e-15)
    # both curves stay on the probability simplex
    grid = np.linspace(0, 1, 101)
    for curve in (f1, f2):
        np.testing.assert_allclose(curve(grid).sum(axis=1), 1.0, atol=1e-12)


def test_sbm_positions_are_exactly_block_means():
    spec = preset("sbm_fig3a")
    rng = np.random.default_rng(0)
    z, theta, x = sample_latent(spec, 500, rng)
    nu = np.array([[0.75, 0.25], [0.25, 0.75]])
    np.testing.assert_allclose(x, nu[z], atol=1e-15)


def test_dcsbm_positions_scale_with_theta():
    spec = preset("dcsbm_fig3b")
    rng = np.random.default_rng(1)
    z, theta, x = sample_latent(spec, 500, rng)
    nu = np.array([[0.75, 0.25], [0.25, 0.75]])
    np.testing.assert_allclose(x, theta[:, None] * nu[z], atol=1e-14)


def test_preset_parameters_match_documented_values():
    sbm = preset("sbm_fig3a")
    assert sbm.n == 1000 and sbm.weights == (0.5, 0.5)
    assert sbm.theta_law == ("beta", 1.0, 1.0, 1.0)
    np.testing.assert_allclose(sbm.curves[0].coeffs, [[0.75], [0.25]])
    np.testing.assert_allclose(sbm.curves[1].coeffs, [[0.25], [0.75]])

    dcsbm = preset("dcsbm_fig3b")
    np.testing.assert_allclose(dcsbm.curves[0].coeffs, [[0.0, 0.75], [0.0, 0.25]])
    np.testing.assert_allclose(dcsbm.curves[1].coeffs, [[0.0, 0.25], [0.0, 0.75]])

    quad = preset("quadratic_fig3c")
    assert quad.n == 1000 and quad.weights == (0.5, 0.5)
    # per-community quadratic coefficients -1 and -4, unit linear terms,
    # zero intercepts; scores follow a scaled Beta(2, 1)
    np.testing.assert_allclose(quad.curves[0].coeffs[1], [0.0, 1.0, -1.0])
    np.testing.assert_allclose(quad.curves[1].coeffs[1], [0.0, 1.0, -4.0])
    np.testing.assert_allclose(quad.curves[0].coeffs[0], [0.0, 1.0, 0.0])
    assert quad.theta_law[:3] == ("beta", 2.0, 1.0)

    hw = preset("hardy_weinberg")
    assert hw.n == 1000 and hw.theta_law == ("uniform", 0.0, 1.0)


def test_unknown_preset():
    with pytest.raises(ValueError, match="unknown preset"):
        preset("nope")


def test_quadratic_preset_inner_products_valid_on_grid():
    spec = preset("quadratic_fig3c")
    lo, hi = spec.support()
    grid = np.linspace(lo, hi, 1000)
    values = np.vstack([c(grid) for c in spec.curves])
    inner = values @ values.T
    assert inner.min() >= -1e-9
    assert inner.max() <= 1.0 + 1e-9


def test_invalid_curves_rejected_at_construction():
    big = Curve(np.array([[0.0, 2.0]]))  # f(t) = 2t, inner products reach 4
    with pytest.raises(ValueError, match="inner products"):
        LsbmSpec(weights=(1.0,), curves=(big,), theta_law=("uniform", 0.0, 1.0), n=10)


def test_spec_validation():
    ok = Curve(np.array([[0.0, 0.5]]))
    with pytest.raises(ValueError):
        LsbmSpec(weights=(0.6, 0.6), curves=(ok, ok), theta_law=("uniform", 0, 1), n=10)
    with pytest.raises(ValueError):
        LsbmSpec(weights=(1.0,), curves=(ok,), theta_law=("what", 0, 1), n=10)
    with pytest.raises(ValueError):
        LsbmSpec(weights=(1.0,), curves=(ok,), theta_law=("uniform", 1, 0), n=10)


def test_sample_latent_proportions_converge():
    spec = LsbmSpec(
        weights=(0.3, 0.7),
        curves=(Curve(np.array([[0.0, 0.4]])), Curve(np.array([[0.0, 0.6]]))),
        theta_law=("uniform", 0.0, 1.0),
        n=100,
    )
    rng = np.random.default_rng(2)
    z, theta, x = sample_latent(spec, 10000, rng)
    p_hat = np.mean(z == 0)
    se = np.sqrt(0.3 * 0.7 / 10000)
    assert abs(p_hat - 0.3) < 3 * se
    assert theta.min() >= 0.0 and theta.max() <= 1.0


def test_rdpg_complete_and_empty():
    rng = np.random.default_rng(3)
    x = np.tile([1.0, 0.0], (6, 1))
    adj = sample_rdpg(x, rng)
    dense = adj.toarray()
    assert np.array_equal(dense, 1 - np.eye(6))
    empty = sample_rdpg(np.zeros((5, 2)), rng)
    assert empty.matrix.nnz == 0


def test_rdpg_undirected_symmetric_zero_diagonal():
    rng = np.random.default_rng(4)
    spec = preset("dcsbm_fig3b")
    z, theta, x = sample_latent(spec, 300, rng)
    adj = sample_rdpg(x, rng)
    dense = adj.toarray()
    assert np.array_equal(dense, dense.T)
    assert np.all(np.diag(dense) == 0)
    assert adj.symmetric


def test_rdpg_edge_frequency_matches_probability():
    # many copies of a fixed pair of positions: the edge frequency between
    # the groups estimates the inner product
    rng = np.random.default_rng(5)
    xi = np.array([0.6, 0.3])
    xj = np.array([0.5, 0.4])
    p = float(xi @ xj)
    m = 320
    x = np.vstack([np.tile(xi, (m, 1)), np.tile(xj, (m, 1))])
    adj = sample_rdpg(x, rng)
    cross = adj.toarray()[:m, m:]
    draws = m * m
    p_hat = cross.sum() / draws
    se = np.sqrt(p * (1 - p) / draws)
    assert abs(p_hat - p) < 3 * se


def test_rdpg_rejects_invalid_inner_products():
    rng = np.random.default_rng(6)
    with pytest.raises(ValueError, match="inner products"):
        sample_rdpg(np.tile([1.2, 0.0], (4, 1)), rng)


def test_rdpg_directed_and_bipartite_modes():
    rng = np.random.default_rng(7)
    x = np.tile([0.9, 0.0], (5, 1))
    directed = sample_rdpg(x, rng, mode="directed")
    assert not directed.symmetric
    assert np.all(np.diag(directed.toarray()) == 0)
    right = np.tile([0.8, 0.1], (7, 1))
    bip = sample_rdpg(x, rng, mode="bipartite", x_right=right)
    assert bip.shape == (5, 7)
    with pytest.raises(ValueError):
        sample_rdpg(x, rng, mode="bipartite")


def test_adjacency_to_graph_round_trip():
    rng = np.random.default_rng(8)
    spec = preset("sbm_fig3a")
    z, theta, x = sample_latent(spec, 60, rng)
    adj = sample_rdpg(x, rng)
    graph = adjacency_to_graph(adj, "undirected")
    from lsbm.graph import to_adjacency

    np.testing.assert_array_equal(to_adjacency(graph).toarray(), adj.toarray())


def test_spec_config_round_trip():
    spec = preset("quadratic_fig3c")
    back = LsbmSpec.from_config(spec.to_config())
    assert back.weights == spec.weights
    assert back.theta_law == spec.theta_law
    for a, b in zip(back.curves, spec.curves):
        np.testing.assert_array_equal(a.coeffs, b.coeffs)
