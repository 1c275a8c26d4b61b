import numpy as np
import pytest
import scipy.sparse as sp

from lsbm.spectral import (
    ase,
    dase,
    joint_embedding,
    load_embedding_binary,
    load_embedding_csv,
    save_embedding_binary,
    save_embedding_csv,
    select_dim,
)
from lsbm.simulate import preset, sample_latent, sample_rdpg
from lsbm.summary import procrustes_align


def test_two_node_closed_form():
    emb = ase(np.array([[0.0, 1.0], [1.0, 0.0]]), 1)
    # eigenvalues are {1, -1}; the magnitude tie breaks toward +1
    assert emb.spectrum.tolist() == [1.0]
    np.testing.assert_allclose(emb.positions.ravel(), [2**-0.5, 2**-0.5])
    x = emb.positions
    assert abs(float(x[0] @ x[1]) - 0.5) < 1e-12


def _sbm_probability_matrix(n=60):
    nu = np.array([[0.75, 0.25], [0.25, 0.75]])
    z = np.arange(n) % 2
    x = nu[z]
    return x @ x.T, x


def test_exact_low_rank_reconstruction():
    p, _ = _sbm_probability_matrix()
    emb = ase(p, 2)
    err = np.linalg.norm(emb.positions @ emb.positions.T - p)
    assert err < 1e-8 * np.linalg.norm(p)


def test_sbm_embedding_close_to_truth_after_procrustes():
    # threshold calibrated by repeated simulation of this generator
    # (residuals 1.50..1.60 across 12 seeds at n=1000)
    rng = np.random.default_rng(7)
    spec = preset("sbm_fig3a")
    z, theta, x = sample_latent(spec, 1000, rng)
    adj = sample_rdpg(x, rng)
    emb = ase(adj, 2)
    _, residual = procrustes_align(emb.positions, x)
    assert residual < 2.0


def test_ase_rejects_asymmetric():
    with pytest.raises(ValueError, match="symmetric"):
        ase(np.array([[0.0, 1.0], [0.0, 0.0]]), 1)


def test_ase_dimension_bounds():
    with pytest.raises(ValueError, match="d must"):
        ase(np.eye(3), 4)


def test_dase_identity():
    left, right = dase(np.eye(2), 2)
    np.testing.assert_allclose(left.spectrum, [1.0, 1.0])
    np.testing.assert_allclose(left.positions @ right.positions.T, np.eye(2), atol=1e-12)


def test_dase_exact_rank_reconstruction():
    rng = np.random.default_rng(3)
    x = rng.uniform(0.1, 0.6, size=(25, 3))
    y = rng.uniform(0.1, 0.6, size=(18, 3))
    p = x @ y.T
    left, right = dase(p, 3)
    np.testing.assert_allclose(left.positions @ right.positions.T, p, atol=1e-10)


def test_dase_bipartite_scale_smoke():
    # sparse rectangular matrix at the scale of a large bipartite graph
    rng = np.random.default_rng(0)
    mat = sp.random(439, 60635, density=0.027, random_state=rng, format="csr")
    mat.data[:] = 1.0
    left, right = dase(mat, 5)
    assert left.positions.shape == (439, 5)
    assert right.positions.shape == (60635, 5)
    assert np.all(np.diff(left.spectrum) <= 1e-9)


def test_dase_symmetric_psd_sides_match_up_to_sign():
    p, _ = _sbm_probability_matrix(40)
    left, right = dase(p, 2)
    for j in range(2):
        same = np.allclose(left.positions[:, j], right.positions[:, j], atol=1e-8)
        flip = np.allclose(left.positions[:, j], -right.positions[:, j], atol=1e-8)
        assert same or flip


def test_isolated_node_embeds_to_zero():
    a = np.zeros((5, 5))
    a[0, 1] = a[1, 0] = 1.0
    a[2, 3] = a[3, 2] = 1.0
    emb = ase(a, 2)  # node 4 is isolated
    np.testing.assert_allclose(emb.positions[4], 0.0, atol=1e-12)


def test_eigvector_columns_orthonormal():
    p, _ = _sbm_probability_matrix(30)
    emb = ase(p, 2)
    gamma = emb.positions / np.sqrt(np.abs(emb.spectrum))
    np.testing.assert_allclose(gamma.T @ gamma, np.eye(2), atol=1e-10)


def test_gram_matrix_rotation_invariant():
    rng = np.random.default_rng(5)
    p, _ = _sbm_probability_matrix(30)
    emb = ase(p, 2)
    q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
    rotated = emb.positions @ q
    np.testing.assert_allclose(
        rotated @ rotated.T, emb.positions @ emb.positions.T, atol=1e-10
    )


def test_joint_embedding_concatenates():
    rng = np.random.default_rng(1)
    x = rng.uniform(0.1, 0.6, size=(10, 2))
    p = x @ x.T
    left, right = dase(p, 2)
    joint = joint_embedding(left, right)
    assert joint.positions.shape == (10, 4)
    np.testing.assert_array_equal(joint.positions[:, :2], left.positions)
    np.testing.assert_array_equal(joint.positions[:, 2:], right.positions)
    with pytest.raises(ValueError):
        joint_embedding(left, dase(p, 1)[1])


def _profile_oracle(vals):
    # independent brute-force maximisation of the two-group profile likelihood
    vals = np.asarray(vals, dtype=float)
    p = vals.size
    best_q, best = None, -np.inf
    for q in range(1, p):
        head, tail = vals[:q], vals[q:]
        var = (np.sum((head - head.mean()) ** 2) + np.sum((tail - tail.mean()) ** 2)) / p
        ll = -0.5 * p * np.log(max(var, 1e-30))
        if ll > best + 1e-12:
            best_q, best = q, ll
    return best_q


def test_select_dim_first_elbow_matches_oracle():
    spectrum = (10.0, 9.5, 1.0, 0.9, 0.8)
    assert _profile_oracle(spectrum) == 2
    assert select_dim(spectrum, 1) == 2


def test_select_dim_random_spectra_match_oracle():
    rng = np.random.default_rng(11)
    for _ in range(25):
        vals = np.sort(rng.uniform(0.1, 10.0, size=rng.integers(4, 12)))[::-1]
        assert select_dim(vals, 1) == _profile_oracle(vals)


def test_select_dim_constant_spectrum_degenerates_to_one():
    assert select_dim((3.0, 3.0, 3.0, 3.0), 1) == 1


def test_second_elbow_beyond_first():
    rng = np.random.default_rng(2)
    planted = np.sort(np.concatenate([
        rng.uniform(8, 10, size=4), rng.uniform(0.1, 0.6, size=12)
    ]))[::-1]
    first = select_dim(planted, 1)
    second = select_dim(planted, 2)
    assert second > first


def test_select_dim_errors():
    with pytest.raises(ValueError):
        select_dim((1.0, 0.9), 1)
    with pytest.raises(ValueError):
        select_dim((3.0, 2.0, 1.0), 5)


@pytest.mark.parametrize("fmt", ["csv", "binary"])
def test_embedding_round_trip(tmp_path, fmt):
    p, _ = _sbm_probability_matrix(20)
    emb = ase(p, 2)
    path = tmp_path / f"emb.{fmt}"
    if fmt == "csv":
        save_embedding_csv(emb, path)
        back = load_embedding_csv(path)
    else:
        save_embedding_binary(emb, path)
        back = load_embedding_binary(path)
    np.testing.assert_allclose(back.positions, emb.positions, rtol=0, atol=1e-15)
    np.testing.assert_allclose(back.spectrum, emb.spectrum, rtol=0, atol=1e-15)
    assert back.side == emb.side
