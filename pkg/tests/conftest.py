import numpy as np
import pytest

from lsbm.kernels import BasisFamily, KernelAssignment, KernelSpec, identity_spec
from lsbm.model import Hyperparams, ModelState


def rng_for(seed):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def spd(q, rng, scale=1.0):
    a = rng.normal(size=(q, q))
    return scale * (a @ a.T + q * np.eye(q))


ALL_BASES = [
    BasisFamily.constant(),
    BasisFamily.homogeneous_linear(),
    BasisFamily.affine_linear(),
    BasisFamily.polynomial(2, intercept=True),
    BasisFamily.polynomial(3, intercept=False),
    BasisFamily.homogeneous_polynomial(3),
    BasisFamily.truncated_power_spline((-0.2, 0.1, 0.5)),
]


def random_state(rng, n=12, d=2, k=2, identity=False, bases=None):
    """A valid random model state with concrete kernel matrices."""
    x = rng.normal(0.3, 0.4, size=(n, d))
    theta = rng.normal(0.2, 0.5, size=n)
    z = rng.integers(0, k, size=n)
    z[:k] = np.arange(k)
    pool = bases if bases is not None else ALL_BASES
    comms = []
    for _ in range(k):
        specs = []
        for j in range(d):
            if identity and j == 0:
                specs.append(identity_spec())
            else:
                basis = pool[rng.integers(0, len(pool))]
                specs.append(KernelSpec(basis, spd(basis.size, rng)))
        comms.append(tuple(specs))
    hyper = Hyperparams(mu_theta=0.0)
    return ModelState(x, z.astype(np.int64), theta, k, KernelAssignment(tuple(comms)), hyper)


@pytest.fixture
def rng():
    return rng_for(12345)
