import numpy as np
import pytest

from ztpcp.model import Hyperparams, ModelState, SuffStats
from ztpcp.samplers import make_rng


@pytest.fixture
def rng():
    return make_rng(12345, 0)


def make_state(shape, lam, factors=None, hyper=None, network_modes=(), beta=None):
    """A hand-built state: uniform factors unless given."""
    lam = np.asarray(lam, dtype=float)
    R = lam.size
    hyper = hyper or Hyperparams(R=R)
    if factors is None:
        factors = [np.full((n, R), 1.0 / n) for n in shape]
    beta = beta or {m: np.ones(R) for m in network_modes}
    h = {m: np.full(R, 0.5) for m in network_modes}
    return ModelState(
        tuple(shape), hyper, [np.asarray(u, dtype=float) for u in factors], lam, np.full(R, 0.5),
        beta, h, SuffStats.zeros(shape, R, network_modes),
    )
