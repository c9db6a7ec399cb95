"""Forward simulation of binary tensors and mode networks from the model."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .model import Hyperparams, ParamSample, bernoulli_prob, cp_rates
from .samplers import STREAM_SYNTH, beta_sample, dirichlet_columns, gamma_sample, make_rng
from .tensor import ModeNetwork, SparseBinaryTensor

ENUMERATION_LIMIT = 10**7


@dataclass
class SynthSpec:
    """What to simulate.

    Ground-truth weights come from ``lam`` / ``network_beta`` when given,
    otherwise from the prior in ``hyper``. Factor columns are drawn from a
    symmetric Dirichlet with ``concentration`` (defaults to ``hyper.a``).
    """

    shape: tuple
    rank: int = 3
    seed: int = 0
    lam: tuple | None = None
    concentration: float | None = None
    network_modes: tuple = ()
    network_beta: tuple | None = None
    hyper: Hyperparams | None = None
    max_expected_nnz: float = 1e7

    def __post_init__(self):
        self.shape = tuple(int(n) for n in self.shape)
        if len(self.shape) < 2 or any(n < 1 for n in self.shape):
            raise ConfigError(f"invalid shape {self.shape}")
        if self.rank < 1:
            raise ConfigError("rank must be at least 1")
        for m in self.network_modes:
            if not 1 <= m <= len(self.shape):
                raise ConfigError(f"network mode {m} not in 1..{len(self.shape)}")
        if self.hyper is None:
            self.hyper = Hyperparams(R=self.rank)
        for name in ("lam", "network_beta"):
            v = getattr(self, name)
            if v is not None:
                v = tuple(float(x) for x in np.broadcast_to(np.asarray(v, dtype=float), (self.rank,)))
                if any(x < 0 for x in v):
                    raise ConfigError(f"{name} must be non-negative")
                setattr(self, name, v)


def expected_nnz(shape, truth: ParamSample) -> float:
    """Expected number of ones, exact by enumeration up to ``ENUMERATION_LIMIT`` cells.

    Larger tensors get the upper bound ``sum_r lam_r`` (the expected total count).
    """
    if math.prod(shape) > ENUMERATION_LIMIT:
        return float(np.sum(truth.lam))
    return float(np.sum(cell_probabilities(shape, truth)))


def cell_probabilities(shape, truth: ParamSample) -> np.ndarray:
    """One-probability of every cell, flattened in C order."""
    grids = np.indices(shape).reshape(len(shape), -1).T
    return bernoulli_prob(cp_rates(grids, truth.factors, truth.lam))


def _sample_ground_truth(rng, spec: SynthSpec) -> ParamSample:
    hyper = spec.hyper
    R = spec.rank
    conc = spec.concentration
    factors = [
        dirichlet_columns(rng, np.full((n, R), conc if conc is not None else hyper.a_for(k)))
        for k, n in enumerate(spec.shape)
    ]
    p = beta_sample(rng, np.full(R, hyper.c * hyper.epsilon), hyper.c * (1 - hyper.epsilon))
    lam = gamma_sample(rng, np.full(R, hyper.g), p / (1 - p))
    if spec.lam is not None:
        lam = np.array(spec.lam)
    beta, h = {}, {}
    for m in sorted(spec.network_modes):
        h[m] = beta_sample(rng, np.full(R, hyper.d * hyper.alpha), hyper.d * (1 - hyper.alpha))
        beta[m] = gamma_sample(rng, np.full(R, hyper.f), h[m] / (1 - h[m]))
        if spec.network_beta is not None:
            beta[m] = np.array(spec.network_beta)
    return ParamSample(factors, lam, p, beta, h)


def sample_tensor(rng, shape, truth: ParamSample) -> SparseBinaryTensor:
    """Draw ``b = 1(y >= 1)`` with ``y ~ Pois(rate)`` for every cell.

    The cheaper of two exact routes is used: scatter ``Pois(lam_r)`` counts
    over cells by the rank-1 distribution ``u_r^(1) x ... x u_r^(K)``
    (cost ~ sum lam), or a Bernoulli draw per cell (cost ~ volume * R).
    """
    volume = math.prod(shape)
    total = float(np.sum(truth.lam))
    R = truth.lam.shape[0]
    if volume <= ENUMERATION_LIMIT and volume * R < total:
        probs = cell_probabilities(shape, truth)
        hits = np.flatnonzero(rng.random(volume) < probs)
        return SparseBinaryTensor(shape, np.stack(np.unravel_index(hits, shape), axis=1))
    chunks = []
    for r in range(R):
        n = int(rng.poisson(truth.lam[r]))
        if n == 0:
            continue
        coords = [rng.choice(len(u), size=n, p=u[:, r] / u[:, r].sum()) for u in truth.factors]
        chunks.append(np.stack(coords, axis=1))
    idx = np.concatenate(chunks) if chunks else np.zeros((0, len(shape)), dtype=np.int64)
    return SparseBinaryTensor(shape, idx)


def sample_network(rng, mode: int, u: np.ndarray, beta: np.ndarray) -> ModeNetwork:
    """Edges ``A_ij = 1(X_ij >= 1)``, ``X_ij ~ Pois(sum_r beta_r u_ir u_jr)``, for ``i < j``.

    Ordered pairs drawn from ``u_r (x) u_r`` at total rate ``beta_r / 2`` give
    each unordered off-diagonal pair exactly rate ``beta_r u_ir u_jr``.
    """
    n, R = u.shape
    pairs = []
    for r in range(R):
        m = int(rng.poisson(beta[r] / 2.0))
        if m == 0:
            continue
        pr = u[:, r] / u[:, r].sum()
        i = rng.choice(n, size=m, p=pr)
        j = rng.choice(n, size=m, p=pr)
        keep = i != j
        pairs.append(np.stack([i[keep], j[keep]], axis=1))
    arr = np.concatenate(pairs) if pairs else np.zeros((0, 2), dtype=np.int64)
    return ModeNetwork.from_pairs(mode, n, arr)


def generate(spec: SynthSpec):
    """Simulate a tensor and its networks.

    Returns ``(tensor, networks, truth)`` where ``truth`` is a
    :class:`~ztpcp.model.ParamSample`. Generation is a pure function of
    ``spec`` (including its seed).
    """
    rng = make_rng(spec.seed, STREAM_SYNTH)
    truth = _sample_ground_truth(rng, spec)
    est = expected_nnz(spec.shape, truth)
    if est > spec.max_expected_nnz:
        raise DataError(
            f"expected {est:.3g} ones exceeds the budget of {spec.max_expected_nnz:.3g}; "
            "lower lam or raise max_expected_nnz"
        )
    tensor = sample_tensor(rng, spec.shape, truth)
    networks = [
        sample_network(rng, m, truth.factors[m - 1], truth.beta[m]) for m in sorted(spec.network_modes)
    ]
    return tensor, networks, truth
