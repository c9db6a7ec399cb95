"""Model parameters, sufficient statistics and CP rate evaluation."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError
from .samplers import beta_sample, dirichlet_columns, gamma_sample

# Products over more modes than this are accumulated in log space.
LOG_SPACE_MODES = 4


@dataclass
class Hyperparams:
    """Prior hyperparameters.

    ``epsilon`` and ``alpha`` default to ``1 / R`` (0.5 when ``R == 1``, where
    ``1 / R`` would make the beta prior degenerate); ``g`` and ``f`` to 0.1.
    ``a`` is the Dirichlet concentration, either one value for every mode
    or one per mode.
    """

    R: int = 20
    a: float | tuple = 1.0
    c: float = 1.0
    epsilon: float | None = None
    g: float = 0.1
    d: float = 1.0
    alpha: float | None = None
    f: float = 0.1

    def __post_init__(self):
        self.R = int(self.R)
        if self.R < 1:
            raise ConfigError(f"R must be at least 1, got {self.R}")
        default = 1.0 / self.R if self.R > 1 else 0.5
        if self.epsilon is None:
            self.epsilon = default
        if self.alpha is None:
            self.alpha = default
        if not isinstance(self.a, (int, float)):
            self.a = tuple(float(x) for x in self.a)
        for name in ("c", "g", "d", "f"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"hyperparameter {name} must be positive")
        if not all(x > 0 for x in np.atleast_1d(self.a)):
            raise ConfigError("hyperparameter a must be positive")
        for name in ("epsilon", "alpha"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"hyperparameter {name} must lie in (0, 1), got {v}")

    def a_for(self, mode_index: int) -> float:
        """Dirichlet concentration of the 0-based mode ``mode_index``."""
        if isinstance(self.a, tuple):
            return self.a[mode_index]
        return float(self.a)


@dataclass
class SuffStats:
    """Aggregated allocation counts.

    ``s_mode[k][j, r]`` sums the counts of factor ``r`` over one-entries whose
    mode-``k`` coordinate is ``j``; ``s_total[r]`` sums them over all entries.
    ``v_node`` / ``v_total`` are the analogues per attached network, keyed by
    1-based mode number.
    """

    s_mode: list
    s_total: np.ndarray
    v_node: dict = field(default_factory=dict)
    v_total: dict = field(default_factory=dict)

    @classmethod
    def zeros(cls, shape: Sequence[int], R: int, network_modes=()) -> "SuffStats":
        return cls(
            [np.zeros((n, R)) for n in shape],
            np.zeros(R),
            {m: np.zeros((shape[m - 1], R)) for m in network_modes},
            {m: np.zeros(R) for m in network_modes},
        )

    def copy(self) -> "SuffStats":
        return copy.deepcopy(self)

    def scaled(self, w: float) -> "SuffStats":
        return SuffStats(
            [s * w for s in self.s_mode],
            self.s_total * w,
            {m: v * w for m, v in self.v_node.items()},
            {m: v * w for m, v in self.v_total.items()},
        )

    def is_consistent(self, atol: float = 1e-6) -> bool:
        ok = all(np.allclose(s.sum(axis=0), self.s_total, atol=atol) for s in self.s_mode)
        return ok and all(np.all(s >= 0) for s in self.s_mode) and np.all(self.s_total >= 0)


@dataclass
class LatentState:
    """Latent counts at the one-entries and at each network's edges."""

    y: np.ndarray
    x: dict = field(default_factory=dict)


@dataclass
class ModelState:
    """Everything one chain carries between iterations.

    ``factors[k]`` is the ``n_k x R`` matrix of mode ``k + 1``; each column
    lies on the simplex. ``beta`` / ``h`` are keyed by the 1-based mode of the
    attached network.
    """

    shape: tuple
    hyper: Hyperparams
    factors: list
    lam: np.ndarray
    p: np.ndarray
    beta: dict = field(default_factory=dict)
    h: dict = field(default_factory=dict)
    suff: SuffStats | None = None
    latent: LatentState | None = None
    iteration: int = 0
    seed: int = 0
    stream_weight: float = 0.0

    @property
    def K(self) -> int:
        return len(self.shape)

    @property
    def R(self) -> int:
        return self.hyper.R

    @property
    def network_modes(self) -> list:
        return sorted(self.beta)

    def copy(self) -> "ModelState":
        return copy.deepcopy(self)

    def params(self) -> "ParamSample":
        return ParamSample(
            [u.copy() for u in self.factors], self.lam.copy(), self.p.copy(),
            {m: b.copy() for m, b in self.beta.items()}, {m: x.copy() for m, x in self.h.items()},
        )


@dataclass
class ParamSample:
    """A parameter snapshot (one posterior draw, or a running mean)."""

    factors: list
    lam: np.ndarray
    p: np.ndarray
    beta: dict = field(default_factory=dict)
    h: dict = field(default_factory=dict)


@dataclass
class ChainOutput:
    """Post-burn-in output of a chain."""

    shape: tuple
    hyper: Hyperparams
    samples: list
    mean: ParamSample
    final_state: ModelState
    iterations: int
    burnin: int
    thin: int
    seed: int
    log: list = field(default_factory=list)

    @property
    def R(self) -> int:
        return self.hyper.R


def mean_params(samples: Sequence[ParamSample]) -> ParamSample:
    if not samples:
        raise ConfigError("cannot average an empty list of samples")
    n = len(samples)
    first = samples[0]
    return ParamSample(
        [sum(s.factors[k] for s in samples) / n for k in range(len(first.factors))],
        sum(s.lam for s in samples) / n,
        sum(s.p for s in samples) / n,
        {m: sum(s.beta[m] for s in samples) / n for m in first.beta},
        {m: sum(s.h[m] for s in samples) / n for m in first.h},
    )


# -- rates --------------------------------------------------------------------

def _check_factors(factors, lam, K=None):
    lam = np.asarray(lam, dtype=np.float64)
    R = lam.shape[0]
    for u in factors:
        if u.ndim != 2 or u.shape[1] != R:
            raise ConfigError(f"factor matrix of shape {u.shape} does not match R = {R}")
    if K is not None and len(factors) != K:
        raise ConfigError(f"index has {K} modes but {len(factors)} factor matrices were given")
    return lam


def component_rates(indices, factors, lam) -> np.ndarray:
    """Per-factor rates ``lam_r * prod_k u^(k)[i_k, r]`` for each row of ``indices``.

    Returns an ``(m, R)`` array.
    """
    indices = np.asarray(indices, dtype=np.int64).reshape(-1, len(factors))
    lam = _check_factors(factors, lam)
    if len(factors) > LOG_SPACE_MODES:
        with np.errstate(divide="ignore"):
            logp = sum(np.log(u[indices[:, k]]) for k, u in enumerate(factors))
        return lam * np.exp(logp)
    prod = factors[0][indices[:, 0]].copy()
    for k in range(1, len(factors)):
        prod *= factors[k][indices[:, k]]
    return prod * lam


def cp_rates(indices, factors, lam) -> np.ndarray:
    return component_rates(indices, factors, lam).sum(axis=1)


def cp_rate(index, factors, lam) -> float:
    """``sum_r lam_r * prod_k u^(k)[i_k, r]`` at a single index."""
    index = np.asarray(index, dtype=np.int64)
    _check_factors(factors, lam, K=index.shape[0])
    for k, u in enumerate(factors):
        if not 0 <= index[k] < u.shape[0]:
            raise ConfigError(f"coordinate {int(index[k])} out of range in mode {k + 1}")
    return float(cp_rates(index[None, :], factors, lam)[0])


def bernoulli_prob(rate):
    """Probability of a one, ``1 - exp(-rate)``."""
    r = np.asarray(rate, dtype=np.float64)
    if np.any(r < 0):
        raise DomainError("rate must be non-negative")
    out = -np.expm1(-r)
    return float(out) if out.ndim == 0 else out


def network_component_rates(edges, u, beta) -> np.ndarray:
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    return u[edges[:, 0]] * u[edges[:, 1]] * beta


def network_rate(i: int, j: int, u, beta) -> float:
    """``sum_r beta_r * u[i, r] * u[j, r]``."""
    beta = _check_factors([u], beta)
    return float(np.dot(u[i] * u[j], beta))


def missing_rate_total(tensor, params) -> float:
    """Sum of the rates over the held-out cells of ``tensor``."""
    total = 0.0
    if tensor.holdout is not None:
        total += float(np.sum(cp_rates(tensor.holdout, params.factors, params.lam)))
    if tensor.holdout_slab is not None:
        m, a, b = tensor.holdout_slab
        total += float(np.sum(params.factors[m - 1][a:b] @ params.lam))
    return total


def log_likelihood(tensor, params) -> float:
    """Training log-likelihood; non-one cells count as zeros unless held out.

    The zero-cell term uses ``sum_cells rate = sum_r lam_r`` (factor columns
    sum to one), so the cost is O(nnz R K) regardless of tensor volume.
    """
    rates = cp_rates(tensor.indices, params.factors, params.lam)
    ones = float(np.sum(np.log(-np.expm1(-np.maximum(rates, 1e-300)))))
    zeros = float(np.sum(params.lam)) - float(np.sum(rates)) - missing_rate_total(tensor, params)
    return ones - max(zeros, 0.0)


def active_factors(lam, tau: float = 1e-3) -> np.ndarray:
    lam = np.asarray(lam)
    if lam.size == 0 or lam.max() <= 0:
        return np.zeros(lam.shape, dtype=bool)
    return lam > tau * lam.max()


# -- initialisation -----------------------------------------------------------

def init_state(rng: np.random.Generator, hyper: Hyperparams, shape, network_modes=(), seed: int = 0) -> ModelState:
    """Draw a starting state from the prior, with zeroed sufficient statistics."""
    shape = tuple(int(n) for n in shape)
    R = hyper.R
    factors = [dirichlet_columns(rng, np.full((n, R), hyper.a_for(k))) for k, n in enumerate(shape)]
    p = beta_sample(rng, np.full(R, hyper.c * hyper.epsilon), hyper.c * (1 - hyper.epsilon))
    lam = gamma_sample(rng, np.full(R, hyper.g), p / (1 - p))
    beta, h = {}, {}
    for m in sorted(network_modes):
        h[m] = beta_sample(rng, np.full(R, hyper.d * hyper.alpha), hyper.d * (1 - hyper.alpha))
        beta[m] = gamma_sample(rng, np.full(R, hyper.f), h[m] / (1 - h[m]))
    return ModelState(
        shape, hyper, factors, lam, p, beta, h,
        suff=SuffStats.zeros(shape, R, sorted(network_modes)), seed=seed,
    )


def balance_weights(state: ModelState, tensor, networks=()) -> ModelState:
    """Reset ``lam`` (and each ``beta``) to equal values ``nnz / R``.

    Prior draws of the weights are very uneven, and a factor that starts
    near zero never receives allocations. Equal starting weights let every
    factor compete for data before the shrinkage prior prunes the extras.
    """
    R = state.R
    state.lam = np.full(R, max(tensor.nnz, 1) / R)
    for net in networks:
        state.beta[net.mode] = np.full(R, max(net.nnz, 1) / R)
    return state
