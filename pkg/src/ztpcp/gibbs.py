"""Batch Gibbs sampler.

Each sweep touches only the one-entries of the tensor and the edges of the
attached networks:

1. latent counts at the ones, ``y ~ ZTP(rate)``, split across factors by a
   multinomial; the per-mode and total counts are rebuilt from scratch;
   held-out cells are missing data and get imputed ``Pois(rate)`` counts;
2. the same for every network edge;
3. factor columns ``u_r^(k) ~ Dir(a + s[:, r] + v[:, r])``;
4. ``p_r ~ Beta(c eps + s_r, c (1 - eps) + g)`` then
   ``lam_r ~ Gamma(g + s_r, scale=p_r)``;
5. per network, ``h_r`` and ``beta_r`` with the analogous updates.
"""

from __future__ import annotations

import logging
import time

import numpy as np

from .errors import ConfigError
from .model import (
    ChainOutput,
    Hyperparams,
    LatentState,
    ModelState,
    SuffStats,
    active_factors,
    balance_weights,
    component_rates,
    init_state,
    log_likelihood,
    mean_params,
    network_component_rates,
)
from .samplers import (
    STREAM_CHAIN,
    STREAM_INIT,
    beta_sample,
    dirichlet_columns,
    gamma_sample,
    make_rng,
    ztp_sample_array,
)

logger = logging.getLogger(__name__)

RATE_FLOOR = 1e-300


def allocate(rng: np.random.Generator, comp: np.ndarray):
    """Draw ``y ~ ZTP(sum_r comp_r)`` and split it by ``Mult(y; comp / sum)``.

    Rows whose total rate underflowed to zero are floored at ``RATE_FLOOR``
    and split uniformly. Returns ``(y, alloc, n_floored)``.
    """
    m, R = comp.shape
    if m == 0:
        return np.zeros(0, dtype=np.int64), np.zeros((0, R), dtype=np.int64), 0
    total = comp.sum(axis=1)
    dead = total <= 0
    n_floored = int(np.count_nonzero(dead))
    if n_floored:
        comp = comp.copy()
        comp[dead] = 1.0
        total = comp.sum(axis=1)
        total_rate = np.where(dead, RATE_FLOOR, total)
    else:
        total_rate = total
    y = ztp_sample_array(rng, total_rate)
    probs = comp / total[:, None]
    if R == 1:
        alloc = y[:, None].copy()
    else:
        alloc = rng.multinomial(y, probs)
    return y, alloc, n_floored


def tensor_stats(indices: np.ndarray, alloc: np.ndarray, shape) -> tuple[list, np.ndarray]:
    """Per-mode counts ``s[k][j, r]`` and totals ``s[r]`` from allocations."""
    R = alloc.shape[1]
    alloc = alloc.astype(np.float64, copy=False)
    s_mode = []
    for k, n in enumerate(shape):
        s = np.zeros((n, R))
        np.add.at(s, indices[:, k], alloc)
        s_mode.append(s)
    return s_mode, alloc.sum(axis=0)


def network_stats(edges: np.ndarray, alloc: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Node counts (both endpoints of every edge) and totals from edge allocations."""
    R = alloc.shape[1]
    alloc = alloc.astype(np.float64, copy=False)
    v = np.zeros((size, R))
    np.add.at(v, edges[:, 0], alloc)
    np.add.at(v, edges[:, 1], alloc)
    return v, alloc.sum(axis=0)


def sample_tensor_latents(rng, tensor, state: ModelState, entries=None):
    """Latent counts and allocations at the one-entries (all, or ``entries``).

    Returns ``(y, s_mode, s_total, n_floored)``.
    """
    idx = tensor.indices if entries is None else tensor.indices[entries]
    comp = component_rates(idx, state.factors, state.lam)
    y, alloc, n_floored = allocate(rng, comp)
    s_mode, s_total = tensor_stats(idx, alloc, state.shape)
    return y, s_mode, s_total, n_floored


def sample_missing_stats(rng, tensor, state: ModelState):
    """Imputed counts at the held-out cells of ``tensor``, or ``None`` if there are none.

    Each held-out cell gets independent ``Pois(lam_r prod_k u^(k)[i_k, r])``
    counts per factor. For a held-out slab of mode ``m`` the per-entity totals
    are ``Pois(lam_r u^(m)[i, r])`` (the other modes' columns sum to one) and
    each other mode's counts are ``Mult(total_r, u^(k)[:, r])``, which has the
    same per-mode marginals as drawing every cell of the slab.
    Returns ``(s_mode, s_total)``.
    """
    if tensor.holdout is None and tensor.holdout_slab is None:
        return None
    R = state.R
    s_mode = [np.zeros((n, R)) for n in state.shape]
    s_total = np.zeros(R)
    if tensor.holdout is not None:
        comp = component_rates(tensor.holdout, state.factors, state.lam)
        counts = rng.poisson(comp)
        sm, st = tensor_stats(tensor.holdout, counts, state.shape)
        for k in range(state.K):
            s_mode[k] += sm[k]
        s_total += st
    if tensor.holdout_slab is not None:
        m, a, b = tensor.holdout_slab
        counts = rng.poisson(state.factors[m - 1][a:b] * state.lam).astype(np.float64)
        s_mode[m - 1][a:b] += counts
        tot = counts.sum(axis=0)
        s_total += tot
        n_r = tot.astype(np.int64)
        for k, u in enumerate(state.factors):
            if k == m - 1:
                continue
            probs = u / u.sum(axis=0, keepdims=True)
            for r in np.flatnonzero(n_r):
                s_mode[k][:, r] += rng.multinomial(n_r[r], probs[:, r])
    return s_mode, s_total


def sample_network_latents(rng, net, state: ModelState, edges=None):
    """Latent counts and allocations at a network's edges.

    Returns ``(x, v_node, v_total, n_floored)``.
    """
    e = net.edges if edges is None else net.edges[edges]
    u = state.factors[net.mode - 1]
    comp = network_component_rates(e, u, state.beta[net.mode])
    x, alloc, n_floored = allocate(rng, comp)
    v, v_total = network_stats(e, alloc, net.size)
    return x, v, v_total, n_floored


# -- conditional parameters ---------------------------------------------------

def factor_posterior(hyper: Hyperparams, suff: SuffStats, k: int) -> np.ndarray:
    """Dirichlet parameters for every column of the 0-based mode ``k`` (n_k x R)."""
    alpha = hyper.a_for(k) + suff.s_mode[k]
    v = suff.v_node.get(k + 1)
    if v is not None:
        alpha = alpha + v
    return alpha


def pr_posterior(hyper: Hyperparams, suff: SuffStats):
    a = hyper.c * hyper.epsilon + suff.s_total
    b = np.full_like(a, hyper.c * (1 - hyper.epsilon) + hyper.g)
    return a, b


def lambda_posterior(hyper: Hyperparams, suff: SuffStats, p):
    """Shape and scale of the gamma conditional of ``lam``."""
    return hyper.g + suff.s_total, np.asarray(p, dtype=np.float64)


def hr_posterior(hyper: Hyperparams, suff: SuffStats, mode: int):
    a = hyper.d * hyper.alpha + suff.v_total[mode]
    b = np.full_like(a, hyper.d * (1 - hyper.alpha) + hyper.f)
    return a, b


def beta_posterior(hyper: Hyperparams, suff: SuffStats, mode: int, h):
    return hyper.f + suff.v_total[mode], np.asarray(h, dtype=np.float64)


def sample_factor_column(rng, k: int, r: int, suff: SuffStats, hyper: Hyperparams) -> np.ndarray:
    alpha = factor_posterior(hyper, suff, k)[:, r]
    return dirichlet_columns(rng, alpha[:, None])[:, 0]


def sample_factors(rng, suff: SuffStats, hyper: Hyperparams, K: int) -> list:
    return [dirichlet_columns(rng, factor_posterior(hyper, suff, k)) for k in range(K)]


def sample_pr(rng, suff, hyper):
    return beta_sample(rng, *pr_posterior(hyper, suff))


def sample_lambda(rng, suff, hyper, p):
    return gamma_sample(rng, *lambda_posterior(hyper, suff, p))


def sample_hr(rng, suff, hyper, mode):
    return beta_sample(rng, *hr_posterior(hyper, suff, mode))


def sample_beta(rng, suff, hyper, mode, h):
    return gamma_sample(rng, *beta_posterior(hyper, suff, mode, h))


def sample_params(rng, state: ModelState, suff: SuffStats) -> None:
    """Draw factors, ``p``, ``lam``, ``h`` and ``beta`` given ``suff``, in place."""
    hyper = state.hyper
    state.factors = sample_factors(rng, suff, hyper, state.K)
    state.p = sample_pr(rng, suff, hyper)
    state.lam = sample_lambda(rng, suff, hyper, state.p)
    for m in state.network_modes:
        state.h[m] = sample_hr(rng, suff, hyper, m)
        state.beta[m] = sample_beta(rng, suff, hyper, m, state.h[m])


def gibbs_iteration(rng, tensor, networks, state: ModelState) -> ModelState:
    """One full sweep. Mutates and returns ``state``."""
    y, s_mode, s_total, floored = sample_tensor_latents(rng, tensor, state)
    missing = sample_missing_stats(rng, tensor, state)
    if missing is not None:
        s_mode = [s + m for s, m in zip(s_mode, missing[0])]
        s_total = s_total + missing[1]
    suff = SuffStats(s_mode, s_total)
    xs = {}
    for net in networks:
        x, v, v_total, nf = sample_network_latents(rng, net, state)
        suff.v_node[net.mode] = v
        suff.v_total[net.mode] = v_total
        xs[net.mode] = x
        floored += nf
    if floored:
        logger.debug("iteration %d: %d zero rates floored", state.iteration + 1, floored)
    state.suff = suff
    state.latent = LatentState(y, xs)
    sample_params(rng, state, suff)
    state.iteration += 1
    return state


def progress_line(state: ModelState, tensor, tau: float, extra: str = "") -> str:
    ll = log_likelihood(tensor, state)
    n_active = int(np.count_nonzero(active_factors(state.lam, tau)))
    line = f"iter={state.iteration} loglik={ll:.6f} active={n_active}"
    return f"{line} {extra}".rstrip()


def check_networks(networks, shape) -> list:
    networks = sorted(networks, key=lambda n: n.mode)
    modes = [n.mode for n in networks]
    if len(set(modes)) != len(modes):
        raise ConfigError("at most one network per mode")
    for net in networks:
        if not 1 <= net.mode <= len(shape):
            raise ConfigError(f"network mode {net.mode} not in 1..{len(shape)}")
        if net.size != shape[net.mode - 1]:
            raise ConfigError(
                f"mode {net.mode} network has {net.size} nodes but the tensor mode has {shape[net.mode - 1]}"
            )
    return networks


def check_schedule(iters: int, burnin: int, thin: int) -> None:
    if iters <= burnin:
        raise ConfigError(f"iters ({iters}) must exceed burnin ({burnin})")
    if burnin < 0 or thin < 1:
        raise ConfigError("burnin must be >= 0 and thin >= 1")


def starting_state(init, tensor, hyper, networks, seed) -> ModelState:
    if isinstance(init, ModelState):
        return init
    if init not in ("prior", "balanced"):
        raise ConfigError(f"init must be 'prior' or 'balanced', got {init!r}")
    state = init_state(make_rng(seed, STREAM_INIT), hyper, tensor.shape, [n.mode for n in networks], seed=seed)
    if init == "balanced":
        balance_weights(state, tensor, networks)
    return state


def run_chain(
    tensor,
    hyper: Hyperparams,
    iters: int = 1000,
    burnin: int = 500,
    thin: int = 1,
    networks=(),
    seed: int = 0,
    tau: float = 1e-3,
    log_every: int = 1,
    init: ModelState | str = "balanced",
) -> ChainOutput:
    """Run a batch chain and collect every ``thin``-th post-burn-in sample.

    ``init`` is a starting :class:`ModelState`, ``"prior"`` (a prior draw)
    or ``"balanced"`` (a prior draw with equal starting weights).
    """
    check_schedule(iters, burnin, thin)
    networks = check_networks(networks, tensor.shape)
    state = starting_state(init, tensor, hyper, networks, seed)
    rng = make_rng(seed, STREAM_CHAIN)
    samples, log = [], []
    t0 = time.perf_counter()
    for it in range(1, iters + 1):
        gibbs_iteration(rng, tensor, networks, state)
        if log_every and it % log_every == 0:
            line = progress_line(state, tensor, tau)
            log.append(line)
            logger.info(line)
        if it > burnin and (it - burnin) % thin == 0:
            samples.append(state.params())
    logger.info("batch chain: %d iterations in %.2fs", iters, time.perf_counter() - t0)
    return ChainOutput(
        tensor.shape, hyper, samples, mean_params(samples), state,
        iters, burnin, thin, seed, log,
    )
