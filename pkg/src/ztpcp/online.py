"""Online MCMC by conditional density filtering.

Each iteration samples latent counts only for a minibatch of one-entries
(and of network edges), folds the reweighted minibatch counts (plus imputed
counts at any held-out cells) into streaming sufficient statistics, and refreshes the parameters from the conditionals
given those statistics. The refreshed parameters are either analytic
conditional means or the average of ``M`` conditional draws.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .gibbs import (
    beta_posterior,
    check_networks,
    check_schedule,
    factor_posterior,
    hr_posterior,
    lambda_posterior,
    pr_posterior,
    progress_line,
    starting_state,
    sample_missing_stats,
    sample_network_latents,
    sample_params,
    sample_tensor_latents,
)
from .model import (
    ChainOutput,
    Hyperparams,
    LatentState,
    ModelState,
    SuffStats,
    mean_params,
)
from .samplers import STREAM_CHAIN, STREAM_MINIBATCH, make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MinibatchSpec:
    """Minibatch configuration.

    ``batch_size`` counts one-entries; ``None`` means a tenth of the ones.
    ``network_batch_size`` likewise for the edges of every network.
    ``summary`` is ``"mean"`` (analytic conditional means) or ``"sample"``
    (average of ``M`` conditional draws).

    The streaming statistics always accumulate ``decay * old + w * new``.
    ``rule`` picks what the conditionals see: ``"average"`` divides the
    accumulated total by the decayed number of iterations so far, i.e. a
    (exponentially weighted, when ``decay < 1``) running mean of the
    reweighted minibatch counts; ``"additive"`` uses the accumulated
    total as is, which grows without bound when the same data are revisited
    unless ``decay`` is well below 1. ``decay=None`` picks
    ``1 - batch_size / nnz``, a memory of about one pass over the data.
    """

    batch_size: int | None = None
    network_batch_size: int | None = None
    reweight: bool = True
    M: int = 1
    summary: str = "mean"
    decay: float | None = None
    rule: str = "average"

    def resolve_decay(self, nnz: int, batch_size: int) -> float:
        if self.decay is None:
            return 1.0 - batch_size / nnz
        return self.decay

    def resolve(self, nnz: int, net_nnz: dict) -> tuple[int, dict]:
        if self.M < 1:
            raise ConfigError("M must be at least 1")
        if self.summary not in ("mean", "sample"):
            raise ConfigError(f"summary must be 'mean' or 'sample', got {self.summary!r}")
        if self.rule not in ("average", "additive"):
            raise ConfigError(f"rule must be 'average' or 'additive', got {self.rule!r}")
        if self.decay is not None and not 0.0 < self.decay <= 1.0:
            raise ConfigError(f"decay must lie in (0, 1], got {self.decay}")
        if nnz < 1:
            raise ConfigError("online inference needs at least one training one-entry")
        b = self.batch_size if self.batch_size is not None else max(1, nnz // 10)
        if not 1 <= b <= nnz:
            raise ConfigError(f"minibatch size {b} not in 1..{nnz}")
        nb = {}
        for m, n in net_nnz.items():
            if n == 0:
                nb[m] = 0
                continue
            size = self.network_batch_size if self.network_batch_size is not None else max(1, n // 10)
            nb[m] = min(size, n)
            if nb[m] < 1:
                raise ConfigError(f"network minibatch size must be at least 1, got {size}")
        return b, nb


def select_minibatch(rng, nnz: int, batch_size: int, net_sizes: dict | None = None):
    """Uniform draws without replacement: entry positions, and edge positions per network."""
    entries = np.sort(rng.choice(nnz, size=batch_size, replace=False))
    edges = {}
    for m, (n, b) in sorted((net_sizes or {}).items()):
        edges[m] = np.sort(rng.choice(n, size=b, replace=False)) if b else np.zeros(0, dtype=np.int64)
    return entries, edges


def update_suffstats_streaming(suff: SuffStats, inc: SuffStats, w: float = 1.0,
                               w_net: dict | None = None, decay: float = 1.0) -> SuffStats:
    """``decay * suff + w * inc``, with per-network weights ``w_net``."""
    w_net = w_net or {}
    return SuffStats(
        [decay * s + w * i for s, i in zip(suff.s_mode, inc.s_mode)],
        decay * suff.s_total + w * inc.s_total,
        {m: decay * suff.v_node[m] + w_net.get(m, 1.0) * inc.v_node[m] for m in suff.v_node},
        {m: decay * suff.v_total[m] + w_net.get(m, 1.0) * inc.v_total[m] for m in suff.v_total},
    )


def analytic_means(state: ModelState, suff: SuffStats) -> None:
    """Set the parameters to their conditional means given ``suff``, in place."""
    hyper = state.hyper
    state.factors = []
    for k in range(state.K):
        alpha = factor_posterior(hyper, suff, k)
        state.factors.append(alpha / alpha.sum(axis=0, keepdims=True))
    a, b = pr_posterior(hyper, suff)
    state.p = a / (a + b)
    shape, _ = lambda_posterior(hyper, suff, state.p)
    state.lam = shape * state.p
    for m in state.network_modes:
        a, b = hr_posterior(hyper, suff, m)
        state.h[m] = a / (a + b)
        shape, _ = beta_posterior(hyper, suff, m, state.h[m])
        state.beta[m] = shape * state.h[m]


def sample_average(rng, state: ModelState, suff: SuffStats, M: int) -> None:
    draws = []
    for _ in range(M):
        sample_params(rng, state, suff)
        draws.append(state.params())
    avg = draws[0] if M == 1 else mean_params(draws)
    state.factors, state.lam, state.p = avg.factors, avg.lam, avg.p
    state.beta, state.h = avg.beta, avg.h


def cdf_iteration(rng, tensor, networks, state: ModelState, spec: MinibatchSpec,
                  mb_rng=None) -> tuple[ModelState, dict]:
    """One online iteration. Mutates ``state``; returns it with a small info dict."""
    mb_rng = mb_rng if mb_rng is not None else rng
    net_nnz = {n.mode: n.nnz for n in networks}
    b, nb = spec.resolve(tensor.nnz, net_nnz)
    entries, edges = select_minibatch(mb_rng, tensor.nnz, b, {m: (net_nnz[m], nb[m]) for m in net_nnz})

    y, s_mode, s_total, _ = sample_tensor_latents(rng, tensor, state, entries)
    inc = SuffStats(s_mode, s_total)
    w = tensor.nnz / b if spec.reweight else 1.0
    w_net, xs = {}, {}
    for net in networks:
        x, v, v_total, _ = sample_network_latents(rng, net, state, edges[net.mode])
        inc.v_node[net.mode], inc.v_total[net.mode] = v, v_total
        w_net[net.mode] = net.nnz / nb[net.mode] if (spec.reweight and nb[net.mode]) else 1.0
        xs[net.mode] = x
    decay = spec.resolve_decay(tensor.nnz, b)
    state.suff = update_suffstats_streaming(state.suff, inc, w, w_net, decay)
    # held-out cells are imputed in full every iteration, so they carry no reweighting
    missing = sample_missing_stats(rng, tensor, state)
    if missing is not None:
        for s, m in zip(state.suff.s_mode, missing[0]):
            s += m
        state.suff.s_total += missing[1]
    state.latent = LatentState(y, xs)
    state.iteration += 1
    state.stream_weight = decay * state.stream_weight + 1.0

    suff = state.suff if spec.rule == "additive" else state.suff.scaled(1.0 / state.stream_weight)
    if spec.summary == "mean":
        analytic_means(state, suff)
    else:
        sample_average(rng, state, suff, spec.M)
    return state, {"minibatch": state.iteration, "size": b, "reweight": w, "decay": decay}


def run_online_chain(
    tensor,
    hyper: Hyperparams,
    spec: MinibatchSpec = MinibatchSpec(),
    iters: int = 1000,
    burnin: int = 500,
    thin: int = 1,
    networks=(),
    seed: int = 0,
    tau: float = 1e-3,
    log_every: int = 1,
    init: ModelState | str = "balanced",
) -> ChainOutput:
    """Run the online sampler; the stored parameter summaries after burn-in form the output."""
    check_schedule(iters, burnin, thin)
    networks = check_networks(networks, tensor.shape)
    state = starting_state(init, tensor, hyper, networks, seed)
    rng = make_rng(seed, STREAM_CHAIN)
    mb_rng = make_rng(seed, STREAM_MINIBATCH)
    samples, log = [], []
    for it in range(1, iters + 1):
        _, info = cdf_iteration(rng, tensor, networks, state, spec, mb_rng)
        if log_every and it % log_every == 0:
            line = progress_line(
                state, tensor, tau, f"minibatch={info['minibatch']} size={info['size']} reweight={info['reweight']:g} decay={info['decay']:g}"
            )
            log.append(line)
            logger.info(line)
        if it > burnin and (it - burnin) % thin == 0:
            samples.append(state.params())
    return ChainOutput(
        tensor.shape, hyper, samples, mean_params(samples), state,
        iters, burnin, thin, seed, log,
    )
