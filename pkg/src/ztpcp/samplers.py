"""Seeded random variates used by the model.

Every sampler takes a :class:`numpy.random.Generator` as its first argument.
Generators are built with :func:`make_rng` from a master seed and a stream id,
so independent parts of a run draw from independent, reproducible streams.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError

# Inversion on the truncated pmf is used below this rate; plain rejection above.
ZTP_INVERSION_THRESHOLD = 1.0
_MAX_INVERSION_TERMS = 64

# Named stream ids; each consumer of randomness gets its own.
STREAM_INIT = 0
STREAM_CHAIN = 1
STREAM_SPLIT = 2
STREAM_SYNTH = 3
STREAM_MINIBATCH = 4


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Generator for ``(seed, stream)``; equal pairs give equal sequences."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(ss))


def _check_rates(rates):
    rates = np.asarray(rates, dtype=np.float64)
    if rates.size and not (np.all(np.isfinite(rates)) and np.all(rates > 0)):
        raise DomainError("zero-truncated Poisson rate must be positive and finite")
    return rates


def ztp_sample_array(rng: np.random.Generator, rates) -> np.ndarray:
    """Vectorised zero-truncated Poisson draws, one per rate.

    Rates >= 1 use rejection (redraw the zeros of a plain Poisson draw);
    acceptance is at least ``1 - e^-1`` so the loop is short. Smaller rates
    use inversion of the truncated pmf, whose terms shrink geometrically.
    """
    rates = _check_rates(rates)
    flat = rates.reshape(-1)
    out = np.empty(flat.shape, dtype=np.int64)

    big = flat >= ZTP_INVERSION_THRESHOLD
    if big.any():
        lam = flat[big]
        draws = rng.poisson(lam)
        zero = np.flatnonzero(draws == 0)
        while zero.size:
            redraw = rng.poisson(lam[zero])
            draws[zero] = redraw
            zero = zero[redraw == 0]
        out[big] = draws

    small = ~big
    if small.any():
        lam = flat[small]
        u = rng.random(lam.shape)
        # pmf of k given k >= 1, starting at k = 1; -expm1(-lam) = 1 - e^-lam
        term = lam * np.exp(-lam) / -np.expm1(-lam)
        cdf = term.copy()
        k = np.ones(lam.shape, dtype=np.int64)
        pending = u > cdf
        n = 1
        while pending.any() and n < _MAX_INVERSION_TERMS:
            n += 1
            term = term * lam / n
            cdf = cdf + term
            k[pending] = n
            pending &= u > cdf
        out[small] = k
    return out.reshape(rates.shape)


def ztp_sample(rng: np.random.Generator, rate: float) -> int:
    """One draw from Poisson(rate) conditioned on being at least 1."""
    return int(ztp_sample_array(rng, np.array([rate]))[0])


def ztp_mean(rate):
    """Mean of the zero-truncated Poisson, ``rate / (1 - e^-rate)``."""
    rate = np.asarray(rate, dtype=np.float64)
    return rate / -np.expm1(-rate)


def dirichlet_columns(rng: np.random.Generator, alphas) -> np.ndarray:
    """Independent Dirichlet draws for each column of ``alphas`` (n x R).

    Gamma variates are drawn in log space, ``log G(a) = log G(a+1) + log(U)/a``,
    so small concentrations cannot underflow a whole column to zero.
    """
    alphas = np.asarray(alphas, dtype=np.float64)
    if alphas.size and not np.all(alphas > 0):
        raise DomainError("Dirichlet concentrations must be positive")
    log_g = np.log(rng.standard_gamma(alphas + 1.0)) + np.log(rng.random(alphas.shape)) / alphas
    log_g -= log_g.max(axis=0, keepdims=True)
    g = np.exp(log_g)
    return g / g.sum(axis=0, keepdims=True)


def dirichlet_sample(rng: np.random.Generator, alphas) -> np.ndarray:
    alphas = np.asarray(alphas, dtype=np.float64)
    if alphas.ndim != 1 or alphas.size == 0:
        raise DomainError("alphas must be a non-empty vector")
    return dirichlet_columns(rng, alphas[:, None])[:, 0]


def gamma_sample(rng: np.random.Generator, shape, scale):
    """Gamma draw(s) with the given shape and *scale* (mean = shape * scale)."""
    shape = np.asarray(shape, dtype=np.float64)
    scale = np.asarray(scale, dtype=np.float64)
    if not (np.all(shape > 0) and np.all(scale > 0)):
        raise DomainError("gamma shape and scale must be positive")
    out = rng.gamma(shape, scale)
    # keep strictly positive: tiny shapes can underflow to 0.0
    return np.maximum(out, np.finfo(np.float64).tiny)


def beta_sample(rng: np.random.Generator, a, b):
    """Beta draw(s), clipped into the open interval (0, 1)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if not (np.all(a > 0) and np.all(b > 0)):
        raise DomainError("beta parameters must be positive")
    out = rng.beta(a, b)
    return np.clip(out, np.finfo(np.float64).tiny, np.nextafter(1.0, 0.0))


def multinomial_sample(rng: np.random.Generator, n, probs) -> np.ndarray:
    """Multinomial counts; ``n`` and rows of ``probs`` broadcast together."""
    probs = np.asarray(probs, dtype=np.float64)
    n = np.asarray(n)
    if np.any(n < 0):
        raise DomainError("multinomial trial count must be non-negative")
    if np.any(probs < 0) or not np.allclose(probs.sum(axis=-1), 1.0, rtol=0, atol=1e-9):
        raise DomainError("multinomial probabilities must be non-negative and sum to 1")
    return rng.multinomial(n, probs)
