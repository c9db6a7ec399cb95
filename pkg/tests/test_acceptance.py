"""Acceptance gate: one test and one PASS/FAIL line per criterion.

Run with ``pytest -v tests/test_acceptance.py`` or directly with
``python3 tests/test_acceptance.py``. Criterion 8 needs real data; point
``ZTPCP_KINSHIP`` / ``ZTPCP_UMLS`` at tensor files (optionally followed by
``:n1,n2,n3`` to override the default shape) or it is skipped.
"""

from __future__ import annotations

import functools
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from ztpcp.gibbs import (
    factor_posterior,
    gibbs_iteration,
    lambda_posterior,
    pr_posterior,
    run_chain,
    tensor_stats,
)
from ztpcp.metrics import auc_roc, n_active, predict_probs
from ztpcp.model import Hyperparams, SuffStats, bernoulli_prob, cp_rates, init_state
from ztpcp.online import MinibatchSpec, run_online_chain
from ztpcp.samplers import make_rng, ztp_sample_array
from ztpcp.synth import SynthSpec, generate
from ztpcp.tensor import SparseBinaryTensor, SplitSpec, load_tensor, split_holdout

RESULTS: list[str] = []


@pytest.fixture
def report(capsys):
    def emit(n: int, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
        RESULTS.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return emit


# -- 1. ZTP sampler ------------------------------------------------------------

def test_criterion_1_ztp_sampler(report):
    t0 = time.perf_counter()
    rng = make_rng(1)
    parts, ok = [], True
    for lam in (0.1, 1.0, 5.0, 10.0):
        draws = ztp_sample_array(rng, np.full(10**6, lam))
        target = lam / (1 - math.exp(-lam))
        rel = abs(draws.mean() / target - 1)
        ok &= rel < 0.01 and draws.min() >= 1
        parts.append(f"lam={lam:g} rel.err={rel:.2e} min={draws.min()}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 10
    report(1, ok, "; ".join(parts) + f"; {elapsed:.2f}s (<10s)")


# -- 2. Augmentation equivalence -----------------------------------------------

def test_criterion_2_augmentation(report):
    rng = make_rng(2)
    n = 10**6
    parts, ok = [], True
    for rate in (0.1, 1.0, 3.0):
        p = bernoulli_prob(rate)
        freq = np.mean(rng.poisson(rate, n) >= 1)
        z = abs(freq - p) / math.sqrt(p * (1 - p) / n)
        ok &= z < 3
        parts.append(f"rate={rate:g} |z|={z:.2f}")
    report(2, ok, "; ".join(parts) + " (<3 SE)")


# -- 3. Conjugacy oracle ---------------------------------------------------------

def test_criterion_3_conjugacy(report):
    hyper = Hyperparams(R=2, a=0.5, c=2.0, epsilon=0.3, g=0.1)
    ones = np.array([[0, 0, 0], [1, 1, 0], [0, 1, 1]])
    alloc = np.array([[2, 0], [0, 1], [1, 3]])
    s_mode, s_total = tensor_stats(ones, alloc, (2, 2, 2))
    suff = SuffStats(s_mode, s_total)
    # by hand: mode-1 rows {entry 0, entry 2} and {entry 1}, etc.
    expected_dir = [
        np.array([[0.5 + 3, 0.5 + 3], [0.5 + 0, 0.5 + 1]]),
        np.array([[0.5 + 2, 0.5 + 0], [0.5 + 1, 0.5 + 4]]),
        np.array([[0.5 + 2, 0.5 + 1], [0.5 + 1, 0.5 + 3]]),
    ]
    ok = all(np.array_equal(factor_posterior(hyper, suff, k), expected_dir[k]) for k in range(3))
    a, b = pr_posterior(hyper, suff)
    ok &= np.array_equal(a, np.array([2.0 * 0.3 + 3, 2.0 * 0.3 + 4])) and np.array_equal(b, np.full(2, 2.0 * 0.7 + 0.1))
    p = np.array([0.25, 0.6])
    shape, scale = lambda_posterior(hyper, suff, p)
    ok &= np.array_equal(shape, np.array([0.1 + 3, 0.1 + 4])) and np.array_equal(scale, p)
    report(3, bool(ok), "Dirichlet, Beta and Gamma conditional parameters equal the hand-computed values exactly")


# -- 4. Geweke joint test --------------------------------------------------------

def batch_means_se(x: np.ndarray, n_batches: int = 50) -> float:
    m = x.size // n_batches
    means = x[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def test_criterion_4_geweke(report):
    t0 = time.perf_counter()
    shape, rounds = (2, 2, 2), 5 * 10**4
    # beta(2, 6) prior on p keeps the second moment of lam finite
    hyper = Hyperparams(R=2, a=1.0, c=8.0, epsilon=0.25, g=1.0)
    cells = np.array(list(np.ndindex(*shape)))

    rng = make_rng(40)
    fwd = np.empty((rounds, 3))
    for i in range(rounds):
        s = init_state(rng, hyper, shape)
        fwd[i] = (s.lam[0], s.lam[1], s.factors[0][0, 0])

    rng = make_rng(41)
    state = init_state(rng, hyper, shape)
    gib = np.empty((rounds, 3))
    for i in range(rounds):
        probs = bernoulli_prob(cp_rates(cells, state.factors, state.lam))
        data = SparseBinaryTensor(shape, cells[rng.random(len(cells)) < probs])
        gibbs_iteration(rng, data, [], state)
        gib[i] = (state.lam[0], state.lam[1], state.factors[0][0, 0])

    parts, ok = [], True
    for j, name in enumerate(("lam_1", "lam_2", "u1[0,0]")):
        se = math.sqrt(fwd[:, j].var(ddof=1) / rounds + batch_means_se(gib[:, j]) ** 2)
        z = abs(fwd[:, j].mean() - gib[:, j].mean()) / se
        ok &= z < 3
        parts.append(f"{name} fwd={fwd[:, j].mean():.4f} gibbs={gib[:, j].mean():.4f} |z|={z:.2f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 300
    report(4, ok, "; ".join(parts) + f"; {elapsed:.1f}s (<300s)")


# -- 5 / 6. Synthetic recovery and online vs batch -----------------------------

SYNTH_SEEDS = range(10)


def recovery_data(seed: int):
    tensor, _, _ = generate(SynthSpec((50, 50, 20), 3, seed=seed, lam=(2500.0,) * 3, concentration=0.25))
    return split_holdout(tensor, SplitSpec("random-entry", 0.1, seed=seed), 1.0)


@functools.lru_cache(maxsize=None)
def batch_run(seed: int):
    train, ti, tl = recovery_data(seed)
    t0 = time.perf_counter()
    chain = run_chain(train, Hyperparams(R=10), iters=1000, burnin=500, seed=seed, log_every=0)
    elapsed = time.perf_counter() - t0
    return auc_roc(tl, predict_probs(chain, ti)), n_active(chain), elapsed


def test_criterion_5_synthetic_recovery(report):
    runs = [batch_run(s) for s in SYNTH_SEEDS]
    aucs = [r[0] for r in runs]
    active = [r[1] for r in runs]
    n_three = sum(a == 3 for a in active)
    worst = max(r[2] for r in runs)
    ok = min(aucs) >= 0.90 and n_three >= 8 and worst < 300
    report(5, ok, f"AUC min={min(aucs):.4f} mean={np.mean(aucs):.4f} (>=0.90); active counts {active}, "
                  f"3 in {n_three}/10 (>=8); slowest seed {worst:.1f}s (<300s)")


def test_criterion_6_online_vs_batch(report):
    gaps = []
    for seed in SYNTH_SEEDS:
        train, ti, tl = recovery_data(seed)
        chain = run_online_chain(train, Hyperparams(R=10), MinibatchSpec(batch_size=train.nnz // 10),
                                 iters=1000, burnin=500, seed=seed, log_every=0)
        gaps.append(batch_run(seed)[0] - auc_roc(tl, predict_probs(chain, ti)))
    worst = max(abs(g) for g in gaps)
    report(6, worst <= 0.02, f"batch-minus-online AUC per seed {[round(g, 4) for g in gaps]}; max |gap|={worst:.4f} (<=0.02)")


# -- 7. Cold start ---------------------------------------------------------------

def test_criterion_7_cold_start(report):
    gains = []
    for seed in range(5):
        tensor, nets, _ = generate(SynthSpec(
            (50, 50, 20), 6, seed=seed, lam=(1500.0,) * 6, concentration=0.1,
            network_modes=(1,), network_beta=(600.0,) * 6,
        ))
        train, ti, tl = split_holdout(tensor, SplitSpec("cold-start", mode=1, start=35, stop=50, seed=seed))
        hyper = Hyperparams(R=10)
        without = run_chain(train, hyper, 1000, 500, seed=seed, log_every=0)
        with_net = run_chain(train, hyper, 1000, 500, networks=nets, seed=seed, log_every=0)
        gains.append(auc_roc(tl, predict_probs(with_net, ti)) - auc_roc(tl, predict_probs(without, ti)))
    mean_gain = float(np.mean(gains))
    report(7, mean_gain >= 0.05, f"with-minus-without AUC per seed {[round(g, 4) for g in gains]}; "
                                 f"mean gain={mean_gain:.4f} (>=0.05)")


# -- 8. Real data ------------------------------------------------------------------

REAL = {"kinship": ("ZTPCP_KINSHIP", (104, 104, 26), 0.95, 0.9674),
        "umls": ("ZTPCP_UMLS", (135, 135, 49), 0.98, 0.9938)}


def test_criterion_8_real_data(report, capsys):
    found = False
    for name, (env, shape, bar, reference) in REAL.items():
        spec = os.environ.get(env)
        if not spec:
            continue
        found = True
        path, _, shp = spec.partition(":")
        if shp:
            shape = tuple(int(x) for x in shp.split(","))
        t0 = time.perf_counter()
        train, ti, tl = split_holdout(load_tensor(path, shape), SplitSpec("random-entry", 0.1, seed=0))
        chain = run_chain(train, Hyperparams(R=20), 1000, 500, seed=0, log_every=0)
        auc = auc_roc(tl, predict_probs(chain, ti))
        elapsed = time.perf_counter() - t0
        report(8, auc >= bar and elapsed < 1800,
               f"{name}: AUC={auc:.4f} (>={bar}, reference {reference}); {elapsed:.0f}s (<1800s)")
    if not found:
        line = "[SKIP] criterion 8: set ZTPCP_KINSHIP / ZTPCP_UMLS to tensor files to run"
        RESULTS.append(line)
        with capsys.disabled():
            print("\n" + line)
        pytest.skip("no Kinship/UMLS files supplied")


# -- 9. Scaling ----------------------------------------------------------------------

def iteration_time(nnz: int, R: int, shape=(200, 200, 100), reps: int = 7) -> float:
    rng = np.random.default_rng(nnz + R)
    cells = rng.choice(math.prod(shape), size=nnz, replace=False)
    tensor = SparseBinaryTensor(shape, np.stack(np.unravel_index(cells, shape), axis=1))
    state = init_state(make_rng(0), Hyperparams(R=R), shape)
    state.lam = np.full(R, nnz / R)
    rng = make_rng(1)
    gibbs_iteration(rng, tensor, [], state)
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        gibbs_iteration(rng, tensor, [], state)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def test_criterion_9_scaling(report):
    t_nnz = [iteration_time(n, 20) for n in (10**4, 2 * 10**4, 4 * 10**4)]
    t_R = [iteration_time(2 * 10**4, R) for R in (10, 20, 40)]
    r_nnz = [t_nnz[i + 1] / t_nnz[i] for i in range(2)]
    r_R = [t_R[i + 1] / t_R[i] for i in range(2)]
    ok = max(r_nnz + r_R) <= 2.5
    report(9, ok, f"nnz doubling ratios {[round(r, 2) for r in r_nnz]}, R doubling ratios "
                  f"{[round(r, 2) for r in r_R]} (<=2.5); per-iteration ms nnz={[round(1e3 * t, 1) for t in t_nnz]} "
                  f"R={[round(1e3 * t, 1) for t in t_R]}")


# -- 10. Determinism ---------------------------------------------------------------

def test_criterion_10_determinism(report, tmp_path):
    spec = tmp_path / "synth.txt"
    spec.write_text("shape = 20 20 10\nrank = 3\nseed = 7\nlam = 300\nconcentration = 0.3\n"
                    "network_modes = 1\nnetwork_beta = 60\n")
    cli = [sys.executable, "-m", "ztpcp"]
    subprocess.run(cli + ["synth", str(spec), "--output", str(tmp_path / "data")], check=True, capture_output=True)
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"tensor = {tmp_path / 'data' / 'tensor.txt'}\nshape = 20 20 10\n"
                   f"networks = 1={tmp_path / 'data' / 'network_1.txt'}\nR = 6\niters = 200\nburnin = 100\n"
                   "seed = 3\nsplit = random-entry\nthreads = 1\n")
    files = ("checkpoint.txt", "mean.txt", "samples.txt", "predictions.txt", "metrics.txt")
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        subprocess.run(cli + ["fit", "--config", str(cfg), "--output", str(out)], check=True, capture_output=True)
        subprocess.run(cli + ["eval", "--model-dir", str(out), "--test", str(out / "test.txt"),
                              "--output", str(out)], check=True, capture_output=True)
        outputs.append({f: (out / f).read_bytes() for f in files})
    same = [f for f in files if outputs[0][f] == outputs[1][f]]
    report(10, len(same) == len(files), f"byte-identical across two runs: {', '.join(same)}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
