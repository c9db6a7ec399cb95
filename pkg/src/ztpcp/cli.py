"""Command line: ``ztpcp {fit,predict,eval,synth,report}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure. Every command writes into an output directory with fixed names.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckio
from .config import CONVERTERS, RunConfig, load_config, parse_floats, parse_ints, read_kv
from .errors import ConfigError, DataError, NumericalError, ParseError, ZTPCPError
from .gibbs import run_chain
from .metrics import (
    evaluate,
    format_metric_records,
    format_metrics_table,
    pr_curve,
    predict_probs,
    rank_report,
    roc_curve,
    top_entities,
)
from .model import ChainOutput, Hyperparams
from .online import MinibatchSpec, run_online_chain
from .synth import SynthSpec, generate
from .tensor import SplitSpec, load_network, load_tensor, load_test, save_network, save_tensor, save_test, split_holdout

logger = logging.getLogger("ztpcp")

CHECKPOINT = "checkpoint.txt"
MEAN = "mean.txt"
SAMPLES = "samples.txt"
RANKS = "rank_report.txt"
PROGRESS = "progress.log"
CONFIG = "config.txt"
TRAIN = "train.txt"
TEST = "test.txt"
PREDICTIONS = "predictions.txt"
METRICS = "metrics.txt"
ROC = "roc.dat"
PR = "pr.dat"
REPORT = "report.txt"
TRUTH = "truth.txt"
TENSOR = "tensor.txt"


def _outdir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


# -- fit ---------------------------------------------------------------------

def fit(cfg: RunConfig) -> ChainOutput:
    """Run the configured chain and write its outputs; returns the chain."""
    cfg.validate()
    out = _outdir(cfg.output)
    tensor = load_tensor(cfg.tensor, cfg.shape)
    networks = [load_network(p, m, cfg.shape[m - 1]) for m, p in sorted(cfg.networks.items())
                if 1 <= m <= len(cfg.shape)]
    if len(networks) != len(cfg.networks):
        raise ConfigError(f"network modes {sorted(cfg.networks)} must lie in 1..{len(cfg.shape)}")
    for net in networks:
        if net.self_loops:
            logger.warning("mode %d network has %d self-loops", net.mode, net.self_loops)

    train, ti, tl = tensor, None, None
    if cfg.split != "none":
        spec = SplitSpec(cfg.split, cfg.split_fraction, cfg.split_mode, cfg.split_start, cfg.split_stop, cfg.seed)
        train, ti, tl = split_holdout(tensor, spec, cfg.zeros_per_one)
        save_tensor(out / TRAIN, train)
        save_test(out / TEST, ti, tl)
    elif cfg.test:
        # cells of a supplied test file are missing data, never training ones
        ti, tl = load_test(cfg.test, len(cfg.shape))
        train = tensor.with_holdout(ti)

    logger.info("training tensor %s with nnz %d", train.shape, train.nnz)
    hyper = cfg.hyperparams()
    if cfg.inference == "batch":
        chain = run_chain(train, hyper, cfg.iters, cfg.burnin, cfg.thin, networks, cfg.seed,
                          cfg.tau, cfg.log_every, cfg.init)
    else:
        mb = MinibatchSpec(cfg.batch_size, cfg.network_batch_size, cfg.reweight, cfg.M,
                           cfg.summary, cfg.decay, cfg.rule)
        chain = run_online_chain(train, hyper, mb, cfg.iters, cfg.burnin, cfg.thin, networks,
                                 cfg.seed, cfg.tau, cfg.log_every, cfg.init)
    if not np.all(np.isfinite(chain.mean.lam)):
        raise NumericalError("non-finite factor weights after sampling")
    write_chain(out, chain)
    (out / PROGRESS).write_text("".join(line + "\n" for line in chain.log), encoding="utf-8")
    (out / CONFIG).write_text(cfg.to_text(), encoding="utf-8")
    if ti is not None and len(ti):
        probs = predict_probs(chain, ti, cfg.prediction)
        write_predictions(out / PREDICTIONS, ti, tl, probs)
        if 0 < int(np.sum(tl)) < len(tl):
            evaluate_files(tl, probs, out)
        else:
            logger.warning("test set holds a single class; metrics not written")
    return chain


def write_chain(out: Path, chain: ChainOutput) -> None:
    state = chain.final_state
    ckio.write_checkpoint(out / CHECKPOINT, ckio.state_checkpoint(state, "state"))
    ckio.write_checkpoint(
        out / MEAN, ckio.Checkpoint(chain.shape, chain.hyper, chain.mean, chain.iterations, chain.seed, None, "mean")
    )
    ckio.write_checkpoints(out / SAMPLES, (
        ckio.Checkpoint(chain.shape, chain.hyper, s, chain.burnin + (i + 1) * chain.thin, chain.seed, None, "sample")
        for i, s in enumerate(chain.samples)
    ))
    (out / RANKS).write_text(format_rank_report(rank_report(chain)), encoding="utf-8")


def format_rank_report(rows) -> str:
    lines = ["factor  mean_lambda  active"]
    lines += [f"{r + 1:>6}  {lam:.17g}  {int(a)}" for r, lam, a in rows]
    return "\n".join(lines) + "\n"


def load_chain(model_dir) -> ChainOutput:
    """Rebuild a :class:`ChainOutput` (samples and mean) from a fit directory."""
    d = Path(model_dir)
    mean = ckio.read_checkpoint(d / MEAN)
    samples = ckio.read_checkpoints(d / SAMPLES) if (d / SAMPLES).exists() else []
    return ChainOutput(
        mean.shape, mean.hyper, [s.params for s in samples], mean.params, None,
        mean.iteration, 0, 1, mean.seed,
    )


# -- predict / eval ----------------------------------------------------------

def write_predictions(path, indices, labels, probs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row, lab, p in zip(indices.tolist(), labels.tolist(), probs.tolist()):
            fh.write(" ".join(map(str, row)) + f" {int(lab)} {format(p, '.17g')}\n")


def read_predictions(path):
    labels, probs, rows = [], [], []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split()
        if len(parts) < 3:
            raise ParseError(path, lineno, "expected coordinates, a label and a probability")
        try:
            rows.append([int(x) for x in parts[:-2]])
            labels.append(int(parts[-2]))
            probs.append(float(parts[-1]))
        except ValueError:
            raise ParseError(path, lineno, f"malformed prediction line {s!r}") from None
    return np.array(rows, dtype=np.int64), np.array(labels, dtype=np.int8), np.array(probs)


def predict(model_dir, test_path, output, mode: str = "average", checkpoint=None):
    if checkpoint is not None:
        ck = ckio.read_checkpoint(checkpoint)
        source, K = ck.params, len(ck.shape)
        mode = "plugin"
    else:
        chain = load_chain(model_dir)
        if mode == "average" and not chain.samples:
            raise DataError(f"{model_dir} holds no samples; use --mode plugin")
        source, K = chain, len(chain.shape)
    indices, labels = load_test(test_path, K)
    probs = predict_probs(source, indices, mode)
    out = _outdir(output)
    write_predictions(out / PREDICTIONS, indices, labels, probs)
    return indices, labels, probs


def write_curve(path, xs, ys, header) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {header}\n")
        for x, y in zip(np.asarray(xs).tolist(), np.asarray(ys).tolist()):
            fh.write(f"{format(x, '.17g')} {format(y, '.17g')}\n")


def evaluate_files(labels, probs, output) -> dict:
    metrics = evaluate(labels, probs)
    out = _outdir(output)
    (out / METRICS).write_text(format_metric_records(metrics), encoding="utf-8")
    fpr, tpr = roc_curve(labels, probs)
    write_curve(out / ROC, fpr, tpr, "false_positive_rate true_positive_rate")
    rec, prec = pr_curve(labels, probs)
    write_curve(out / PR, rec, prec, "recall precision")
    return metrics


# -- synth / report ------------------------------------------------------------

SYNTH_KEYS = {
    "shape": parse_ints, "rank": int, "seed": int, "lam": parse_floats,
    "concentration": float, "network_modes": parse_ints, "network_beta": parse_floats,
    "max_expected_nnz": float, "output": str,
    "a": float, "c": float, "epsilon": float, "g": float, "d": float, "alpha": float, "f": float,
}


def synth_spec_from(values: dict) -> tuple[SynthSpec, str]:
    unknown = set(values) - set(SYNTH_KEYS)
    if unknown:
        raise ConfigError(f"unknown synth keys: {', '.join(sorted(unknown))}")
    try:
        v = {k: SYNTH_KEYS[k](x) for k, x in values.items()}
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if "shape" not in v:
        raise ConfigError("synth spec needs a 'shape'")
    rank = v.get("rank", 3)
    hyper = Hyperparams(R=rank, **{k: v[k] for k in ("a", "c", "epsilon", "g", "d", "alpha", "f") if k in v})
    spec = SynthSpec(
        v["shape"], rank, v.get("seed", 0), v.get("lam"), v.get("concentration"),
        v.get("network_modes", ()), v.get("network_beta"), hyper, v.get("max_expected_nnz", 1e7),
    )
    return spec, v.get("output", "synth")


def synth(spec: SynthSpec, output) -> tuple:
    tensor, networks, truth = generate(spec)
    out = _outdir(output)
    save_tensor(out / TENSOR, tensor)
    for net in networks:
        save_network(out / f"network_{net.mode}.txt", net)
    ckio.write_checkpoint(out / TRUTH, ckio.Checkpoint(spec.shape, spec.hyper, truth, 0, spec.seed, None, "truth"))
    return tensor, networks, truth


def report(ck_path, mode: int, n: int, tau: float, output=None) -> str:
    ck = ckio.read_checkpoint(ck_path)
    rows = rank_report(ck.params, tau)
    lines = [f"top {n} entities of mode {mode} per active factor"]
    for r, lam, active in rows:
        if not active:
            continue
        ents = top_entities(ck.params, mode, r, n)
        lines.append(f"factor {r + 1} (lambda {lam:.6g}): " + " ".join(f"{i}:{s:.4f}" for i, s in ents))
    text = "\n".join(lines) + "\n"
    if output is not None:
        (_outdir(output) / REPORT).write_text(text, encoding="utf-8")
    return text


# -- argument parsing ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ztpcp", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    fp = sub.add_parser("fit", help="run a batch or online chain")
    fp.add_argument("--config", help="key = value configuration file")
    for key in CONVERTERS:
        if key == "networks":
            fp.add_argument("--network", action="append", metavar="MODE=PATH", dest="networks")
        else:
            fp.add_argument(f"--{key.replace('_', '-')}", dest=key, metavar=key.upper())

    pp = sub.add_parser("predict", help="predict held-out probabilities")
    pp.add_argument("--model-dir", default="out")
    pp.add_argument("--checkpoint", help="predict at the parameters of one checkpoint instead")
    pp.add_argument("--test", required=True)
    pp.add_argument("--mode", choices=["average", "plugin"], default="average")
    pp.add_argument("--output", default=None, help="defaults to the model directory")

    ep = sub.add_parser("eval", help="AUC-ROC, AUC-PR and log-loss")
    ep.add_argument("--predictions")
    ep.add_argument("--model-dir")
    ep.add_argument("--test")
    ep.add_argument("--mode", choices=["average", "plugin"], default="average")
    ep.add_argument("--output", default="out")

    sp = sub.add_parser("synth", help="simulate data from the model")
    sp.add_argument("spec", help="key = value synth spec file")
    sp.add_argument("--output", default=None)
    sp.add_argument("--seed", type=int, default=None)

    rp = sub.add_parser("report", help="top entities per active factor")
    rp.add_argument("--checkpoint", default="out/mean.txt")
    rp.add_argument("--mode", type=int, default=1)
    rp.add_argument("-n", type=int, default=10)
    rp.add_argument("--tau", type=float, default=1e-3)
    rp.add_argument("--output", default=None)
    return ap


def _run(args) -> int:
    if args.command == "fit":
        overrides = {k: getattr(args, k) for k in CONVERTERS if k != "networks"}
        if args.networks:
            overrides["networks"] = " ".join(args.networks)
        cfg = load_config(args.config, overrides)
        chain = fit(cfg)
        print(format_rank_report(rank_report(chain, cfg.tau)), end="")
        print(f"wrote {cfg.output}/{CHECKPOINT}, {MEAN}, {SAMPLES}, {RANKS}, {PROGRESS}")
    elif args.command == "predict":
        out = args.output or args.model_dir
        predict(args.model_dir, args.test, out, args.mode, args.checkpoint)
        print(f"wrote {out}/{PREDICTIONS}")
    elif args.command == "eval":
        if args.predictions:
            _, labels, probs = read_predictions(args.predictions)
        elif args.model_dir and args.test:
            _, labels, probs = predict(args.model_dir, args.test, args.output, args.mode)
        else:
            raise ConfigError("eval needs --predictions, or --model-dir with --test")
        metrics = evaluate_files(labels, probs, args.output)
        print(format_metrics_table(metrics), end="")
    elif args.command == "synth":
        values = read_kv(args.spec)
        if args.seed is not None:
            values["seed"] = str(args.seed)
        spec, out = synth_spec_from(values)
        out = args.output or out
        tensor, networks, _ = synth(spec, out)
        print(f"wrote {out}/{TENSOR} (nnz {tensor.nnz})" +
              "".join(f", network_{n.mode}.txt ({n.nnz} edges)" for n in networks) + f", {TRUTH}")
    elif args.command == "report":
        print(report(args.checkpoint, args.mode, args.n, args.tau, args.output), end="")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ZTPCPError as exc:
        print(f"ztpcp {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"ztpcp {args.command}: error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
