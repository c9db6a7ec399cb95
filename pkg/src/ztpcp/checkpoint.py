"""Plain-text checkpoints.

A document is a header (shape, order, rank, iteration, seed, networks,
hyperparameters) followed by the factor matrices row-major, the weight
vectors ``lambda``, ``p``, ``beta``, ``h`` and, when present, the
sufficient statistics; it closes with ``end``. Field order is fixed and
floats carry 17 significant digits, so files round-trip exactly and diff
cleanly. A samples file is several documents back to back.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError
from .model import Hyperparams, ParamSample, SuffStats

MAGIC = "ztpcp-checkpoint 1"


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _row(values) -> str:
    return " ".join(_fmt(v) for v in np.asarray(values).ravel())


@dataclass
class Checkpoint:
    shape: tuple
    hyper: Hyperparams
    params: ParamSample
    iteration: int = 0
    seed: int = 0
    suff: SuffStats | None = None
    kind: str = "state"

    @property
    def R(self) -> int:
        return self.hyper.R


def format_checkpoint(ck: Checkpoint) -> str:
    h = ck.hyper
    p = ck.params
    modes = sorted(p.beta)
    out = [
        MAGIC,
        f"kind {ck.kind}",
        "shape " + " ".join(str(n) for n in ck.shape),
        f"K {len(ck.shape)}",
        f"R {h.R}",
        f"iteration {ck.iteration}",
        f"seed {ck.seed}",
        "networks " + " ".join(str(m) for m in modes) if modes else "networks",
        "hyper a " + _row(np.atleast_1d(h.a)),
        f"hyper c {_fmt(h.c)}",
        f"hyper epsilon {_fmt(h.epsilon)}",
        f"hyper g {_fmt(h.g)}",
        f"hyper d {_fmt(h.d)}",
        f"hyper alpha {_fmt(h.alpha)}",
        f"hyper f {_fmt(h.f)}",
    ]
    for k, u in enumerate(p.factors):
        out.append(f"factor {k + 1} {u.shape[0]} {u.shape[1]}")
        out.extend(_row(r) for r in u)
    out += ["lambda", _row(p.lam), "p", _row(p.p)]
    for m in modes:
        out += [f"beta {m}", _row(p.beta[m]), f"h {m}", _row(p.h[m])]
    if ck.suff is not None:
        for k, s in enumerate(ck.suff.s_mode):
            out.append(f"s_mode {k + 1} {s.shape[0]} {s.shape[1]}")
            out.extend(_row(r) for r in s)
        out += ["s_total", _row(ck.suff.s_total)]
        for m in sorted(ck.suff.v_node):
            v = ck.suff.v_node[m]
            out.append(f"v_node {m} {v.shape[0]} {v.shape[1]}")
            out.extend(_row(r) for r in v)
            out += [f"v_total {m}", _row(ck.suff.v_total[m])]
    out.append("end")
    return "\n".join(out) + "\n"


def write_checkpoint(path, ck: Checkpoint) -> None:
    Path(path).write_text(format_checkpoint(ck), encoding="utf-8")


def write_checkpoints(path, cks) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ck in cks:
            fh.write(format_checkpoint(ck))


class _Reader:
    def __init__(self, path, lines):
        self.path = path
        self.lines = lines
        self.pos = 0

    def peek(self):
        return self.lines[self.pos] if self.pos < len(self.lines) else None

    def next(self, expect=None) -> list[str]:
        if self.pos >= len(self.lines):
            raise ParseError(self.path, self.pos + 1, "unexpected end of checkpoint")
        parts = self.lines[self.pos].split()
        self.pos += 1
        if expect is not None and (not parts or parts[0] != expect):
            raise ParseError(self.path, self.pos, f"expected {expect!r}, got {self.lines[self.pos - 1]!r}")
        return parts

    def floats(self, n=None) -> np.ndarray:
        parts = self.next()
        try:
            vals = np.array([float(x) for x in parts])
        except ValueError:
            raise ParseError(self.path, self.pos, "malformed number") from None
        if n is not None and vals.size != n:
            raise ParseError(self.path, self.pos, f"expected {n} values, got {vals.size}")
        return vals

    def matrix(self, rows, cols) -> np.ndarray:
        if rows == 0:
            return np.zeros((0, cols))
        return np.stack([self.floats(cols) for _ in range(rows)])


def _read_one(rd: _Reader) -> Checkpoint:
    head = rd.next()
    if " ".join(head) != MAGIC:
        raise ParseError(rd.path, rd.pos, "not a ztpcp checkpoint")
    kind = rd.next("kind")[1]
    shape = tuple(int(x) for x in rd.next("shape")[1:])
    K = int(rd.next("K")[1])
    R = int(rd.next("R")[1])
    iteration = int(rd.next("iteration")[1])
    seed = int(rd.next("seed")[1])
    modes = [int(x) for x in rd.next("networks")[1:]]
    hyper_vals = {}
    while rd.peek() is not None and rd.peek().startswith("hyper "):
        parts = rd.next()
        hyper_vals[parts[1]] = [float(x) for x in parts[2:]]
    a = hyper_vals["a"]
    hyper = Hyperparams(
        R=R, a=a[0] if len(a) == 1 else tuple(a),
        **{k: v[0] for k, v in hyper_vals.items() if k != "a"},
    )
    factors = []
    for _ in range(K):
        _, _, n, r = rd.next("factor")
        factors.append(rd.matrix(int(n), int(r)))
    rd.next("lambda")
    lam = rd.floats(R)
    rd.next("p")
    p = rd.floats(R)
    beta, h = {}, {}
    for m in modes:
        rd.next("beta")
        beta[m] = rd.floats(R)
        rd.next("h")
        h[m] = rd.floats(R)
    suff = None
    if rd.peek() is not None and rd.peek().startswith("s_mode"):
        s_mode = []
        for _ in range(K):
            _, _, n, r = rd.next("s_mode")
            s_mode.append(rd.matrix(int(n), int(r)))
        rd.next("s_total")
        suff = SuffStats(s_mode, rd.floats(R))
        for m in modes:
            _, _, n, r = rd.next("v_node")
            suff.v_node[m] = rd.matrix(int(n), int(r))
            rd.next("v_total")
            suff.v_total[m] = rd.floats(R)
    rd.next("end")
    return Checkpoint(shape, hyper, ParamSample(factors, lam, p, beta, h), iteration, seed, suff, kind)


def _reader(path) -> _Reader:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    return _Reader(Path(path), lines)


def read_checkpoints(path) -> list[Checkpoint]:
    rd = _reader(path)
    out = []
    while rd.peek() is not None:
        out.append(_read_one(rd))
    return out


def read_checkpoint(path) -> Checkpoint:
    cks = read_checkpoints(path)
    if len(cks) != 1:
        raise ParseError(Path(path), 1, f"expected one checkpoint, found {len(cks)}")
    return cks[0]


def state_checkpoint(state, kind: str = "state") -> Checkpoint:
    return Checkpoint(state.shape, state.hyper, state.params(), state.iteration, state.seed, state.suff, kind)
