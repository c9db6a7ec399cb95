"""Line-oriented ``key = value`` run configuration."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_bool(s: str) -> bool:
    v = str(s).strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


def parse_ints(s) -> tuple:
    if isinstance(s, (tuple, list)):
        return tuple(int(x) for x in s)
    try:
        return tuple(int(x) for x in str(s).replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"expected integers, got {s!r}") from None


def parse_floats(s) -> tuple:
    if isinstance(s, (tuple, list)):
        return tuple(float(x) for x in s)
    try:
        return tuple(float(x) for x in str(s).replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"expected numbers, got {s!r}") from None


def parse_networks(s) -> dict:
    """``"1=path/a.txt 3=path/b.txt"`` -> ``{1: "path/a.txt", 3: "path/b.txt"}``."""
    if isinstance(s, dict):
        return dict(s)
    out = {}
    for item in str(s).replace(",", " ").split():
        mode, sep, path = item.partition("=")
        if not sep:
            raise ConfigError(f"network entry must look like MODE=PATH, got {item!r}")
        try:
            out[int(mode)] = path
        except ValueError:
            raise ConfigError(f"network mode must be an integer, got {mode!r}") from None
    return out


def _opt(kind):
    def conv(s):
        if s is None or str(s).strip().lower() in ("", "none", "auto"):
            return None
        return kind(s)
    return conv


@dataclass
class RunConfig:
    """Everything ``fit`` needs. Every field has a default."""

    tensor: str = ""
    shape: tuple = ()
    networks: dict = field(default_factory=dict)
    test: str = ""
    split: str = "none"
    split_fraction: float = 0.1
    split_mode: int = 1
    split_start: int = 0
    split_stop: int = 0
    zeros_per_one: float = 1.0
    R: int = 20
    a: tuple = (1.0,)
    c: float = 1.0
    epsilon: float | None = None
    g: float = 0.1
    d: float = 1.0
    alpha: float | None = None
    f: float = 0.1
    iters: int = 1000
    burnin: int = 500
    thin: int = 1
    seed: int = 0
    inference: str = "batch"
    init: str = "balanced"
    batch_size: int | None = None
    network_batch_size: int | None = None
    M: int = 1
    summary: str = "mean"
    reweight: bool = True
    decay: float | None = None
    rule: str = "average"
    tau: float = 1e-3
    prediction: str = "average"
    threads: int = 1
    log_every: int = 1
    output: str = "out"

    def validate(self) -> None:
        if not self.tensor:
            raise ConfigError("no tensor file given (key 'tensor')")
        if len(self.shape) < 2:
            raise ConfigError("shape needs at least two mode sizes (key 'shape')")
        if self.inference not in ("batch", "online"):
            raise ConfigError(f"inference must be 'batch' or 'online', got {self.inference!r}")
        if self.split not in ("none", "random-entry", "cold-start"):
            raise ConfigError(f"split must be none, random-entry or cold-start, got {self.split!r}")
        if self.prediction not in ("average", "plugin"):
            raise ConfigError(f"prediction must be 'average' or 'plugin', got {self.prediction!r}")
        if self.test and self.split != "none":
            raise ConfigError("give either a test file or a split, not both")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")

    def hyperparams(self):
        from .model import Hyperparams

        a = self.a[0] if len(self.a) == 1 else tuple(self.a)
        return Hyperparams(self.R, a, self.c, self.epsilon, self.g, self.d, self.alpha, self.f)

    def to_text(self) -> str:
        lines = []
        for f_ in dataclasses.fields(self):
            v = getattr(self, f_.name)
            if isinstance(v, tuple):
                v = " ".join(str(x) for x in v)
            elif isinstance(v, dict):
                v = " ".join(f"{k}={p}" for k, p in sorted(v.items()))
            elif v is None:
                v = "auto"
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f_.name} = {v}")
        return "\n".join(lines) + "\n"


CONVERTERS = {
    "tensor": str, "shape": parse_ints, "networks": parse_networks, "test": str,
    "split": str, "split_fraction": float, "split_mode": int, "split_start": int,
    "split_stop": int, "zeros_per_one": float, "R": int, "a": parse_floats,
    "c": float, "epsilon": _opt(float), "g": float, "d": float, "alpha": _opt(float),
    "f": float, "iters": int, "burnin": int, "thin": int, "seed": int,
    "inference": str, "init": str, "batch_size": _opt(int), "network_batch_size": _opt(int),
    "M": int, "summary": str, "reweight": parse_bool, "decay": _opt(float),
    "rule": str, "tau": float, "prediction": str, "threads": int, "log_every": int,
    "output": str,
}


def read_kv(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        key, sep, value = s.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        out[key.strip()] = value.strip()
    return out


def apply(cfg: RunConfig, values: dict) -> RunConfig:
    for key, raw in values.items():
        if key not in CONVERTERS:
            raise ConfigError(f"unknown configuration key {key!r}")
        try:
            setattr(cfg, key, CONVERTERS[key](raw))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from None
    return cfg


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    cfg = RunConfig()
    if path:
        apply(cfg, read_kv(path))
    if overrides:
        apply(cfg, {k: v for k, v in overrides.items() if v is not None})
    return cfg
