"""Sparse binary tensors, mode networks, file I/O and held-out splits.

Only the indices of the ones are stored. Observed zeros and unobserved cells
are identical during training, because a zero entry forces its latent count
to zero and contributes nothing to any update. Held-out cells are different:
they are missing, not zero, and the sampler imputes their counts (see
:func:`ztpcp.gibbs.sample_missing_stats`). A tensor records them either as
explicit cells (``holdout``) or as a slab of one mode (``holdout_slab``).

Mode numbers in the public API (``ModeNetwork.mode``, ``SplitSpec.mode``,
error messages) are 1-based; coordinates inside files are 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import BoundsError, ConfigError, ParseError


def _as_index_array(indices, K: int) -> np.ndarray:
    arr = np.asarray(indices, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, K), dtype=np.int64)
    return arr.reshape(-1, K)


def check_bounds(indices: np.ndarray, shape: Sequence[int], what: str = "index") -> None:
    for k, n in enumerate(shape):
        col = indices[:, k]
        bad = np.flatnonzero((col < 0) | (col >= n))
        if bad.size:
            row = indices[bad[0]]
            raise BoundsError(
                f"{what} {tuple(int(x) for x in row)} out of range in mode {k + 1} (size {n})"
            )


class SparseBinaryTensor:
    """Binary tensor stored as the sorted, de-duplicated coordinates of its ones.

    Parameters
    ----------
    shape : sequence of int
        Mode sizes ``n_1 .. n_K`` with ``K >= 2``.
    indices : array_like, shape (nnz, K)
        Coordinates of the one-entries. Duplicates are dropped.
    holdout : array_like, optional
        Cells excluded from training; they may not be ones.
    holdout_slab : (mode, start, stop), optional
        Every cell whose 1-based ``mode`` coordinate lies in ``[start, stop)``
        is excluded from training; none of them may be a one.
    """

    def __init__(self, shape: Sequence[int], indices=(), holdout=None, holdout_slab=None):
        shape = tuple(int(n) for n in shape)
        if len(shape) < 2:
            raise ConfigError(f"tensor order must be at least 2, got shape {shape}")
        if any(n < 1 for n in shape):
            raise ConfigError(f"mode sizes must be positive, got {shape}")
        self.shape = shape
        idx = _as_index_array(indices, self.K)
        check_bounds(idx, shape)
        keys = np.unique(self._ravel(idx))
        self._keys = keys
        self.indices = np.stack(np.unravel_index(keys, shape), axis=1).astype(np.int64) \
            if keys.size else np.zeros((0, self.K), dtype=np.int64)
        self.indices.setflags(write=False)
        self._keys.setflags(write=False)
        self.holdout_slab = None
        if holdout_slab is not None:
            mode, start, stop = (int(x) for x in holdout_slab)
            if not (1 <= mode <= self.K and 0 <= start < stop <= shape[mode - 1]):
                raise ConfigError(f"invalid holdout slab {holdout_slab} for shape {shape}")
            col = self.indices[:, mode - 1]
            if np.any((col >= start) & (col < stop)):
                raise ConfigError("holdout slab contains one-entries of the training tensor")
            self.holdout_slab = (mode, start, stop)
        self.holdout = None
        if holdout is not None:
            h = _as_index_array(holdout, self.K)
            check_bounds(h, shape, "holdout cell")
            if self.holdout_slab is not None:
                m, a, b = self.holdout_slab
                h = h[(h[:, m - 1] < a) | (h[:, m - 1] >= b)]
            hk = np.unique(self._ravel(h))
            if np.isin(hk, keys).any():
                raise ConfigError("holdout cells overlap the one-entries of the training tensor")
            self.holdout = np.stack(np.unravel_index(hk, shape), axis=1).astype(np.int64) \
                if hk.size else None

    @property
    def K(self) -> int:
        return len(self.shape)

    @property
    def nnz(self) -> int:
        return int(self._keys.size)

    @property
    def volume(self) -> int:
        return math.prod(self.shape)

    def _ravel(self, idx: np.ndarray) -> np.ndarray:
        if idx.shape[0] == 0:
            return np.zeros(0, dtype=np.int64)
        return np.ravel_multi_index(tuple(idx.T), self.shape).astype(np.int64)

    @cached_property
    def _key_set(self) -> frozenset:
        return frozenset(self._keys.tolist())

    def __contains__(self, index) -> bool:
        index = tuple(int(i) for i in index)
        if len(index) != self.K or any(not 0 <= i < n for i, n in zip(index, self.shape)):
            return False
        return int(np.ravel_multi_index(index, self.shape)) in self._key_set

    def contains_many(self, indices) -> np.ndarray:
        """Vectorised membership for an (m, K) array of valid coordinates."""
        keys = self._ravel(_as_index_array(indices, self.K))
        if self._keys.size == 0:
            return np.zeros(keys.shape, dtype=bool)
        pos = np.searchsorted(self._keys, keys)
        pos = np.minimum(pos, self._keys.size - 1)
        return self._keys[pos] == keys

    def __len__(self) -> int:
        return self.nnz

    def __repr__(self) -> str:
        return f"SparseBinaryTensor(shape={self.shape}, nnz={self.nnz})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseBinaryTensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self._keys, other._keys)

    def with_holdout(self, cells) -> "SparseBinaryTensor":
        """Copy with ``cells`` held out; any ones among them leave the training set."""
        cells = _as_index_array(cells, self.K)
        check_bounds(cells, self.shape, "holdout cell")
        keep = ~np.isin(self._keys, self._ravel(cells))
        return SparseBinaryTensor(self.shape, self.indices[keep], holdout=cells, holdout_slab=self.holdout_slab)


@dataclass(frozen=True)
class ModeNetwork:
    """Symmetric binary network over the entities of one mode.

    Only the upper triangle is stored: ``edges[:, 0] <= edges[:, 1]``.
    """

    mode: int
    size: int
    edges: np.ndarray = field(repr=False)
    self_loops: int = 0

    @classmethod
    def from_pairs(cls, mode: int, size: int, pairs) -> "ModeNetwork":
        arr = _as_index_array(pairs, 2)
        if arr.size and (arr.min() < 0 or arr.max() >= size):
            bad = arr[np.flatnonzero((arr < 0).any(1) | (arr >= size).any(1))[0]]
            raise BoundsError(
                f"edge {tuple(int(x) for x in bad)} out of range for mode {mode} network (size {size})"
            )
        arr = np.sort(arr, axis=1)
        if arr.size:
            keys = np.unique(arr[:, 0] * size + arr[:, 1])
            arr = np.stack([keys // size, keys % size], axis=1)
        arr = arr.astype(np.int64)
        arr.setflags(write=False)
        loops = int(np.count_nonzero(arr[:, 0] == arr[:, 1])) if arr.size else 0
        return cls(int(mode), int(size), arr, loops)

    @property
    def nnz(self) -> int:
        return int(self.edges.shape[0])

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(i), int(j)) for i, j in self.edges}


@dataclass(frozen=True)
class SplitSpec:
    """How to carve a test set out of a tensor.

    ``kind`` is ``"random-entry"`` (hold out ``fraction`` of the ones plus
    sampled zeros) or ``"cold-start"`` (hold out every cell whose coordinate
    in ``mode`` lies in ``[start, stop)``).
    """

    kind: str = "random-entry"
    fraction: float = 0.1
    mode: int = 1
    start: int = 0
    stop: int = 0
    seed: int = 0

    def validate(self, shape: Sequence[int]) -> None:
        if self.kind == "random-entry":
            if not 0.0 < self.fraction < 1.0:
                raise ConfigError(f"random-entry fraction must be in (0, 1), got {self.fraction}")
        elif self.kind == "cold-start":
            if not 1 <= self.mode <= len(shape):
                raise ConfigError(f"cold-start mode {self.mode} not in 1..{len(shape)}")
            n = shape[self.mode - 1]
            if not 0 <= self.start < self.stop <= n:
                raise ConfigError(
                    f"cold-start slice [{self.start}, {self.stop}) invalid for mode {self.mode} of size {n}"
                )
        else:
            raise ConfigError(f"unknown split kind {self.kind!r}")


# -- file I/O ---------------------------------------------------------------

def _parse_int_rows(path: Path, width: int, what: str):
    rows = []
    linenos = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != width:
                raise ParseError(path, lineno, f"expected {width} integers per {what} line, got {len(parts)}")
            try:
                vals = [int(p) for p in parts]
            except ValueError:
                raise ParseError(path, lineno, f"non-integer field in {s!r}") from None
            if any(v < 0 for v in vals):
                raise ParseError(path, lineno, f"negative coordinate in {s!r}")
            rows.append(vals)
            linenos.append(lineno)
    return np.array(rows, dtype=np.int64).reshape(-1, width), linenos


def load_tensor(path, shape: Sequence[int]) -> SparseBinaryTensor:
    """Read a tensor file: one one-entry per line, K zero-based coordinates."""
    path = Path(path)
    shape = tuple(int(n) for n in shape)
    idx, linenos = _parse_int_rows(path, len(shape), "tensor")
    for k, n in enumerate(shape):
        bad = np.flatnonzero(idx[:, k] >= n) if idx.size else []
        if len(bad):
            i = bad[0]
            raise BoundsError(
                f"{path}:{linenos[i]}: coordinate {int(idx[i, k])} out of range in mode {k + 1} (size {n})"
            )
    return SparseBinaryTensor(shape, idx)


def load_network(path, mode: int, size: int) -> ModeNetwork:
    """Read an edge list ``i j`` per line; edges are symmetrised and de-duplicated."""
    path = Path(path)
    pairs, linenos = _parse_int_rows(path, 2, "network")
    if pairs.size:
        bad = np.flatnonzero((pairs >= size).any(axis=1))
        if bad.size:
            i = bad[0]
            raise BoundsError(
                f"{path}:{linenos[i]}: edge {tuple(int(x) for x in pairs[i])} out of range "
                f"for mode {mode} network (size {size})"
            )
    return ModeNetwork.from_pairs(mode, size, pairs)


def save_tensor(path, tensor: SparseBinaryTensor) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# shape {' '.join(map(str, tensor.shape))} nnz {tensor.nnz}\n")
        for row in tensor.indices:
            fh.write(" ".join(map(str, row.tolist())) + "\n")


def save_network(path, net: ModeNetwork) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# mode {net.mode} size {net.size} edges {net.nnz}\n")
        for i, j in net.edges.tolist():
            fh.write(f"{i} {j}\n")


def load_test(path, K: int):
    """Read a test file: K coordinates and a 0/1 label per line."""
    path = Path(path)
    rows, linenos = _parse_int_rows(path, K + 1, "test")
    labels = rows[:, K]
    bad = np.flatnonzero(labels > 1)
    if bad.size:
        raise ParseError(path, linenos[bad[0]], f"label must be 0 or 1, got {labels[bad[0]]}")
    return rows[:, :K].copy(), labels.astype(np.int8)


def save_test(path, indices, labels) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row, lab in zip(np.asarray(indices).tolist(), np.asarray(labels).tolist()):
            fh.write(" ".join(map(str, row)) + f" {int(lab)}\n")


# -- splits -----------------------------------------------------------------

def _sample_zeros(rng, tensor: SparseBinaryTensor, count: int, mode=None, lo=0, hi=0) -> np.ndarray:
    """Distinct uniformly drawn non-one cells, optionally restricted to a slab."""
    shape = list(tensor.shape)
    offset = np.zeros(tensor.K, dtype=np.int64)
    if mode is not None:
        shape[mode - 1] = hi - lo
        offset[mode - 1] = lo
    available = math.prod(shape) - (
        tensor.nnz if mode is None
        else int(np.count_nonzero((tensor.indices[:, mode - 1] >= lo) & (tensor.indices[:, mode - 1] < hi)))
    )
    if count > available:
        raise ConfigError(f"requested {count} test zeros but only {available} zero cells exist")
    chosen: list[np.ndarray] = []
    seen: set[int] = set()
    need = count
    while need > 0:
        batch = max(2 * need, 16)
        cand = np.stack([rng.integers(0, n, size=batch) for n in shape], axis=1) + offset
        cand = cand[~tensor.contains_many(cand)]
        for row, key in zip(cand, tensor._ravel(cand).tolist()):
            if key in seen:
                continue
            seen.add(key)
            chosen.append(row)
            need -= 1
            if need == 0:
                break
    if not chosen:
        return np.zeros((0, tensor.K), dtype=np.int64)
    return np.array(chosen, dtype=np.int64)


def split_holdout(tensor: SparseBinaryTensor, spec: SplitSpec, zeros_per_one: float = 1.0):
    """Split ``tensor`` into a training tensor and a labelled test set.

    Returns
    -------
    train : SparseBinaryTensor
        The remaining ones. The test cells (random-entry) or the slice
        (cold-start) are recorded as held out, so training treats them as
        missing rather than as zeros.
    test_indices : ndarray, shape (m, K)
    test_labels : ndarray of {0, 1}, shape (m,)
        Held-out ones come first, then sampled zeros.
    """
    from .samplers import STREAM_SPLIT, make_rng

    spec.validate(tensor.shape)
    if zeros_per_one < 0:
        raise ConfigError("zeros_per_one must be non-negative")
    rng = make_rng(spec.seed, STREAM_SPLIT)
    idx = tensor.indices

    if spec.kind == "random-entry":
        n_test = int(round(spec.fraction * tensor.nnz))
        if tensor.nnz - n_test < 1:
            raise ConfigError(
                f"holding out {n_test} of {tensor.nnz} ones leaves no training data"
            )
        perm = rng.permutation(tensor.nnz)
        test_mask = np.zeros(tensor.nnz, dtype=bool)
        test_mask[perm[:n_test]] = True
        zeros = _sample_zeros(rng, tensor, int(round(zeros_per_one * n_test)))
    else:
        col = idx[:, spec.mode - 1]
        test_mask = (col >= spec.start) & (col < spec.stop)
        if not np.any(~test_mask):
            raise ConfigError("cold-start slice covers every one-entry; no training data left")
        n_pos = int(np.count_nonzero(test_mask))
        zeros = _sample_zeros(
            rng, tensor, int(round(zeros_per_one * n_pos)), spec.mode, spec.start, spec.stop
        )

    positives = idx[test_mask]
    test_indices = np.concatenate([positives, zeros]).astype(np.int64).reshape(-1, tensor.K)
    test_labels = np.concatenate(
        [np.ones(len(positives), dtype=np.int8), np.zeros(len(zeros), dtype=np.int8)]
    )
    if spec.kind == "random-entry":
        train = SparseBinaryTensor(tensor.shape, idx[~test_mask], holdout=test_indices)
    else:
        train = SparseBinaryTensor(tensor.shape, idx[~test_mask], holdout_slab=(spec.mode, spec.start, spec.stop))
    return train, test_indices, test_labels

