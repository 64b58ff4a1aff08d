"""Random forest over the five connection features.

Trees are grown with weighted Gini impurity. A FAST row weighs
``class_weight_fast`` and a SLOW row weighs 1, times its bootstrap
multiplicity. Each node tries ``features_per_split`` randomly chosen
features (more only if none of them can split). Numeric features split at
midpoints between adjacent observed values. Categorical features order
their present codes by weighted SLOW share and split on a prefix of that
order.

A tree votes SLOW when its leaf's SLOW weight is at least its FAST weight.
The forest score is the fraction of SLOW votes, and the label is SLOW when
the score reaches the decision threshold (0.5 by default, so an even split
goes to SLOW).

Model file layout (all integers little-endian)::

    b"CLRF"  magic
    u16      format version
    u32      header length H, then H bytes of UTF-8 JSON
             (params, encoders, training summary, per-tree node counts)
    per tree, for n nodes and c left-codes:
             i32[n] feature, f64[n] threshold, i32[n] left, i32[n] right,
             f64[n] w_fast, f64[n] w_slow, i32[n] cat_off, i32[n] cat_len,
             i32[c] cat_codes
    u32      CRC-32 of every preceding byte
"""

from __future__ import annotations

import json
import math
import struct
import zlib
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from connlab import _kernels
from connlab.features import (
    CATEGORICAL,
    FEATURE_NAMES,
    Encoders,
    FeatureVector,
    SpeedLabel,
)

MAGIC = b"CLRF"
FORMAT_VERSION = 1
N_FEATURES = len(FEATURE_NAMES)
_IS_CAT = np.array(CATEGORICAL, dtype=np.bool_)


class ModelFormatError(ValueError):
    """The model file is corrupt, truncated or of an unsupported version."""


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = 90
    class_weight_fast: float = 0.3
    features_per_split: int = math.ceil(math.sqrt(N_FEATURES))
    bootstrap: bool = True
    min_samples_leaf: int = 1
    rng_seed: int = 0
    n_jobs: int = 1

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0.0 < self.class_weight_fast <= 1.0:
            raise ValueError("class_weight_fast must lie in (0, 1]")
        if not 1 <= self.features_per_split <= N_FEATURES:
            raise ValueError(f"features_per_split must lie in [1, {N_FEATURES}]")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.n_jobs < 1:
            raise ValueError("n_jobs must be >= 1")

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ForestParams:
        return cls(**d)


_NODE_FIELDS = (
    ("feature", "<i4"),
    ("threshold", "<f8"),
    ("left", "<i4"),
    ("right", "<i4"),
    ("w_fast", "<f8"),
    ("w_slow", "<f8"),
    ("cat_off", "<i4"),
    ("cat_len", "<i4"),
)


@dataclass(eq=False)
class DecisionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    w_fast: np.ndarray
    w_slow: np.ndarray
    cat_off: np.ndarray
    cat_len: np.ndarray
    cat_codes: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def vote(self) -> np.ndarray:
        """Per-node SLOW vote (meaningful at leaves); ties go to SLOW."""
        return (self.w_slow >= self.w_fast).astype(np.int64)

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for k in range(self.n_nodes):  # children always follow their parent
            if self.feature[k] >= 0:
                depth[self.left[k]] = depth[self.right[k]] = depth[k] + 1
        return int(depth.max())

    def left_codes(self, node: int) -> np.ndarray:
        o = self.cat_off[node]
        return self.cat_codes[o:o + self.cat_len[node]]

    def predict_codes(self, X: np.ndarray) -> np.ndarray:
        """0 (FAST) or 1 (SLOW) per row."""
        return _votes([self], _as_matrix(X))

    def same_as(self, other: DecisionTree) -> bool:
        return all(np.array_equal(getattr(self, f), getattr(other, f))
                   for f, _ in _NODE_FIELDS + (("cat_codes", ""),))

    @classmethod
    def grow(cls, X: np.ndarray, y: np.ndarray, params: ForestParams, seed: int,
             mult: np.ndarray | None = None) -> DecisionTree:
        X = _as_matrix(X)
        y = np.ascontiguousarray(y, dtype=np.int8)
        if mult is None:
            mult = np.ones(len(y), dtype=np.int64)
        offsets = np.where(_IS_CAT, 0, X.min(axis=0)).astype(np.int64)
        Xs = np.ascontiguousarray(X - offsets)
        if (Xs[:, _IS_CAT] < 0).any():
            raise ValueError("categorical codes must be non-negative")
        n_levels = Xs.max(axis=0) + 1
        class_w = np.array([params.class_weight_fast, 1.0])
        out = _kernels.grow_tree(Xs, y, class_w, np.ascontiguousarray(mult, dtype=np.int64), _IS_CAT,
                                 n_levels, offsets, params.features_per_split, params.max_depth,
                                 params.min_samples_leaf, seed)
        f, thr, le, ri, wf, ws, _depth, co, cl, cc = out
        return cls(f, thr, le, ri, wf, ws, co, cl, cc)


def _as_matrix(X: Any) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.int64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != N_FEATURES:
        raise ValueError(f"expected {N_FEATURES} feature columns, got {X.shape[1]}")
    return X


def _flatten(trees: Sequence[DecisionTree]) -> tuple:
    roots, base, cbase = [], 0, 0
    parts: dict[str, list[np.ndarray]] = {k: [] for k in ("feature", "threshold", "left", "right", "vote",
                                                         "cat_off", "cat_len", "cat_codes")}
    for t in trees:
        roots.append(base)
        inner = t.feature >= 0
        parts["feature"].append(t.feature)
        parts["threshold"].append(t.threshold)
        parts["left"].append(np.where(inner, t.left + base, -1))
        parts["right"].append(np.where(inner, t.right + base, -1))
        parts["vote"].append(t.vote)
        parts["cat_off"].append(t.cat_off + cbase)
        parts["cat_len"].append(t.cat_len)
        parts["cat_codes"].append(t.cat_codes)
        base += t.n_nodes
        cbase += len(t.cat_codes)
    cat = {k: np.concatenate(v) for k, v in parts.items()}
    return (
        np.array(roots, dtype=np.int64),
        cat["feature"].astype(np.int32),
        cat["threshold"].astype(np.float64),
        cat["left"].astype(np.int32),
        cat["right"].astype(np.int32),
        cat["vote"].astype(np.int64),
        cat["cat_off"].astype(np.int32),
        cat["cat_len"].astype(np.int32),
        cat["cat_codes"].astype(np.int32),
    )


def _votes(trees: Sequence[DecisionTree], X: np.ndarray, flat: tuple | None = None) -> np.ndarray:
    roots, f, thr, le, ri, vote, co, cl, cc = flat if flat is not None else _flatten(trees)
    return _kernels.slow_votes(X, roots, f, thr, le, ri, vote, co, cl, cc)


@dataclass
class TrainingSummary:
    n: int
    n_fast: int
    n_slow: int
    oob_accuracy: float | None = None


@dataclass(eq=False)
class ForestModel:
    params: ForestParams
    trees: list[DecisionTree]
    encoders: Encoders | None = None
    summary: TrainingSummary | None = None
    version: int = FORMAT_VERSION
    _flat: tuple | None = field(default=None, repr=False)

    def _flat_arrays(self) -> tuple:
        if self._flat is None:
            self._flat = _flatten(self.trees)
        return self._flat

    def scores(self, X: Any) -> np.ndarray:
        """Fraction of trees voting SLOW for every row."""
        X = _as_matrix(X)
        if len(X) == 0:
            return np.zeros(0)
        return _votes(self.trees, X, self._flat_arrays()) / len(self.trees)

    def predict_many(self, X: Any, threshold: float = 0.5) -> np.ndarray:
        """0 (FAST) or 1 (SLOW) per row; SLOW iff score >= threshold."""
        return (self.scores(X) >= threshold).astype(np.int8)

    def predict(self, fv: FeatureVector | Sequence[int], threshold: float = 0.5) -> tuple[SpeedLabel, float]:
        x = fv.as_array() if isinstance(fv, FeatureVector) else np.asarray(fv, dtype=np.int64)
        s = float(self.scores(x)[0])
        return (SpeedLabel.SLOW if s >= threshold else SpeedLabel.FAST), s

    def max_depth(self) -> int:
        return max(t.depth() for t in self.trees)

    def same_as(self, other: ForestModel) -> bool:
        return len(self.trees) == len(other.trees) and all(a.same_as(b) for a, b in zip(self.trees, other.trees))


def tree_seeds(params: ForestParams) -> list[tuple[int, np.random.Generator]]:
    """(kernel seed, bootstrap generator) for every tree, derived from the master seed."""
    children = np.random.SeedSequence(params.rng_seed).spawn(params.n_trees)
    return [(int(c.generate_state(1, np.uint32)[0]), np.random.default_rng(c)) for c in children]


def train(X: Any, y: Any, params: ForestParams = ForestParams(), encoders: Encoders | None = None) -> ForestModel:
    """Fit a forest on an ``(n, 5)`` feature matrix and 0/1 (FAST/SLOW) labels."""
    X = _as_matrix(X)
    y = np.ascontiguousarray(y, dtype=np.int8)
    if len(X) != len(y):
        raise ValueError("X and y differ in length")
    if len(y) == 0:
        raise ValueError("cannot train on an empty dataset")
    n_slow = int(y.sum())
    if n_slow == 0 or n_slow == len(y):
        raise ValueError("training data must contain both FAST and SLOW examples")

    n = len(y)
    plan = []
    for seed, gen in tree_seeds(params):
        if params.bootstrap:
            mult = np.bincount(gen.integers(0, n, n), minlength=n).astype(np.int64)
        else:
            mult = np.ones(n, dtype=np.int64)
        plan.append((seed, mult))

    def grow(item):
        seed, mult = item
        return DecisionTree.grow(X, y, params, seed, mult)

    if params.n_jobs > 1:
        with ThreadPoolExecutor(params.n_jobs) as pool:
            trees = list(pool.map(grow, plan))
    else:
        trees = [grow(item) for item in plan]

    oob = None
    if params.bootstrap:
        votes = np.zeros(n)
        seen = np.zeros(n)
        for tree, (_, mult) in zip(trees, plan):
            out = mult == 0
            if out.any():
                votes[out] += tree.predict_codes(X[out])
                seen[out] += 1
        has = seen > 0
        if has.any():
            pred = (votes[has] / seen[has] >= 0.5).astype(np.int8)
            oob = float(np.mean(pred == y[has]))

    summary = TrainingSummary(n, n - n_slow, n_slow, oob)
    return ForestModel(params, trees, encoders, summary)


# --------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class MetricsReport:
    """Per-class precision/recall; ``None`` where the denominator is zero."""

    n_test: int
    confusion: dict[str, dict[str, int]]
    precision: dict[str, float | None]
    recall: dict[str, float | None]

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def metrics(y_true: Any, y_pred: Any) -> MetricsReport:
    y_true = np.asarray(y_true, dtype=np.int8)
    y_pred = np.asarray(y_pred, dtype=np.int8)
    if len(y_true) == 0:
        raise ValueError("empty test set")
    names = {0: SpeedLabel.FAST.value, 1: SpeedLabel.SLOW.value}
    conf = {names[t]: {names[p]: int(np.sum((y_true == t) & (y_pred == p))) for p in (0, 1)} for t in (0, 1)}
    precision, recall = {}, {}
    for c in (0, 1):
        tp = conf[names[c]][names[c]]
        pred_c = sum(conf[names[t]][names[c]] for t in (0, 1))
        true_c = sum(conf[names[c]].values())
        precision[names[c]] = tp / pred_c if pred_c else None
        recall[names[c]] = tp / true_c if true_c else None
    return MetricsReport(len(y_true), conf, precision, recall)


def evaluate(model: ForestModel | Callable[[np.ndarray], np.ndarray], X: Any, y: Any,
             threshold: float = 0.5) -> MetricsReport:
    X = _as_matrix(X)
    pred = model.predict_many(X, threshold) if isinstance(model, ForestModel) else model(X)
    return metrics(y, pred)


# --------------------------------------------------------------------------
# persistence


def _header(model: ForestModel) -> dict[str, Any]:
    return {
        "params": asdict(model.params),
        "encoders": None if model.encoders is None else model.encoders.to_dict(),
        "summary": None if model.summary is None else asdict(model.summary),
        "trees": [[t.n_nodes, len(t.cat_codes)] for t in model.trees],
    }


def dumps(model: ForestModel) -> bytes:
    head = json.dumps(_header(model), sort_keys=True, separators=(",", ":")).encode()
    parts = [MAGIC, struct.pack("<HI", FORMAT_VERSION, len(head)), head]
    for t in model.trees:
        for name, dt in _NODE_FIELDS:
            parts.append(np.ascontiguousarray(getattr(t, name), dtype=dt).tobytes())
        parts.append(np.ascontiguousarray(t.cat_codes, dtype="<i4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def loads(data: bytes) -> ForestModel:
    if len(data) < 14 or data[:4] != MAGIC:
        raise ModelFormatError("not a model file (bad magic or truncated)")
    version, hlen = struct.unpack_from("<HI", data, 4)
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version} (expected {FORMAT_VERSION})")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise ModelFormatError("checksum mismatch: model file is corrupt or truncated")
    pos = 10
    try:
        head = json.loads(body[pos:pos + hlen])
    except ValueError as exc:
        raise ModelFormatError(f"unreadable model header: {exc}") from None
    pos += hlen
    trees = []
    for n, c in head["trees"]:
        arrays = {}
        for name, dt in _NODE_FIELDS:
            size = n * np.dtype(dt).itemsize
            if pos + size > len(body):
                raise ModelFormatError("model file is truncated")
            arrays[name] = np.frombuffer(body, dtype=dt, count=n, offset=pos)
            pos += size
        if pos + 4 * c > len(body):
            raise ModelFormatError("model file is truncated")
        codes = _native(np.frombuffer(body, dtype="<i4", count=c, offset=pos))
        pos += 4 * c
        trees.append(DecisionTree(cat_codes=codes, **{k: _native(v) for k, v in arrays.items()}))
    if pos != len(body):
        raise ModelFormatError("model file has trailing bytes")
    params = ForestParams.from_dict(head["params"])
    enc = None if head["encoders"] is None else Encoders.from_dict(head["encoders"])
    summary = None if head["summary"] is None else TrainingSummary(**head["summary"])
    return ForestModel(params, trees, enc, summary, version)


def _native(a: np.ndarray) -> np.ndarray:
    return a.astype(a.dtype.newbyteorder("="))


def save(model: ForestModel, path: str | Path) -> None:
    Path(path).write_bytes(dumps(model))


def load(path: str | Path) -> ForestModel:
    return loads(Path(path).read_bytes())
