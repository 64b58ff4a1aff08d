"""FAST/SLOW labels and the five-feature encoding used by the classifier.

Features, in column order: hour of day, RSSI, device model, AP model and
the encryption flag. Device and AP models are integer codes; code 0 stands
for any model that was unseen (or too rare) when the encoders were fitted.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Iterable
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Protocol

import numpy as np

from connlab.schema import TIMEOUT_MS, Outcome

FAST_SLOW_THRESHOLD_MS = 15_000
DEFAULT_MIN_COUNT = 5

FEATURE_NAMES = ("hour_of_day", "rssi_dbm", "device_model", "ap_model", "encrypted")
CATEGORICAL = (False, False, True, True, False)
UNSEEN = 0


class SpeedLabel(str, Enum):
    FAST = "FAST"
    SLOW = "SLOW"

    @property
    def code(self) -> int:
        return 1 if self is SpeedLabel.SLOW else 0


class LabelError(ValueError):
    pass


def scored_time(outcome: Outcome, connection_time_ms: int | None) -> int:
    """Time cost with failed willing attempts charged the full timeout."""
    if outcome is Outcome.SUCCESS:
        return connection_time_ms
    if outcome.willing:
        return TIMEOUT_MS
    raise LabelError(f"{outcome.value} is not a willing outcome")


def label(attempt: Any, threshold_ms: int = FAST_SLOW_THRESHOLD_MS) -> SpeedLabel:
    """FAST iff the attempt succeeded within ``threshold_ms`` (inclusive)."""
    t = scored_time(attempt.outcome, attempt.connection_time_ms)
    if attempt.outcome is not Outcome.SUCCESS:
        return SpeedLabel.SLOW
    return SpeedLabel.FAST if t <= threshold_ms else SpeedLabel.SLOW


@dataclass(frozen=True)
class CategoryEncoder:
    """Maps category names to codes ``1..V``; everything else is ``UNSEEN``."""

    vocabulary: dict[str, int] = field(default_factory=dict)
    min_count: int = 1
    n_collapsed: int = 0

    @classmethod
    def fit(cls, values: Iterable[str], min_count: int = DEFAULT_MIN_COUNT) -> CategoryEncoder:
        counts = Counter(values)
        kept = sorted(v for v, c in counts.items() if c >= min_count)
        return cls({v: i + 1 for i, v in enumerate(kept)}, min_count, len(counts) - len(kept))

    def __len__(self) -> int:
        return len(self.vocabulary)

    @property
    def n_codes(self) -> int:
        """Codes in use including the reserved one."""
        return len(self.vocabulary) + 1

    def code(self, value: str) -> int:
        return self.vocabulary.get(value, UNSEEN)

    def to_dict(self) -> dict[str, Any]:
        return {"vocabulary": sorted(self.vocabulary, key=self.vocabulary.__getitem__),
                "min_count": self.min_count, "n_collapsed": self.n_collapsed}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> CategoryEncoder:
        vocab = {v: i + 1 for i, v in enumerate(d["vocabulary"])}
        return cls(vocab, int(d["min_count"]), int(d.get("n_collapsed", 0)))


@dataclass(frozen=True)
class Encoders:
    device_model: CategoryEncoder
    ap_model: CategoryEncoder

    def to_dict(self) -> dict[str, Any]:
        return {"device_model": self.device_model.to_dict(), "ap_model": self.ap_model.to_dict()}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Encoders:
        return cls(CategoryEncoder.from_dict(d["device_model"]), CategoryEncoder.from_dict(d["ap_model"]))


class HasFeatures(Protocol):
    hour_of_day: int
    rssi_dbm: int
    device_model: str
    ap_model: str
    encrypted: bool


def fit_encoders(rows: Iterable[HasFeatures], min_count: int = DEFAULT_MIN_COUNT) -> Encoders:
    rows = list(rows)
    if not rows:
        raise ValueError("cannot fit encoders on an empty corpus")
    return Encoders(
        CategoryEncoder.fit((r.device_model for r in rows), min_count),
        CategoryEncoder.fit((r.ap_model for r in rows), min_count),
    )


@dataclass(frozen=True, slots=True)
class FeatureVector:
    hour_of_day: int
    rssi_dbm: int
    device_model: int
    ap_model: int
    encrypted: bool

    def as_array(self) -> np.ndarray:
        return np.array([self.hour_of_day, self.rssi_dbm, self.device_model,
                         self.ap_model, int(self.encrypted)], dtype=np.int64)


def encode(row: HasFeatures, encoders: Encoders, unseen: Counter | None = None) -> FeatureVector:
    """Encode one row; ``unseen`` (if given) counts fields that fell back to the reserved code."""
    dev = encoders.device_model.code(row.device_model)
    ap = encoders.ap_model.code(row.ap_model)
    if unseen is not None:
        if dev == UNSEEN:
            unseen["device_model"] += 1
        if ap == UNSEEN:
            unseen["ap_model"] += 1
    return FeatureVector(row.hour_of_day, row.rssi_dbm, dev, ap, row.encrypted)


def encode_matrix(rows: Iterable[HasFeatures], encoders: Encoders, unseen: Counter | None = None) -> np.ndarray:
    """``(n, 5)`` int64 feature matrix in ``FEATURE_NAMES`` order."""
    dev, ap = encoders.device_model.code, encoders.ap_model.code
    out = [(r.hour_of_day, r.rssi_dbm, dev(r.device_model), ap(r.ap_model), int(r.encrypted)) for r in rows]
    X = np.array(out, dtype=np.int64).reshape(len(out), len(FEATURE_NAMES))
    if unseen is not None:
        unseen["device_model"] += int(np.count_nonzero(X[:, 2] == UNSEEN))
        unseen["ap_model"] += int(np.count_nonzero(X[:, 3] == UNSEEN))
    return X


def label_vector(rows: Iterable[Any], threshold_ms: int = FAST_SLOW_THRESHOLD_MS) -> np.ndarray:
    """0 for FAST, 1 for SLOW."""
    return np.array([label(r, threshold_ms).code for r in rows], dtype=np.int8)
