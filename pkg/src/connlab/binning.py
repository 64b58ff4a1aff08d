"""Binning shared by the x-y mean curves, RIG and Kendall.

Numeric bins are half-open, ``[origin + k*width, origin + (k+1)*width)``,
and are keyed by their left edge. Categorical bins are keyed by the value
itself.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Hashable, Sequence
from dataclasses import dataclass
from numbers import Real

import numpy as np


@dataclass(frozen=True)
class BinSpec:
    categorical: bool = False
    width: float = 1.0
    origin: float = 0.0

    def __post_init__(self) -> None:
        if not self.categorical and not self.width > 0:
            raise ValueError(f"bin width must be positive, got {self.width}")

    @classmethod
    def numeric(cls, width: float, origin: float = 0.0) -> BinSpec:
        return cls(False, width, origin)

    @classmethod
    def category(cls) -> BinSpec:
        return cls(True)

    def key(self, value: Hashable) -> Hashable:
        """Bin key (left edge for numeric specs) of one value."""
        if self.categorical:
            if isinstance(value, Real) and not isinstance(value, bool):
                raise TypeError(f"numeric value {value!r} given to a categorical bin spec")
            return value
        if not isinstance(value, Real) or isinstance(value, bool):
            raise TypeError(f"non-numeric value {value!r} given to a numeric bin spec")
        k = math.floor((value - self.origin) / self.width)
        return self.origin + k * self.width

    def interval(self, key: float) -> tuple[float, float]:
        return (key, key + self.width)


# bin widths used for the connection-log features
RSSI_BINS = BinSpec.numeric(5, -100)
HOUR_BINS = BinSpec.numeric(1, 0)
DEVICES_BINS = BinSpec.numeric(10, 0)
TIME_BINS = BinSpec.numeric(100, 0)
CATEGORY_BINS = BinSpec.category()


def bin_values(x: Sequence[Hashable], spec: BinSpec) -> list[Hashable]:
    """Bin key for every value, in input order."""
    if spec.categorical:
        return [spec.key(v) for v in x]
    arr = np.asarray(x)
    if arr.size and (arr.dtype.kind not in "iuf" or arr.dtype == bool):
        raise TypeError("numeric bin spec requires numeric values")
    k = np.floor((arr - spec.origin) / spec.width)
    return (spec.origin + k * spec.width).tolist()


def bin_codes(x: Sequence[Hashable], spec: BinSpec) -> np.ndarray:
    """Dense integer code per value; codes follow the sorted order of the bin keys."""
    keys = bin_values(x, spec)
    if spec.categorical:
        uniq = sorted(set(keys))
        lookup = {k: i for i, k in enumerate(uniq)}
        return np.fromiter((lookup[k] for k in keys), dtype=np.int64, count=len(keys))
    _, codes = np.unique(np.asarray(keys, dtype=float), return_inverse=True)
    return codes.astype(np.int64)


@dataclass(frozen=True)
class Bin:
    key: Hashable
    count: int
    mean: float
    histogram: dict[int, int] | None = None


@dataclass(frozen=True)
class BinnedSeries:
    spec: BinSpec
    bins: tuple[Bin, ...]

    @property
    def keys(self) -> list[Hashable]:
        return [b.key for b in self.bins]

    @property
    def means(self) -> list[float]:
        return [b.mean for b in self.bins]

    @property
    def total(self) -> int:
        return sum(b.count for b in self.bins)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if self.spec.categorical:
            w.writerow(["bin", "count", "mean"])
            for b in self.bins:
                w.writerow([b.key, b.count, repr(b.mean)])
        else:
            w.writerow(["left", "right", "count", "mean"])
            for b in self.bins:
                lo, hi = self.spec.interval(b.key)
                w.writerow([_num(lo), _num(hi), b.count, repr(b.mean)])
        return buf.getvalue()


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(v)


def binned_mean_curve(
    x: Sequence[Hashable],
    y: Sequence[float],
    spec: BinSpec,
    y_hist_width: float | None = None,
) -> BinnedSeries:
    """Per-bin count and exact mean of ``y``; empty bins are omitted.

    With ``y_hist_width`` each bin also carries a histogram of ``y`` keyed by
    ``floor(y / y_hist_width)``.
    """
    if len(x) != len(y):
        raise ValueError(f"x and y differ in length ({len(x)} vs {len(y)})")
    if len(x) == 0:
        return BinnedSeries(spec, ())
    keys = bin_values(x, spec)
    groups: dict[Hashable, list[float]] = {}
    for k, v in zip(keys, y):
        groups.setdefault(k, []).append(v)
    bins = []
    for k in sorted(groups):
        vals = groups[k]
        hist = None
        if y_hist_width is not None:
            hist = {}
            for v in vals:
                h = math.floor(v / y_hist_width)
                hist[h] = hist.get(h, 0) + 1
            hist = dict(sorted(hist.items()))
        bins.append(Bin(k, len(vals), math.fsum(vals) / len(vals), hist))
    return BinnedSeries(spec, tuple(bins))
