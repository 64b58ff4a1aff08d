"""Measurement analytics over connection logs.

Quantiles use the nearest-rank rule: the q-quantile of n sorted values is
the value at rank ``ceil(q * n)`` (rank 1 for q = 0). Entropies are plug-in
estimates from the binned joint histogram, without bias correction. Only
Success attempts carry a connection time, so every time-based statistic
ignores failures.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import Counter
from collections.abc import Hashable, Iterable, Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from connlab.binning import (
    CATEGORY_BINS,
    DEVICES_BINS,
    HOUR_BINS,
    RSSI_BINS,
    TIME_BINS,
    BinSpec,
    bin_codes,
    binned_mean_curve,
)
from connlab.schema import PHASE_NAMES, ConnectionAttempt, Outcome
from connlab.sim import STATE_ORDER, ConnState, TransitionTrace

log = logging.getLogger(__name__)


class EmptyInputError(ValueError):
    pass


def nearest_rank(values: Sequence[float], q: float) -> float:
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"quantile must lie in [0, 1], got {q}")
    if len(values) == 0:
        raise EmptyInputError("quantile of an empty sample")
    s = np.sort(np.asarray(values))
    k = max(1, math.ceil(q * len(s) - 1e-12))
    v = s[k - 1]
    return v.item() if hasattr(v, "item") else v


def outcome_proportions(attempts: Sequence[ConnectionAttempt]) -> dict[Outcome, float]:
    if not attempts:
        raise EmptyInputError("empty corpus")
    counts = Counter(a.outcome for a in attempts)
    n = len(attempts)
    return {o: counts[o] / n for o in Outcome if counts[o]}


@dataclass(frozen=True)
class EmpiricalCdf:
    """Right-continuous step CDF: ``cdf(x)`` is the share of samples ``<= x``."""

    x: np.ndarray
    p: np.ndarray
    n: int

    @classmethod
    def of(cls, values: Iterable[float]) -> EmpiricalCdf:
        v = np.sort(np.asarray(list(values), dtype=float))
        if v.size == 0:
            raise EmptyInputError("CDF of an empty sample")
        xs, counts = np.unique(v, return_counts=True)
        return cls(xs, np.cumsum(counts) / v.size, int(v.size))

    def __call__(self, x: float) -> float:
        k = np.searchsorted(self.x, x, side="right")
        return 0.0 if k == 0 else float(self.p[k - 1])

    def quantile(self, q: float) -> float:
        if q <= 0.0:
            return float(self.x[0])
        k = int(np.searchsorted(self.p, q - 1e-12, side="left"))
        return float(self.x[min(k, len(self.x) - 1)])

    def table(self) -> list[tuple[float, float]]:
        return list(zip(self.x.tolist(), self.p.tolist()))

    def to_csv(self, name: str = "x") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([name, "cdf"])
        for x, p in self.table():
            w.writerow([_fmt(x), repr(p)])
        return buf.getvalue()


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(v)


def success_times(attempts: Iterable[ConnectionAttempt]) -> list[int]:
    return [a.connection_time_ms for a in attempts if a.outcome is Outcome.SUCCESS]


def success_time_cdf(attempts: Iterable[ConnectionAttempt]) -> EmpiricalCdf:
    times = success_times(attempts)
    if not times:
        raise EmptyInputError("no Success attempts")
    return EmpiricalCdf.of(times)


class TimeCostClass(str, Enum):
    C0TO7S = "0-7"
    C7TO15S = "7-15"
    C15TO30S = "15-30"

    @classmethod
    def of(cls, ms: int) -> TimeCostClass:
        if ms < 7000:
            return cls.C0TO7S
        if ms < 15000:
            return cls.C7TO15S
        return cls.C15TO30S

    @classmethod
    def parse(cls, text: str) -> TimeCostClass:
        key = text.strip().lower().removesuffix("s").replace("to", "-").replace("c", "", 1)
        for c in cls:
            if c.value == key:
                return c
        raise ValueError(f"unknown time-cost class {text!r} (use 0-7, 7-15 or 15-30)")


PHASES = tuple(p.removesuffix("_ms") for p in PHASE_NAMES)


@dataclass(frozen=True)
class PhaseBreakdown:
    """Per time-cost class and phase: CDF of the phase's share of the total time."""

    cdfs: dict[TimeCostClass, dict[str, EmpiricalCdf]]
    shares: dict[TimeCostClass, np.ndarray]  # (n, 4) rows of phase shares
    skipped: int

    @property
    def counts(self) -> dict[TimeCostClass, int]:
        return {c: len(self.shares.get(c, ())) for c in TimeCostClass}

    def _column(self, classes: Iterable[TimeCostClass], phase: str) -> np.ndarray:
        j = PHASES.index(phase)
        cols = [self.shares[c][:, j] for c in classes if c in self.shares]
        return np.concatenate(cols) if cols else np.zeros(0)

    def mean_share(self, cls: TimeCostClass, phase: str) -> float:
        return float(np.mean(self._column([cls], phase)))

    def median_share(self, classes: Iterable[TimeCostClass], phase: str) -> float:
        return nearest_rank(self._column(classes, phase), 0.5)


def phase_shares(attempts: Iterable[ConnectionAttempt]) -> tuple[dict[TimeCostClass, list[tuple[float, ...]]], int]:
    by_class: dict[TimeCostClass, list[tuple[float, ...]]] = {c: [] for c in TimeCostClass}
    skipped = 0
    for a in attempts:
        if a.outcome is not Outcome.SUCCESS:
            continue
        if a.phases is None or a.connection_time_ms == 0:
            skipped += 1
            continue
        t = a.connection_time_ms
        by_class[TimeCostClass.of(t)].append(tuple(v / t for v in a.phases.as_tuple()))
    return by_class, skipped


def phase_proportion_cdfs(attempts: Iterable[ConnectionAttempt]) -> PhaseBreakdown:
    by_class, skipped = phase_shares(attempts)
    if skipped:
        log.info("phase breakdown: %d Success attempts without phase timings skipped", skipped)
    cdfs, shares = {}, {}
    for cls, rows in by_class.items():
        if rows:
            shares[cls] = np.asarray(rows)
            cdfs[cls] = {ph: EmpiricalCdf.of(shares[cls][:, j]) for j, ph in enumerate(PHASES)}
    return PhaseBreakdown(cdfs, shares, skipped)


DEFAULT_QUANTILES = (0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99, 1.0)


@dataclass(frozen=True)
class QuantileTable:
    cls: TimeCostClass
    values: np.ndarray  # sorted scan times

    @property
    def n(self) -> int:
        return len(self.values)

    def quantile(self, q: float) -> int:
        return nearest_rank(self.values, q)

    def table(self, qs: Sequence[float] = DEFAULT_QUANTILES) -> dict[float, int]:
        return {q: self.quantile(q) for q in qs}

    def fraction_above(self, ms: float) -> float:
        return float(np.mean(self.values > ms))


def scan_time_quantiles(attempts: Iterable[ConnectionAttempt], cls: TimeCostClass) -> QuantileTable:
    vals = [a.phases.scan_ms for a in attempts
            if a.outcome is Outcome.SUCCESS and a.phases is not None
            and TimeCostClass.of(a.connection_time_ms) is cls]
    if not vals:
        raise EmptyInputError(f"no Success attempts with phases in class {cls.value}")
    return QuantileTable(cls, np.sort(np.asarray(vals)))


# --------------------------------------------------------------------------
# transitions


@dataclass(frozen=True)
class TransitionMatrix:
    counts: np.ndarray  # [src, dst] in STATE_ORDER

    def __getitem__(self, key: tuple[ConnState, ConnState]) -> int:
        a, b = key
        return int(self.counts[STATE_ORDER.index(a), STATE_ORDER.index(b)])

    def departures(self, state: ConnState) -> int:
        return int(self.counts[STATE_ORDER.index(state)].sum())

    def nonzero(self) -> dict[tuple[str, str], int]:
        return {(STATE_ORDER[i].value, STATE_ORDER[j].value): int(self.counts[i, j])
                for i, j in zip(*np.nonzero(self.counts))}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["from"] + [s.value for s in STATE_ORDER])
        for s, row in zip(STATE_ORDER, self.counts):
            w.writerow([s.value] + row.tolist())
        return buf.getvalue()


def transition_matrix(traces: Iterable[TransitionTrace]) -> TransitionMatrix:
    index = {s: i for i, s in enumerate(STATE_ORDER)}
    m = np.zeros((len(STATE_ORDER), len(STATE_ORDER)), dtype=np.int64)
    for tr in traces:
        for t in tr.transitions:
            m[index[t.src], index[t.dst]] += 1
    return TransitionMatrix(m)


# --------------------------------------------------------------------------
# RIG and Kendall


class DegenerateTargetWarning(UserWarning):
    pass


def _entropy(counts: np.ndarray) -> float:
    c = counts[counts > 0].astype(float)
    p = c / c.sum()
    return float(-np.sum(p * np.log(p)))


def relative_information_gain(x: Sequence[Hashable], y: Sequence[Hashable], spec_x: BinSpec, spec_y: BinSpec) -> float:
    """``(H(Y) - H(Y|X)) / H(Y)`` on the binned joint histogram.

    Returns 0 (and logs a warning) when ``y`` falls into a single bin.
    """
    if len(x) != len(y):
        raise ValueError(f"x and y differ in length ({len(x)} vs {len(y)})")
    if len(x) == 0:
        raise EmptyInputError("RIG of an empty sample")
    cx = bin_codes(x, spec_x)
    cy = bin_codes(y, spec_y)
    hy = _entropy(np.bincount(cy))
    if hy == 0.0:
        log.warning("RIG: target falls into a single bin, H(Y) = 0; reporting 0")
        return 0.0
    joint = cx * (int(cy.max()) + 1) + cy
    hxy = _entropy(np.unique(joint, return_counts=True)[1])
    hx = _entropy(np.bincount(cx))
    rig = (hy - (hxy - hx)) / hy
    return min(1.0, max(0.0, rig))


def kendall_on_binned_means(x: Sequence[float], y: Sequence[float], spec_x: BinSpec) -> float:
    """Kendall tau-b between bin keys and per-bin means of ``y``.

    A flat mean curve (all means tied) has no defined rank correlation and
    is reported as 0. Bin keys are unique, so only the means can tie.
    """
    series = binned_mean_curve(x, y, spec_x)
    m = len(series.bins)
    if m < 2:
        raise EmptyInputError(f"Kendall needs at least 2 non-empty bins, got {m}")
    means = np.asarray(series.means)
    keys = np.asarray(series.keys, dtype=float)
    iu = np.triu_indices(m, 1)
    dk = np.sign(keys[:, None] - keys[None, :])[iu]
    dm = np.sign(means[:, None] - means[None, :])[iu]
    n0 = m * (m - 1) // 2
    tied = int(np.count_nonzero(dm == 0))
    if tied == n0:
        return 0.0
    # one sqrt of the exact integer product keeps strictly monotone curves at exactly +-1
    return float(np.sum(dk * dm)) / math.sqrt(n0 * (n0 - tied))


@dataclass(frozen=True)
class FeatureCorrelation:
    rig: float
    kendall: float | None  # None for categorical features


@dataclass(frozen=True)
class CorrelationReport:
    n: int
    features: dict[str, FeatureCorrelation]

    def to_dict(self) -> dict[str, Any]:
        return {"n": self.n, "features": {k: {"rig": v.rig, "kendall": v.kendall} for k, v in self.features.items()}}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "rig", "kendall"])
        for k, v in self.features.items():
            w.writerow([k, repr(v.rig), "" if v.kendall is None else repr(v.kendall)])
        return buf.getvalue()


CORRELATION_FEATURES: dict[str, BinSpec] = {
    "device_model": CATEGORY_BINS,
    "ap_model": CATEGORY_BINS,
    "rssi_dbm": RSSI_BINS,
    "num_devices": DEVICES_BINS,
    "hour_of_day": HOUR_BINS,
}


def correlation_report(attempts: Iterable[ConnectionAttempt], y_spec: BinSpec = TIME_BINS) -> CorrelationReport:
    ok = [a for a in attempts if a.outcome is Outcome.SUCCESS]
    if not ok:
        raise EmptyInputError("no Success attempts")
    y = [a.connection_time_ms for a in ok]
    out = {}
    for name, spec in CORRELATION_FEATURES.items():
        x = [getattr(a, name) for a in ok]
        rig = relative_information_gain(x, y, spec, y_spec)
        tau = None if spec.categorical else kendall_on_binned_means(x, y, spec)
        out[name] = FeatureCorrelation(rig, tau)
    return CorrelationReport(len(ok), out)


# --------------------------------------------------------------------------
# group comparison

GROUP_KEYS = ("band", "is_public", "device_model", "ap_model", "hour_of_day", "user_id")


@dataclass(frozen=True)
class GroupStats:
    n: int
    n_success: int
    failure_rate: float
    min_ms: int | None
    p25_ms: int | None
    p75_ms: int | None
    p90_ms: int | None
    cdf: EmpiricalCdf | None = field(default=None, compare=False, repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {k: getattr(self, k) for k in ("n", "n_success", "failure_rate", "min_ms", "p25_ms", "p75_ms", "p90_ms")}


@dataclass(frozen=True)
class GroupReport:
    key: str
    within: str | None
    groups: dict[Hashable, GroupStats]
    excluded: int

    def to_dict(self) -> dict[str, Any]:
        return {"key": self.key, "within": self.within, "excluded": self.excluded,
                "groups": [{"group": _jsonable(g), **s.to_dict()} for g, s in self.groups.items()]}


def _jsonable(g: Hashable) -> Any:
    if isinstance(g, tuple):
        return [_jsonable(v) for v in g]
    return g.value if isinstance(g, Enum) else g


def group_compare(attempts: Iterable[ConnectionAttempt], key: str, within: str | None = None) -> GroupReport:
    """Per-group failure rate and time-cost quantiles.

    ``failure_rate`` is the share of the group's attempts that did not
    succeed. With ``within`` (for example ``"hour_of_day"``) groups are
    ``(key value, within value)`` pairs. Attempts lacking the key are
    excluded and counted.
    """
    for k in (key, within):
        if k is not None and k not in GROUP_KEYS:
            raise ValueError(f"unknown group key {k!r}; choose from {', '.join(GROUP_KEYS)}")
    groups: dict[Hashable, list[ConnectionAttempt]] = {}
    excluded = 0
    for a in attempts:
        g = getattr(a, key)
        if g is None:
            excluded += 1
            continue
        if within is not None:
            g = (g, getattr(a, within))
        groups.setdefault(g, []).append(a)
    out = {}
    for g in sorted(groups, key=lambda v: str(_jsonable(v))):
        rows = groups[g]
        times = success_times(rows)
        if times:
            q = [nearest_rank(times, p) for p in (0.0, 0.25, 0.75, 0.9)]
            cdf = EmpiricalCdf.of(times)
        else:
            q, cdf = [None] * 4, None
        out[g] = GroupStats(len(rows), len(times), 1 - len(times) / len(rows), *q, cdf=cdf)
    return GroupReport(key, within, out, excluded)


# --------------------------------------------------------------------------
# report bundle


def measurement_report(attempts: Sequence[ConnectionAttempt], traces: Iterable[TransitionTrace] | None = None) -> dict[str, Any]:
    """Everything the analyze command writes as JSON, computed in one pass per statistic."""
    props = outcome_proportions(attempts)
    willing_fail = sum(v for o, v in props.items() if o.willing and o is not Outcome.SUCCESS)
    out: dict[str, Any] = {
        "n_attempts": len(attempts),
        "outcome_proportions": {o.value: v for o, v in props.items()},
        "willing_failure_rate": willing_fail,
    }
    times = success_times(attempts)
    if times:
        cdf = EmpiricalCdf.of(times)
        out["success_time"] = {
            "n": cdf.n,
            "share_le_5s": cdf(5000),
            "share_gt_15s": 1 - cdf(15000),
            "quantiles": {str(q): nearest_rank(times, q) for q in DEFAULT_QUANTILES},
        }
        pb = phase_proportion_cdfs(attempts)
        out["phase_shares"] = {
            "skipped": pb.skipped,
            "classes": {c.value: {"n": pb.counts[c],
                                  "mean": {ph: pb.mean_share(c, ph) for ph in PHASES}}
                        for c in pb.cdfs},
        }
        scan = {}
        for c in TimeCostClass:
            try:
                qt = scan_time_quantiles(attempts, c)
            except EmptyInputError:
                continue
            scan[c.value] = {"n": qt.n, "quantiles": {str(q): v for q, v in qt.table().items()}}
        out["scan_time_quantiles"] = scan
        try:
            out["correlation"] = correlation_report(attempts).to_dict()
        except EmptyInputError as exc:
            out["correlation"] = {"error": str(exc)}
    if traces is not None:
        tm = transition_matrix(traces)
        out["transitions"] = [{"from": a, "to": b, "count": c} for (a, b), c in tm.nonzero().items()]
    return out
