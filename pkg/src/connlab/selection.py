"""AP selection and what-if replay.

The ML policy classifies every visible AP as FAST or SLOW and joins the
strongest FAST one. When no candidate is FAST it falls back to the plain
strongest-signal choice. Ties on RSSI go to the smaller candidate id in both
policies.

Replay splits the candidate-set corpus in two by seed. The first half plays
the role of the historical log: one candidate per event (picked uniformly,
standing in for the AP the user actually joined) becomes a labelled training
row. The second half is replayed, and each policy is scored by the ground
truth of the candidate it picks. Failures count as the full 30 s timeout.
"""

from __future__ import annotations

import json
from collections.abc import Callable, Iterable, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, NamedTuple, TextIO, Union

import numpy as np

from connlab.analytics import nearest_rank
from connlab.features import (
    FAST_SLOW_THRESHOLD_MS,
    encode_matrix,
    fit_encoders,
    label,
    label_vector,
    scored_time,
)
from connlab.forest import ForestModel, ForestParams, MetricsReport, metrics, train
from connlab.schema import Outcome

# a trained forest, or any callable mapping (feature rows, candidates) to SLOW flags
Classifier = Union[ForestModel, Callable[[Sequence["FeatureRow"], Sequence["Candidate"]], Sequence[int]]]


@dataclass(frozen=True, slots=True)
class Candidate:
    id: str
    ap_model: str
    rssi_dbm: int
    encrypted: bool
    outcome: Outcome | None = None
    connection_time_ms: int | None = None

    @property
    def has_truth(self) -> bool:
        return self.outcome is not None

    @property
    def time_cost_ms(self) -> int:
        return scored_time(self.outcome, self.connection_time_ms)

    @property
    def failed(self) -> bool:
        return self.outcome is not Outcome.SUCCESS

    def to_record(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "ap_model": self.ap_model,
            "rssi_dbm": self.rssi_dbm,
            "encrypted": self.encrypted,
            "outcome": None if self.outcome is None else self.outcome.value,
            "connection_time_ms": self.connection_time_ms,
        }

    @classmethod
    def from_record(cls, r: dict[str, Any]) -> Candidate:
        outcome = r.get("outcome")
        return cls(str(r["id"]), str(r["ap_model"]), int(r["rssi_dbm"]), bool(r["encrypted"]),
                   None if outcome is None else Outcome(outcome), r.get("connection_time_ms"))


class FeatureRow(NamedTuple):
    hour_of_day: int
    rssi_dbm: int
    device_model: str
    ap_model: str
    encrypted: bool


@dataclass(frozen=True)
class CandidateSet:
    event_id: str
    hour_of_day: int
    device_model: str
    candidates: tuple[Candidate, ...]
    user_id: str | None = None

    def __post_init__(self) -> None:
        if not self.candidates:
            raise ValueError(f"event {self.event_id}: empty candidate list")
        ids = [c.id for c in self.candidates]
        if len(set(ids)) != len(ids):
            raise ValueError(f"event {self.event_id}: duplicate candidate ids")

    @property
    def has_truth(self) -> bool:
        return all(c.has_truth for c in self.candidates)

    def rows(self) -> list[FeatureRow]:
        return [FeatureRow(self.hour_of_day, c.rssi_dbm, self.device_model, c.ap_model, c.encrypted)
                for c in self.candidates]

    def to_record(self) -> dict[str, Any]:
        return {
            "event_id": self.event_id,
            "hour_of_day": self.hour_of_day,
            "device_model": self.device_model,
            "user_id": self.user_id,
            "candidates": [c.to_record() for c in self.candidates],
        }

    @classmethod
    def from_record(cls, r: dict[str, Any]) -> CandidateSet:
        return cls(str(r["event_id"]), int(r["hour_of_day"]), str(r["device_model"]),
                   tuple(Candidate.from_record(c) for c in r["candidates"]), r.get("user_id"))


def write_candidate_sets(path: str | Path, sets: Iterable[CandidateSet]) -> None:
    with open(path, "w") as fh:
        for cs in sets:
            fh.write(json.dumps(cs.to_record(), separators=(",", ":")) + "\n")


def read_candidate_sets(src: str | Path | TextIO) -> list[CandidateSet]:
    fh = open(src) if isinstance(src, (str, Path)) else src
    out = []
    try:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(CandidateSet.from_record(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
    finally:
        if fh is not src:
            fh.close()
    return out


# --------------------------------------------------------------------------
# policies


@dataclass(frozen=True)
class SelectionDecision:
    event_id: str
    chosen: str
    fast: tuple[str, ...] = ()
    slow: tuple[str, ...] = ()
    fallback_used: bool = False

    def to_record(self) -> dict[str, Any]:
        return {"event_id": self.event_id, "chosen": self.chosen, "fast": list(self.fast),
                "slow": list(self.slow), "fallback_used": self.fallback_used}


def strongest(cands: Iterable[Candidate]) -> Candidate:
    return min(cands, key=lambda c: (-c.rssi_dbm, c.id))


def select_baseline(cs: CandidateSet) -> SelectionDecision:
    return SelectionDecision(cs.event_id, strongest(cs.candidates).id)


def decide(cs: CandidateSet, slow_flags: Sequence[int]) -> SelectionDecision:
    """ML decision for one set given its per-candidate SLOW flags."""
    fast = [c for c, s in zip(cs.candidates, slow_flags) if not s]
    slow = [c for c, s in zip(cs.candidates, slow_flags) if s]
    chosen = strongest(fast or cs.candidates)
    return SelectionDecision(cs.event_id, chosen.id, tuple(c.id for c in fast),
                             tuple(c.id for c in slow), not fast)


def classify(model: Classifier, sets: Sequence[CandidateSet], threshold: float = 0.5) -> np.ndarray:
    """SLOW flag (1) for every candidate of every set, flattened in order."""
    rows = [r for cs in sets for r in cs.rows()]
    if not rows:
        return np.zeros(0, dtype=np.int8)
    if isinstance(model, ForestModel):
        if model.encoders is None:
            raise ValueError("model carries no category encoders")
        return model.predict_many(encode_matrix(rows, model.encoders), threshold)
    return np.asarray(model(rows, [c for cs in sets for c in cs.candidates]), dtype=np.int8)


def select_ml_many(model: Classifier, sets: Sequence[CandidateSet], threshold: float = 0.5) -> list[SelectionDecision]:
    flags = classify(model, sets, threshold)
    out, k = [], 0
    for cs in sets:
        n = len(cs.candidates)
        out.append(decide(cs, flags[k:k + n]))
        k += n
    return out


def select_ml(model: Classifier, cs: CandidateSet, threshold: float = 0.5) -> SelectionDecision:
    return select_ml_many(model, [cs], threshold)[0]


def poa(decisions: Iterable[SelectionDecision]) -> float:
    """Share of classified candidates that were put in the FAST set."""
    n_fast = n_all = 0
    for d in decisions:
        n_fast += len(d.fast)
        n_all += len(d.fast) + len(d.slow)
    if n_all == 0:
        raise ValueError("no classified candidates")
    return n_fast / n_all


# --------------------------------------------------------------------------
# replay


def split_events(sets: Sequence[CandidateSet], seed: int) -> tuple[list[CandidateSet], list[CandidateSet]]:
    """Deterministic 50/50 partition (tuning half, replay half)."""
    perm = np.random.default_rng([seed, 0x5E1]).permutation(len(sets))
    half = len(sets) // 2
    first = sorted(perm[:half].tolist())
    second = sorted(perm[half:].tolist())
    return [sets[i] for i in first], [sets[i] for i in second]


def logged_rows(sets: Sequence[CandidateSet], seed: int) -> tuple[list[FeatureRow], list[Candidate]]:
    """One uniformly picked candidate per event, as a connection log would record it."""
    rng = np.random.default_rng([seed, 0x106])
    picks = rng.integers(0, [len(cs.candidates) for cs in sets]) if sets else []
    rows, truth = [], []
    for cs, j in zip(sets, picks):
        rows.append(cs.rows()[j])
        truth.append(cs.candidates[j])
    return rows, truth


@dataclass
class TrainedSelector:
    model: ForestModel
    validation: MetricsReport | None
    n_train: int
    n_validation: int


def train_selector(
    sets: Sequence[CandidateSet],
    params: ForestParams = ForestParams(),
    seed: int = 0,
    validation_fraction: float = 0.2,
    threshold_ms: int = FAST_SLOW_THRESHOLD_MS,
) -> TrainedSelector:
    rows, truth = logged_rows(sets, seed)
    y = label_vector(truth, threshold_ms)
    perm = np.random.default_rng([seed, 0x7A1]).permutation(len(rows))
    n_val = int(round(validation_fraction * len(rows)))
    val_idx, tr_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    tr_rows = [rows[i] for i in tr_idx]
    enc = fit_encoders(tr_rows)
    model = train(encode_matrix(tr_rows, enc), y[tr_idx], params, enc)
    val = None
    if n_val:
        val_rows = [rows[i] for i in val_idx]
        val = metrics(y[val_idx], model.predict_many(encode_matrix(val_rows, enc)))
    return TrainedSelector(model, val, len(tr_idx), n_val)


@dataclass(frozen=True)
class PolicyStats:
    failure_rate: float
    p80_ms: int
    mean_ms: float
    quantiles_ms: dict[str, int]
    poa: float | None = None
    fallback_rate: float | None = None


_QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.8, 0.9, 0.95, 0.99, 1.0)


def policy_stats(chosen: Sequence[Candidate], decisions: Sequence[SelectionDecision] | None = None) -> PolicyStats:
    times = [c.time_cost_ms for c in chosen]
    fails = sum(c.failed for c in chosen)
    q = {f"p{round(100 * p)}": nearest_rank(times, p) for p in _QUANTILES}
    extra = {}
    if decisions is not None:
        extra = {"poa": poa(decisions), "fallback_rate": sum(d.fallback_used for d in decisions) / len(decisions)}
    return PolicyStats(fails / len(chosen), nearest_rank(times, 0.8), float(np.mean(times)), q, **extra)


@dataclass
class EvalReport:
    n_events: int
    n_excluded: int
    n_tuning: int
    n_replay: int
    threshold: float
    baseline: PolicyStats
    ml: PolicyStats
    validation: MetricsReport | None = None
    candidate_metrics: MetricsReport | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["p80_reduction"] = self.baseline.p80_ms / self.ml.p80_ms if self.ml.p80_ms else None
        d["failure_reduction"] = (self.baseline.failure_rate / self.ml.failure_rate
                                  if self.ml.failure_rate else None)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def replay(model: Classifier, sets: Sequence[CandidateSet], threshold: float = 0.5,
           threshold_ms: int = FAST_SLOW_THRESHOLD_MS) -> tuple[PolicyStats, PolicyStats, MetricsReport | None]:
    """Baseline stats, ML stats and candidate-level classification metrics on ``sets``."""
    if not sets:
        raise ValueError("nothing to replay")
    flags = classify(model, sets, threshold)
    decisions, base_pick, ml_pick = [], [], []
    k = 0
    for cs in sets:
        n = len(cs.candidates)
        d = decide(cs, flags[k:k + n])
        k += n
        by_id = {c.id: c for c in cs.candidates}
        decisions.append(d)
        ml_pick.append(by_id[d.chosen])
        base_pick.append(strongest(cs.candidates))
    truth = label_vector([c for cs in sets for c in cs.candidates], threshold_ms)
    return policy_stats(base_pick), policy_stats(ml_pick, decisions), metrics(truth, flags)


def what_if_eval(
    sets: Sequence[CandidateSet],
    params: ForestParams = ForestParams(),
    split_seed: int = 0,
    *,
    threshold: float = 0.5,
    threshold_ms: int = FAST_SLOW_THRESHOLD_MS,
    classifier: Classifier | None = None,
) -> tuple[EvalReport, ForestModel | None]:
    """Train on one half (unless ``classifier`` is given) and replay both policies on the other."""
    usable = [cs for cs in sets if cs.has_truth]
    excluded = len(sets) - len(usable)
    tune, test = split_events(usable, split_seed)
    notes = []
    if excluded:
        notes.append(f"{excluded} candidate sets without ground truth excluded")
    model, validation = None, None
    if classifier is None:
        sel = train_selector(tune, params, split_seed, threshold_ms=threshold_ms)
        model, validation, classifier = sel.model, sel.validation, sel.model
    base, ml, cand = replay(classifier, test, threshold, threshold_ms)
    report = EvalReport(len(sets), excluded, len(tune), len(test), threshold, base, ml, validation, cand, notes)
    return report, model


@dataclass(frozen=True)
class FrontierPoint:
    threshold: float
    recall_slow: float | None
    precision_slow: float | None
    recall_fast: float | None
    precision_fast: float | None
    poa: float


def poa_frontier(model: ForestModel, sets: Sequence[CandidateSet], thresholds: Sequence[float],
                 threshold_ms: int = FAST_SLOW_THRESHOLD_MS) -> list[FrontierPoint]:
    """Candidate-level SLOW recall and PoA for each decision threshold."""
    rows = [r for cs in sets for r in cs.rows()]
    truth = label_vector([c for cs in sets for c in cs.candidates], threshold_ms)
    scores = model.scores(encode_matrix(rows, model.encoders))
    out = []
    for t in thresholds:
        pred = (scores >= t).astype(np.int8)
        m = metrics(truth, pred)
        out.append(FrontierPoint(float(t), m.recall["SLOW"], m.precision["SLOW"],
                                 m.recall["FAST"], m.precision["FAST"], float(np.mean(pred == 0))))
    return out


def oracle_classifier(threshold_ms: int = FAST_SLOW_THRESHOLD_MS) -> Callable:
    """Classifier that reads each candidate's true label."""

    def predict(rows: Sequence[FeatureRow], cands: Sequence[Candidate]) -> list[int]:
        return [label(c, threshold_ms).code for c in cands]

    return predict
