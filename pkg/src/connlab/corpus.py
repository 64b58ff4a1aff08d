"""Synthetic connection-log and candidate-set corpora.

A corpus is a mixture of scenario templates (loss probabilities plus phase
latencies) run through the state machine. Each attempt also draws a full
log context (user, device, AP, hour, RSSI, ...). Categories carry latency
and loss multipliers, so context fields are correlated with the outcome the
way the downstream analytics expect.

Loss multipliers act on the hazard: a base probability ``p`` becomes
``1 - (1 - p) ** m``, which stays inside [0, 1] for any ``m >= 0``.

Attempt ``i`` of a corpus seeded with ``s`` draws everything from
``substream(s, "log", i)``; candidate ``j`` of event ``i`` uses
``substream(s, "cand", i, j)``. Output therefore does not depend on the
order in which attempts are generated.
"""

from __future__ import annotations

import json
import logging
import math
import random
from bisect import bisect
from dataclasses import asdict, dataclass, field, replace
from itertools import accumulate
from pathlib import Path
from statistics import NormalDist
from typing import Any

import numpy as np
from scipy.optimize import nnls

from connlab.schema import TIMEOUT_MS, Band, ConnectionAttempt, Outcome
from connlab.sim import (
    EapParams,
    Latency,
    ScenarioConfig,
    TransitionTrace,
    simulate,
    substream,
)

log = logging.getLogger(__name__)

UNWILLING = (
    Outcome.WRONG_PASSWORD,
    Outcome.SWITCHED_TO_ANOTHER_WIFI,
    Outcome.FORGOT_WIFI,
    Outcome.SWITCHED_OFF_WIFI,
    Outcome.UNKNOWN,
)


@dataclass(frozen=True)
class Template:
    """A named scenario shape. Encryption, EAP and timeout come from the attempt context."""

    name: str
    weight: float
    scenario: ScenarioConfig

    def to_dict(self) -> dict[str, Any]:
        sc = self.scenario.to_dict()
        keep = ("p_loss_probe", "p_loss_assoc", "p_loss_auth", "p_loss_dhcp", "phase_latency")
        return {"name": self.name, "weight": self.weight, "scenario": {k: sc[k] for k in keep}}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Template:
        return cls(d["name"], float(d["weight"]), ScenarioConfig.from_dict(d["scenario"]))


@dataclass(frozen=True)
class UniverseSpec:
    """A categorical universe whose members get random multipliers.

    Member ``k`` is named ``f"{prefix}{k:04d}"``. Popularity follows a Zipf
    law with exponent ``zipf``; latency and loss multipliers are log-normal
    with the given sigmas. A ``bad_fraction`` of members additionally has
    its loss multiplier scaled by ``bad_loss``. With ``stratified`` the
    latency multipliers sit on evenly spaced normal quantiles (in random
    order) instead of being drawn, so the spread does not depend on the seed.
    """

    prefix: str
    size: int
    zipf: float = 0.0
    latency_sigma: float = 0.0
    loss_sigma: float = 0.0
    bad_fraction: float = 0.0
    bad_loss: float = 1.0
    stratified: bool = False

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError(f"universe {self.prefix!r} must be non-empty")


@dataclass(frozen=True)
class Category:
    name: str
    latency: float = 1.0
    loss: float = 1.0
    bad: bool = False
    public_propensity: float = 0.5
    encrypted_prob: float = 1.0
    enterprise: bool = False


DEFAULT_TOLERANCE = {
    "success_rate": 0.01,
    "willing_failure_rate": 0.01,
    "success_under_5s": 0.01,
    "success_over_15s": 0.005,
    "slow_scan_share": 0.03,
}

TARGET_NAMES = (
    "success_rate",
    "willing_failure_rate",
    "success_under_5s",
    "success_over_15s",
    "slow_scan_share",
)


@dataclass(frozen=True)
class CorpusConfig:
    n_attempts: int = 10_000
    templates: tuple[Template, ...] = ()
    devices: UniverseSpec = UniverseSpec("dev", 40)
    aps: UniverseSpec = UniverseSpec("ap", 200)
    users: UniverseSpec = UniverseSpec("user", 2000, zipf=1.0)
    # context distributions
    rssi_mean: float = -72.0
    rssi_sd: float = 10.0
    rssi_floor: int = -100
    num_devices_median: float = 8.0
    num_devices_sigma: float = 1.0
    band_5ghz_prob: float = 0.3
    band_missing_prob: float = 0.2
    public_label_prob: float = 0.5
    public_only_fraction: float = 0.27
    private_only_fraction: float = 0.32
    encrypted_prob: float = 0.85
    enterprise_fraction: float = 0.05
    eap: EapParams = EapParams(4, 5.0, 20.0)
    # effects
    rssi_latency_slope: float = 0.02
    rssi_loss_slope: float = 0.04
    hour_latency_amplitude: float = 0.03
    device_capacity: int = 100
    overload_latency_slope: float = 0.3
    public_latency: float = 1.3
    public_loss: float = 1.5
    band_5ghz_latency: float = 0.9
    # outcomes the state machine does not produce
    unwilling_rate: float = 0.211
    unwilling_weights: tuple[float, ...] = (0.25, 0.35, 0.1, 0.15, 0.15)
    timeout_ms: int = TIMEOUT_MS
    targets: dict[str, float] = field(default_factory=dict)
    tolerance: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCE))
    calibrate: bool = True
    pilot_size: int = 15000
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.n_attempts < 0:
            raise ValueError("n_attempts must be non-negative")
        if not self.templates:
            raise ValueError("at least one template is required")
        total = sum(t.weight for t in self.templates)
        if not math.isclose(total, 1.0, abs_tol=1e-9):
            raise ValueError(f"template weights must sum to 1, got {total}")
        if any(t.weight < 0 for t in self.templates):
            raise ValueError("template weights must be non-negative")
        if not 0.0 <= self.unwilling_rate < 1.0:
            raise ValueError("unwilling_rate must lie in [0, 1)")
        unknown = set(self.targets) - set(TARGET_NAMES)
        if unknown:
            raise ValueError(f"unknown calibration targets {sorted(unknown)}")

    # -- JSON ------------------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["templates"] = [t.to_dict() for t in self.templates]
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> CorpusConfig:
        d = dict(d)
        if "templates" in d:
            d["templates"] = tuple(Template.from_dict(t) for t in d["templates"])
        for key in ("devices", "aps", "users"):
            if key in d:
                d[key] = UniverseSpec(**d[key])
        if "eap" in d:
            d["eap"] = EapParams(**d["eap"])
        if "unwilling_weights" in d:
            d["unwilling_weights"] = tuple(d["unwilling_weights"])
        return cls(**d)




# --------------------------------------------------------------------------
# universes


@dataclass(frozen=True)
class Universe:
    members: tuple[Category, ...]
    cum_weights: tuple[float, ...]

    def pick(self, rng: random.Random) -> Category:
        return self.members[bisect(self.cum_weights, rng.random() * self.cum_weights[-1])]

    def __len__(self) -> int:
        return len(self.members)


def build_universe(spec: UniverseSpec, rng: random.Random, cfg: CorpusConfig | None = None) -> Universe:
    members = []
    n_bad = round(spec.bad_fraction * spec.size)
    bad = set(rng.sample(range(spec.size), n_bad)) if n_bad else set()
    strata = None
    if spec.stratified and spec.latency_sigma:
        z = NormalDist()
        strata = [math.exp(spec.latency_sigma * z.inv_cdf((k + 0.5) / spec.size)) for k in range(spec.size)]
        rng.shuffle(strata)
    for k in range(spec.size):
        if strata is not None:
            lat = strata[k]
        else:
            lat = math.exp(rng.gauss(0.0, spec.latency_sigma)) if spec.latency_sigma else 1.0
        loss = math.exp(rng.gauss(0.0, spec.loss_sigma)) if spec.loss_sigma else 1.0
        if k in bad:
            loss *= spec.bad_loss
        extra: dict[str, Any] = {}
        if cfg is not None:
            # AP-only attributes: deployment (public/private) and security
            u = rng.random()
            if u < cfg.public_only_fraction:
                prop = 1.0
            elif u < cfg.public_only_fraction + cfg.private_only_fraction:
                prop = 0.0
            else:
                prop = rng.uniform(0.2, 0.8)
            extra = {
                "public_propensity": prop,
                "encrypted_prob": cfg.encrypted_prob,
                "enterprise": rng.random() < cfg.enterprise_fraction,
            }
        members.append(Category(f"{spec.prefix}{k:04d}", lat, loss, k in bad, **extra))
    weights = [1.0 / (k + 1) ** spec.zipf for k in range(spec.size)]
    return Universe(tuple(members), tuple(accumulate(weights)))


@dataclass(frozen=True)
class World:
    devices: Universe
    aps: Universe
    users: Universe

    @classmethod
    def build(cls, cfg: CorpusConfig) -> World:
        rng = substream(cfg.rng_seed, "universe")
        return cls(
            build_universe(cfg.devices, rng),
            build_universe(cfg.aps, rng, cfg),
            build_universe(cfg.users, rng),
        )


# --------------------------------------------------------------------------
# per-attempt sampling


def _hazard(p: float, m: float) -> float:
    if p <= 0.0 or p >= 1.0 or m == 1.0:
        return p
    return 1.0 - (1.0 - p) ** m


def _sample_rssi(cfg: CorpusConfig, rng: random.Random) -> int:
    r = round(rng.gauss(cfg.rssi_mean, cfg.rssi_sd))
    return min(-55, max(cfg.rssi_floor, r))


def _sample_num_devices(cfg: CorpusConfig, rng: random.Random) -> int:
    return int(cfg.num_devices_median * math.exp(cfg.num_devices_sigma * rng.gauss(0.0, 1.0)))


def _sample_hour(rng: random.Random) -> int:
    # mild daytime bias
    while True:
        h = rng.randrange(24)
        if rng.random() < 0.75 + 0.25 * math.sin(math.pi * (h - 6) / 24) ** 2:
            return h


# protocol timers are not slowed down by the device, AP or radio conditions
_TIMERS = frozenset({"dhcp_retry", "reconnect"})


def _scenario(
    cfg: CorpusConfig,
    template: Template,
    *,
    device: Category,
    ap: Category,
    user: Category,
    rssi: int,
    hour: int,
    num_devices: int,
    encrypted: bool,
    is_public: bool,
    band: Band | None,
) -> ScenarioConfig:
    below = -55 - rssi
    lat = device.latency * ap.latency * math.exp(cfg.rssi_latency_slope * below)
    lat *= 1.0 + cfg.hour_latency_amplitude * math.sin(2 * math.pi * (hour - 9) / 24)
    if num_devices > cfg.device_capacity:
        lat *= 1.0 + cfg.overload_latency_slope * (num_devices - cfg.device_capacity) / cfg.device_capacity
    loss = device.loss * ap.loss * user.loss * math.exp(cfg.rssi_loss_slope * below)
    if is_public:
        lat *= cfg.public_latency
        loss *= cfg.public_loss
    if band is Band.GHZ_5:
        lat *= cfg.band_5ghz_latency
    sc = template.scenario
    return ScenarioConfig(
        p_loss_probe=_hazard(sc.p_loss_probe, loss),
        p_loss_assoc=_hazard(sc.p_loss_assoc, loss),
        p_loss_auth=_hazard(sc.p_loss_auth, loss),
        p_loss_dhcp=_hazard(sc.p_loss_dhcp, loss),
        phase_latency={k: v if k in _TIMERS else v.scaled(lat) for k, v in sc.phase_latency.items()},
        encrypted=encrypted,
        enterprise=cfg.eap if (encrypted and ap.enterprise) else None,
        timeout_ms=cfg.timeout_ms,
    )


def _pick_template(templates: tuple[Template, ...], cum: list[float], rng: random.Random) -> Template:
    return templates[min(bisect(cum, rng.random() * cum[-1]), len(templates) - 1)]


def _attempt(
    cfg: CorpusConfig,
    world: World,
    templates: tuple[Template, ...],
    cum: list[float],
    rng: random.Random,
    attempt_id: str,
    *,
    force_willing: bool = False,
) -> tuple[ConnectionAttempt, TransitionTrace | None]:
    user = world.users.pick(rng)
    device = world.devices.pick(rng)
    ap = world.aps.pick(rng)
    hour = _sample_hour(rng)
    rssi = _sample_rssi(cfg, rng)
    num_devices = _sample_num_devices(cfg, rng)
    encrypted = rng.random() < ap.encrypted_prob
    public = rng.random() < ap.public_propensity
    labeled = rng.random() < cfg.public_label_prob
    u = rng.random()
    band = None if u < cfg.band_missing_prob else (
        Band.GHZ_5 if rng.random() < cfg.band_5ghz_prob else Band.GHZ_2_4
    )
    ctx = dict(
        attempt_id=attempt_id,
        user_id=user.name,
        hour_of_day=hour,
        rssi_dbm=rssi,
        num_devices=num_devices,
        device_model=device.name,
        ap_model=ap.name,
        encrypted=encrypted,
        is_public=public if labeled else None,
        band=band,
    )
    if not force_willing and rng.random() < cfg.unwilling_rate:
        outcome = rng.choices(UNWILLING, weights=cfg.unwilling_weights)[0]
        return ConnectionAttempt(outcome=outcome, **ctx), None
    template = _pick_template(templates, cum, rng)
    sc = _scenario(cfg, template, device=device, ap=ap, user=user, rssi=rssi, hour=hour,
                   num_devices=num_devices, encrypted=encrypted, is_public=public, band=band)
    res = simulate(sc, attempt_id, rng)
    ok = res.outcome is Outcome.SUCCESS
    attempt = ConnectionAttempt(
        outcome=res.outcome,
        connection_time_ms=res.elapsed_ms if ok else None,
        phases=res.phases if ok else None,
        **ctx,
    )
    return attempt, res.trace


# --------------------------------------------------------------------------
# calibration


@dataclass
class CalibrationReport:
    targets: dict[str, float] = field(default_factory=dict)
    achieved: dict[str, float] = field(default_factory=dict)
    tolerance: dict[str, float] = field(default_factory=dict)
    weights: dict[str, float] = field(default_factory=dict)
    fitted: bool = False
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def marginals(attempts: list[ConnectionAttempt]) -> dict[str, float]:
    """The calibration statistics measured on a corpus."""
    n = len(attempts)
    if n == 0:
        return {}
    times = [a.connection_time_ms for a in attempts if a.success]
    fails = sum(1 for a in attempts if a.outcome in (Outcome.TIMEOUT, Outcome.DHCP_FAILURE))
    out = {"success_rate": len(times) / n, "willing_failure_rate": fails / n}
    if times:
        out["success_under_5s"] = sum(1 for t in times if t < 5000) / len(times)
        slow = [a for a in attempts if a.success and a.connection_time_ms > 15000]
        out["success_over_15s"] = len(slow) / len(times)
        if slow and all(a.phases is not None for a in slow):
            out["slow_scan_share"] = sum(a.phases.scan_ms / a.connection_time_ms for a in slow) / len(slow)
    return out


def _pilot_stats(cfg: CorpusConfig, world: World, k: int, tpl: Template) -> dict[str, float]:
    """Joint fractions for one template run alone on willing attempts."""
    att = [
        _attempt(cfg, world, (tpl,), [1.0], substream(cfg.rng_seed, "pilot", k, i), f"p{k}-{i}", force_willing=True)[0]
        for i in range(cfg.pilot_size)
    ]
    n = len(att)
    times = [a.connection_time_ms for a in att if a.success]
    slow = [a for a in att if a.success and a.connection_time_ms > 15000]
    return {
        "success": len(times) / n,
        "under_5s": sum(1 for x in times if x < 5000) / n,
        "over_15s": len(slow) / n,
        "slow_scan": sum(a.phases.scan_ms / a.connection_time_ms for a in slow) / n,
    }


def _fit_weights(cfg: CorpusConfig, world: World, unwilling: float) -> tuple[list[float], list[str]]:
    """Re-weight templates so the mixture matches the configured targets.

    Each template is run alone on a pilot sample. Every target is either a
    joint fraction (linear in the mixture weights) or a ratio of two such
    fractions, which becomes linear after cross-multiplying. The weights
    therefore solve a small non-negative least-squares problem with a
    heavily weighted sum-to-one row; each row is scaled by its target so a
    3% tail counts as much as the 55% success rate.
    """
    t = cfg.targets
    stats = [_pilot_stats(cfg, world, k, tpl) for k, tpl in enumerate(cfg.templates)]
    s = t["success_rate"] / (1.0 - unwilling)
    names, rows, rhs, scale = ["success_rate"], [[st["success"] for st in stats]], [s], [s]
    if "success_under_5s" in t:
        names.append("success_under_5s")
        rows.append([st["under_5s"] for st in stats])
        rhs.append(t["success_under_5s"] * s)
        scale.append(rhs[-1])
    if "success_over_15s" in t:
        names.append("success_over_15s")
        rows.append([st["over_15s"] for st in stats])
        rhs.append(t["success_over_15s"] * s)
        scale.append(rhs[-1])
        if "slow_scan_share" in t:
            names.append("slow_scan_share")
            rows.append([st["slow_scan"] - t["slow_scan_share"] * st["over_15s"] for st in stats])
            rhs.append(0.0)
            scale.append(rhs[-2])
    m = np.array(rows) / np.array(scale)[:, None]
    a = np.vstack([m, np.full(len(stats), 100.0)])
    b = np.append(np.array(rhs) / np.array(scale), 100.0)
    w, _ = nnls(a, b)
    w = w / w.sum()
    notes = []
    mix = {key: sum(wk * st[key] for wk, st in zip(w, stats)) for key in stats[0]}
    predicted = {
        "success_rate": mix["success"] * (1.0 - unwilling),
        "success_under_5s": mix["under_5s"] / mix["success"] if mix["success"] else 0.0,
        "success_over_15s": mix["over_15s"] / mix["success"] if mix["success"] else 0.0,
        "slow_scan_share": mix["slow_scan"] / mix["over_15s"] if mix["over_15s"] else 0.0,
    }
    for name in names:
        if abs(predicted[name] - t[name]) > cfg.tolerance.get(name, 0.01):
            notes.append(f"template mixture cannot reach {name} (pilot predicts {predicted[name]:.4f})")
    return [float(x) for x in w], notes


@dataclass
class Corpus:
    attempts: list[ConnectionAttempt]
    traces: list[TransitionTrace] | None
    report: CalibrationReport


def resolve_weights(cfg: CorpusConfig, world: World | None = None) -> tuple[tuple[Template, ...], float, CalibrationReport]:
    """Final template mixture and unwilling rate, before any corpus is drawn."""
    report = CalibrationReport(targets=dict(cfg.targets), tolerance={k: cfg.tolerance.get(k, 0.01) for k in cfg.targets})
    unwilling = cfg.unwilling_rate
    t = cfg.targets
    if "success_rate" in t and "willing_failure_rate" in t:
        unwilling = 1.0 - t["success_rate"] - t["willing_failure_rate"]
        if not 0.0 <= unwilling < 1.0:
            raise ValueError("success_rate + willing_failure_rate must lie in (0, 1]")
    templates = cfg.templates
    if cfg.calibrate and "success_rate" in t and len(templates) > 1:
        world = world or World.build(cfg)
        weights, notes = _fit_weights(cfg, world, unwilling)
        templates = tuple(replace(tp, weight=w) for tp, w in zip(templates, weights))
        report.fitted = True
        report.warnings.extend(notes)
    report.weights = {tp.name: tp.weight for tp in templates}
    return templates, unwilling, report


def generate_corpus(cfg: CorpusConfig, *, with_traces: bool = False) -> Corpus:
    """Draw ``cfg.n_attempts`` log records (and optionally their traces).

    A calibration miss beyond ``cfg.tolerance`` is reported as a warning in
    the returned report, never raised.
    """
    if cfg.n_attempts == 0:
        return Corpus([], [] if with_traces else None, CalibrationReport())
    world = World.build(cfg)
    templates, unwilling, report = resolve_weights(cfg, world)
    run_cfg = replace(cfg, unwilling_rate=unwilling)
    cum = list(accumulate(tp.weight for tp in templates))
    attempts = []
    traces: list[TransitionTrace] | None = [] if with_traces else None
    for i in range(cfg.n_attempts):
        rng = substream(cfg.rng_seed, "log", i)
        a, tr = _attempt(run_cfg, world, templates, cum, rng, f"a{i:07d}")
        attempts.append(a)
        if traces is not None and tr is not None:
            traces.append(tr)
    report.achieved = marginals(attempts)
    for name, target in cfg.targets.items():
        got = report.achieved.get(name)
        tol = cfg.tolerance.get(name, 0.01)
        if got is None or abs(got - target) > tol:
            msg = f"{name}: achieved {got} vs target {target} (tolerance {tol})"
            report.warnings.append(msg)
            log.warning("calibration miss: %s", msg)
    return Corpus(attempts, traces, report)


# --------------------------------------------------------------------------
# candidate sets for what-if replay


@dataclass(frozen=True)
class CandidateConfig:
    """Scan events with counterfactual ground truth for every visible AP."""

    n_events: int = 10_000
    min_candidates: int = 2
    max_candidates: int = 8
    corpus: CorpusConfig = field(default_factory=lambda: CorpusConfig(templates=default_templates()))
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not 1 <= self.min_candidates <= self.max_candidates:
            raise ValueError("need 1 <= min_candidates <= max_candidates")

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_events": self.n_events,
            "min_candidates": self.min_candidates,
            "max_candidates": self.max_candidates,
            "corpus": self.corpus.to_dict(),
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> CandidateConfig:
        d = dict(d)
        if "corpus" in d:
            d["corpus"] = CorpusConfig.from_dict(d["corpus"])
        return cls(**d)


def generate_candidate_sets(cfg: CandidateConfig) -> list[Any]:
    """Scan events whose candidates all carry simulated ground truth.

    Context shared by an event (user, device, hour) is drawn once; each
    candidate draws its own AP, RSSI and load and is simulated as a willing
    attempt under the corpus' template mixture.
    """
    from connlab.selection import Candidate, CandidateSet

    ccfg = replace(cfg.corpus, rng_seed=cfg.rng_seed)
    world = World.build(ccfg)
    templates, _, _ = resolve_weights(replace(ccfg, calibrate=False))
    cum = list(accumulate(tp.weight for tp in templates))
    events = []
    for i in range(cfg.n_events):
        rng = substream(cfg.rng_seed, "event", i)
        user = world.users.pick(rng)
        device = world.devices.pick(rng)
        hour = _sample_hour(rng)
        k = rng.randint(cfg.min_candidates, cfg.max_candidates)
        cands = []
        for j in range(k):
            crng = substream(cfg.rng_seed, "cand", i, j)
            ap = world.aps.pick(crng)
            rssi = _sample_rssi(ccfg, crng)
            num_devices = _sample_num_devices(ccfg, crng)
            encrypted = crng.random() < ap.encrypted_prob
            public = crng.random() < ap.public_propensity
            band = Band.GHZ_5 if crng.random() < ccfg.band_5ghz_prob else Band.GHZ_2_4
            tpl = _pick_template(templates, cum, crng)
            sc = _scenario(ccfg, tpl, device=device, ap=ap, user=user, rssi=rssi, hour=hour,
                           num_devices=num_devices, encrypted=encrypted, is_public=public, band=band)
            res = simulate(sc, f"e{i}c{j}", crng)
            cands.append(Candidate(
                id=f"e{i:07d}-c{j}",
                ap_model=ap.name,
                rssi_dbm=rssi,
                encrypted=encrypted,
                outcome=res.outcome,
                connection_time_ms=res.connection_time_ms,
            ))
        events.append(CandidateSet(f"e{i:07d}", hour, device.name, tuple(cands), user_id=user.name))
    return events


# --------------------------------------------------------------------------
# presets


def default_templates() -> tuple[Template, ...]:
    """Template shapes used by the presets (weights are refitted when calibrating)."""

    def lat(scan, dhcp, reconnect, scan_sigma=0.6, dhcp_sigma=0.6):
        return {
            "scan": Latency.lognormal(scan, scan_sigma),
            "assoc": Latency.lognormal(30, 0.4),
            "auth": Latency.lognormal(60, 0.4),
            "dhcp": Latency.lognormal(dhcp, dhcp_sigma),
            "dhcp_retry": Latency.lognormal(3000, 0.3),
            "reconnect": Latency.lognormal(reconnect, 0.5),
        }

    return (
        Template("healthy", 0.55, ScenarioConfig(0.05, 0.01, 0.01, 0.02, lat(80, 1000, 700, scan_sigma=0.9, dhcp_sigma=0.35))),
        Template("congested", 0.1, ScenarioConfig(0.05, 0.02, 0.02, 0.05, lat(250, 3500, 800, dhcp_sigma=0.35))),
        Template("slow_dhcp", 0.05, ScenarioConfig(0.3, 0.02, 0.02, 0.3, lat(600, 5000, 800, dhcp_sigma=0.3))),
        Template("lossy_scan", 0.15, ScenarioConfig(0.9, 0.05, 0.05, 0.05, lat(800, 1500, 1500, scan_sigma=0.5))),
        Template("broken", 0.15, ScenarioConfig(0.5, 0.05, 0.05, 1.0, lat(250, 1300, 1000))),
    )


FIELD_TARGETS = {
    "success_rate": 0.549,
    "willing_failure_rate": 0.24,
    "success_under_5s": 0.80,
    "success_over_15s": 0.03,
    "slow_scan_share": 0.47,
}


def field_log_config(n_attempts: int = 100_000, seed: int = 0) -> CorpusConfig:
    """Log corpus calibrated to the headline measurement statistics."""
    return CorpusConfig(
        n_attempts=n_attempts,
        templates=default_templates(),
        devices=UniverseSpec("dev", 40, zipf=0.8, latency_sigma=0.35, loss_sigma=0.3),
        aps=UniverseSpec("ap", 150, zipf=0.6, latency_sigma=0.2, loss_sigma=0.3),
        users=UniverseSpec("user", 5000, zipf=1.0, loss_sigma=0.3),
        targets=dict(FIELD_TARGETS),
        rng_seed=seed,
    )


def field_candidate_config(n_events: int = 200_000, seed: int = 0) -> CandidateConfig:
    """Candidate sets where the strongest AP often fails but a weaker healthy AP is usually visible."""
    corpus = CorpusConfig(
        templates=(
            Template("healthy", 0.9, default_templates()[0].scenario),
            Template("congested", 0.1, default_templates()[1].scenario),
        ),
        devices=UniverseSpec("dev", 30, zipf=0.8, latency_sigma=0.2, loss_sigma=0.2),
        aps=UniverseSpec("ap", 150, zipf=0.3, latency_sigma=0.2, loss_sigma=1.0,
                         bad_fraction=0.42, bad_loss=60.0),
        users=UniverseSpec("user", 5000, zipf=1.0),
        calibrate=False,
        rng_seed=seed,
    )
    return CandidateConfig(n_events=n_events, corpus=corpus, rng_seed=seed)


def save_config(path: str | Path, cfg: CorpusConfig | CandidateConfig) -> None:
    kind = "candidates" if isinstance(cfg, CandidateConfig) else "logs"
    Path(path).write_text(json.dumps({"kind": kind, "config": cfg.to_dict()}, indent=2) + "\n")
