"""Discrete-event simulation of one connection set-up process.

The process walks Scanning -> Associating -> (Authenticating) -> ObtainingIp
-> Connected. A lost probe, association or authentication exchange drops to
Disconnected, which re-enters Scanning after a short reconnect delay. A lost
DHCP round is retried in place after a retransmission wait. The attempt ends when Connected is reached
or when the clock passes ``timeout_ms``; reaching ObtainingIp before the
timeout turns a would-be Timeout into a DhcpFailure.

Every visit to a state draws a dwell time from that phase's latency
distribution. Time spent in Disconnected is charged to the scan phase, so
the four phase totals always partition the elapsed time.

One attempt consumes a single random stream in a fixed order (one dwell
draw and one loss draw per visit). EAP adds a constant to each authentication
dwell and draws nothing, so an enterprise run sees exactly the same random
numbers as its non-enterprise twin.

Sub-streams for many attempts come from :func:`substream`, which seeds a
``random.Random`` with the string ``"<seed>/<k1>/<k2>..."``. Python hashes
string seeds with SHA-512, so neighbouring keys give unrelated streams and
results never depend on generation order.
"""

from __future__ import annotations

import math
import random
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Any

from connlab.schema import TIMEOUT_MS, ConnectionAttempt, Outcome, PhaseTiming


class ConnState(str, Enum):
    SCANNING = "Scanning"
    ASSOCIATING = "Associating"
    AUTHENTICATING = "Authenticating"
    OBTAINING_IP = "ObtainingIp"
    CONNECTED = "Connected"
    DISCONNECTED = "Disconnected"


STATE_ORDER = tuple(ConnState)


@dataclass(frozen=True, slots=True)
class Latency:
    """Dwell-time distribution in milliseconds.

    ``lognormal`` uses ``median`` and ``sigma`` (of the underlying normal);
    ``uniform`` draws from [``low``, ``high``]; ``constant`` always returns
    ``value``. Draws are rounded to whole milliseconds and floored at 1 ms.
    """

    family: str = "lognormal"
    median: float = 100.0
    sigma: float = 0.5
    low: float = 0.0
    high: float = 0.0
    value: float = 0.0

    def __post_init__(self) -> None:
        if self.family == "lognormal":
            ok = self.median > 0 and self.sigma >= 0
        elif self.family == "uniform":
            ok = 0 < self.low <= self.high
        elif self.family == "constant":
            ok = self.value > 0
        else:
            raise ValueError(f"unknown latency family {self.family!r}")
        if not ok:
            raise ValueError(f"latency parameters must be positive: {self}")

    @classmethod
    def lognormal(cls, median: float, sigma: float) -> Latency:
        return cls("lognormal", median=median, sigma=sigma)

    @classmethod
    def constant(cls, value: float) -> Latency:
        return cls("constant", value=value)

    @classmethod
    def uniform(cls, low: float, high: float) -> Latency:
        return cls("uniform", low=low, high=high)

    def scaled(self, factor: float) -> Latency:
        if factor == 1.0:
            return self
        return replace(self, median=self.median * factor, low=self.low * factor,
                       high=self.high * factor, value=self.value * factor)

    def sample(self, rng: random.Random) -> float:
        if self.family == "lognormal":
            return self.median * math.exp(self.sigma * rng.gauss(0.0, 1.0))
        if self.family == "uniform":
            return rng.uniform(self.low, self.high)
        return self.value

    def to_dict(self) -> dict[str, Any]:
        if self.family == "lognormal":
            return {"family": "lognormal", "median": self.median, "sigma": self.sigma}
        if self.family == "uniform":
            return {"family": "uniform", "low": self.low, "high": self.high}
        return {"family": "constant", "value": self.value}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Latency:
        return cls(**d)


@dataclass(frozen=True, slots=True)
class EapParams:
    n_e: int = 4
    t_w_ms: float = 0.0
    t_a_ms: float = 0.0

    def __post_init__(self) -> None:
        if self.n_e < 0 or self.t_w_ms < 0 or self.t_a_ms < 0:
            raise ValueError("EAP parameters must be non-negative")


def eap_overhead(p: EapParams) -> float:
    """Extra authentication time an 802.1X/EAP exchange adds to one attempt."""
    return 2 * p.n_e * (p.t_w_ms + p.t_a_ms) + p.t_a_ms


def _default_latency() -> dict[str, Latency]:
    return {
        "scan": Latency.lognormal(300, 0.5),
        "assoc": Latency.lognormal(30, 0.4),
        "auth": Latency.lognormal(60, 0.4),
        "dhcp": Latency.lognormal(1000, 0.6),
        "dhcp_retry": Latency.lognormal(3000, 0.3),
        "reconnect": Latency.lognormal(100, 0.3),
    }


# dhcp_retry is the wait after a lost DHCP round; reconnect is the Disconnected dwell
PHASE_KEYS = ("scan", "assoc", "auth", "dhcp", "dhcp_retry", "reconnect")


@dataclass(frozen=True)
class ScenarioConfig:
    p_loss_probe: float = 0.0
    p_loss_assoc: float = 0.0
    p_loss_auth: float = 0.0
    p_loss_dhcp: float = 0.0
    phase_latency: dict[str, Latency] = field(default_factory=_default_latency)
    encrypted: bool = True
    enterprise: EapParams | None = None
    timeout_ms: int = TIMEOUT_MS
    rng_seed: int = 0

    def __post_init__(self) -> None:
        for name in ("p_loss_probe", "p_loss_assoc", "p_loss_auth", "p_loss_dhcp"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        missing = set(PHASE_KEYS) - set(self.phase_latency)
        if missing:
            raise ValueError(f"phase_latency lacks {sorted(missing)}")
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")

    def to_dict(self) -> dict[str, Any]:
        return {
            "p_loss_probe": self.p_loss_probe,
            "p_loss_assoc": self.p_loss_assoc,
            "p_loss_auth": self.p_loss_auth,
            "p_loss_dhcp": self.p_loss_dhcp,
            "phase_latency": {k: v.to_dict() for k, v in self.phase_latency.items()},
            "encrypted": self.encrypted,
            "enterprise": None if self.enterprise is None else asdict(self.enterprise),
            "timeout_ms": self.timeout_ms,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ScenarioConfig:
        d = dict(d)
        if "phase_latency" in d:
            lat = _default_latency()
            lat.update({k: Latency.from_dict(v) for k, v in d["phase_latency"].items()})
            d["phase_latency"] = lat
        if d.get("enterprise") is not None:
            d["enterprise"] = EapParams(**d["enterprise"])
        return cls(**d)


@dataclass(frozen=True, slots=True)
class Transition:
    src: ConnState
    dst: ConnState
    at_ms: int


@dataclass(frozen=True)
class TransitionTrace:
    attempt_id: str
    transitions: tuple[Transition, ...]

    def states_entered(self, state: ConnState) -> int:
        n = sum(1 for t in self.transitions if t.dst is state)
        if state is ConnState.SCANNING:
            n += 1  # the attempt starts in Scanning
        return n

    def to_record(self) -> dict[str, Any]:
        return {
            "attempt_id": self.attempt_id,
            "transitions": [[t.src.value, t.dst.value, t.at_ms] for t in self.transitions],
        }

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> TransitionTrace:
        return cls(
            rec["attempt_id"],
            tuple(Transition(ConnState(a), ConnState(b), int(t)) for a, b, t in rec["transitions"]),
        )


@dataclass(frozen=True, slots=True)
class AttemptResult:
    """Outcome of one simulated attempt before context fields are attached."""

    outcome: Outcome
    elapsed_ms: int
    phases: PhaseTiming
    trace: TransitionTrace

    @property
    def connection_time_ms(self) -> int | None:
        return self.elapsed_ms if self.outcome is Outcome.SUCCESS else None


def substream(seed: int, *key: int | str) -> random.Random:
    return random.Random("/".join(map(str, (seed, *key))))


def simulate(cfg: ScenarioConfig, attempt_id: str = "a0", rng: random.Random | None = None) -> AttemptResult:
    """Run the state machine once, drawing from ``rng`` (default: ``substream(cfg.rng_seed)``)."""
    if rng is None:
        rng = substream(cfg.rng_seed)
    draw = rng.random
    lat = cfg.phase_latency
    timeout = cfg.timeout_ms
    eap = eap_overhead(cfg.enterprise) if cfg.enterprise is not None else 0.0
    after_assoc = ConnState.AUTHENTICATING if cfg.encrypted else ConnState.OBTAINING_IP

    S = ConnState
    spent = {"scan": 0, "assoc": 0, "auth": 0, "dhcp": 0}
    transitions: list[Transition] = []
    t = 0
    state = S.SCANNING
    entered_dhcp = False
    outcome = None

    while True:
        # dwell in the current state, then decide where to go
        if state is S.SCANNING:
            d, phase = lat["scan"].sample(rng), "scan"
            lost = draw() < cfg.p_loss_probe
            nxt = S.DISCONNECTED if lost else S.ASSOCIATING
        elif state is S.ASSOCIATING:
            d, phase = lat["assoc"].sample(rng), "assoc"
            lost = draw() < cfg.p_loss_assoc
            nxt = S.DISCONNECTED if lost else after_assoc
        elif state is S.AUTHENTICATING:
            d, phase = lat["auth"].sample(rng) + eap, "auth"
            lost = draw() < cfg.p_loss_auth
            nxt = S.DISCONNECTED if lost else S.OBTAINING_IP
        elif state is S.OBTAINING_IP:
            lost = draw() < cfg.p_loss_dhcp
            d = lat["dhcp_retry" if lost else "dhcp"].sample(rng)
            phase = "dhcp"
            nxt = S.OBTAINING_IP if lost else S.CONNECTED
        else:  # Disconnected: reconnect delay, charged to scan
            d, phase = lat["reconnect"].sample(rng), "scan"
            nxt = S.SCANNING
        d = max(1, round(d))
        if t + d > timeout:
            spent[phase] += timeout - t
            t = timeout
            outcome = Outcome.DHCP_FAILURE if entered_dhcp else Outcome.TIMEOUT
            break
        t += d
        spent[phase] += d
        if nxt is not state:
            transitions.append(Transition(state, nxt, t))
            state = nxt
        if state is S.OBTAINING_IP:
            entered_dhcp = True
        elif state is S.CONNECTED:
            outcome = Outcome.SUCCESS
            break

    phases = PhaseTiming(spent["scan"], spent["assoc"], spent["auth"], spent["dhcp"])
    return AttemptResult(outcome, t, phases, TransitionTrace(attempt_id, tuple(transitions)))


_DEFAULT_CONTEXT: dict[str, Any] = {
    "user_id": "u0",
    "hour_of_day": 12,
    "rssi_dbm": -60,
    "num_devices": 1,
    "device_model": "dev0",
    "ap_model": "ap0",
}


def run_attempt(cfg: ScenarioConfig, attempt_id: str = "a0", **context: Any) -> tuple[ConnectionAttempt, TransitionTrace]:
    """Simulate one attempt and wrap it as a log record.

    ``context`` supplies the log fields the state machine does not decide
    (hour, RSSI, models, ...); unspecified ones take neutral defaults.
    ``encrypted`` always mirrors ``cfg.encrypted``.
    """
    res = simulate(cfg, attempt_id)
    fields = {**_DEFAULT_CONTEXT, **context}
    attempt = ConnectionAttempt(
        attempt_id=attempt_id,
        encrypted=cfg.encrypted,
        outcome=res.outcome,
        connection_time_ms=res.connection_time_ms,
        phases=res.phases if res.outcome is Outcome.SUCCESS else None,
        **fields,
    )
    return attempt, res.trace
