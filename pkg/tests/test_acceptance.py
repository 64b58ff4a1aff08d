"""End-to-end acceptance checks.

Every check records one PASS/FAIL line; the lines are printed in the
terminal summary (see conftest.py) and each test also asserts its result.
"""

import math
import random
import time

import numpy as np
import pytest
from oracles import bin_key, kendall_pairs, rig_bruteforce

from connlab import analytics as an
from connlab import forest as fm
from connlab.binning import BinSpec
from connlab.corpus import (
    CorpusConfig,
    Template,
    UniverseSpec,
    field_candidate_config,
    field_log_config,
    generate_candidate_sets,
    generate_corpus,
)
from connlab.features import encode_matrix, fit_encoders, label_vector
from connlab.forest import ForestParams
from connlab.schema import Outcome
from connlab.selection import poa_frontier, split_events, what_if_eval
from connlab.sim import (
    ConnState,
    EapParams,
    Latency,
    ScenarioConfig,
    eap_overhead,
    simulate,
)

RESULTS = []


def record(n, ok, detail):
    RESULTS.append(f"acceptance {n} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


# -- 1 ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def logs():
    t0 = time.perf_counter()
    corpus = generate_corpus(field_log_config(100_000, seed=0))
    props = an.outcome_proportions(corpus.attempts)
    cdf = an.success_time_cdf(corpus.attempts)
    stats = {
        "failure": 1.0 - props.get(Outcome.SUCCESS, 0.0),
        "success": props.get(Outcome.SUCCESS, 0.0),
        "under_5s": cdf(4999),
        "over_15s": 1.0 - cdf(15_000),
    }
    return corpus, stats, time.perf_counter() - t0


def test_1_round_trip_marginals(logs):
    _, stats, elapsed = logs
    want = {"failure": 0.45, "success": 0.549, "under_5s": 0.80, "over_15s": 0.03}
    misses = {k: stats[k] - v for k, v in want.items()}
    ok = all(abs(d) <= 0.015 for d in misses.values()) and elapsed < 60
    detail = ", ".join(f"{k} {stats[k]:.4f} (target {want[k]})" for k in want)
    record(1, ok, f"{detail}; {elapsed:.1f} s")


# -- 2 ----------------------------------------------------------------------

def test_2_rig_oracle():
    rng = random.Random(2024)
    worst = 0.0
    for _ in range(40):
        n = rng.randint(1, 1000)
        kx, ky = rng.randint(1, 5), rng.randint(1, 5)
        x = [rng.randrange(kx) * 10 + rng.random() * 9.99 for _ in range(n)]
        y = [rng.randrange(ky) * 100 + rng.random() * 99 for _ in range(n)]
        # couple y to x for part of the rows
        y = [(int(xv // 10) % ky) * 100 + 50 if rng.random() < 0.4 else yv for xv, yv in zip(x, y)]
        got = an.relative_information_gain(x, y, BinSpec.numeric(10), BinSpec.numeric(100))
        want = rig_bruteforce([bin_key(v, 10, 0) for v in x], [bin_key(v, 100, 0) for v in y])
        worst = max(worst, abs(got - want))
    outside = 0
    for _ in range(10_000):
        n = rng.randint(1, 40)
        x = [rng.randint(-5, 5) for _ in range(n)]
        y = [rng.randint(0, 6) for _ in range(n)]
        r = an.relative_information_gain(x, y, BinSpec.numeric(1), BinSpec.numeric(1))
        outside += not 0.0 <= r <= 1.0
    record(2, worst <= 1e-9 and outside == 0,
           f"max |RIG - oracle| = {worst:.2e} over 40 fixtures; {outside}/10000 fuzz values outside [0, 1]")


# -- 3 ----------------------------------------------------------------------

def test_3_kendall_oracle():
    rng = random.Random(3)
    mismatches = 0
    for _ in range(40):
        m = rng.randint(2, 60)
        x, y = [], []
        for b in range(m):
            for _ in range(rng.randint(1, 3)):
                x.append(b * 5 + rng.random() * 4.9)
                y.append(rng.randint(0, 4))
        keys = sorted({bin_key(v, 5, 0) for v in x})
        groups = {k: [] for k in keys}
        for xv, yv in zip(x, y):
            groups[bin_key(xv, 5, 0)].append(yv)
        means = [math.fsum(groups[k]) / len(groups[k]) for k in keys]
        if len(set(means)) == 1:
            continue
        mismatches += an.kendall_on_binned_means(x, y, BinSpec.numeric(5)) != kendall_pairs(keys, means)
    xs = [rng.uniform(-100, -55) for _ in range(5000)]
    up = an.kendall_on_binned_means(xs, [3 * v for v in xs], BinSpec.numeric(5, -100))
    down = an.kendall_on_binned_means(xs, [-math.exp(v / 10) for v in xs], BinSpec.numeric(5, -100))
    record(3, mismatches == 0 and up == 1.0 and down == -1.0,
           f"{mismatches} mismatches against pair counting; monotone up {up!r}, down {down!r}")


# -- 4 ----------------------------------------------------------------------

def test_4_state_machine_invariants(logs):
    corpus = logs[0]
    bad_sum = sum(1 for a in corpus.attempts if a.success and a.phases.total != a.connection_time_ms)

    disconnected = 0
    for seed in range(2000):
        res = simulate(ScenarioConfig(encrypted=seed % 2 == 0, rng_seed=seed))
        disconnected += any(t.dst is ConnState.DISCONNECTED for t in res.trace.transitions)

    lat = {k: Latency.constant(v) for k, v in
           dict(scan=100, assoc=10, auth=20, dhcp=500, dhcp_retry=3000, reconnect=50).items()}
    n = 10_000
    entries = [simulate(ScenarioConfig(p_loss_probe=0.5, phase_latency=lat, rng_seed=i))
               .trace.states_entered(ConnState.SCANNING) for i in range(n)]
    mean = float(np.mean(entries))
    # geometric with p = 0.5: mean 2, variance (1 - p) / p^2 = 2
    half = 1.96 * math.sqrt(2.0 / n)
    ok = bad_sum == 0 and disconnected == 0 and abs(mean - 2.0) <= half
    record(4, ok, f"{bad_sum} phase-sum mismatches; {disconnected} zero-loss runs with Disconnected; "
                  f"mean scans {mean:.4f} (95% CI {2 - half:.4f}..{2 + half:.4f})")


# -- 5 ----------------------------------------------------------------------

def test_5_eap_formula():
    exact = eap_overhead(EapParams(4, 10, 5))
    rng = random.Random(5)
    worst = 0.0
    for _ in range(10_000):
        n, tw, ta = rng.randint(0, 100), rng.uniform(0, 1000), rng.uniform(0, 1000)
        want = 2 * n * (tw + ta) + ta
        worst = max(worst, abs(eap_overhead(EapParams(n, tw, ta)) - want) / max(1.0, want))
    record(5, exact == 125 and worst <= 1e-12, f"eap_overhead(4, 10, 5) = {exact!r}; max rel error {worst:.1e} over 10000 inputs")


# -- 6 ----------------------------------------------------------------------

def test_6_forest_correctness(logs):
    corpus = logs[0]
    rows = [a for a in corpus.attempts[:20_000] if a.outcome.willing]
    enc = fit_encoders(rows)
    X, y = encode_matrix(rows, enc), label_vector(rows)

    p1 = ForestParams(n_trees=1, bootstrap=False, rng_seed=6)
    single = fm.train(X, y, p1)
    seed, _ = fm.tree_seeds(p1)[0]
    tree_ok = single.trees[0].same_as(fm.DecisionTree.grow(X, y, p1, seed)) and np.array_equal(
        single.predict_many(X), fm.DecisionTree.grow(X, y, p1, seed).predict_codes(X))

    params = ForestParams(rng_seed=6)
    model = fm.train(X, y, params, enc)
    trees = list(model.trees)
    random.Random(6).shuffle(trees)
    shuffled = fm.ForestModel(params, trees, enc)
    perm_ok = np.array_equal(model.scores(X), shuffled.scores(X))
    depth = model.max_depth()

    rng = np.random.default_rng(6)
    probe = np.column_stack([
        rng.integers(0, 24, 1000), rng.integers(-100, -54, 1000),
        rng.integers(0, enc.device_model.n_codes + 2, 1000), rng.integers(0, enc.ap_model.n_codes + 2, 1000),
        rng.integers(0, 2, 1000),
    ])
    back = fm.loads(fm.dumps(model))
    io_ok = np.array_equal(back.scores(probe), model.scores(probe))
    same_seed = model.same_as(fm.train(X, y, params, enc))

    ok = tree_ok and perm_ok and depth <= 90 and io_ok and same_seed
    record(6, ok, f"single tree {tree_ok}, tree permutation {perm_ok}, max depth {depth}, "
                  f"save/load {io_ok}, same seed same model {same_seed}")


# -- 7 and 9 ----------------------------------------------------------------

@pytest.fixture(scope="module")
def what_if():
    t0 = time.perf_counter()
    sets = generate_candidate_sets(field_candidate_config(200_000, seed=0))
    report, model = what_if_eval(sets, ForestParams(rng_seed=0), split_seed=0)
    elapsed = time.perf_counter() - t0
    return sets, report, model, elapsed


@pytest.mark.slow
def test_7_what_if_replay(what_if):
    _, rep, _, elapsed = what_if
    base, ml = rep.baseline, rep.ml
    ok = (abs(base.failure_rate - 0.33) <= 0.03 and ml.failure_rate <= base.failure_rate / 5
          and base.p80_ms >= 5 * ml.p80_ms and elapsed < 300)
    record(7, ok, f"baseline failure {base.failure_rate:.4f}, ML failure {ml.failure_rate:.4f}, "
                  f"p80 {base.p80_ms} -> {ml.p80_ms} ms ({base.p80_ms / ml.p80_ms:.1f}x); {elapsed:.0f} s")


@pytest.mark.slow
def test_9_poa_frontier(what_if):
    sets, _, model, _ = what_if
    _, replay_half = split_events([cs for cs in sets if cs.has_truth], 0)
    thresholds = np.linspace(0.1, 0.9, 9)
    pts = poa_frontier(model, replay_half[:20_000], thresholds)
    recall = [p.recall_slow for p in pts]
    poa = [p.poa for p in pts]
    # lower thresholds flag more APs as SLOW: recall goes up, PoA goes down
    monotone = recall == sorted(recall, reverse=True) and poa == sorted(poa)
    spread = recall[0] - recall[-1] >= 0.05 and poa[-1] - poa[0] >= 0.05
    table = "; ".join(f"t={t:.1f} recall {r:.3f} PoA {q:.3f}" for t, r, q in zip(thresholds, recall, poa))
    record(9, monotone and spread, table)


# -- 8 ----------------------------------------------------------------------

def planted_correlation_config(n=100_000, seed=0):
    """Strong device effect, moderate AP effect, monotone RSSI, weak hour."""
    noise = 0.2
    lat = {
        "scan": Latency.lognormal(500, noise),
        "assoc": Latency.lognormal(30, noise),
        "auth": Latency.lognormal(60, noise),
        "dhcp": Latency.lognormal(1500, noise),
        "dhcp_retry": Latency.lognormal(3000, 0.3),
        "reconnect": Latency.lognormal(700, 0.5),
    }
    return CorpusConfig(
        n_attempts=n,
        templates=(Template("planted", 1.0, ScenarioConfig(0.05, 0.01, 0.01, 0.02, lat)),),
        devices=UniverseSpec("dev", 10, latency_sigma=1.0, stratified=True),
        aps=UniverseSpec("ap", 20, latency_sigma=0.6, stratified=True),
        users=UniverseSpec("user", 2000, zipf=1.0),
        rssi_latency_slope=0.05,
        hour_latency_amplitude=0.02,
        calibrate=False,
        rng_seed=seed,
    )


def test_8_correlation_ordering():
    corpus = generate_corpus(planted_correlation_config())
    rep = an.correlation_report(corpus.attempts)
    f = rep.features
    rig = {k: f[k].rig for k in ("device_model", "ap_model", "rssi_dbm", "hour_of_day")}
    ok = (rig["device_model"] > rig["ap_model"] > rig["rssi_dbm"] > rig["hour_of_day"]
          and f["rssi_dbm"].kendall < 0)
    detail = ", ".join(f"RIG({k}) {v:.4f}" for k, v in rig.items())
    record(8, ok, f"{detail}; Kendall(rssi) {f['rssi_dbm'].kendall:.3f}")
