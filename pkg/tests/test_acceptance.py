"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line; pytest prints them in its terminal summary
and ``python tests/test_acceptance.py`` prints them directly.
"""

import functools
import random
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from entfed.attacks import GML_THRESHOLD, NO_LEAK, gml_attack, sample_gradient, undefended_mix  # noqa: E402
from entfed.clustering import affinity_propagation, cluster_fedavg, net_similarity  # noqa: E402
from entfed.compression import ahc_decode, ahc_encode, choose_k, empirical_entropy, kmedoids  # noqa: E402
from entfed.config import from_mapping  # noqa: E402
from entfed.he import aggregate_encrypted, dec, enc, eval_add, eval_scale, keygen  # noqa: E402
from entfed.ledger import KIND_GLOBAL, KINDS, Chain, Miner, append_block, select_leader, verify_chain  # noqa: E402
from entfed.model import LINEAR, init_params  # noqa: E402
from entfed.orchestrator import check_theorems, run_experiment, unpack_sections  # noqa: E402
from oracles import (  # noqa: E402
    BLOCK_FIELDS, best_exemplar_labels, best_medoid_cost, block_similarity, five_blobs,
    leader_by_enumeration, same_partition, tamper,
)

RESULTS = []


def record(tag, title, ok, detail):
    line = f"{tag} {title}: {'PASS' if ok else 'FAIL'} ({detail})"
    RESULTS.append(line)
    print(line)
    return ok


# -------------------------------------------------------------- AC1 and AC2

@functools.lru_cache(maxsize=None)
def _codec_sweep():
    rng = np.random.default_rng(2024)
    mismatches = bound_failures = 0
    worst_slack = np.inf
    t = time.perf_counter()
    for _ in range(10_000):
        n = int(rng.integers(0, 4097))
        alphabet = int(rng.integers(2, 65))
        idx = rng.integers(0, alphabet, size=n)
        stream = ahc_encode(idx)
        back = ahc_decode(stream.to_bytes())
        mismatches += not np.array_equal(back, idx)
        distinct = np.unique(idx).size
        bound = n * (empirical_entropy(idx) + 1) + 16 * distinct + 32
        slack = bound - stream.total_bits
        worst_slack = min(worst_slack, slack)
        bound_failures += slack < 0
    return mismatches, bound_failures, worst_slack, time.perf_counter() - t


def test_ac1_codec_round_trip():
    mismatches, _, _, elapsed = _codec_sweep()
    ok = mismatches == 0 and elapsed < 10.0
    assert record("AC1", "codec round-trip", ok,
                  f"10000 vectors, {mismatches} mismatches, {elapsed:.2f}s of 10s")


def test_ac2_entropy_bound():
    _, failures, slack, _ = _codec_sweep()
    assert record("AC2", "entropy bound", failures == 0,
                  f"{failures} violations, tightest slack {slack:.1f} bits")


# ------------------------------------------------------------------- AC3

def test_ac3_homomorphism_suite():
    t = time.perf_counter()
    keys = keygen(512, random.Random(33))
    pk, sk = keys.pk, keys.sk
    hr = random.Random(34)
    rng = np.random.default_rng(35)
    worst = 0.0
    for case in range(1000):
        kind = case % 3
        k = int(rng.integers(1, 6))
        if kind == 0:
            a, b = rng.uniform(-100, 100, k), rng.uniform(-100, 100, k)
            got = dec(sk, eval_add(pk, enc(pk, a, rng=hr), enc(pk, b, rng=hr)))
            ref = a + b
        elif kind == 1:
            a, w = rng.uniform(-100, 100, k), int(rng.integers(-10, 11))
            got = dec(sk, eval_scale(pk, enc(pk, a, rng=hr), w))
            ref = w * a
        else:
            m = int(rng.integers(2, 6))
            vecs = rng.uniform(-10, 10, (m, k))
            sizes = rng.integers(1, 500, m)
            got = dec(sk, aggregate_encrypted(pk, [(enc(pk, v, rng=hr), int(s)) for v, s in zip(vecs, sizes)]))
            ref = cluster_fedavg([list(range(m))], list(zip(vecs, sizes)))[0]
        worst = max(worst, float(np.max(np.abs(np.asarray(got) - ref))))
    elapsed = time.perf_counter() - t
    ok = worst <= 1e-5 and elapsed < 30.0
    assert record("AC3", "homomorphism suite", ok,
                  f"1000 cases at lam=512, max error {worst:.2e}, {elapsed:.2f}s of 30s")


# ------------------------------------------------------------------- AC4

def _defense_run(seed):
    cfg = from_mapping(dict(enterprises=30, rounds=6, select_fraction=1.0, lam=512, seed=seed,
                            attack_kind="sign_flip", malicious_rate=0.2))
    return run_experiment(cfg)


def _aggregated(block):
    out = set()
    for name, _ in unpack_sections(block.payload):
        out |= {int(i) for i in name.split("|")[2].split(",") if i}
    return out


def test_ac4_defense_behavior():
    t = time.perf_counter()
    leaked = late = honest_hit = 0
    first = None
    for seed in range(10):
        res = _defense_run(seed)
        attackers = set(res.state.attackers)
        blocks = [b for b in res.state.chain.blocks if b.kind == KIND_GLOBAL]
        for m, block in zip(res.metrics, blocks):
            leaked += bool((_aggregated(block) | (set(m.selected) - set(m.filtered))) & attackers)
        bl5 = set(res.metrics[4].blacklisted)
        late += not attackers <= bl5
        honest_hit += bool(bl5 - attackers)
        if seed == 0:
            first = [m.deterministic() for m in res.metrics]
    again = [m.deterministic() for m in _defense_run(0).metrics]
    elapsed = time.perf_counter() - t
    ok = leaked == 0 and late == 0 and first == again and elapsed < 60.0
    assert record("AC4", "defense behavior", ok,
                  f"10 seeds: {leaked} rounds with poisoned aggregation, {late} seeds with an "
                  f"attacker free after round 5, {honest_hit} seeds blacklisting an honest enterprise, "
                  f"rerun identical={first == again}, {elapsed:.1f}s of 60s")


# ------------------------------------------------------------------- AC5

def test_ac5_mixing_identity():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 900))
        honest, intruder = rng.normal(size=d), rng.normal(size=d)
        size = int(rng.integers(1, 200))
        mixed = cluster_fedavg([list(range(10))], [(honest, size)] * 8 + [(intruder, size)] * 2)[0]
        worst = max(worst, float(np.max(np.abs(mixed - undefended_mix(honest, intruder, 0.2)))))
    rep = check_theorems(from_mapping(dict(rounds=1)))
    ok = worst <= 1e-12 and rep.mixing_ok
    assert record("AC5", "mixing identity", ok,
                  f"mu=0.2 max error {worst:.2e} over 100 cases, harness error {rep.mixing_error:.2e}")


# ------------------------------------------------------------------- AC6

def test_ac6_convex_monotonicity():
    t = time.perf_counter()
    rep = check_theorems(from_mapping(dict(rounds=50)), rounds=50)
    elapsed = time.perf_counter() - t
    ok = rep.monotone and rep.eta <= 1 / rep.beta and elapsed < 30.0
    assert record("AC6", "convex monotonicity", ok,
                  f"50 rounds, eta={rep.eta:.4g} <= 1/beta={1 / rep.beta:.4g}, "
                  f"max increase {rep.max_increase:.2e}, {elapsed:.2f}s of 30s")


# -------------------------------------------------------------- AC7 and AC8

@functools.lru_cache(maxsize=None)
def _paired_runs():
    t = time.perf_counter()
    acc = {"fedanil_plus": [], "fedavg_baseline": []}
    bits = {"fedanil_plus": 0, "fedavg_baseline": 0}
    traces = []
    for seed in range(10):
        for scen in acc:
            cfg = from_mapping(dict(enterprises=30, rounds=20, alpha=0.1, lam=512,
                                    scenario=scen, seed=seed))
            s = run_experiment(cfg).summary
            acc[scen].append(s["final_accuracy"]["overall"])
            bits[scen] += s["cumulative_c2s"]
            if scen == "fedanil_plus":
                traces.append(s["gml_trace"])
    return acc, bits, traces, time.perf_counter() - t


def test_ac7_non_iid_benefit():
    acc, _, _, elapsed = _paired_runs()
    ours, base = np.mean(acc["fedanil_plus"]), np.mean(acc["fedavg_baseline"])
    gap = ours - base
    ok = gap >= 5.0 and elapsed < 600.0
    assert record("AC7", "non-IID benefit", ok,
                  f"mean final accuracy {ours:.1f}% vs baseline {base:.1f}%, gap {gap:+.1f} points, "
                  f"10 paired seeds, {elapsed:.0f}s of 600s")


def test_ac8_communication_benefit():
    _, bits, _, _ = _paired_runs()
    ratio = bits["fedanil_plus"] / bits["fedavg_baseline"]
    assert record("AC8", "communication benefit", ratio <= 0.25,
                  f"cumulative c2s {bits['fedanil_plus']} vs {bits['fedavg_baseline']} bits, "
                  f"ratio {ratio:.1%} of 25%")


# ------------------------------------------------------------------- AC9

def test_ac9_gml_resistance():
    t = time.perf_counter()
    res = run_experiment(from_mapping(dict(enterprises=30, rounds=20, alpha=0.1, lam=512, seed=0)))
    trace = [m.gml for m in res.metrics]
    enc_ok = all(g >= GML_THRESHOLD for g in trace) and all(m.leak_class == NO_LEAK for m in res.metrics)
    plain = []
    for seed in range(10):
        rng = np.random.default_rng(900 + seed)
        w = init_params(LINEAR, rng)
        grad = sample_gradient(w, LINEAR, rng.normal(size=LINEAR.input_dim), int(rng.integers(0, 2)))
        plain.append(gml_attack(grad, LINEAR, w, steps=500, seed=seed).gml)
    plain_ok = max(plain) < GML_THRESHOLD
    elapsed = time.perf_counter() - t
    ok = enc_ok and plain_ok and elapsed < 120.0
    assert record("AC9", "GML resistance", ok,
                  f"encrypted GML min {min(trace):.3f} over {len(trace)} rounds, plaintext GML max "
                  f"{max(plain):.4f} over 10 targets, {elapsed:.1f}s of 120s")


# ------------------------------------------------------------------ AC10

def test_ac10_ledger_integrity():
    rng = np.random.default_rng(10)
    chain = Chain()
    leader = Miner("miner-0", "leader")
    for i in range(1000):
        kind = KINDS[0] if i == 0 else KINDS[1 + int(rng.integers(0, 2))]
        miner = leader if kind == KIND_GLOBAL else Miner(f"miner-{int(rng.integers(0, 7))}")
        append_block(chain, rng.bytes(int(rng.integers(1, 65))), miner, i // 2, kind)
    clean = verify_chain(chain) is None
    missed = 0
    for i in range(1000):
        field = BLOCK_FIELDS[i % len(BLOCK_FIELDS)]
        original = chain.blocks[i]
        chain.blocks[i] = tamper(original, field, rng)
        missed += verify_chain(chain) != i
        chain.blocks[i] = original
    leader_bad = cases = 0
    for m in range(1, 6):
        ids = [f"m{j}" for j in range(m)]
        for rewards in np.ndindex(*([3] * m)):
            table = dict(zip(ids, map(int, rewards)))
            for shift in range(m):
                order = ids[shift:] + ids[:shift]
                cases += 1
                leader_bad += select_leader([Miner(x, reward=table[x]) for x in order]) != leader_by_enumeration(table)
    ok = clean and missed == 0 and leader_bad == 0
    assert record("AC10", "ledger integrity", ok,
                  f"1000 single-byte tamperings over all fields, {missed} missed; "
                  f"{cases} leader cases, {leader_bad} mismatches")


# ------------------------------------------------------------------ AC11

def test_ac11_clustering_oracles():
    ap_bad = 0
    for seed in range(20):
        s, _ = block_similarity(seed)
        res = affinity_propagation(s)
        lab, best = best_exemplar_labels(s)
        ap_bad += not (abs(net_similarity(s, res.exemplar_of) - best) <= 1e-9 * max(1, abs(best))
                       and same_partition(res.exemplar_of, lab))
    rng = np.random.default_rng(11)
    km_bad = km_cases = 0
    for _ in range(200):
        n = int(rng.integers(3, 13))
        x = np.round(rng.normal(scale=3, size=n), int(rng.integers(0, 3)))
        for k in (1, 2, 3):
            km_cases += 1
            km_bad += abs(kmedoids(x, k)[2] - best_medoid_cost(x, k)) > 1e-9
    k5 = choose_k(five_blobs(0), range(2, 9))
    ok = ap_bad == 0 and km_bad == 0 and k5 == 5
    assert record("AC11", "clustering oracles", ok,
                  f"AP {20 - ap_bad}/20 match exhaustive optimum, k-medoids {km_cases - km_bad}/{km_cases} "
                  f"match exhaustive cost, choose_k on 5 blobs = {k5}")


if __name__ == "__main__":
    tests = [v for k, v in sorted(globals().items(), key=lambda kv: kv[0])
             if k.startswith("test_ac")]
    tests.sort(key=lambda f: int(f.__name__.split("_")[1][2:]))
    failed = 0
    for fn in tests:
        try:
            fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
