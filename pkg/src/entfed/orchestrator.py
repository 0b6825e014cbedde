"""Round protocol, FedAvg baseline, metrics and experiment driver.

A protected round runs five fixed steps:

1. clients fetch the current family global models from the ledger
2. the miner with the highest reward becomes leader
3. a random subset of eligible enterprises is selected
4. each selected enterprise trains locally, quantizes its update, codes the
   index vector and encrypts the codebook, then uploads the package
5. the server validates packages, applies the angle filter, clusters the
   survivors and aggregates them under encryption; the leader appends the
   encrypted aggregates as a new block

Encrypted aggregation works over distinct index tuples. For a group of
members, position ``i`` is described by the tuple of the members' codebook
indices at ``i``. Each distinct tuple ``t`` gets the ciphertext
``sum_k w_k * E(CH_k[t_k])``, and the tuple id stream is entropy-coded. The
server therefore never needs a secret key, and decryption reproduces the
size-weighted mean of the members' quantized updates exactly.

Cosine screening and clustering need plaintext geometry, which an additive
scheme cannot provide, so they run on the members' quantized updates in a
separate screening step that never touches the aggregation path.
"""

from __future__ import annotations

import csv
import math
import random
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import attacks as atk
from .clustering import (affinity_propagation, cluster_fedavg, cosine_similarity,
                         pairwise_cosine, with_median_preference)
from .compression import (Bitstream, ahc_decode, ahc_encode, choose_k, quantize,
                          reconstruct)
from .config import FEDANIL_PLUS, FEDAVG_BASELINE, RunConfig, dump_config
from .data import assign_data_types, default_families, dirichlet_partition, generate_family
from .defense import EnterpriseStatus, angle_filter, FLAG, select_enterprises, strike_update, zone
from .errors import ContractError, DecodeError, KeyMismatchError
from .he import CiphertextVector, KeyPair, PublicKey, aggregate_selected, dec, enc, keygen
from .ledger import (KIND_GENESIS, KIND_GLOBAL, KIND_UPDATES, Chain, Miner, append_block,
                     assign_roles, dump_chain, reward_update, select_leader)
from .model import (ARCHITECTURES, LINEAR, Architecture, LocalDataset, gradient, global_loss,
                    init_params, local_train, predict)

FLOAT_BITS = 64
# data-poisoning attackers corrupt this share of their training samples
DATA_POISON_FRACTION = 0.5


def _seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0])


# ------------------------------------------------------------------ wire helpers

def pack_sections(sections) -> bytes:
    out = [struct.pack(">I", len(sections))]
    for name, data in sections:
        nb = name.encode()
        out.append(struct.pack(">H", len(nb)) + nb + struct.pack(">I", len(data)) + bytes(data))
    return b"".join(out)


def unpack_sections(raw: bytes) -> list:
    if len(raw) < 4:
        raise DecodeError("section container truncated")
    (count,) = struct.unpack(">I", raw[:4])
    pos, out = 4, []
    for _ in range(count):
        if pos + 2 > len(raw):
            raise DecodeError("section name truncated")
        (ln,) = struct.unpack(">H", raw[pos:pos + 2])
        name = raw[pos + 2:pos + 2 + ln].decode()
        pos += 2 + ln
        if pos + 4 > len(raw):
            raise DecodeError("section length truncated")
        (dl,) = struct.unpack(">I", raw[pos:pos + 4])
        pos += 4
        if pos + dl > len(raw):
            raise DecodeError("section body truncated")
        out.append((name, raw[pos:pos + dl]))
        pos += dl
    if pos != len(raw):
        raise DecodeError("trailing bytes after sections")
    return out


@dataclass(frozen=True)
class UpdatePackage:
    """One enterprise's upload: coded index vector plus encrypted codebook."""

    enterprise_id: int
    round: int
    arch_id: str
    size: int
    codebook: CiphertextVector
    stream: Bitstream

    @property
    def b_rho(self) -> int:
        return self.stream.wire_bits

    @property
    def b_ch(self) -> int:
        return 8 * len(self.codebook.to_bytes())

    @property
    def bits(self) -> int:
        return self.b_rho + self.b_ch

    def to_bytes(self) -> bytes:
        head = struct.pack(">QQQ", self.enterprise_id, self.round, self.size)
        return pack_sections([("head", head), ("arch", self.arch_id.encode()),
                              ("psi", self.codebook.to_bytes()), ("upsilon", self.stream.to_bytes())])


@dataclass(frozen=True)
class EncryptedAggregate:
    """Weighted mean of a member group as a tuple codebook and a tuple-id stream."""

    label: str
    family: str
    members: tuple
    codebook: CiphertextVector
    stream: Bitstream

    @property
    def bits(self) -> int:
        return 8 * len(self.codebook.to_bytes()) + self.stream.wire_bits

    def section(self):
        members = ",".join(str(m) for m in self.members)
        return (f"{self.label}|{self.family}|{members}",
                pack_sections([("psi", self.codebook.to_bytes()), ("upsilon", self.stream.to_bytes())]))


def aggregate_group(pk: PublicKey, packages, indices, label: str, family: str) -> EncryptedAggregate:
    """Encrypted size-weighted mean of a group; needs only the public key."""
    if not packages:
        raise ContractError("cannot aggregate an empty group")
    stack = np.stack([np.asarray(ix, dtype=np.int64) for ix in indices], axis=1)
    tuples, tuple_id = np.unique(stack, axis=0, return_inverse=True)
    total = aggregate_selected(pk, [(p.codebook, p.size) for p in packages],
                               [tuples[:, col] for col in range(len(packages))])
    members = tuple(p.enterprise_id for p in packages)
    return EncryptedAggregate(label, family, members, total, ahc_encode(tuple_id.ravel()))


def decode_aggregate(keys: KeyPair, agg: EncryptedAggregate) -> np.ndarray:
    table = np.asarray(dec(keys.sk, agg.codebook), dtype=np.float64)
    return table[ahc_decode(agg.stream)]


# ------------------------------------------------------------------- metrics

def correct_count(params, arch: Architecture, data: LocalDataset, batch_size: int = 128) -> int:
    hits = 0
    for start in range(0, data.size, batch_size):
        sl = slice(start, start + batch_size)
        hits += int((predict(params, arch, data.features[sl]) == data.labels[sl]).sum())
    return hits


def accuracy(model, arch: Architecture, validation: LocalDataset, batch_size: int = 128) -> float:
    """Percentage of correct predictions, evaluated in batches of ``batch_size``."""
    if validation.size == 0:
        raise ContractError("accuracy of an empty validation set is undefined")
    return 100.0 * correct_count(model, arch, validation, batch_size) / validation.size


def comm_cost(uploads=(), downlinks=()):
    """``(c2s, s2c, total)`` from ``(b_rho, b_ch)`` upload pairs and downlink payload bits."""
    c2s = sum(int(r) + int(c) for r, c in uploads)
    s2c = sum(int(b) for b in downlinks)
    return c2s, s2c, c2s + s2c


@dataclass
class RoundMetrics:
    round: int
    accuracy: dict
    comm_c2s: int
    comm_s2c: int
    selected: list = field(default_factory=list)
    filtered: list = field(default_factory=list)
    blacklisted: list = field(default_factory=list)
    clusters: int = 0
    gml: float = float("nan")
    leak_class: str = ""
    agg_error: float = 0.0
    client_ms: float = 0.0
    server_ms: float = 0.0

    @property
    def comm_total(self) -> int:
        return self.comm_c2s + self.comm_s2c

    def row(self) -> dict:
        out = {"round": self.round}
        for key in ("overall", *ARCHITECTURES):
            val = self.accuracy.get(key)
            out[f"acc_{key}"] = "" if val is None else f"{val:.6f}"
        out.update(comm_c2s=self.comm_c2s, comm_s2c=self.comm_s2c, comm_total=self.comm_total,
                   selected=" ".join(map(str, self.selected)),
                   filtered=" ".join(map(str, self.filtered)),
                   blacklisted=" ".join(map(str, self.blacklisted)),
                   clusters=self.clusters,
                   gml="" if math.isnan(self.gml) else f"{self.gml:.6f}",
                   leak_class=self.leak_class, agg_error=f"{self.agg_error:.3e}",
                   client_ms=f"{self.client_ms:.3f}", server_ms=f"{self.server_ms:.3f}")
        return out

    def deterministic(self) -> dict:
        """Row without wall-clock fields, for reproducibility comparisons."""
        r = self.row()
        r.pop("client_ms")
        r.pop("server_ms")
        return r


METRIC_COLUMNS = list(RoundMetrics(0, {}, 0, 0).row())
FILTER_COLUMNS = ["round", "enterprise", "cs", "zone", "decision"]


# --------------------------------------------------------------------- state

@dataclass
class Enterprise:
    id: int
    family: str
    arch: Architecture
    train: LocalDataset
    val: LocalDataset
    malicious: bool = False
    status: EnterpriseStatus = field(default_factory=EnterpriseStatus)
    personal: np.ndarray | None = None


@dataclass
class RunState:
    config: RunConfig
    enterprises: list
    globals: dict
    attackers: list
    chain: Chain = field(default_factory=Chain)
    miners: list = field(default_factory=list)
    keys: KeyPair | None = None
    k: int | None = None
    round: int = 0
    probe: tuple | None = None
    filter_log: list = field(default_factory=list)

    def family_of(self, tag):
        return [e for e in self.enterprises if e.family == tag]


def _family_arch(fam) -> Architecture:
    return ARCHITECTURES[fam.arch_id]


def init_state(config: RunConfig) -> RunState:
    """Build data, enterprises, initial models, keys and the genesis block."""
    hp = config.hyper
    seed = hp.seed
    families = default_families(_seed(seed, 1), config.noise_scale)
    ids = list(range(hp.enterprises))
    mapping = assign_data_types(ids, families, _seed(seed, 2))
    attackers = set(atk.pick_attackers(ids, config.attack.rate, _seed(seed, 3)))
    enterprises, globals_ = [], {}
    for fi, fam in enumerate(families):
        members = sorted(i for i in ids if mapping[i] == fam.tag)
        if not members:
            continue
        arch = _family_arch(fam)
        spc = math.ceil(len(members) * config.samples_per_enterprise / fam.class_count)
        pool = generate_family(fam, spc, _seed(seed, 4, fi))
        plan = dirichlet_partition(pool, len(members), config.alpha, _seed(seed, 5, fi),
                                   min_size=config.min_enterprise_samples)
        for eid, idx in zip(members, plan.indices):
            order = np.random.default_rng(_seed(seed, 6, eid)).permutation(idx)
            n_val = min(len(order) - 1, max(1, round(config.validation_fraction * len(order))))
            train, val = pool.subset(order[n_val:]), pool.subset(order[:n_val])
            bad = eid in attackers
            if bad and config.attack.kind in atk.DATA_KINDS:
                train = atk.poison_data(train, config.attack.kind, DATA_POISON_FRACTION,
                                        _seed(seed, 7, eid), fam.class_count)
            enterprises.append(Enterprise(eid, fam.tag, arch, train, val, bad))
        globals_[fam.tag] = init_params(arch, np.random.default_rng(_seed(seed, 8, fi)))
    enterprises.sort(key=lambda e: e.id)

    state = RunState(config, enterprises, globals_, sorted(attackers))
    state.miners = [Miner(f"miner-{i}") for i in range(config.miners)]
    honest_linear = [e for e in enterprises if e.arch.id == LINEAR.id and not e.malicious]
    if honest_linear:
        e = honest_linear[0]
        state.probe = (e.id, e.train.features[0].copy(), int(e.train.labels[0]))

    sections = [("scheme", b"paillier" if config.scenario == FEDANIL_PLUS else b"none")]
    if config.scenario == FEDANIL_PLUS:
        state.keys = keygen(config.lam, random.Random(_seed(seed, 9)))
        sections.append(("pk_n", state.keys.pk.n.to_bytes((state.keys.pk.bits + 7) // 8, "big")))
        sections.append(("he_scale", struct.pack(">Q", config.he_scale)))
    for tag, g in globals_.items():
        sections.append((f"init/{tag}", np.asarray(g, dtype=">f8").tobytes()))
    append_block(state.chain, pack_sections(sections), state.miners[0], 0, KIND_GENESIS)
    return state


def _client_model(state: RunState, e: Enterprise, g: np.ndarray, r: int) -> np.ndarray:
    cfg = state.config
    kind = cfg.attack.kind
    if e.malicious and kind in atk.MODEL_KINDS:
        return atk.poison_model(g, kind, cfg.attack.scale_factor)
    if e.malicious and kind == atk.COLLUDE:
        return atk.poison_model(g, atk.SIGN_FLIP)
    return local_train(g, e.arch, e.train, cfg.hyper, seed=_seed(cfg.seed, 10, r, e.id))


def _collusion_group(state: RunState) -> set:
    grp = set(state.config.attack.collusion_group) & set(state.attackers)
    return grp or set(state.attackers)


def _apply_collusion(state: RunState, models: dict) -> dict:
    if state.config.attack.kind != atk.COLLUDE:
        return models
    grp = _collusion_group(state)
    by_family = {}
    for eid in sorted(models):
        if eid in grp:
            by_family.setdefault(state.enterprises[eid].family, {})[eid] = models[eid]
    for tag, sub in by_family.items():
        crafted = sub[min(sub)]
        models.update(atk.collude(sub, crafted))
    return models


def _pick_k(cfg: RunConfig, values) -> int:
    """Silhouette choice of K in ``[k_min, quant_clusters]``; the configured K is the fallback."""
    if not cfg.auto_k:
        return cfg.hyper.quant_clusters
    hi = min(cfg.hyper.quant_clusters, len(values) - 1)
    try:
        return choose_k(values, range(cfg.k_min, hi + 1), cfg.seed)
    except ContractError:
        return cfg.hyper.quant_clusters


def _evaluate(state: RunState, use_personal: bool) -> dict:
    hits, totals = {}, {}
    for e in state.enterprises:
        if e.malicious:
            continue
        model = e.personal if (use_personal and e.personal is not None) else state.globals[e.family]
        hits[e.arch.id] = hits.get(e.arch.id, 0) + correct_count(model, e.arch, e.val,
                                                                 state.config.hyper.batch_test)
        totals[e.arch.id] = totals.get(e.arch.id, 0) + e.val.size
    out = {a: 100.0 * hits[a] / totals[a] for a in totals}
    if totals:
        out["overall"] = 100.0 * sum(hits.values()) / sum(totals.values())
    return out


def _probe_gml(state: RunState, encrypted: bool, he_rng):
    if state.probe is None:
        return float("nan"), ""
    _, x, y = state.probe
    tag = state.enterprises[state.probe[0]].family
    g = state.globals[tag]
    grad = atk.sample_gradient(g, LINEAR, x, y)
    seed = _seed(state.config.seed, 11, state.round)
    if encrypted:
        target = enc(state.keys.pk, grad, state.config.he_scale, rng=he_rng)
    else:
        target = grad
    rep = atk.gml_attack(target, LINEAR, g, steps=state.config.gml_steps, seed=seed)
    return rep.gml, rep.leak_class


def _validate(pkg: UpdatePackage, pk: PublicKey, arch: Architecture) -> bool:
    try:
        wire = CiphertextVector.from_bytes(pkg.codebook.to_bytes(), pk)
        idx = ahc_decode(pkg.stream.to_bytes())
    except (DecodeError, KeyMismatchError):
        return False
    return (pkg.arch_id == arch.id and idx.size == arch.n_params and len(wire) >= 1
            and int(idx.max()) < len(wire) and pkg.size > 0)


def run_round(state: RunState, config: RunConfig | None = None):
    """Advance the simulation by one round; returns ``(state, RoundMetrics)``."""
    config = config or state.config
    state.round += 1
    try:
        if config.scenario == FEDAVG_BASELINE:
            return state, _fedavg_round(state, config)
        return state, _protected_round(state, config)
    except ContractError as exc:
        raise ContractError(f"round {state.round}: {exc}") from exc


def _protected_round(state: RunState, cfg: RunConfig) -> RoundMetrics:
    r = state.round
    seed = cfg.seed
    keys = state.keys
    pk = keys.pk
    he_rng = random.Random(_seed(seed, 12, r))
    t0 = time.perf_counter()

    # 1. fetch: the family globals in state mirror the latest global block
    prev = {tag: g.copy() for tag, g in state.globals.items()}

    # 2. leader selection
    leader_id = select_leader(state.miners)
    state.miners = assign_roles(state.miners, leader_id)
    leader = next(m for m in state.miners if m.id == leader_id)

    # 3. random selection among non-blacklisted enterprises
    eligible = [e.id for e in state.enterprises if not e.status.blacklisted]
    chosen = select_enterprises(eligible, cfg.hyper.select_fraction, r, seed)

    # 4. local training, quantization, coding and encryption
    models = {eid: _client_model(state, state.enterprises[eid], prev[state.enterprises[eid].family], r)
              for eid in chosen}
    models = _apply_collusion(state, models)
    packages, screen_view, index_of = [], {}, {}
    for eid in chosen:
        e = state.enterprises[eid]
        delta = models[eid] - prev[e.family]
        if state.k is None:
            state.k = _pick_k(cfg, delta)
        cb, idx = quantize(delta, state.k, seed=_seed(seed, 13, r, eid))
        pkg = UpdatePackage(eid, r, e.arch.id, e.train.size, enc(pk, cb, cfg.he_scale, rng=he_rng),
                            ahc_encode(idx))
        packages.append(pkg)
        screen_view[eid] = reconstruct(cb, idx)
        index_of[eid] = idx
    t1 = time.perf_counter()

    # 5. server side
    simple = [m for m in state.miners if m.role != "leader"] or [leader]
    valid, validated = [], {m.id: 0 for m in state.miners}
    for i, pkg in enumerate(packages):
        miner = simple[i % len(simple)]
        if _validate(pkg, pk, state.enterprises[pkg.enterprise_id].arch):
            valid.append(pkg)
            validated[miner.id] += 1
    state.miners = [reward_update(m, validated[m.id]) for m in state.miners]
    leader = next(m for m in state.miners if m.id == leader_id)
    append_block(state.chain, pack_sections([(str(p.enterprise_id), p.to_bytes()) for p in packages]),
                 leader, r, KIND_UPDATES)

    valid_ids = {p.enterprise_id for p in valid}
    filtered, kept = [], {}
    for eid in chosen:
        e = state.enterprises[eid]
        view = screen_view[eid]
        if eid in valid_ids and np.any(view != 0) and np.any(prev[e.family] != 0):
            cs = cosine_similarity(view, prev[e.family])
            decision = angle_filter(cs, cfg.thresholds)
        else:
            cs, decision = float("nan"), FLAG
        band = zone(cs, cfg.thresholds) if not math.isnan(cs) else "invalid"
        state.filter_log.append({"round": r, "enterprise": eid, "cs": cs, "zone": band,
                                 "decision": decision})
        e.status = strike_update(e.status, decision == FLAG, cfg.thresholds)
        if decision == FLAG:
            filtered.append(eid)
        else:
            kept.setdefault(e.family, []).append(eid)

    pkg_of = {p.enterprise_id: p for p in valid}
    aggregates, n_clusters = [], 0
    for tag in sorted(kept):
        members = kept[tag]
        if len(members) > 1:
            sim = with_median_preference(pairwise_cosine([screen_view[m] for m in members]))
            assign = affinity_propagation(sim, cfg.ap_damping, cfg.ap_max_iter, cfg.ap_stable_iters)
            groups = [[members[i] for i in c] for c in assign.clusters]
        else:
            groups = [members]
        n_clusters += len(groups)
        for grp in groups:
            aggregates.append(aggregate_group(pk, [pkg_of[m] for m in grp],
                                              [index_of[m] for m in grp], "cluster", tag))
        aggregates.append(aggregate_group(pk, [pkg_of[m] for m in members],
                                          [index_of[m] for m in members], "family", tag))
    append_block(state.chain, pack_sections([a.section() for a in aggregates]), leader, r, KIND_GLOBAL)
    t2 = time.perf_counter()

    # downlink: key holders decode the new block
    agg_err = 0.0
    for agg in aggregates:
        mean = decode_aggregate(keys, agg)
        ref = cluster_fedavg([list(range(len(agg.members)))],
                             [(screen_view[m], state.enterprises[m].train.size) for m in agg.members])[0]
        agg_err = max(agg_err, float(np.max(np.abs(mean - ref))))
        base = prev[agg.family]
        if agg.label == "family":
            state.globals[agg.family] = base + mean
        else:
            for m in agg.members:
                state.enterprises[m].personal = base + mean
    t3 = time.perf_counter()

    gml, leak = _probe_gml(state, True, he_rng)
    c2s, s2c, _ = comm_cost([(p.b_rho, p.b_ch) for p in packages], [a.bits for a in aggregates])
    return RoundMetrics(
        round=r, accuracy=_evaluate(state, True), comm_c2s=c2s, comm_s2c=s2c,
        selected=list(chosen), filtered=filtered,
        blacklisted=[e.id for e in state.enterprises if e.status.blacklisted],
        clusters=n_clusters, gml=gml, leak_class=leak, agg_error=agg_err,
        client_ms=1000 * (t1 - t0 + t3 - t2), server_ms=1000 * (t2 - t1))


def _fedavg_round(state: RunState, cfg: RunConfig) -> RoundMetrics:
    """Plaintext, uncompressed, unclustered FedAvg over a random subset."""
    r = state.round
    t0 = time.perf_counter()
    prev = {tag: g.copy() for tag, g in state.globals.items()}
    chosen = select_enterprises([e.id for e in state.enterprises], cfg.hyper.select_fraction, r, cfg.seed)
    models = {eid: _client_model(state, state.enterprises[eid], prev[state.enterprises[eid].family], r)
              for eid in chosen}
    models = _apply_collusion(state, models)
    t1 = time.perf_counter()
    by_family = {}
    for eid in chosen:
        by_family.setdefault(state.enterprises[eid].family, []).append(eid)
    uploads, downlinks = [], []
    for eid in chosen:
        uploads.append((FLOAT_BITS * state.enterprises[eid].arch.n_params, 0))
    for tag, members in sorted(by_family.items()):
        state.globals[tag] = cluster_fedavg(
            [list(range(len(members)))],
            [(models[m], state.enterprises[m].train.size) for m in members])[0]
        downlinks.append(FLOAT_BITS * state.globals[tag].size)
    t2 = time.perf_counter()
    state.globals, current = prev, state.globals
    gml, leak = _probe_gml(state, False, None)
    state.globals = current
    c2s, s2c, _ = comm_cost(uploads, downlinks)
    return RoundMetrics(
        round=r, accuracy=_evaluate(state, False), comm_c2s=c2s, comm_s2c=s2c,
        selected=list(chosen), clusters=len(by_family), gml=gml, leak_class=leak,
        client_ms=1000 * (t1 - t0), server_ms=1000 * (t2 - t1))


# ---------------------------------------------------------------- experiments

@dataclass
class ExperimentResult:
    config: RunConfig
    metrics: list
    summary: dict
    state: RunState | None = None


def summarize(state: RunState, metrics: list) -> dict:
    last = metrics[-1].accuracy if metrics else {}
    return {
        "scenario": state.config.scenario,
        "rounds": len(metrics),
        "final_accuracy": dict(last),
        "cumulative_c2s": sum(m.comm_c2s for m in metrics),
        "cumulative_s2c": sum(m.comm_s2c for m in metrics),
        "cumulative_total": sum(m.comm_total for m in metrics),
        "attackers": list(state.attackers),
        "blacklisted": [e.id for e in state.enterprises if e.status.blacklisted],
        "quant_clusters": state.k,
        "gml_trace": [m.gml for m in metrics],
        "chain_blocks": len(state.chain),
    }


def write_outputs(result: ExperimentResult, out_dir) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        with (out / "metrics.csv").open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
            w.writeheader()
            for m in result.metrics:
                w.writerow(m.row())
        with (out / "filters.csv").open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=FILTER_COLUMNS)
            w.writeheader()
            for rec in (result.state.filter_log if result.state else []):
                w.writerow({**rec, "cs": "" if math.isnan(rec["cs"]) else f"{rec['cs']:.6f}"})
        (out / "config.txt").write_text(dump_config(result.config))
        lines = []
        for k, v in result.summary.items():
            if isinstance(v, dict):
                v = " ".join(f"{a}={x:.4f}" for a, x in v.items())
            elif isinstance(v, list):
                v = " ".join("nan" if isinstance(x, float) and math.isnan(x) else
                             (f"{x:.4f}" if isinstance(x, float) else str(x)) for x in v)
            lines.append(f"{k}: {v}")
        (out / "summary.txt").write_text("\n".join(lines) + "\n")
        if result.state is not None and result.config.scenario == FEDANIL_PLUS:
            dump_chain(result.state.chain, out / "chain.jsonl")
    except OSError as exc:
        raise OSError(f"failed writing experiment outputs under {out}: {exc}") from exc
    return out


def run_experiment(config: RunConfig, out_dir=None) -> ExperimentResult:
    """Run ``config.hyper.rounds`` rounds and optionally write CSV, summary and chain."""
    state = init_state(config)
    metrics = []
    for _ in range(config.hyper.rounds):
        state, m = run_round(state)
        metrics.append(m)
    result = ExperimentResult(config, metrics, summarize(state, metrics), state)
    target = out_dir or config.output_dir
    if target:
        write_outputs(result, target)
    return result


# ------------------------------------------------------------------ theorems

@dataclass
class TheoremReport:
    beta: float
    eta: float
    losses: list
    monotone: bool
    max_increase: float
    large_step_violations: int
    mixing_error: float
    mixing_zero_error: float
    tolerance: float = 1e-9
    mixing_tolerance: float = 1e-12

    @property
    def mixing_ok(self) -> bool:
        return self.mixing_error <= self.mixing_tolerance and self.mixing_zero_error == 0.0

    @property
    def passed(self) -> bool:
        return self.monotone and self.mixing_ok

    def lines(self) -> list:
        return [
            f"monotonicity: {'PASS' if self.monotone else 'FAIL'} "
            f"(beta={self.beta:.6g}, eta={self.eta:.6g}, rounds={len(self.losses) - 1}, "
            f"max increase={self.max_increase:.3e})",
            f"large step eta=10/beta: {self.large_step_violations} increasing rounds (recorded only)",
            f"mixing identity: {'PASS' if self.mixing_ok else 'FAIL'} "
            f"(mu=0.2 error={self.mixing_error:.3e}, mu=0 error={self.mixing_zero_error:.3e})",
        ]


def smoothness_bound(features) -> float:
    """Gradient-Lipschitz constant of mean softmax cross-entropy over ``[x, 1]`` inputs."""
    xt = np.hstack([features, np.ones((features.shape[0], 1))])
    return 0.5 * float(np.linalg.eigvalsh(xt.T @ xt / xt.shape[0])[-1])


def _federated_gd(params, sets, eta, rounds):
    archs = [LINEAR] * len(sets)
    losses = [global_loss([(params, s.size) for s in sets], archs, sets)]
    total = sum(s.size for s in sets)
    for _ in range(rounds):
        step = sum(s.size * gradient(params, LINEAR, s) for s in sets) / total
        params = params - eta * step
        losses.append(global_loss([(params, s.size) for s in sets], archs, sets))
    return losses


def check_theorems(config: RunConfig | None = None, rounds: int | None = None) -> TheoremReport:
    """Full-batch convex monotonicity check plus the undefended mixing identity."""
    config = config or RunConfig()
    seed = config.seed
    rounds = config.hyper.rounds if rounds is None else rounds
    fam = default_families(_seed(seed, 1), config.noise_scale)[0]
    n_ent = max(1, min(10, config.hyper.enterprises))
    pool = generate_family(fam, 50 * n_ent, _seed(seed, 20))
    plan = dirichlet_partition(pool, n_ent, config.alpha, _seed(seed, 21), min_size=2)
    sets = [pool.subset(ix) for ix in plan.indices]
    beta = smoothness_bound(pool.features)
    w0 = init_params(LINEAR, np.random.default_rng(_seed(seed, 22)))
    losses = _federated_gd(w0, sets, 0.9 / beta, rounds)
    diffs = np.diff(losses)
    tol = 1e-9
    big = _federated_gd(w0, sets, 10.0 / beta, rounds)
    violations = int(np.sum(np.diff(big) > tol))

    # dyadic values keep the weighted sums exact, so mu=0 reproduces the honest model bit for bit
    rng = np.random.default_rng(_seed(seed, 23))
    honest = rng.integers(-4096, 4096, size=LINEAR.n_params) / 1024.0
    intruder = rng.integers(-4096, 4096, size=LINEAR.n_params) / 1024.0
    ups = [(honest, 10)] * 8 + [(intruder, 10)] * 2
    mixed = cluster_fedavg([list(range(10))], ups)[0]
    err = float(np.max(np.abs(mixed - atk.undefended_mix(honest, intruder, 0.2))))
    zero = cluster_fedavg([list(range(10))], [(honest, 10)] * 10)[0]
    zero_err = float(np.max(np.abs(zero - atk.undefended_mix(honest, intruder, 0.0))))
    return TheoremReport(beta, 0.9 / beta, [float(x) for x in losses],
                         bool(np.all(diffs <= tol)), float(diffs.max()) if diffs.size else 0.0,
                         violations, err, zero_err, tol)
