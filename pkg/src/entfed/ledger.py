"""Simulated consortium ledger: hash-linked blocks, simple and leader miners.

There is a single sequencer with no forks. Every block's hash covers
``index || prev_hash || round || payload_digest || miner_id``, and its payload
is bound to the block through ``payload_digest = SHA-256(kind || payload)``.
"""

from __future__ import annotations

import base64
import hashlib
import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ContractError, LedgerError

GENESIS_PREV = bytes(32)

KIND_GENESIS = "genesis"
KIND_UPDATES = "updates"
KIND_GLOBAL = "global"
KINDS = (KIND_GENESIS, KIND_UPDATES, KIND_GLOBAL)

SIMPLE = "simple"
LEADER = "leader"


@dataclass(frozen=True)
class Miner:
    id: str
    role: str = SIMPLE
    reward: int = 0


@dataclass(frozen=True)
class Block:
    index: int
    prev_hash: bytes
    round: int
    kind: str
    payload: bytes
    payload_digest: bytes
    miner_id: str
    hash: bytes

    def to_record(self) -> dict:
        return {
            "index": self.index,
            "round": self.round,
            "kind": self.kind,
            "miner": self.miner_id,
            "prev_hash": self.prev_hash.hex(),
            "payload_digest": self.payload_digest.hex(),
            "hash": self.hash.hex(),
            "payload": base64.b64encode(self.payload).decode(),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Block":
        return cls(int(rec["index"]), bytes.fromhex(rec["prev_hash"]), int(rec["round"]),
                   rec["kind"], base64.b64decode(rec["payload"]),
                   bytes.fromhex(rec["payload_digest"]), rec["miner"], bytes.fromhex(rec["hash"]))


def payload_digest(kind: str, payload: bytes) -> bytes:
    return hashlib.sha256(kind.encode() + b"\x00" + bytes(payload)).digest()


def block_hash(index: int, prev_hash: bytes, round_no: int, digest: bytes, miner_id: str) -> bytes:
    mid = miner_id.encode()
    pre = (struct.pack(">Q", index) + bytes(prev_hash) + struct.pack(">Q", round_no)
           + bytes(digest) + struct.pack(">H", len(mid)) + mid)
    return hashlib.sha256(pre).digest()


@dataclass
class Chain:
    blocks: list = field(default_factory=list)

    def __len__(self):
        return len(self.blocks)

    def __getitem__(self, i):
        return self.blocks[i]

    @property
    def tip_hash(self) -> bytes:
        return self.blocks[-1].hash if self.blocks else GENESIS_PREV

    def latest(self, kind: str):
        for b in reversed(self.blocks):
            if b.kind == kind:
                return b
        return None


def append_block(chain: Chain, payload: bytes, miner: Miner, round_no: int,
                 kind: str = KIND_UPDATES) -> Block:
    """Link a new block to the chain tip. Only the leader may append global models."""
    if kind not in KINDS:
        raise ContractError(f"unknown block kind {kind!r}")
    if kind == KIND_GLOBAL and miner.role != LEADER:
        raise LedgerError(f"miner {miner.id} is not the leader and cannot append a global model")
    if round_no < 0:
        raise ContractError("round must be non-negative")
    index = len(chain.blocks)
    prev = chain.tip_hash
    digest = payload_digest(kind, payload)
    h = block_hash(index, prev, round_no, digest, miner.id)
    block = Block(index, prev, int(round_no), kind, bytes(payload), digest, miner.id, h)
    chain.blocks.append(block)
    return block


def verify_chain(chain) -> int | None:
    """Return ``None`` if every link checks out, else the first bad block index."""
    blocks = chain.blocks if isinstance(chain, Chain) else list(chain)
    prev = GENESIS_PREV
    for pos, b in enumerate(blocks):
        if b.index != pos or b.prev_hash != prev or b.kind not in KINDS:
            return pos
        if payload_digest(b.kind, b.payload) != b.payload_digest:
            return pos
        if block_hash(b.index, b.prev_hash, b.round, b.payload_digest, b.miner_id) != b.hash:
            return pos
        prev = b.hash
    return None


def select_leader(miners) -> str:
    """Highest reward wins; ties go to the lowest id."""
    miners = list(miners)
    if not miners:
        raise ContractError("no miners to choose a leader from")
    best = min(miners, key=lambda m: (-m.reward, m.id))
    return best.id


def reward_update(miner: Miner, validated_count: int) -> Miner:
    if validated_count < 0:
        raise ContractError("validated count must be non-negative")
    return replace(miner, reward=miner.reward + int(validated_count))


def assign_roles(miners, leader_id: str) -> list[Miner]:
    return [replace(m, role=LEADER if m.id == leader_id else SIMPLE) for m in miners]


def dump_chain(chain: Chain, path) -> None:
    with open(path, "w") as fh:
        for b in chain.blocks:
            fh.write(json.dumps(b.to_record(), sort_keys=True) + "\n")


def load_chain(path) -> Chain:
    blocks = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            blocks.append(Block.from_record(json.loads(line)))
    return Chain(blocks)
