"""Append-only hash-chained ledgers standing in for distributed ledger services.

Three chains back the trading pipeline: a transaction chain and one
reputation chain per role.  Consensus, replication, and contract execution
are simulated away; what remains is the data contract — canonical block
serialization, SHA-256 linkage, tamper detection, and reputation queries.
"""

from __future__ import annotations

import hashlib
import json
import struct
import time
from dataclasses import dataclass
from typing import Callable

from .settlement import INITIAL_REPUTATION

HASH_SIZE = 32
GENESIS_PREV_HASH = b"\x00" * HASH_SIZE


class IntegrityError(RuntimeError):
    """A chain failed verification where an intact chain was required."""


def canonical_payload(payload: dict) -> bytes:
    """Canonical JSON bytes: sorted keys, no whitespace, ASCII escapes."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def block_hash(index: int, timestamp: int, prev_hash: bytes, payload: dict) -> bytes:
    """SHA-256 over the canonical serialization of all committed fields.

    Integers are fixed-width big-endian so identical chains hash identically
    on any platform.
    """
    header = struct.pack(">QQ", index, timestamp)
    return hashlib.sha256(header + prev_hash + canonical_payload(payload)).digest()


@dataclass(frozen=True)
class Block:
    index: int
    timestamp: int  # epoch milliseconds, injected by the chain's clock
    prev_hash: bytes
    payload: dict
    hash: bytes


def _now_ms() -> int:
    return time.time_ns() // 1_000_000


class Chain:
    """A hash-linked block list starting from a fixed genesis block.

    The clock is injectable so tests and experiments can produce
    byte-identical chains.  Single writer per chain; blocks are immutable
    once appended.
    """

    def __init__(self, clock: Callable[[], int] | None = None):
        self.clock = clock or _now_ms
        genesis = Block(0, 0, GENESIS_PREV_HASH, {},
                        block_hash(0, 0, GENESIS_PREV_HASH, {}))
        self.blocks: list[Block] = [genesis]

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    def append(self, payload: dict) -> Block:
        """Seal a payload into a new block linked to the current tip.

        The tip (and its link to its predecessor) is re-verified first, so a
        corrupted tail cannot be silently extended.
        """
        tip = self.tip
        if block_hash(tip.index, tip.timestamp, tip.prev_hash, tip.payload) != tip.hash:
            raise IntegrityError(f"chain tip at index {tip.index} fails hash check")
        if len(self.blocks) > 1 and tip.prev_hash != self.blocks[-2].hash:
            raise IntegrityError(f"chain tip at index {tip.index} is unlinked")
        index = tip.index + 1
        timestamp = int(self.clock())
        block = Block(index, timestamp, tip.hash, payload,
                      block_hash(index, timestamp, tip.hash, payload))
        self.blocks.append(block)
        return block


@dataclass(frozen=True)
class VerificationResult:
    ok: bool
    bad_index: int | None = None

    def __bool__(self) -> bool:
        return self.ok


def verify_chain(chain: Chain) -> VerificationResult:
    """Recompute every block hash and link; report the first bad index.

    Only prefix integrity is guaranteed: truncating the tail of a valid
    chain still verifies.
    """
    prev: Block | None = None
    for block in chain.blocks:
        if prev is None:
            if block.index != 0 or block.prev_hash != GENESIS_PREV_HASH:
                return VerificationResult(False, block.index)
        else:
            if block.index != prev.index + 1 or block.prev_hash != prev.hash:
                return VerificationResult(False, block.index)
        if block_hash(block.index, block.timestamp, block.prev_hash, block.payload) != block.hash:
            return VerificationResult(False, block.index)
        prev = block
    return VerificationResult(True, None)


def reputation_update_payload(participant_id: str, role: str, old_score: float,
                              new_score: float, transaction_id: str,
                              outcome: str) -> dict:
    """Payload schema for one reputation change, with its causing transaction."""
    return {
        "kind": "reputation_update",
        "participant": participant_id,
        "role": role,
        "old_score": old_score,
        "new_score": new_score,
        "cause": {"transaction": transaction_id, "outcome": outcome},
    }


def _updates(chain: Chain, participant_id: str):
    for block in chain.blocks:
        p = block.payload
        if p.get("kind") == "reputation_update" and p.get("participant") == participant_id:
            yield p


def latest_reputation(chain: Chain, participant_id: str) -> float:
    """Most recent recorded score, or the newcomer default if none exists."""
    score = INITIAL_REPUTATION
    for update in _updates(chain, participant_id):
        score = update["new_score"]
    return score


def reputation_history(chain: Chain, participant_id: str) -> list[dict]:
    """All of a participant's reputation updates in block order."""
    return list(_updates(chain, participant_id))


# --- file persistence --------------------------------------------------------
#
# Chains persist as an append-only sequence of length-prefixed block records:
# a 4-byte big-endian length followed by that many bytes of block JSON
# (hashes hex-encoded).

def _block_to_bytes(block: Block) -> bytes:
    doc = {
        "index": block.index,
        "timestamp": block.timestamp,
        "prev_hash": block.prev_hash.hex(),
        "payload": block.payload,
        "hash": block.hash.hex(),
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_chain(chain: Chain, path) -> None:
    with open(path, "wb") as fh:
        for block in chain.blocks:
            record = _block_to_bytes(block)
            fh.write(struct.pack(">I", len(record)))
            fh.write(record)


def load_chain(path, clock: Callable[[], int] | None = None) -> Chain:
    """Read a chain file back; contents are not implicitly verified."""
    chain = Chain(clock=clock)
    blocks: list[Block] = []
    with open(path, "rb") as fh:
        while True:
            prefix = fh.read(4)
            if not prefix:
                break
            if len(prefix) != 4:
                raise IntegrityError(f"{path}: truncated length prefix")
            (length,) = struct.unpack(">I", prefix)
            record = fh.read(length)
            if len(record) != length:
                raise IntegrityError(f"{path}: truncated block record")
            doc = json.loads(record.decode("utf-8"))
            blocks.append(Block(
                index=doc["index"],
                timestamp=doc["timestamp"],
                prev_hash=bytes.fromhex(doc["prev_hash"]),
                payload=doc["payload"],
                hash=bytes.fromhex(doc["hash"]),
            ))
    if blocks:
        chain.blocks = blocks
    return chain
