"""Chain storage and validation: full ground-station ledgers, capacity-bounded
drone ledgers with block replacement, and transaction access control.

Each ledger instance is owned by exactly one agent; mutation is
single-writer and reads can be snapshotted freely.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Set, Tuple

from . import crypto, txbuild, wire
from .crypto import HashBackend, KeyRegistry
from .wire import AccessClass, Block, BlockTarget, Transaction, WireError


class LedgerError(Exception):
    def __init__(self, code: str, message: str = ""):
        super().__init__(message or code)
        self.code = code


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    detail: str = ""


#: validation issue codes, in check order
CHECK_ORDER = (
    "block_id", "prev_hash", "merkle_root", "signature",
    "ta_fidelity", "access_enc", "block_type", "duplicate_tx",
)


def validate_block(expected_id: int, tip_digest: bytes, block: Block,
                   registry: KeyRegistry, backend: HashBackend,
                   seen_tx: Optional[Callable[[Tuple[int, int]], bool]] = None,
                   verify_signatures: bool = True) -> List[ValidationIssue]:
    """Run the full acceptance checklist for a candidate successor block.

    Returns an empty list when the block is valid; otherwise one issue per
    failed check (any issue means a Block ERROR vote).
    """
    issues: List[ValidationIssue] = []
    header = block.header

    if header.block_id != expected_id:
        issues.append(ValidationIssue(
            "block_id", f"got {header.block_id}, expected {expected_id}"))
    if header.prev_hash != tip_digest:
        issues.append(ValidationIssue("prev_hash", "does not match the tip digest"))

    try:
        leaf_digests = [backend.digest224(wire.encode_transaction(tx))
                        for tx in block.transactions]
        recomputed = wire.merkle_root(leaf_digests, backend.digest224)
        if recomputed != header.merkle_root:
            issues.append(ValidationIssue("merkle_root", "does not recompute"))
    except WireError as exc:
        issues.append(ValidationIssue("merkle_root", f"body unencodable: {exc}"))

    if verify_signatures:
        for i, tx in enumerate(block.transactions):
            if not registry.has_node(tx.creator):
                issues.append(ValidationIssue(
                    "signature", f"tx {i}: unknown creator {tx.creator}"))
            elif not txbuild.verify_transaction(tx, registry, backend):
                issues.append(ValidationIssue("signature", f"tx {i}: bad signature"))

    if len(header.ta_list) != len(block.transactions):
        issues.append(ValidationIssue("ta_fidelity", "entry count mismatch"))
    else:
        for i, (entry, tx) in enumerate(zip(header.ta_list, block.transactions)):
            if (entry.tx_index != i or entry.access_class is not tx.access_class
                    or entry.owners != tx.owners):
                issues.append(ValidationIssue("ta_fidelity", f"entry {i} differs"))

    for i, tx in enumerate(block.transactions):
        try:
            tx.validate()
        except WireError as exc:
            issues.append(ValidationIssue("access_enc", f"tx {i}: {exc}"))

    for i, tx in enumerate(block.transactions):
        if tx.block_target is not header.block_type:
            issues.append(ValidationIssue("block_type", f"tx {i} targets {tx.block_target.name}"))

    keys_in_block: Set[Tuple[int, int]] = set()
    for i, tx in enumerate(block.transactions):
        key = tx.key()
        if key in keys_in_block or (seen_tx is not None and seen_tx(key)):
            issues.append(ValidationIssue("duplicate_tx", f"tx {i}: {key} already on chain"))
        keys_in_block.add(key)

    return issues


class FullLedger:
    """Append-only chain of committed blocks with a (creator, tx_seq) index."""

    def __init__(self, backend: HashBackend):
        self._backend = backend
        self.blocks: List[Block] = []
        self.tip_digest: bytes = wire.ZERO_HASH
        self._tx_index: Dict[Tuple[int, int], Tuple[int, int]] = {}

    @property
    def next_block_id(self) -> int:
        return len(self.blocks)

    @property
    def tip_id(self) -> Optional[int]:
        return self.blocks[-1].block_id if self.blocks else None

    def append_block(self, block: Block) -> None:
        expected = self.next_block_id
        if block.block_id < expected:
            raise LedgerError("duplicate", f"block {block.block_id} already appended")
        if block.block_id > expected:
            raise LedgerError("gap", f"block {block.block_id} leaves a gap at {expected}")
        self.blocks.append(block)
        self.tip_digest = wire.block_hash(wire.encode_header(block.header),
                                          self._backend.digest224)
        for i, tx in enumerate(block.transactions):
            self._tx_index[tx.key()] = (block.block_id, i)

    def has_tx(self, key: Tuple[int, int]) -> bool:
        return key in self._tx_index

    def get_tx(self, key: Tuple[int, int]) -> Optional[Transaction]:
        loc = self._tx_index.get(key)
        if loc is None:
            return None
        block_id, idx = loc
        return self.blocks[block_id].transactions[idx]

    def verify_chain(self) -> None:
        """Recompute every prev_hash link and Merkle root; raise on breakage."""
        digest = wire.ZERO_HASH
        for expected_id, block in enumerate(self.blocks):
            if block.block_id != expected_id:
                raise LedgerError("gap", f"id {block.block_id} at height {expected_id}")
            if block.header.prev_hash != digest:
                raise LedgerError("prev_hash", f"broken link at block {expected_id}")
            leaves = [self._backend.digest224(wire.encode_transaction(tx))
                      for tx in block.transactions]
            if block.transactions and wire.merkle_root(leaves, self._backend.digest224) \
                    != block.header.merkle_root:
                raise LedgerError("merkle_root", f"bad root at block {expected_id}")
            digest = wire.block_hash(wire.encode_header(block.header),
                                     self._backend.digest224)

    def export_file(self, path) -> None:
        with open(path, "wb") as handle:
            for block in self.blocks:
                handle.write(wire.encode_block(block))

    @classmethod
    def import_file(cls, path, backend: HashBackend,
                    registry: Optional[KeyRegistry] = None) -> "FullLedger":
        """Load a chain file, validating structure (and signatures when a
        registry is supplied)."""
        ledger = cls(backend)
        with open(path, "rb") as handle:
            data = handle.read()
        offset = 0
        while offset < len(data):
            block, consumed = wire.decode_block_prefix(data[offset:])
            offset += consumed
            expected = ledger.next_block_id
            issues = validate_block(expected, ledger.tip_digest, block,
                                    registry, backend, seen_tx=ledger.has_tx,
                                    verify_signatures=registry is not None)
            if issues:
                raise LedgerError(issues[0].code,
                                  f"import failed at block {expected}: {issues[0].detail}")
            ledger.append_block(block)
        return ledger


class Verdict(Enum):
    ALLOW = "allow"
    DENY = "deny"


@dataclass(frozen=True)
class IncidentDraft:
    """Material for the security-incident transaction a denial produces."""

    subject: int
    reason: str
    tx_key: Tuple[int, int]

    def payload(self) -> bytes:
        body = f"incident subject={self.subject} reason={self.reason} " \
               f"tx={self.tx_key[0]}:{self.tx_key[1]}".encode()
        return body


@dataclass(frozen=True)
class AccessDecision:
    verdict: Verdict
    incident: Optional[IncidentDraft] = None

    def __post_init__(self) -> None:
        if self.verdict is Verdict.DENY and self.incident is None:
            raise LedgerError("incident", "deny decisions must carry an incident draft")


def access_request_bytes(requester: int, creator: int, tx_seq: int) -> bytes:
    return b"txreq" + struct.pack("<IIQ", requester, creator, tx_seq)


def sign_access_request(requester: int, creator: int, tx_seq: int,
                        registry: KeyRegistry, backend: HashBackend) -> bytes:
    """Requests are signed under the permanent-security suite rules."""
    digest = backend.digest224(access_request_bytes(requester, creator, tx_seq))
    return crypto.sign(crypto.SUITE_S1, registry.public_key(requester), digest,
                       backend.digest224)


def check_access(requester: int, request_signature: bytes, tx: Transaction,
                 registry: KeyRegistry, backend: HashBackend) -> AccessDecision:
    """Access-control decision for one transaction request.

    The request signature is verified before any disclosure; a denial
    always carries a security-incident draft naming the requester.
    """
    digest = backend.digest224(access_request_bytes(requester, tx.creator, tx.tx_seq))
    genuine = registry.has_node(requester) and crypto.verify(
        crypto.SUITE_S1, registry.public_key(requester), digest,
        request_signature, backend.digest224)
    if not genuine:
        return AccessDecision(Verdict.DENY, IncidentDraft(requester, "forgery", tx.key()))
    if (tx.access_class is AccessClass.PUBLIC or requester in tx.owners
            or registry.is_ca(requester)):
        return AccessDecision(Verdict.ALLOW)
    return AccessDecision(Verdict.DENY,
                          IncidentDraft(requester, "unauthorized-access", tx.key()))


class BraPolicy(Enum):
    OLDEST_FIRST = "oldest_first"
    OUTDATED_FIRST = "outdated_first"


DEFAULT_DRONE_CAPACITY = 4 * 1024 * 1024


class DroneLedger:
    """Capacity-bounded partial chain held by one drone.

    Only drone-class blocks that name this drone in their access list are
    stored; the Block Replacement Algorithm frees space when the capacity
    would be exceeded.  Predecessor links are not verified here: the
    partial chain is a cache, not a validation source.
    """

    def __init__(self, drone_id: int, capacity_bytes: int = DEFAULT_DRONE_CAPACITY,
                 policy: BraPolicy = BraPolicy.OLDEST_FIRST):
        self.drone_id = drone_id
        self.capacity_bytes = capacity_bytes
        self.policy = policy
        self.blocks: List[Block] = []  # ascending block_id
        self.current_bytes = 0
        self._sizes: Dict[int, int] = {}
        self._tx_index: Dict[Tuple[int, int], Tuple[int, int]] = {}

    def _owned_txs(self, block: Block) -> List[Transaction]:
        return [tx for tx in block.transactions if self.drone_id in tx.owners]

    def _is_outdated(self, block: Block, newest: Dict[Tuple[int, int], int]) -> bool:
        owned = self._owned_txs(block)
        if not owned:
            return False
        for tx in owned:
            if tx.topic == 0:
                return False
            latest = newest.get((tx.creator, tx.topic), tx.created_at_us)
            if latest <= tx.created_at_us:
                return False
        return True

    def _newest_by_topic(self, incoming: Block) -> Dict[Tuple[int, int], int]:
        newest: Dict[Tuple[int, int], int] = {}
        for block in list(self.blocks) + [incoming]:
            for tx in block.transactions:
                if tx.topic == 0:
                    continue
                key = (tx.creator, tx.topic)
                if tx.created_at_us > newest.get(key, -1):
                    newest[key] = tx.created_at_us
        return newest

    def store_block(self, block: Block) -> List[int]:
        """Insert a block, evicting per the replacement policy; returns the
        evicted block ids in eviction order."""
        if block.header.block_type is not BlockTarget.BLOCK_T1:
            raise LedgerError("block_type", "drones store only drone-class blocks")
        if not self._owned_txs(block):
            raise LedgerError("not_owner", "block names no transaction owned by this drone")
        if block.block_id in self._sizes:
            return []  # exactly-once delivery; re-sends are idempotent
        size = wire.encoded_block_size(block)
        if size > self.capacity_bytes:
            raise LedgerError("block_too_large",
                              f"{size} bytes exceeds capacity {self.capacity_bytes}")

        evicted: List[int] = []
        if self.current_bytes + size > self.capacity_bytes and \
                self.policy is BraPolicy.OUTDATED_FIRST:
            newest = self._newest_by_topic(block)
            for candidate in [b for b in self.blocks if self._is_outdated(b, newest)]:
                if self.current_bytes + size <= self.capacity_bytes:
                    break
                evicted.append(candidate.block_id)
                self._remove(candidate)
        while self.current_bytes + size > self.capacity_bytes:
            oldest = self.blocks[0]
            evicted.append(oldest.block_id)
            self._remove(oldest)

        index = len([b for b in self.blocks if b.block_id < block.block_id])
        self.blocks.insert(index, block)
        self._sizes[block.block_id] = size
        self.current_bytes += size
        for i, tx in enumerate(block.transactions):
            self._tx_index[tx.key()] = (block.block_id, i)
        return evicted

    def _remove(self, block: Block) -> None:
        self.blocks.remove(block)
        self.current_bytes -= self._sizes.pop(block.block_id)
        for tx in block.transactions:
            self._tx_index.pop(tx.key(), None)

    def has_tx(self, key: Tuple[int, int]) -> bool:
        return key in self._tx_index

    def find_transaction(self, key: Tuple[int, int]) -> Optional[Transaction]:
        loc = self._tx_index.get(key)
        if loc is None:
            return None
        for block in self.blocks:
            if block.block_id == loc[0]:
                return block.transactions[loc[1]]
        return None

    def block_ids(self) -> List[int]:
        return [b.block_id for b in self.blocks]


def ta_owner_ids(block: Block) -> Set[int]:
    """All node ids named as owners anywhere in a block's access list."""
    owners: Set[int] = set()
    for entry in block.header.ta_list:
        owners.update(entry.owners)
    return owners
