"""Canonical byte-exact encodings for transactions, headers, and blocks.

All integers are little-endian.  Transaction layout:

    creator(4) tx_seq(8) created_at_us(8) topic(4) access_class(1)
    owner_count(2) owners(4*n) security_class(1) block_target(1)
    enc_id(1) hash_id(1) enc_par_len(2)+enc_par hash_par_len(2)+hash_par
    payload_len(4)+payload sig_len(1)+signature

Block header layout (80 bytes before the access list):

    version(1) block_id(8) block_type(1) miner(4) timestamp_us(8)
    prev_hash(28) merkle_root(28) tx_count(2) ta_entries...

Each access-list entry is tx_index(2) access_class(1) owner_count(2)
owners(4 each).  The block hash covers the header bytes only; the Merkle
root commits to the body.  Values are immutable after construction and all
operations here are pure functions.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, List, Sequence, Tuple

from .crypto import (
    DIGEST_LEN,
    HashVariant,
    SecurityClass,
    spongent224,
    suite_for_class,
)

DigestFn = Callable[[bytes], bytes]

HASH_LEN = DIGEST_LEN[HashVariant.SPONGENT_224]
ZERO_HASH = bytes(HASH_LEN)
WIRE_VERSION = 1

TX_FIXED_LEN = 31
HEADER_FIXED_LEN = 80
MAX_SIGNATURE_LEN = 255


class WireError(Exception):
    """Raised for any malformed, inconsistent, or truncated encoding."""


class Role(IntEnum):
    CA = 1
    GCS = 2
    TGCS = 3
    UAV = 4
    BO = 5


class AccessClass(IntEnum):
    """Who may read a transaction: everyone, one owner, or a group."""

    PUBLIC = 1
    SINGLE = 2
    GROUP = 3


class BlockTarget(IntEnum):
    """BLOCK_T1 blocks are stored on drones and ground stations; BLOCK_T2
    blocks stay on the ground stations only."""

    BLOCK_T1 = 1
    BLOCK_T2 = 2


@dataclass(frozen=True)
class NodeId:
    """Registered network identity; numeric_id is what goes on the wire."""

    numeric_id: int
    role: Role
    owner_real_id: str = ""

    def __post_init__(self) -> None:
        if not 0 <= self.numeric_id <= 0xFFFFFFFF:
            raise WireError(f"numeric_id {self.numeric_id} out of 32-bit range")
        if self.role is Role.UAV and not self.owner_real_id:
            raise WireError("UAV identities must carry a real owner id")


@dataclass(frozen=True)
class Transaction:
    creator: int
    tx_seq: int
    created_at_us: int
    topic: int
    access_class: AccessClass
    owners: Tuple[int, ...]
    security_class: SecurityClass
    block_target: BlockTarget
    enc_id: int
    hash_id: int
    enc_par: str
    hash_par: str
    payload: bytes
    signature: bytes

    def key(self) -> Tuple[int, int]:
        return (self.creator, self.tx_seq)

    def plaintext_len(self) -> int:
        """Original payload size before sealing (the BTO baseline)."""
        if self.access_class is AccessClass.PUBLIC:
            return len(self.payload)
        suite = suite_for_class(self.security_class)
        return len(self.payload) - 8 - suite.tag_len

    def validate(self) -> None:
        n_owners = len(self.owners)
        bad_owner_count = (
            (self.access_class is AccessClass.PUBLIC and n_owners != 0)
            or (self.access_class is AccessClass.SINGLE and n_owners != 1)
            or (self.access_class is AccessClass.GROUP and n_owners < 2)
        )
        if bad_owner_count:
            raise WireError(
                f"access class {self.access_class.name} cannot have {n_owners} owners"
            )
        if not self.payload:
            raise WireError("payload must be non-empty")
        suite = suite_for_class(self.security_class)
        if self.access_class is AccessClass.PUBLIC:
            if self.enc_id != 0 or self.enc_par:
                raise WireError("public transactions carry no encryption metadata")
        else:
            if self.enc_id != suite.suite_id:
                raise WireError(
                    f"enc_id {self.enc_id} does not match suite {suite.suite_id}"
                )
            if len(self.payload) <= 8 + suite.tag_len:
                raise WireError("sealed payload shorter than nonce plus tag")
        if self.hash_id != suite.hash_variant.value:
            raise WireError(f"hash_id {self.hash_id} does not match the suite")
        if len(self.signature) != suite.signature_len:
            raise WireError(
                f"signature length {len(self.signature)} != suite's "
                f"{suite.signature_len}"
            )


@dataclass(frozen=True)
class TAEntry:
    """Header mirror of one transaction's access class and owners."""

    tx_index: int
    access_class: AccessClass
    owners: Tuple[int, ...]


@dataclass(frozen=True)
class BlockHeader:
    version: int
    block_id: int
    block_type: BlockTarget
    miner: int
    timestamp_us: int
    prev_hash: bytes
    merkle_root: bytes
    ta_list: Tuple[TAEntry, ...]


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    transactions: Tuple[Transaction, ...]

    @property
    def block_id(self) -> int:
        return self.header.block_id


def _signed_parts(tx: Transaction) -> List[bytes]:
    enc_par = tx.enc_par.encode()
    hash_par = tx.hash_par.encode()
    return [
        struct.pack("<IQQIBH", tx.creator, tx.tx_seq, tx.created_at_us,
                    tx.topic, tx.access_class, len(tx.owners)),
        struct.pack(f"<{len(tx.owners)}I", *tx.owners),
        struct.pack("<BBBB", tx.security_class, tx.block_target, tx.enc_id, tx.hash_id),
        struct.pack("<H", len(enc_par)), enc_par,
        struct.pack("<H", len(hash_par)), hash_par,
        struct.pack("<I", len(tx.payload)), tx.payload,
    ]


def signing_bytes(tx: Transaction) -> bytes:
    """Every encoded field preceding the signature length byte; this is the
    content a creator signs and a verifier re-digests."""
    return b"".join(_signed_parts(tx))


def encode_transaction(tx: Transaction) -> bytes:
    tx.validate()
    if len(tx.signature) > MAX_SIGNATURE_LEN:
        raise WireError("signature too long for wire format")
    parts = _signed_parts(tx)
    parts.append(struct.pack("<B", len(tx.signature)))
    parts.append(tx.signature)
    return b"".join(parts)


def encoded_tx_size(tx: Transaction) -> int:
    """Wire size without materializing the encoding."""
    return (TX_FIXED_LEN + 4 * len(tx.owners)
            + 2 + len(tx.enc_par) + 2 + len(tx.hash_par)
            + 4 + len(tx.payload) + 1 + len(tx.signature))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise WireError("truncated input")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def done(self) -> bool:
        return self.pos == len(self.data)


def _decode_transaction(reader: _Reader) -> Transaction:
    creator, tx_seq, created, topic, access_raw, owner_count = reader.unpack("<IQQIBH")
    try:
        access = AccessClass(access_raw)
    except ValueError:
        raise WireError(f"unknown access class {access_raw}") from None
    owners = reader.unpack(f"<{owner_count}I") if owner_count else ()
    sec_raw, target_raw, enc_id, hash_id = reader.unpack("<BBBB")
    try:
        sec = SecurityClass(sec_raw)
        target = BlockTarget(target_raw)
    except ValueError:
        raise WireError("unknown security class or block target") from None
    (enc_par_len,) = reader.unpack("<H")
    enc_par = reader.take(enc_par_len).decode()
    (hash_par_len,) = reader.unpack("<H")
    hash_par = reader.take(hash_par_len).decode()
    (payload_len,) = reader.unpack("<I")
    payload = reader.take(payload_len)
    (sig_len,) = reader.unpack("<B")
    signature = reader.take(sig_len)
    tx = Transaction(creator, tx_seq, created, topic, access, tuple(owners),
                     sec, target, enc_id, hash_id, enc_par, hash_par,
                     payload, signature)
    tx.validate()
    return tx


def decode_transaction(data: bytes) -> Transaction:
    reader = _Reader(data)
    tx = _decode_transaction(reader)
    if not reader.done():
        raise WireError("trailing bytes after signature")
    return tx


def ta_list_for(transactions: Sequence[Transaction]) -> Tuple[TAEntry, ...]:
    return tuple(
        TAEntry(i, tx.access_class, tx.owners) for i, tx in enumerate(transactions)
    )


def encode_header(header: BlockHeader) -> bytes:
    if len(header.prev_hash) != HASH_LEN or len(header.merkle_root) != HASH_LEN:
        raise WireError("header digests must be 28 bytes")
    parts = [
        struct.pack("<BQBIQ", header.version, header.block_id, header.block_type,
                    header.miner, header.timestamp_us),
        header.prev_hash,
        header.merkle_root,
        struct.pack("<H", len(header.ta_list)),
    ]
    for entry in header.ta_list:
        parts.append(struct.pack("<HBH", entry.tx_index, entry.access_class,
                                 len(entry.owners)))
        parts.append(struct.pack(f"<{len(entry.owners)}I", *entry.owners))
    return b"".join(parts)


def encoded_header_size(ta_list: Sequence[TAEntry]) -> int:
    return HEADER_FIXED_LEN + sum(5 + 4 * len(e.owners) for e in ta_list)


def encoded_block_size(block: Block) -> int:
    return (encoded_header_size(block.header.ta_list)
            + sum(encoded_tx_size(tx) for tx in block.transactions))


def _check_ta(header: BlockHeader, transactions: Sequence[Transaction]) -> None:
    if len(header.ta_list) != len(transactions):
        raise WireError("access list length does not match transaction count")
    for i, (entry, tx) in enumerate(zip(header.ta_list, transactions)):
        if (entry.tx_index != i or entry.access_class is not tx.access_class
                or entry.owners != tx.owners):
            raise WireError(f"access list entry {i} does not mirror its transaction")
    for tx in transactions:
        if tx.block_target is not header.block_type:
            raise WireError("transaction block target differs from the block type")


def encode_block(block: Block) -> bytes:
    _check_ta(block.header, block.transactions)
    parts = [encode_header(block.header)]
    parts.extend(encode_transaction(tx) for tx in block.transactions)
    return b"".join(parts)


def decode_block(data: bytes) -> Block:
    block, consumed = decode_block_prefix(data)
    if consumed != len(data):
        raise WireError("trailing bytes after block body")
    return block


def decode_block_prefix(data: bytes) -> Tuple[Block, int]:
    """Decode one block from the head of a buffer (blocks are
    self-delimiting, so chain files are plain concatenations)."""
    reader = _Reader(data)
    version, block_id, type_raw, miner, timestamp = reader.unpack("<BQBIQ")
    try:
        block_type = BlockTarget(type_raw)
    except ValueError:
        raise WireError(f"unknown block type {type_raw}") from None
    prev_hash = reader.take(HASH_LEN)
    merkle = reader.take(HASH_LEN)
    (tx_count,) = reader.unpack("<H")
    ta_entries = []
    for _ in range(tx_count):
        tx_index, access_raw, owner_count = reader.unpack("<HBH")
        try:
            access = AccessClass(access_raw)
        except ValueError:
            raise WireError(f"unknown access class {access_raw}") from None
        owners = reader.unpack(f"<{owner_count}I") if owner_count else ()
        ta_entries.append(TAEntry(tx_index, access, tuple(owners)))
    transactions = tuple(_decode_transaction(reader) for _ in range(tx_count))
    header = BlockHeader(version, block_id, block_type, miner, timestamp,
                         prev_hash, merkle, tuple(ta_entries))
    block = Block(header, transactions)
    _check_ta(header, transactions)
    return block, reader.pos


def merkle_root(tx_digests: Sequence[bytes], digest224: DigestFn = spongent224) -> bytes:
    """Pairwise tree over transaction digests; odd levels duplicate their
    last digest; a single leaf is its own root."""
    if not tx_digests:
        raise WireError("cannot compute a Merkle root over zero digests")
    level: List[bytes] = list(tx_digests)
    for digest in level:
        if len(digest) != HASH_LEN:
            raise WireError("Merkle leaves must be 28-byte digests")
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [digest224(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


def block_hash(header_bytes: bytes, digest224: DigestFn = spongent224) -> bytes:
    """Chain digest of a block: the header bytes only (the Merkle root
    already commits to the body)."""
    return digest224(header_bytes)


def build_block(block_id: int, block_type: BlockTarget, miner: int, timestamp_us: int,
                prev_hash: bytes, transactions: Sequence[Transaction],
                digest224: DigestFn = spongent224) -> Block:
    """Assemble a block with its access list and Merkle root computed."""
    txs = tuple(transactions)
    root = merkle_root([digest224(encode_transaction(tx)) for tx in txs], digest224)
    header = BlockHeader(WIRE_VERSION, block_id, block_type, miner, timestamp_us,
                         prev_hash, root, ta_list_for(txs))
    return Block(header, txs)


def dump_transaction(tx: Transaction) -> str:
    """Debug rendering: one name=value line per field."""
    lines = [
        f"creator={tx.creator}",
        f"tx_seq={tx.tx_seq}",
        f"created_at_us={tx.created_at_us}",
        f"topic={tx.topic}",
        f"access_class={tx.access_class.name}",
        f"owners={','.join(str(o) for o in tx.owners) or '-'}",
        f"security_class={tx.security_class.name}",
        f"block_target={tx.block_target.name}",
        f"enc_id={tx.enc_id}",
        f"hash_id={tx.hash_id}",
        f"enc_par={tx.enc_par or '-'}",
        f"hash_par={tx.hash_par}",
        f"payload_len={len(tx.payload)}",
        f"sig_len={len(tx.signature)}",
    ]
    return "\n".join(lines)


def dump_block(block: Block) -> str:
    h = block.header
    lines = [
        f"version={h.version}",
        f"block_id={h.block_id}",
        f"block_type={h.block_type.name}",
        f"miner={h.miner}",
        f"timestamp_us={h.timestamp_us}",
        f"prev_hash={h.prev_hash.hex()}",
        f"merkle_root={h.merkle_root.hex()}",
        f"tx_count={len(block.transactions)}",
    ]
    for i, tx in enumerate(block.transactions):
        lines.append(f"-- tx[{i}]")
        lines.append(dump_transaction(tx))
    return "\n".join(lines)
