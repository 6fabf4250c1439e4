"""Transaction construction and verification on top of wire + crypto.

Sealing nonces are derived deterministically from (creator, tx_seq) so a
whole scenario run is reproducible from its seed.
"""

from __future__ import annotations

import dataclasses
import hashlib
import struct
from typing import Sequence

from . import crypto, wire
from .crypto import CryptoSuite, HashBackend, KeyRegistry
from .wire import AccessClass, BlockTarget, Transaction


def deterministic_nonce(creator: int, tx_seq: int) -> bytes:
    return hashlib.blake2b(
        b"nonce" + struct.pack("<IQ", creator, tx_seq), digest_size=crypto.NONCE_LEN
    ).digest()


def build_transaction(*, creator: int, tx_seq: int, created_at_us: int,
                      suite: CryptoSuite, access_class: AccessClass,
                      owners: Sequence[int], block_target: BlockTarget,
                      plaintext: bytes, registry: KeyRegistry,
                      backend: HashBackend, topic: int = 0) -> Transaction:
    """Seal (when private), fill the crypto metadata, and sign."""
    owners = tuple(owners)
    if access_class is AccessClass.PUBLIC:
        payload = plaintext
        enc_id, enc_par = 0, ""
    else:
        sealed_to = registry.sealing_key(owners).public_key
        payload = crypto.seal(suite, sealed_to, deterministic_nonce(creator, tx_seq),
                              plaintext, backend.digest224)
        enc_id, enc_par = suite.suite_id, suite.enc_par

    unsigned = Transaction(
        creator=creator, tx_seq=tx_seq, created_at_us=created_at_us, topic=topic,
        access_class=access_class, owners=owners,
        security_class=suite.security_class, block_target=block_target,
        enc_id=enc_id, hash_id=suite.hash_variant.value,
        enc_par=enc_par, hash_par=suite.hash_par,
        payload=payload, signature=b"",
    )
    digest = backend.digest(suite.hash_variant, wire.signing_bytes(unsigned))
    signature = crypto.sign(suite, registry.public_key(creator), digest,
                            backend.digest224)
    tx = dataclasses.replace(unsigned, signature=signature)
    tx.validate()
    return tx


def verify_transaction(tx: Transaction, registry: KeyRegistry,
                       backend: HashBackend) -> bool:
    """Recompute the content digest and check it against the claimed
    creator's registered public key."""
    if not registry.has_node(tx.creator):
        return False
    suite = crypto.suite_for_class(tx.security_class)
    digest = backend.digest(suite.hash_variant, wire.signing_bytes(tx))
    return crypto.verify(suite, registry.public_key(tx.creator), digest,
                         tx.signature, backend.digest224)


def open_transaction(tx: Transaction, agent_id: int, registry: KeyRegistry) -> bytes:
    """Recover the plaintext for an agent that holds the right key; the
    registry enforces possession and tag integrity."""
    if tx.access_class is AccessClass.PUBLIC:
        return tx.payload
    suite = crypto.suite_for_class(tx.security_class)
    return registry.open_for(agent_id, suite, tx.owners, tx.payload)


def transaction_overhead(tx: Transaction) -> float:
    """Blockchain size overhead of one transaction: (S_TB - S_TO) / S_TO."""
    original = tx.plaintext_len()
    return (wire.encoded_tx_size(tx) - original) / original


def registration_payload(node_id: int, role: str, real_id: str,
                         public_key: bytes) -> bytes:
    """Body of a node-registration transaction (genesis and add-UAV)."""
    return f"reg|{role}|{node_id}|{real_id}|{public_key.hex()}".encode()


def parse_registration(payload: bytes) -> tuple[str, int, str, bytes]:
    tag, role, node_id, real_id, public_hex = payload.decode().split("|")
    if tag != "reg":
        raise ValueError("not a registration payload")
    return role, int(node_id), real_id, bytes.fromhex(public_hex)
