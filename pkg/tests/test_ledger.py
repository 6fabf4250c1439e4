"""Full-ledger validation/append, drone-ledger replacement, access control."""

import dataclasses

import pytest

from proactlab import crypto, ledger, wire
from proactlab.ledger import (
    AccessDecision,
    BraPolicy,
    DroneLedger,
    FullLedger,
    LedgerError,
    Verdict,
    check_access,
    sign_access_request,
    validate_block,
)
from proactlab.wire import AccessClass, BlockTarget

import helpers

BACKEND = crypto.SIMULATED_BACKEND


def _block(registry, block_id, prev_hash, txs, block_type=BlockTarget.BLOCK_T1,
           miner=helpers.GCS_ID):
    return wire.build_block(block_id, block_type, miner, 1000 * block_id,
                            prev_hash, txs, BACKEND.digest224)


def _chain(registry, n_blocks=3):
    """Ledger holding n committed single-transaction blocks."""
    full = FullLedger(BACKEND)
    for i in range(n_blocks):
        tx = helpers.make_t1_command(registry, BACKEND, seq=i)
        full.append_block(_block(registry, i, full.tip_digest, [tx]))
    return full


def test_validate_accepts_wellformed_successor(registry):
    full = _chain(registry)
    tx = helpers.make_t1_command(registry, BACKEND, seq=50)
    block = _block(registry, full.next_block_id, full.tip_digest, [tx])
    assert validate_block(full.next_block_id, full.tip_digest, block,
                          registry, BACKEND, seen_tx=full.has_tx) == []


def test_validate_flags_stale_prev_hash(registry):
    full = _chain(registry, n_blocks=3)
    stale_tip = wire.block_hash(wire.encode_header(full.blocks[1].header),
                                BACKEND.digest224)
    tx = helpers.make_t1_command(registry, BACKEND, seq=60)
    block = _block(registry, full.next_block_id, stale_tip, [tx])
    issues = validate_block(full.next_block_id, full.tip_digest, block,
                            registry, BACKEND, seen_tx=full.has_tx)
    assert [i.code for i in issues] == ["prev_hash"]


def test_validate_flags_unknown_creator(registry):
    full = _chain(registry)
    rogue_registry = helpers.make_registry(BACKEND)
    rogue_registry.register_node(999)
    tx = helpers.make_t1_command(rogue_registry, BACKEND, creator=999, seq=1)
    block = _block(registry, full.next_block_id, full.tip_digest, [tx], miner=999)
    issues = validate_block(full.next_block_id, full.tip_digest, block,
                            registry, BACKEND, seen_tx=full.has_tx)
    assert any(i.code == "signature" and "unknown creator" in i.detail for i in issues)


def test_validate_flags_bad_signature(registry):
    full = _chain(registry)
    tx = helpers.make_t1_command(registry, BACKEND, seq=70)
    forged = dataclasses.replace(tx, signature=bytes(len(tx.signature)))
    block = _block(registry, full.next_block_id, full.tip_digest, [forged])
    issues = validate_block(full.next_block_id, full.tip_digest, block,
                            registry, BACKEND, seen_tx=full.has_tx)
    assert any(i.code == "signature" for i in issues)


def test_validate_flags_merkle_and_ta_tampering(registry):
    full = _chain(registry)
    tx = helpers.make_t1_command(registry, BACKEND, seq=71)
    block = _block(registry, full.next_block_id, full.tip_digest, [tx])
    bad_header = dataclasses.replace(
        block.header,
        merkle_root=bytes(28),
        ta_list=(wire.TAEntry(0, AccessClass.PUBLIC, ()),))
    tampered = wire.Block(bad_header, block.transactions)
    codes = {i.code for i in validate_block(full.next_block_id, full.tip_digest,
                                            tampered, registry, BACKEND)}
    assert {"merkle_root", "ta_fidelity"} <= codes


def test_validate_flags_duplicate_tx(registry):
    full = _chain(registry)
    duplicate = full.blocks[0].transactions[0]
    block = _block(registry, full.next_block_id, full.tip_digest, [duplicate])
    issues = validate_block(full.next_block_id, full.tip_digest, block,
                            registry, BACKEND, seen_tx=full.has_tx)
    assert any(i.code == "duplicate_tx" for i in issues)


def test_append_advances_tip(registry):
    full = _chain(registry, n_blocks=44)
    assert full.tip_id == 43
    tx = helpers.make_t1_command(registry, BACKEND, seq=100)
    full.append_block(_block(registry, 44, full.tip_digest, [tx]))
    assert full.tip_id == 44
    assert full.get_tx(tx.key()) == tx


def test_append_rejects_gap_and_duplicate(registry):
    full = _chain(registry, n_blocks=45)
    tx = helpers.make_t1_command(registry, BACKEND, seq=101)
    with pytest.raises(LedgerError) as err:
        full.append_block(_block(registry, 46, full.tip_digest, [tx]))
    assert err.value.code == "gap"
    with pytest.raises(LedgerError) as err:
        full.append_block(_block(registry, 44, full.tip_digest, [tx]))
    assert err.value.code == "duplicate"


def test_chain_integrity_roundtrip_through_file(registry, tmp_path):
    full = _chain(registry, n_blocks=5)
    full.verify_chain()
    path = tmp_path / "chain.bin"
    full.export_file(path)
    loaded = FullLedger.import_file(path, BACKEND, registry)
    assert [b.block_id for b in loaded.blocks] == [0, 1, 2, 3, 4]
    assert loaded.tip_digest == full.tip_digest
    loaded.verify_chain()


def test_import_rejects_corrupted_chain(registry, tmp_path):
    full = _chain(registry, n_blocks=3)
    path = tmp_path / "chain.bin"
    full.export_file(path)
    data = bytearray(path.read_bytes())
    data[60] ^= 0xFF  # flip a byte inside block 0's merkle root
    path.write_bytes(bytes(data))
    with pytest.raises(LedgerError):
        FullLedger.import_file(path, BACKEND, registry)


# --- access control ---


def _request(requester, tx, registry):
    return sign_access_request(requester, tx.creator, tx.tx_seq, registry, BACKEND)


def test_owner_allowed(registry):
    tx = helpers.make_t1_command(registry, BACKEND, owner=helpers.DRONE_A)
    decision = check_access(helpers.DRONE_A, _request(helpers.DRONE_A, tx, registry),
                            tx, registry, BACKEND)
    assert decision.verdict is Verdict.ALLOW and decision.incident is None


def test_public_always_allowed(registry):
    tx = helpers.make_t3_data(registry, BACKEND)
    decision = check_access(helpers.DRONE_B, _request(helpers.DRONE_B, tx, registry),
                            tx, registry, BACKEND)
    assert decision.verdict is Verdict.ALLOW


def test_ca_allowed(registry):
    tx = helpers.make_t1_command(registry, BACKEND, owner=helpers.DRONE_A)
    decision = check_access(helpers.CA_ID, _request(helpers.CA_ID, tx, registry),
                            tx, registry, BACKEND)
    assert decision.verdict is Verdict.ALLOW


def test_unauthorized_request_denied_with_incident(registry):
    tx = helpers.make_t1_command(registry, BACKEND, owner=helpers.DRONE_A)
    decision = check_access(helpers.DRONE_B, _request(helpers.DRONE_B, tx, registry),
                            tx, registry, BACKEND)
    assert decision.verdict is Verdict.DENY
    assert decision.incident is not None
    assert decision.incident.subject == helpers.DRONE_B
    assert decision.incident.reason == "unauthorized-access"
    assert b"incident" in decision.incident.payload()


def test_forged_request_signature_denied_as_forgery(registry):
    tx = helpers.make_t1_command(registry, BACKEND, owner=helpers.DRONE_A)
    forged = bytes(64)
    decision = check_access(helpers.DRONE_A, forged, tx, registry, BACKEND)
    assert decision.verdict is Verdict.DENY
    assert decision.incident.reason == "forgery"


def test_deny_requires_incident():
    with pytest.raises(LedgerError):
        AccessDecision(Verdict.DENY, None)


# --- drone ledger / block replacement ---


def _drone_block(registry, block_id, *, seqs, topic=0, payload=bytes(100),
                 owner=helpers.DRONE_A, created_base=0):
    txs = [helpers.make_t1_command(registry, BACKEND, owner=owner, seq=s,
                                   topic=topic, plaintext=payload,
                                   created_at_us=created_base + s)
           for s in seqs]
    return _block(registry, block_id, wire.ZERO_HASH, txs)


def test_store_without_eviction(registry):
    dl = DroneLedger(helpers.DRONE_A, capacity_bytes=10_000)
    block = _drone_block(registry, 1, seqs=[1])
    assert dl.store_block(block) == []
    assert dl.current_bytes == wire.encoded_block_size(block)
    assert dl.block_ids() == [1]


def test_oldest_first_eviction_frees_enough_space(registry):
    # ~2.2 KB blocks into a 10 KB ledger: the 5th store must evict the oldest
    dl = DroneLedger(helpers.DRONE_A, capacity_bytes=10_000)
    blocks = [_drone_block(registry, i, seqs=[10 * i, 10 * i + 1],
                           payload=bytes(1000)) for i in range(5)]
    for b in blocks[:4]:
        assert dl.store_block(b) == []
    evicted = dl.store_block(blocks[4])
    assert evicted == [0]
    assert dl.block_ids() == [1, 2, 3, 4]
    assert dl.current_bytes <= dl.capacity_bytes
    assert dl.current_bytes == sum(wire.encoded_block_size(b) for b in blocks[1:])


def test_block_larger_than_capacity_rejected(registry):
    dl = DroneLedger(helpers.DRONE_A, capacity_bytes=10_000)
    big = _drone_block(registry, 1, seqs=[1], payload=bytes(12_000))
    with pytest.raises(LedgerError) as err:
        dl.store_block(big)
    assert err.value.code == "block_too_large"
    assert dl.block_ids() == []


def test_outdated_first_prefers_superseded_topics(registry):
    dl = DroneLedger(helpers.DRONE_A, capacity_bytes=7_000,
                     policy=BraPolicy.OUTDATED_FIRST)
    # block 1: topic 7 command at t=100 (will be superseded)
    b1 = _drone_block(registry, 1, seqs=[1], topic=7, payload=bytes(2000),
                      created_base=100)
    # block 2: untopiced command (never "outdated")
    b2 = _drone_block(registry, 2, seqs=[2], topic=0, payload=bytes(2000),
                      created_base=200)
    # block 3: newer topic-7 command supersedes block 1's
    b3 = _drone_block(registry, 3, seqs=[3], topic=7, payload=bytes(2000),
                      created_base=300)
    for b in (b1, b2, b3):
        dl.store_block(b)
    incoming = _drone_block(registry, 4, seqs=[4], payload=bytes(2000),
                            created_base=400)
    evicted = dl.store_block(incoming)
    assert evicted == [1]  # outdated block evicted, not the oldest-surviving b2
    assert dl.block_ids() == [2, 3, 4]


def test_outdated_first_falls_back_to_oldest(registry):
    dl = DroneLedger(helpers.DRONE_A, capacity_bytes=5_000,
                     policy=BraPolicy.OUTDATED_FIRST)
    b1 = _drone_block(registry, 1, seqs=[1], topic=0, payload=bytes(2000))
    b2 = _drone_block(registry, 2, seqs=[2], topic=0, payload=bytes(2000))
    dl.store_block(b1)
    dl.store_block(b2)
    evicted = dl.store_block(_drone_block(registry, 3, seqs=[3], payload=bytes(2000)))
    assert evicted == [1]  # nothing outdated; oldest goes


def test_drone_ledger_rejects_foreign_blocks(registry):
    dl = DroneLedger(helpers.DRONE_B)
    block = _drone_block(registry, 1, seqs=[1], owner=helpers.DRONE_A)
    with pytest.raises(LedgerError) as err:
        dl.store_block(block)
    assert err.value.code == "not_owner"


def test_drone_ledger_rejects_ground_only_blocks(registry):
    dl = DroneLedger(helpers.DRONE_A)
    tx = helpers.make_t3_data(registry, BACKEND)
    block = _block(registry, 1, wire.ZERO_HASH, [tx], block_type=BlockTarget.BLOCK_T2)
    with pytest.raises(LedgerError) as err:
        dl.store_block(block)
    assert err.value.code == "block_type"


def test_find_transaction_and_capacity_accounting(registry):
    dl = DroneLedger(helpers.DRONE_A, capacity_bytes=50_000)
    blocks = [_drone_block(registry, i, seqs=[i]) for i in range(1, 6)]
    for b in blocks:
        dl.store_block(b)
    assert dl.current_bytes == sum(wire.encoded_block_size(b) for b in blocks)
    key = blocks[2].transactions[0].key()
    assert dl.find_transaction(key) == blocks[2].transactions[0]
    assert dl.find_transaction((9999, 0)) is None


def test_ta_owner_ids(registry):
    group_tx = helpers.make_group_command(registry, BACKEND)
    block = _block(registry, 3, wire.ZERO_HASH, [group_tx])
    assert ledger.ta_owner_ids(block) == set(helpers.GROUP_MEMBERS)
