"""Trust eligibility, ordering windows, quorum, voids, and the miner pipeline."""

import random

import pytest
from hypothesis import given, settings, strategies as st

from proactlab import consensus, crypto, wire
from proactlab.consensus import (
    Assignment,
    BlockState,
    CommitVerdict,
    ConsensusError,
    NbrMessage,
    OrderingState,
    TrustEvent,
    TrustParams,
    TrustRecord,
    assign_gcs_to_tgcs,
    commit_check,
    compute_th_ca,
    miner_assemble,
    miner_finalize,
    poat_eligible,
    rotate_bo,
    trust_update,
)
from proactlab.wire import BlockTarget

import helpers

BACKEND = crypto.SIMULATED_BACKEND

PARAMS = TrustParams(t_tn_s=500, m_sub_s=100, th_tn=150, th_m=10)


def _record(per_subperiod):
    record = TrustRecord(start_time_s=0)
    for bucket, points in enumerate(per_subperiod):
        record.add(points, bucket * 100 + 50, PARAMS)
    return record


def test_poat_eligible_when_both_conditions_hold():
    assert poat_eligible(_record([40, 40, 40, 40, 40]), PARAMS, now_s=500)


def test_poat_rejects_weak_subperiod():
    assert not poat_eligible(_record([40, 40, 5, 40, 40]), PARAMS, now_s=500)


def test_poat_rejects_weak_window_total():
    # every subperiod clears TH_m but the sum stays at the threshold
    assert not poat_eligible(_record([30, 30, 30, 30, 30]), PARAMS, now_s=500)


def test_poat_conservative_without_history():
    assert not poat_eligible(TrustRecord(start_time_s=0), PARAMS, now_s=500)
    late = TrustRecord(start_time_s=300)
    late.add(1000, 350, PARAMS)
    assert not poat_eligible(late, PARAMS, now_s=500)


def test_trust_update_weights():
    record = TrustRecord(0)
    for _ in range(5):
        trust_update(record, TrustEvent.VALID_BLOCK_PARTICIPATION, 50, PARAMS)
    assert sum(record.buckets.values()) == 5
    trust_update(record, TrustEvent.INVALID_BLOCK, 60, PARAMS)
    assert sum(record.buckets.values()) == -5
    custom = {event: 2.0 for event in TrustEvent}
    trust_update(record, TrustEvent.VALID_FORWARD, 70, PARAMS, weights=custom)
    assert sum(record.buckets.values()) == -3


def test_compute_th_ca():
    assert compute_th_ca(20, 5) == 4
    assert compute_th_ca(1, 1) == 1
    assert compute_th_ca(7, 3) == 2
    assert compute_th_ca(1, 5) == 1  # floor would be 0; minimum applies
    with pytest.raises(ConsensusError):
        compute_th_ca(10, 0)


def test_assignment_partitions_all_stations():
    rng = random.Random(1)
    gcc = list(range(100, 130))      # 30 stations
    tgcs = list(range(1, 21))        # 20 miners
    result = assign_gcs_to_tgcs(gcc, tgcs, rng)
    everything = [g for stations in result.values() for g in stations]
    assert sorted(everything) == sorted(gcc)
    assert all(len(result[t]) in (0, 1, 2, 3) for t in tgcs[:-1])
    assert set(result) == set(tgcs)


def test_assignment_exact_division():
    result = assign_gcs_to_tgcs([11, 12, 13, 14], [1, 2], random.Random(3))
    assert len(result[1]) == 2 and len(result[2]) == 2


def test_assignment_uneven_division_last_takes_remainder():
    for seed in range(10):
        result = assign_gcs_to_tgcs([11, 12, 13, 14, 15], [1, 2], random.Random(seed))
        assert len(result[1]) in (2, 3)
        assert len(result[1]) + len(result[2]) == 5


def test_assignment_rejects_bad_inputs():
    rng = random.Random(0)
    with pytest.raises(ConsensusError):
        assign_gcs_to_tgcs([1], [], rng)
    with pytest.raises(ConsensusError):
        assign_gcs_to_tgcs([1, 2], [2, 3], rng)


def test_window_orders_by_timestamp_not_arrival():
    # tip is block 43: ids 44..46 are issued by send time, not arrival order
    state = OrderingState(next_block_id=44)
    t1, t2, t3 = 1_000, 2_000, 3_000
    state.receive_nbr(NbrMessage(tgcs_id=2, timestamp_us=t2, request_count=1))
    state.receive_nbr(NbrMessage(tgcs_id=1, timestamp_us=t1, request_count=1))
    state.receive_nbr(NbrMessage(tgcs_id=3, timestamp_us=t3, request_count=1))
    assert state.window_close() == [
        Assignment(44, 1), Assignment(45, 2), Assignment(46, 3)]


def test_empty_window_issues_nothing():
    state = OrderingState(next_block_id=44)
    assert state.window_close() == []
    assert state.next_block_id == 44


def test_multi_request_nbr_gets_consecutive_ids():
    state = OrderingState(next_block_id=10)
    state.receive_nbr(NbrMessage(7, 100, 2))
    assert state.window_close() == [Assignment(10, 7), Assignment(11, 7)]


def test_late_nbr_sorts_first_in_next_window():
    state = OrderingState(next_block_id=0)
    state.receive_nbr(NbrMessage(5, 900, 1))
    assert state.window_close() == [Assignment(0, 5)]
    # the delayed request carries an older timestamp than the fresh one
    state.receive_nbr(NbrMessage(6, 2_000, 1))
    state.receive_nbr(NbrMessage(4, 800, 1))
    assert state.window_close() == [Assignment(1, 4), Assignment(2, 6)]


def test_timestamp_ties_break_by_station_id():
    state = OrderingState(next_block_id=0)
    state.receive_nbr(NbrMessage(9, 500, 1))
    state.receive_nbr(NbrMessage(2, 500, 1))
    assert state.window_close() == [Assignment(0, 2), Assignment(1, 9)]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 30), st.integers(0, 10_000),
                          st.integers(1, 3)), max_size=12))
def test_window_assignment_is_ascending_by_timestamp(requests):
    state = OrderingState(next_block_id=100)
    for tgcs, ts, count in requests:
        state.receive_nbr(NbrMessage(tgcs, ts, count))
    issued = state.window_close()
    total = sum(count for _, _, count in requests)
    assert [a.block_id for a in issued] == list(range(100, 100 + total))
    # ids follow (timestamp, station id) order, request counts contiguous,
    # arrival order breaking exact ties (stable sort)
    order = sorted(enumerate(requests), key=lambda p: (p[1][1], p[1][0], p[0]))
    expanded = [tgcs for _, (tgcs, _, count) in order for _ in range(count)]
    assert [a.tgcs_id for a in issued] == expanded


def test_commit_check_boundary():
    assert commit_check(26, 0, 50) is CommitVerdict.COMMITTED
    assert commit_check(25, 0, 50) is CommitVerdict.PENDING
    assert commit_check(0, 26, 50) is CommitVerdict.REJECTED
    assert commit_check(0, 3, 5) is CommitVerdict.REJECTED
    assert commit_check(2, 2, 5) is CommitVerdict.PENDING


def test_void_renumbers_later_assignments():
    state = OrderingState(next_block_id=44)
    for tgcs in (1, 2, 3):
        state.receive_nbr(NbrMessage(tgcs, tgcs * 100, 1))
    state.window_close()  # 44->1, 45->2, 46->3
    renumber = state.apply_void(45)
    assert renumber == {46: 45}
    assert state.assignments == {44: 1, 45: 3}
    assert state.next_block_id == 46


def test_void_of_committed_id_is_ignored():
    state = OrderingState(next_block_id=44)
    state.receive_nbr(NbrMessage(1, 100, 1))
    state.window_close()
    state.on_commit(44)
    assert state.apply_void(44) is None
    assert state.apply_void(99) is None


def test_two_consecutive_voids_compose():
    state = OrderingState(next_block_id=10)
    for tgcs in (1, 2, 3, 4):
        state.receive_nbr(NbrMessage(tgcs, tgcs, 1))
    state.window_close()  # 10..13
    state.apply_void(11)  # 12->11, 13->12
    state.apply_void(11)  # old 12 (now 11) voided; old 13 (now 12) -> 11
    assert state.assignments == {10: 1, 11: 4}
    assert state.next_block_id == 12


def test_sequential_mode_single_outstanding_grant():
    state = OrderingState(next_block_id=0, sequential=True)
    state.receive_nbr(NbrMessage(1, 100, 1))
    state.receive_nbr(NbrMessage(2, 200, 1))
    assert state.window_close() == [Assignment(0, 1)]
    assert state.window_close() == []  # still outstanding
    state.on_commit(0)
    assert state.window_close() == [Assignment(1, 2)]


def test_sequential_toggle_rejected_mid_run():
    state = OrderingState(next_block_id=0)
    state.receive_nbr(NbrMessage(1, 1, 1))
    state.window_close()
    with pytest.raises(ConsensusError):
        state.set_sequential(True)


def test_ordering_state_handoff_roundtrip():
    state = OrderingState(next_block_id=20, sequential=True)
    state.receive_nbr(NbrMessage(1, 111, 1))
    state.receive_nbr(NbrMessage(2, 222, 2))
    state.window_close()
    restored = OrderingState.decode(state.encode())
    assert restored.next_block_id == state.next_block_id
    assert restored.sequential == state.sequential
    assert restored.assignments == state.assignments
    assert [(r.tgcs_id, r.timestamp_us, r.remaining) for r in restored.pending] == \
           [(r.tgcs_id, r.timestamp_us, r.remaining) for r in state.pending]
    assert restored.committed_watermark == state.committed_watermark


def test_rotate_bo():
    cas = [10, 11, 12, 13, 14]
    assert rotate_bo(cas, 1250, 600) == 12
    assert rotate_bo(cas, 0, 600) == 10
    assert rotate_bo([7], 99_999, 600) == 7


def test_message_encodings_roundtrip():
    nbr = NbrMessage(4, 123456, 2)
    assert len(nbr.encode()) == 13
    assert NbrMessage.decode(nbr.encode()) == nbr

    ack = consensus.BlockAckMessage(44, 9)
    assert len(ack.encode()) == 12
    assert consensus.BlockAckMessage.decode(ack.encode()) == ack

    err = consensus.BlockErrorMessage(44, 9, consensus.ERROR_CODES["signature"])
    assert len(err.encode()) == 13
    assert consensus.BlockErrorMessage.decode(err.encode()) == err

    void = consensus.VoidMessage(45)
    assert len(void.encode()) == 8
    assert consensus.VoidMessage.decode(void.encode()) == void

    assign = consensus.AssignMessage((Assignment(44, 1), Assignment(45, 2)))
    assert len(assign.encode()) == 2 + 2 * 12
    assert consensus.AssignMessage.decode(assign.encode()) == assign


def _mixed_transactions(registry):
    t1 = [helpers.make_t1_command(registry, BACKEND, seq=i) for i in range(3)]
    t2 = [helpers.make_t3_data(registry, BACKEND, seq=10 + i) for i in range(2)]
    return t1 + t2


def test_assemble_partitions_by_target(registry):
    pending = miner_assemble(helpers.GCS_ID, _mixed_transactions(registry), 500, BACKEND)
    assert len(pending) == 2  # an NBR would carry request_count 2
    by_type = {p.block_type: p for p in pending}
    assert len(by_type[BlockTarget.BLOCK_T1].transactions) == 3
    assert len(by_type[BlockTarget.BLOCK_T2].transactions) == 2
    assert all(p.state is BlockState.AWAITING_ID for p in pending)


def test_assemble_nothing_from_nothing():
    assert miner_assemble(helpers.GCS_ID, [], 500, BACKEND) == []


def test_assemble_single_transaction_block(registry):
    tx = helpers.make_t1_command(registry, BACKEND)
    pending = miner_assemble(helpers.GCS_ID, [tx], 500, BACKEND)
    assert len(pending) == 1 and len(pending[0].transactions) == 1


def _committed_block(registry, block_id):
    tx = helpers.make_t1_command(registry, BACKEND, seq=block_id)
    return wire.build_block(block_id, BlockTarget.BLOCK_T1, helpers.GCS_ID,
                            0, wire.ZERO_HASH, [tx], BACKEND.digest224)


def test_finalize_chains_to_predecessor(registry):
    predecessor = _committed_block(registry, 44)
    (pending,) = miner_assemble(helpers.GCS_ID,
                                [helpers.make_t1_command(registry, BACKEND, seq=99)],
                                700, BACKEND)
    pending.assign_id(45)
    block = miner_finalize(pending, predecessor, BACKEND)
    assert block.block_id == 45
    assert block.header.prev_hash == wire.block_hash(
        wire.encode_header(predecessor.header), BACKEND.digest224)
    assert pending.state is BlockState.BROADCAST


def test_finalize_requires_immediate_predecessor(registry):
    predecessor = _committed_block(registry, 44)
    (pending,) = miner_assemble(helpers.GCS_ID,
                                [helpers.make_t1_command(registry, BACKEND, seq=98)],
                                700, BACKEND)
    pending.assign_id(46)
    with pytest.raises(ConsensusError):
        miner_finalize(pending, predecessor, BACKEND)
    assert pending.state is BlockState.AWAITING_PREDECESSOR


def test_voided_block_never_finalizes(registry):
    (pending,) = miner_assemble(helpers.GCS_ID,
                                [helpers.make_t1_command(registry, BACKEND, seq=97)],
                                700, BACKEND)
    pending.assign_id(45)
    pending.advance(BlockState.VOIDED)
    with pytest.raises(ConsensusError):
        miner_finalize(pending, _committed_block(registry, 44), BACKEND)


def test_pending_block_state_is_monotone(registry):
    (pending,) = miner_assemble(helpers.GCS_ID,
                                [helpers.make_t1_command(registry, BACKEND, seq=96)],
                                700, BACKEND)
    pending.assign_id(1)
    pending.advance(BlockState.BROADCAST)
    with pytest.raises(ConsensusError):
        pending.advance(BlockState.AWAITING_ID)


def test_consensus_config_invariants():
    cfg = consensus.ConsensusConfig(max_tn=20, n_ca=5)
    assert cfg.th_ca == 4
    with pytest.raises(ConsensusError):
        consensus.ConsensusConfig(t_bis_s=6.0, t_blk_s=5.0)
