import numpy as np
import pytest

from masskv.core import ContractViolation
from masskv.paged import (
    AllocationError,
    BlockPool,
    BlockTable,
    PagedRequest,
    attention_readout,
    compact,
    plan_compaction,
    resolve_slot,
    run_equivalence_fuzz,
    verify_compaction,
)


def test_resolve_slot_examples():
    table = BlockTable(16, [7, 3], logical_len=32)
    assert resolve_slot(table, 20) == 3 * 16 + 4
    assert resolve_slot(table, 0) == 7 * 16
    with pytest.raises(ContractViolation):
        resolve_slot(table, 32)

    unit = BlockTable(1, [5, 9, 2], logical_len=3)
    assert [resolve_slot(unit, p) for p in range(3)] == [5, 9, 2]


def _filled_request(pool, total, rng):
    req = PagedRequest(pool)
    for _ in range(total):
        req.append(
            rng.normal(size=(pool.kv_heads, pool.head_dim)),
            rng.normal(size=(pool.kv_heads, pool.head_dim)),
        )
    return req


def test_compact_identity_prefix():
    rng = np.random.default_rng(0)
    pool = BlockPool(num_blocks=8, block_size=4, kv_heads=2, head_dim=3)
    req = _filled_request(pool, 12, rng)
    dense_k, dense_v = req.dense_view()
    keep = np.tile(np.arange(8), (2, 1))
    table = compact(pool, req.table, keep)
    assert table.logical_len == 8
    slots = table.slots(np.arange(8))
    np.testing.assert_array_equal(pool.keys[slots].transpose(1, 0, 2), dense_k[:, :8])
    np.testing.assert_array_equal(pool.values[slots].transpose(1, 0, 2), dense_v[:, :8])


def test_compact_head_distinct_keeps():
    rng = np.random.default_rng(1)
    pool = BlockPool(num_blocks=6, block_size=2, kv_heads=2, head_dim=2)
    req = _filled_request(pool, 3, rng)
    dense_k, dense_v = req.dense_view()
    keep = np.array([[0, 2], [1, 2]])
    table = compact(pool, req.table, keep)
    slots = table.slots(np.arange(2))
    np.testing.assert_array_equal(pool.keys[slots, 0], dense_k[0, [0, 2]])
    np.testing.assert_array_equal(pool.keys[slots, 1], dense_k[1, [1, 2]])
    np.testing.assert_array_equal(pool.values[slots, 0], dense_v[0, [0, 2]])


def test_compact_allocation_failure_is_atomic():
    rng = np.random.default_rng(2)
    pool = BlockPool(num_blocks=3, block_size=4, kv_heads=1, head_dim=2)
    req = _filled_request(pool, 12, rng)  # consumes all 3 blocks
    old_blocks = list(req.table.blocks)
    keep = np.array([[0, 1, 2, 3, 4]])
    with pytest.raises(AllocationError):
        compact(pool, req.table, keep)
    assert req.table.blocks == old_blocks
    assert pool.num_free == 0

    # with exactly enough free blocks it succeeds
    pool2 = BlockPool(num_blocks=5, block_size=4, kv_heads=1, head_dim=2)
    req2 = _filled_request(pool2, 12, rng)
    assert pool2.num_free == 2  # ceil(5/4) = 2 needed
    table = compact(pool2, req2.table, keep)
    assert table.logical_len == 5
    assert pool2.num_free + len(table.blocks) == pool2.num_blocks


def test_compact_is_idempotent_under_identity_keep():
    rng = np.random.default_rng(3)
    pool = BlockPool(num_blocks=8, block_size=4, kv_heads=2, head_dim=3)
    req = _filled_request(pool, 8, rng)
    keep = np.tile(np.arange(8), (2, 1))
    t1 = compact(pool, req.table, keep)
    k1 = pool.keys[t1.slots(np.arange(8))].copy()
    t2 = compact(pool, t1, keep)
    k2 = pool.keys[t2.slots(np.arange(8))]
    np.testing.assert_array_equal(k1, k2)


def test_decode_position_not_reset_by_compaction():
    rng = np.random.default_rng(4)
    pool = BlockPool(num_blocks=8, block_size=4, kv_heads=1, head_dim=2)
    req = _filled_request(pool, 10, rng)
    assert req.decode_pos == 10
    req.table = compact(pool, req.table, np.array([[0, 5, 9]]))
    assert req.decode_pos == 10  # logical decoding position survives
    assert req.table.logical_len == 3


def test_slot_mapping_distinct_destinations():
    rng = np.random.default_rng(5)
    pool = BlockPool(num_blocks=8, block_size=4, kv_heads=2, head_dim=2)
    req = _filled_request(pool, 10, rng)
    new_table = BlockTable(4, pool.allocate(2), logical_len=6)
    mapping = plan_compaction(req.table, new_table, np.tile(np.arange(6), (2, 1)))
    assert np.unique(mapping.dst).size == 6
    assert mapping.src.shape == (2, 6)


def test_verify_compaction_detects_perturbation():
    rng = np.random.default_rng(6)
    pool = BlockPool(num_blocks=8, block_size=4, kv_heads=2, head_dim=3)
    req = _filled_request(pool, 10, rng)
    dense_k, dense_v = req.dense_view()
    keep = np.stack([np.sort(rng.choice(10, 5, replace=False)) for _ in range(2)])
    table = compact(pool, req.table, keep)
    gk = np.stack([dense_k[h, keep[h]] for h in range(2)])
    gv = np.stack([dense_v[h, keep[h]] for h in range(2)])
    assert verify_compaction(pool, table, gk, gv)
    slot = table.resolve_slot(3)
    pool.keys[slot, 1, 0] += 1e-3
    assert not verify_compaction(pool, table, gk, gv)
    # shape mismatch reports False rather than raising
    assert not verify_compaction(pool, table, gk[:, :2], gv[:, :2])


def test_free_list_conservation_over_op_sequences():
    rng = np.random.default_rng(7)
    pool = BlockPool(num_blocks=12, block_size=2, kv_heads=1, head_dim=2)
    held: list[list[int]] = []
    for _ in range(200):
        held_blocks = sum(len(h) for h in held)
        assert pool.num_free + held_blocks == pool.num_blocks
        if held and rng.random() < 0.45:
            pool.free(held.pop(rng.integers(0, len(held))))
        else:
            n = int(rng.integers(1, 4))
            if n <= pool.num_free:
                held.append(pool.allocate(n))
            else:
                with pytest.raises(AllocationError):
                    pool.allocate(n)
    with pytest.raises(ContractViolation):
        pool.free([999])


def test_double_free_rejected():
    pool = BlockPool(num_blocks=4, block_size=2, kv_heads=1, head_dim=2)
    blocks = pool.allocate(2)
    pool.free(blocks)
    with pytest.raises(ContractViolation):
        pool.free([blocks[0]])


def test_attention_readout_matches_manual():
    rng = np.random.default_rng(8)
    k = rng.normal(size=(2, 5, 3))
    v = rng.normal(size=(2, 5, 3))
    q = rng.normal(size=(2, 3))
    out = attention_readout(k, v, q)
    for h in range(2):
        s = k[h] @ q[h] / np.sqrt(3)
        w = np.exp(s - s.max())
        w /= w.sum()
        np.testing.assert_allclose(out[h], w @ v[h], atol=1e-12)


def test_equivalence_fuzz_smoke():
    passed, failed = run_equivalence_fuzz(60, seed=0)
    assert (passed, failed) == (60, 0)
    passed, failed = run_equivalence_fuzz(20, seed=1, corrupt=True)
    assert failed == 20


def test_degenerate_single_token_cache():
    passed, failed = run_equivalence_fuzz(1, seed=12345)
    assert failed == 0
    pool = BlockPool(num_blocks=2, block_size=1, kv_heads=1, head_dim=2)
    req = _filled_request(pool, 1, np.random.default_rng(0))
    table = compact(pool, req.table, np.array([[0]]))
    assert table.logical_len == 1
