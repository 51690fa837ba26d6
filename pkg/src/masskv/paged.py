"""Self-contained paged KV store with head-wise compaction.

Logical position p of a request maps to physical slot
``table[p // block_size] * block_size + p % block_size``. Compaction plans a
full slot mapping (per-head sources, shared destinations) into freshly
allocated blocks, copies, swaps the block-table row, then frees the old
blocks, so sources and destinations never alias and the steady-state read
path keeps using the plain (table, position) lookup with no per-head
indirection.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass

import numpy as np

from masskv.core import ContractViolation

logger = logging.getLogger(__name__)


class AllocationError(RuntimeError):
    """The block pool cannot satisfy an allocation request."""


class BlockPool:
    """Fixed-capacity pool of KV blocks; slot-major storage [slots, heads, dim]."""

    def __init__(self, num_blocks: int, block_size: int, kv_heads: int, head_dim: int):
        if min(num_blocks, block_size, kv_heads, head_dim) < 1:
            raise ContractViolation("pool dimensions must be >= 1")
        self.num_blocks = num_blocks
        self.block_size = block_size
        self.kv_heads = kv_heads
        self.head_dim = head_dim
        n_slots = num_blocks * block_size
        self.keys = np.zeros((n_slots, kv_heads, head_dim), dtype=np.float64)
        self.values = np.zeros((n_slots, kv_heads, head_dim), dtype=np.float64)
        self._free = list(range(num_blocks))
        heapq.heapify(self._free)

    @property
    def num_free(self) -> int:
        return len(self._free)

    def allocate(self, n: int) -> list[int]:
        """Take n blocks (lowest ids first); atomic, with no effects on failure."""
        if n > len(self._free):
            raise AllocationError(f"need {n} blocks, only {len(self._free)} free")
        return [heapq.heappop(self._free) for _ in range(n)]

    def free(self, blocks: list[int]) -> None:
        for b in blocks:
            if b < 0 or b >= self.num_blocks:
                raise ContractViolation(f"block id {b} out of range")
            if b in self._free:
                raise ContractViolation(f"double free of block {b}")
            heapq.heappush(self._free, b)


class BlockTable:
    """Ordered block ids backing one request, plus its logical length."""

    def __init__(self, block_size: int, blocks: list[int] | None = None, logical_len: int = 0):
        self.block_size = block_size
        self.blocks = list(blocks) if blocks else []
        self.logical_len = logical_len
        if logical_len > len(self.blocks) * block_size:
            raise ContractViolation("logical length exceeds table capacity")

    def resolve_slot(self, p: int) -> int:
        if p < 0 or p >= self.logical_len:
            raise ContractViolation(f"logical position {p} out of range [0, {self.logical_len})")
        return self.blocks[p // self.block_size] * self.block_size + p % self.block_size

    def slots(self, positions: np.ndarray) -> np.ndarray:
        positions = np.asarray(positions, dtype=np.int64)
        if positions.size and (positions.min() < 0 or positions.max() >= self.logical_len):
            raise ContractViolation("logical position out of range")
        table = np.asarray(self.blocks, dtype=np.int64)
        return table[positions // self.block_size] * self.block_size + positions % self.block_size


def resolve_slot(table: BlockTable, p: int) -> int:
    """Physical slot of logical position p under the table's mapping."""
    return table.resolve_slot(p)


@dataclass
class SlotMapping:
    """Materialized copy plan: src[h, t] -> dst[t] for every compact position."""

    src: np.ndarray  # [heads, k] physical slots under the old table
    dst: np.ndarray  # [k] physical slots under the new table

    def __post_init__(self):
        if self.dst.size != np.unique(self.dst).size:
            raise ContractViolation("destination slots must be pairwise distinct")


class PagedRequest:
    """One decoding stream over a pool: its table and position bookkeeping.

    ``decode_pos`` counts tokens generated since the start and is never reset
    by compaction; the next token continues from the original logical
    position even after the cache is physically shortened.
    """

    def __init__(self, pool: BlockPool):
        self.pool = pool
        self.table = BlockTable(pool.block_size)
        self.decode_pos = 0

    def append(self, k_vec: np.ndarray, v_vec: np.ndarray) -> None:
        """Write one token's per-head KV rows at the next logical position."""
        bs = self.table.block_size
        if self.table.logical_len == len(self.table.blocks) * bs:
            self.table.blocks.extend(self.pool.allocate(1))
        slot = self.table.blocks[self.table.logical_len // bs] * bs + self.table.logical_len % bs
        self.pool.keys[slot] = k_vec
        self.pool.values[slot] = v_vec
        self.table.logical_len += 1
        self.decode_pos += 1

    def dense_view(self) -> tuple[np.ndarray, np.ndarray]:
        """Materialize [heads, T, D] copies via the ordinary slot mapping."""
        slots = self.table.slots(np.arange(self.table.logical_len))
        return (
            self.pool.keys[slots].transpose(1, 0, 2).copy(),
            self.pool.values[slots].transpose(1, 0, 2).copy(),
        )


def plan_compaction(old_table: BlockTable, new_table: BlockTable, keep: np.ndarray) -> SlotMapping:
    """Resolve per-head source slots and shared destination slots for a copy."""
    keep = np.asarray(keep, dtype=np.int64)
    if keep.ndim != 2:
        raise ContractViolation("keep must be [heads, k]")
    src = np.stack([old_table.slots(keep[h]) for h in range(keep.shape[0])])
    dst = new_table.slots(np.arange(keep.shape[1]))
    return SlotMapping(src=src, dst=dst)


def compact(pool: BlockPool, table: BlockTable, keep: np.ndarray) -> BlockTable:
    """Materialize head-wise keep sets into compact replacement blocks.

    For each head h and compact position t, the KV rows at the old slot of
    keep[h, t] are copied to the new slot of t. Old blocks are freed only
    after the copy; on allocation failure the old table is untouched.
    """
    keep = np.asarray(keep, dtype=np.int64)
    if keep.ndim != 2 or keep.shape[0] != pool.kv_heads:
        raise ContractViolation(f"keep must be [kv_heads, k], got {keep.shape}")
    k = keep.shape[1]
    if k < 1:
        raise ContractViolation("cannot compact to an empty cache")
    if keep.min() < 0 or keep.max() >= table.logical_len:
        raise ContractViolation("keep position out of range for the old table")
    bs = table.block_size
    n_new = -(-k // bs)
    new_blocks = pool.allocate(n_new)
    new_table = BlockTable(bs, new_blocks, logical_len=k)
    mapping = plan_compaction(table, new_table, keep)
    for h in range(pool.kv_heads):
        pool.keys[mapping.dst, h, :] = pool.keys[mapping.src[h], h, :]
        pool.values[mapping.dst, h, :] = pool.values[mapping.src[h], h, :]
    pool.free(table.blocks)
    return new_table


def attention_readout(keys: np.ndarray, values: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Single-query softmax attention per head over a dense [H, T, D] cache."""
    scale = 1.0 / np.sqrt(keys.shape[-1])
    scores = np.einsum("htd,hd->ht", keys, query) * scale
    scores -= scores.max(axis=-1, keepdims=True)
    w = np.exp(scores)
    w /= w.sum(axis=-1, keepdims=True)
    return np.einsum("ht,htd->hd", w, values)


def verify_compaction(
    pool: BlockPool,
    table: BlockTable,
    dense_keys: np.ndarray,
    dense_values: np.ndarray,
    query: np.ndarray | None = None,
    atol: float = 1e-6,
) -> bool:
    """Check the compacted paged cache against densely gathered tensors.

    Entries must match elementwise within ``atol`` and a single-query
    attention readout over both caches must agree within ``atol``. Shape
    mismatches are reported as False with a diagnostic, not raised.
    """
    slots = table.slots(np.arange(table.logical_len))
    paged_k = pool.keys[slots].transpose(1, 0, 2)
    paged_v = pool.values[slots].transpose(1, 0, 2)
    if paged_k.shape != dense_keys.shape or paged_v.shape != dense_values.shape:
        logger.warning(
            "compaction shape mismatch: paged %s vs dense %s", paged_k.shape, dense_keys.shape
        )
        return False
    if not (
        np.allclose(paged_k, dense_keys, atol=atol)
        and np.allclose(paged_v, dense_values, atol=atol)
    ):
        logger.warning("compaction value mismatch beyond atol=%g", atol)
        return False
    if query is None:
        query = np.ones((pool.kv_heads, pool.head_dim), dtype=np.float64)
    out_paged = attention_readout(paged_k, paged_v, query)
    out_dense = attention_readout(dense_keys, dense_values, query)
    if not np.allclose(out_paged, out_dense, atol=atol):
        logger.warning("attention readout mismatch beyond atol=%g", atol)
        return False
    return True


def run_equivalence_fuzz(n_cases: int, seed: int, corrupt: bool = False) -> tuple[int, int]:
    """Randomized head-distinct compaction vs dense gather; returns (pass, fail).

    ``corrupt`` perturbs one slot after each compaction, as a sensitivity
    check that the verifier actually discriminates.
    """
    rng = np.random.default_rng(seed)
    passed = failed = 0
    for _ in range(n_cases):
        heads = int(rng.integers(1, 4))
        dim = int(rng.integers(2, 9))
        block_size = int(rng.integers(1, 9))
        total = int(rng.integers(1, 49))
        keep_n = int(rng.integers(1, total + 1))
        blocks_needed = -(-total // block_size) + -(-keep_n // block_size)
        pool = BlockPool(blocks_needed + int(rng.integers(0, 3)), block_size, heads, dim)
        req = PagedRequest(pool)
        for _ in range(total):
            req.append(rng.normal(size=(heads, dim)), rng.normal(size=(heads, dim)))
        dense_k, dense_v = req.dense_view()
        # head-distinct keep sets, sorted per head
        keep = np.stack(
            [np.sort(rng.choice(total, size=keep_n, replace=False)) for _ in range(heads)]
        )
        new_table = compact(pool, req.table, keep)
        # free-list conservation: every block is either free or in the new table
        if pool.num_free + len(new_table.blocks) != pool.num_blocks:
            failed += 1
            continue
        if corrupt:
            slot = new_table.resolve_slot(int(rng.integers(0, keep_n)))
            pool.keys[slot, 0, 0] += 1.0
        gathered_k = np.stack([dense_k[h, keep[h]] for h in range(heads)])
        gathered_v = np.stack([dense_v[h, keep[h]] for h in range(heads)])
        query = rng.normal(size=(heads, dim))
        ok = verify_compaction(pool, new_table, gathered_k, gathered_v, query)
        if ok:
            passed += 1
        else:
            failed += 1
    return passed, failed
