"""Keep-set construction: in-segment top-k under quotas, plus the baseline
whole-cache policies that share the same trim/backfill machinery.

Ranking is total and deterministic everywhere: higher score wins, ties go to
the lower index. Trimming drops the worst-ranked non-must-keep entries;
backfilling adds the best-ranked unselected ones.
"""

from __future__ import annotations

import numpy as np

from masskv.core import ContractViolation
from masskv.segmentation import SegmentSet


def _best_first(g: np.ndarray) -> np.ndarray:
    """Indices ordered best-to-worst: descending score, ascending index."""
    return np.lexsort((np.arange(g.size), -g))


def in_segment_topk(g: np.ndarray, start: int, end: int, q: int) -> np.ndarray:
    """The q highest-scoring positions inside [start, end), sorted ascending."""
    length = end - start
    if q > length:
        raise ContractViolation(f"quota {q} exceeds segment length {length}")
    if q == 0:
        return np.zeros(0, dtype=np.int64)
    local = g[start:end]
    order = _best_first(local)
    return np.sort(order[:q]) + start


def _fit_to_budget(
    picked: np.ndarray, must: np.ndarray, g: np.ndarray, t_keep: int
) -> np.ndarray:
    """Trim worst non-must entries or backfill best unselected ones until the
    keep set has exactly min(t_keep, T) members."""
    total = g.size
    target = min(t_keep, total)
    if must.size > target:
        raise ContractViolation("must-keep set exceeds the budget; reconcile it first")
    mask = np.zeros(total, dtype=bool)
    mask[picked] = True
    mask[must] = True
    size = int(mask.sum())
    if size > target:
        droppable = np.flatnonzero(mask)
        droppable = droppable[~np.isin(droppable, must)]
        order = _best_first(g)
        ranked = order[np.isin(order, droppable)]
        mask[ranked[-(size - target):]] = False
    elif size < target:
        candidates = _best_first(g)
        candidates = candidates[~mask[candidates]]
        mask[candidates[: target - size]] = True
    return np.flatnonzero(mask)


def select(
    g: np.ndarray,
    segs: SegmentSet,
    quotas: np.ndarray,
    must: np.ndarray,
    t_keep: int,
) -> np.ndarray:
    """Union of per-segment top-quota picks and the must-keep set, fitted to
    exactly min(t_keep, T) indices. Everything is kept when T <= t_keep."""
    g = np.asarray(g, dtype=np.float64)
    must = np.asarray(must, dtype=np.int64)
    total = g.size
    if total <= t_keep:
        return np.arange(total, dtype=np.int64)
    if segs.total != total:
        raise ContractViolation("segments do not tile the score vector")
    if len(quotas) != len(segs):
        raise ContractViolation(f"{len(quotas)} quotas for {len(segs)} segments")
    picks = [in_segment_topk(g, a, b, int(q)) for (a, b), q in zip(segs, quotas)]
    picked = np.concatenate(picks) if picks else np.zeros(0, dtype=np.int64)
    return _fit_to_budget(picked, must, g, t_keep)


def gather_cache(keys: np.ndarray, values: np.ndarray, keep: np.ndarray):
    """Gather KV rows per head along the sequence axis.

    keys/values are [..., T, D]; keep is [..., k] broadcast over the leading
    axes, so heads may retain different positions.
    """
    keep = np.asarray(keep, dtype=np.int64)
    idx = keep[..., None]
    return (
        np.take_along_axis(keys, idx, axis=-2),
        np.take_along_axis(values, idx, axis=-2),
    )


def baseline_global_topk(g: np.ndarray, must: np.ndarray, t_keep: int) -> np.ndarray:
    """Must-keep entries plus the globally highest-scoring remainder."""
    g = np.asarray(g, dtype=np.float64)
    must = np.asarray(must, dtype=np.int64)
    total = g.size
    if total <= t_keep:
        return np.arange(total, dtype=np.int64)
    return _fit_to_budget(np.zeros(0, dtype=np.int64), must, g, t_keep)


def baseline_streaming(total: int, n_sink: int, t_keep: int) -> np.ndarray:
    """Sink prefix plus the most recent tokens filling the budget."""
    if total <= t_keep:
        return np.arange(total, dtype=np.int64)
    n_sink = min(n_sink, t_keep)
    sinks = np.arange(n_sink, dtype=np.int64)
    recent = np.arange(total - (t_keep - n_sink), total, dtype=np.int64)
    return np.union1d(sinks, recent)


def baseline_fixed_chunk(
    g: np.ndarray, chunk_len: int, must: np.ndarray, t_keep: int
) -> np.ndarray:
    """Rank fixed chunks by summed score and keep tokens chunk by chunk,
    truncating the straddling chunk by in-chunk score; then fit to budget."""
    if chunk_len < 1:
        raise ContractViolation("chunk_len must be >= 1")
    g = np.asarray(g, dtype=np.float64)
    total = g.size
    if total <= t_keep:
        return np.arange(total, dtype=np.int64)
    edges = list(range(0, total, chunk_len)) + [total]
    edges = sorted(set(edges))
    chunks = list(zip(edges[:-1], edges[1:]))
    sums = np.array([g[a:b].sum() for a, b in chunks])
    order = np.lexsort((np.arange(len(chunks)), -sums))
    picked = []
    budget = min(t_keep, total)
    for ci in order:
        if budget == 0:
            break
        a, b = chunks[ci]
        size = b - a
        if size <= budget:
            picked.append(np.arange(a, b, dtype=np.int64))
            budget -= size
        else:
            picked.append(in_segment_topk(g, a, b, budget))
            budget = 0
    picked = np.concatenate(picked) if picked else np.zeros(0, dtype=np.int64)
    return _fit_to_budget(picked, np.asarray(must, dtype=np.int64), g, t_keep)
