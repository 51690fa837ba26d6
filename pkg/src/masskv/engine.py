"""Per-event policy application across heads.

One compression event takes the per-head usage windows, keys, and scorer,
and produces each head's keep set plus the allocation internals used by the
diagnostics. Heads are independent; the loop here could fan out in parallel
without sharing mutable state (the credit store is single-writer per head).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from masskv.allocation import compute_quotas, must_keep, reconcile_budget
from masskv.core import CompressionConfig, ConfigError
from masskv.mass import EmaCreditStore, UsageWindow, aggregate_usage, normalize_mass, smooth
from masskv.scorers import get_scorer
from masskv.segmentation import SegmentSet, segment
from masskv.selector import (
    baseline_fixed_chunk,
    baseline_global_topk,
    baseline_streaming,
    select,
)

POLICIES = ("ams", "global_topk", "streaming", "fixed_chunk")

DEFAULT_CHUNK_LEN = 20


@dataclass
class HeadSelection:
    """Outcome of one compression event for a single (batch, head)."""

    keep: np.ndarray
    segments: SegmentSet | None = None
    quotas: np.ndarray | None = None
    mass: np.ndarray | None = None


@dataclass
class OpCounters:
    """Rough operation counts per event, for the linear-cost bookkeeping."""

    cache_len: int = 0
    usage_elems: int = 0       # window rows x positions touched by aggregation
    smooth_elems: int = 0
    prefix_elems: int = 0      # prefix-sum work during segmentation
    cut_thresholds: int = 0
    segments: int = 0
    quota_entries: int = 0     # segment-vector ops during allocation
    select_candidates: int = 0


def ams_head_selection(
    window: UsageWindow,
    g: np.ndarray,
    cfg: CompressionConfig,
    credit: EmaCreditStore | None = None,
    layer: int = 0,
    head: int = 0,
    counters: OpCounters | None = None,
) -> HeadSelection:
    """Allocate-then-score selection for one head."""
    t_keep = cfg.require_t_keep()
    total = g.size
    if total <= t_keep:
        return HeadSelection(keep=np.arange(total, dtype=np.int64))
    u = aggregate_usage(window, cfg.window)
    u = smooth(u, cfg.smooth_kernel)
    m = normalize_mass(u, cfg.epsilon)
    if credit is not None and cfg.ema_on:
        credit.grow_to(layer, head, total)
        m = credit.update_and_mix(layer, head, m)
    segs = segment(m, cfg)
    must, t_rem = reconcile_budget(must_keep(total, cfg), t_keep)
    quotas = compute_quotas(segs, m, t_rem, cfg)
    keep = select(g, segs, quotas.quotas, must.indices, t_keep)
    if counters is not None:
        counters.cache_len += total
        counters.usage_elems += window.w_valid * total
        counters.smooth_elems += total
        counters.prefix_elems += total
        counters.cut_thresholds += int(np.floor(1.0 / cfg.segment_mass)) + 1
        counters.segments += len(segs)
        counters.quota_entries += len(segs)
        counters.select_candidates += total
    return HeadSelection(keep=keep, segments=segs, quotas=quotas.quotas, mass=m)


def compress_event(
    policy: str,
    windows: list[UsageWindow],
    keys: list[np.ndarray] | None,
    cfg: CompressionConfig,
    scorer: str = "expected",
    credit: EmaCreditStore | None = None,
    layer: int = 0,
    chunk_len: int = DEFAULT_CHUNK_LEN,
    counters: OpCounters | None = None,
) -> list[HeadSelection]:
    """Apply a policy to every head of one layer at one compression event.

    ``windows[h]`` is head h's usage window; ``keys[h]`` its [T, D] key rows
    (may be None for scorers that do not need keys).
    """
    if policy not in POLICIES:
        raise ConfigError(f"unknown policy {policy!r}; choose from {POLICIES}")
    t_keep = cfg.require_t_keep()
    score_fn = get_scorer(scorer)
    out = []
    for h, window in enumerate(windows):
        head_keys = keys[h] if keys is not None else None
        total = window.cache_len
        if policy == "streaming":
            keep = baseline_streaming(total, cfg.n_sink, t_keep)
            out.append(HeadSelection(keep=keep))
            continue
        g = score_fn(window, head_keys, cfg)
        if policy == "ams":
            out.append(
                ams_head_selection(window, g, cfg, credit, layer, h, counters)
            )
            continue
        must, _ = reconcile_budget(must_keep(total, cfg), t_keep)
        if policy == "global_topk":
            keep = baseline_global_topk(g, must.indices, t_keep)
        else:
            keep = baseline_fixed_chunk(g, chunk_len, must.indices, t_keep)
        out.append(HeadSelection(keep=keep))
    return out
