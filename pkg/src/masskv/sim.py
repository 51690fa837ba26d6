"""Toy-attention decoding harness.

Streams synthetic tokens through a single-layer decoder, fires a compression
event every ``interval`` generated tokens, and records keep sets (as original
token ids via the ledger), segment boundaries, quotas, and mass vectors into
a RunTrace for the structural diagnostics. Attention rows come either from
the decoder's own softmax attention or from a synthetic workload generator
that shapes where attention mass sits.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field

import numpy as np

from masskv.core import CompressionConfig, ConfigError, TokenLedger, advance_ledger
from masskv.engine import OpCounters, compress_event
from masskv.mass import EmaCreditStore, UsageWindow
from masskv.selector import gather_cache

SCHEMA_VERSION = 1

WORKLOADS = ("uniform", "heavy_hitter", "drifting_focus", "low_region_adversarial")


class ToyDecoder:
    """Single-layer decoder with fixed random projections and softmax attention.

    Deterministic given the seed; stands in for a backbone so the policies
    have real key/value rows to gather and live attention rows to observe.
    """

    def __init__(self, seed: int, kv_heads: int = 2, head_dim: int = 16):
        self.seed = seed
        self.kv_heads = kv_heads
        self.head_dim = head_dim
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xD0DE]))
        scale = 1.0 / np.sqrt(head_dim)
        shape = (kv_heads, head_dim, head_dim)
        self.w_q = rng.normal(size=shape) * scale
        self.w_k = rng.normal(size=shape) * scale
        self.w_v = rng.normal(size=shape) * scale

    def project(self, x: np.ndarray):
        """Per-head query/key/value vectors for one input embedding."""
        q = np.einsum("hij,j->hi", self.w_q, x)
        k = np.einsum("hij,j->hi", self.w_k, x)
        v = np.einsum("hij,j->hi", self.w_v, x)
        return q, k, v

    def attention_rows(self, q: np.ndarray, keys: np.ndarray) -> np.ndarray:
        """Softmax attention of one query over the live cache, per head."""
        scores = np.einsum("htd,hd->ht", keys, q) / np.sqrt(self.head_dim)
        scores -= scores.max(axis=-1, keepdims=True)
        w = np.exp(scores)
        return w / w.sum(axis=-1, keepdims=True)


@dataclass
class WorkloadSpec:
    """Synthetic attention-shape generator plus run length and seed."""

    name: str
    steps: int
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in WORKLOADS:
            raise ConfigError(f"unknown workload {self.name!r}; choose from {WORKLOADS}")
        if self.steps < 1:
            raise ConfigError("workload steps must be >= 1")


def _jitter(base: np.ndarray, heads: int, rng, amp: float) -> np.ndarray:
    """Per-head multiplicative noise, bounded so score orderings with ratio
    gaps above (1+amp)/(1-amp) are preserved; rows renormalized."""
    noise = 1.0 + amp * rng.uniform(-1.0, 1.0, size=(heads, base.size))
    rows = base[None, :] * noise
    return rows / rows.sum(axis=-1, keepdims=True)


class _WorkloadRows:
    """Stateful per-step attention-row generator for one workload."""

    def __init__(self, spec: WorkloadSpec, heads: int):
        self.spec = spec
        self.heads = heads
        self.rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed), 0xA77E]))
        self.amp = float(spec.params.get("noise", 0.05))
        p = spec.params
        if spec.name == "heavy_hitter":
            self.hitter_count = int(p.get("hitter_count", 4))
            self.hitter_weight = float(p.get("hitter_weight", 0.5))
            self.hitter_fracs = self.rng.uniform(0.05, 0.85, size=self.hitter_count)
        elif spec.name == "drifting_focus":
            self.width = float(p.get("width", 0.05))
            self.drift = float(p.get("drift", 0.002))
            self.phase = float(p.get("phase", 0.15))
            self.floor = float(p.get("floor", 0.25))
        elif spec.name == "low_region_adversarial":
            self.region_start = int(p.get("region_start", 32))
            self.region_len = int(p.get("region_len", 64))
            self.suppress = float(p.get("suppress", 0.05))

    def rows(self, step: int, total: int) -> np.ndarray:
        name = self.spec.name
        if name == "uniform":
            base = np.ones(total)
        elif name == "heavy_hitter":
            base = np.ones(total)
            pos = np.minimum((self.hitter_fracs * total).astype(np.int64), total - 1)
            boost = self.hitter_weight / (1.0 - self.hitter_weight) * total / max(len(pos), 1)
            base[pos] += boost
        elif name == "drifting_focus":
            center = ((self.phase + self.drift * step) % 1.0) * max(total - 1, 1)
            rel = np.arange(total) - center
            sigma = max(self.width * total, 1.0)
            bump = np.exp(-0.5 * (rel / sigma) ** 2)
            base = self.floor / total + (1.0 - self.floor) * bump / bump.sum()
        else:  # low_region_adversarial
            base = np.ones(total)
            lo = min(self.region_start, total)
            hi = min(self.region_start + self.region_len, total)
            base[lo:hi] *= self.suppress
        base = base / base.sum()
        return _jitter(base, self.heads, self.rng, self.amp)


@dataclass
class EventRecord:
    """Everything one compression event contributed to the trace."""

    index: int
    step: int                 # tokens generated when the event fired
    cache_len: int            # pre-compression cache length
    keep_positions: np.ndarray  # [heads, k], pre-compression coordinates
    kept_ids: np.ndarray        # [heads, k], original token ids
    id_watermark: int           # ids below this existed at this event
    segments: list | None
    quotas: list | None
    mass: list | None
    counters: dict
    wall_time: float


@dataclass
class RunTrace:
    """One schedule run: config echo, per-event records, metric summaries."""

    policy: str
    scorer: str
    workload: str | None
    workload_params: dict
    seed: int
    steps: int
    config: CompressionConfig
    kv_heads: int
    head_dim: int
    events: list = field(default_factory=list)
    summaries: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION


def run_schedule(
    source,
    policy: str,
    cfg: CompressionConfig,
    steps: int | None = None,
    scorer: str = "expected",
    kv_heads: int = 2,
    head_dim: int = 16,
    record_mass: bool = True,
) -> RunTrace:
    """Decode ``steps`` tokens, compressing to ``t_keep`` every ``interval``.

    ``source`` is a WorkloadSpec (synthetic attention rows over a toy KV
    stream) or a ToyDecoder (its own attention rows). Events fire only when
    the cache actually exceeds the budget.
    """
    t_keep = cfg.require_t_keep()
    if isinstance(source, WorkloadSpec):
        workload = source
        steps = steps if steps is not None else workload.steps
        seed = workload.seed
        decoder = ToyDecoder(seed, kv_heads=kv_heads, head_dim=head_dim)
        row_gen = _WorkloadRows(workload, decoder.kv_heads)
    elif isinstance(source, ToyDecoder):
        workload = None
        decoder = source
        seed = decoder.seed
        row_gen = None
        if steps is None:
            raise ConfigError("steps is required when driving a ToyDecoder directly")
    else:
        raise ConfigError(f"source must be a WorkloadSpec or ToyDecoder, got {type(source)}")
    heads, dim = decoder.kv_heads, decoder.head_dim
    rng_in = np.random.default_rng(np.random.SeedSequence([int(seed), 0x117]))

    capacity = t_keep + cfg.interval
    keys = np.zeros((heads, capacity, dim))
    values = np.zeros((heads, capacity, dim))
    t_cur = 0
    ledger = TokenLedger.fresh(1, heads, 0)
    pending = 0
    credit = EmaCreditStore(cfg.ema_decay, cfg.mass_mix, enabled=cfg.ema_on)
    window_rows: list[np.ndarray] = []

    trace = RunTrace(
        policy=policy,
        scorer=scorer,
        workload=workload.name if workload else None,
        workload_params=dict(workload.params) if workload else {},
        seed=int(seed),
        steps=int(steps),
        config=cfg,
        kv_heads=heads,
        head_dim=dim,
    )

    for s in range(steps):
        x = rng_in.normal(size=dim)
        q, k, v = decoder.project(x)
        keys[:, t_cur] = k
        values[:, t_cur] = v
        t_cur += 1
        pending += 1
        if row_gen is not None:
            rows = row_gen.rows(s, t_cur)
        else:
            rows = decoder.attention_rows(q, keys[:, :t_cur])
        window_rows.append(rows)
        if len(window_rows) > cfg.window:
            window_rows.pop(0)

        if (s + 1) % cfg.interval != 0 or t_cur <= t_keep:
            continue

        t0 = time.perf_counter()
        ledger = advance_ledger(
            ledger,
            np.broadcast_to(np.arange(ledger.length), (1, heads, ledger.length)),
            pending,
        )
        pending = 0
        windows = []
        w = len(window_rows)
        for h in range(heads):
            mat = np.zeros((w, t_cur))
            for j, r in enumerate(window_rows):
                mat[j, : r.shape[1]] = r[h]
            windows.append(UsageWindow(mat))
        head_keys = [keys[h, :t_cur] for h in range(heads)]
        counters = OpCounters()
        sels = compress_event(
            policy, windows, head_keys, cfg, scorer=scorer, credit=credit, counters=counters
        )
        keep = np.stack([sel.keep for sel in sels])
        kept_ids = np.stack([ledger.head_ids(0, h)[keep[h]] for h in range(heads)])
        is_ams = sels[0].segments is not None
        trace.events.append(
            EventRecord(
                index=len(trace.events),
                step=s + 1,
                cache_len=t_cur,
                keep_positions=keep,
                kept_ids=kept_ids,
                id_watermark=ledger.next_id,
                segments=[sel.segments.boundaries.tolist() for sel in sels] if is_ams else None,
                quotas=[sel.quotas.tolist() for sel in sels] if is_ams else None,
                mass=[sel.mass.tolist() for sel in sels] if (is_ams and record_mass) else None,
                counters=vars(counters).copy(),
                wall_time=time.perf_counter() - t0,
            )
        )
        new_k, new_v = gather_cache(keys[:, :t_cur], values[:, :t_cur], keep)
        kept = keep.shape[1]
        keys[:, :kept] = new_k
        values[:, :kept] = new_v
        ledger = advance_ledger(ledger, keep[None, ...], 0)
        if cfg.ema_on and policy == "ams":
            for h in range(heads):
                credit.remap(0, h, keep[h], kept)
        window_rows.clear()
        t_cur = kept

    _summarize(trace)
    return trace


def _summarize(trace: RunTrace) -> None:
    from masskv import diagnostics

    iou = diagnostics.metric_retained_iou(trace)
    trace.summaries = {
        "events": len(trace.events),
        "mean_retained_iou": float(np.mean(iou)) if iou.size else None,
        "wipeout_rate": diagnostics.metric_wipeout_rate(trace) if trace.events else None,
        "spatial_histogram": (
            diagnostics.metric_spatial_histogram(trace).tolist() if trace.events else None
        ),
    }


def _config_dict(cfg: CompressionConfig) -> dict:
    return dataclasses.asdict(cfg)


def trace_to_dict(trace: RunTrace, include_timing: bool = False) -> dict:
    """JSON-ready dict; timing is excluded by default so that repeated runs
    with the same (seed, config, policy) serialize byte-identically."""
    events = []
    for ev in trace.events:
        rec = {
            "index": ev.index,
            "step": ev.step,
            "cache_len": ev.cache_len,
            "keep_positions": ev.keep_positions.tolist(),
            "kept_ids": ev.kept_ids.tolist(),
            "id_watermark": ev.id_watermark,
            "segments": ev.segments,
            "quotas": ev.quotas,
            "mass": ev.mass,
            "counters": ev.counters,
        }
        if include_timing:
            rec["wall_time"] = ev.wall_time
        events.append(rec)
    return {
        "schema_version": trace.schema_version,
        "policy": trace.policy,
        "scorer": trace.scorer,
        "workload": trace.workload,
        "workload_params": trace.workload_params,
        "seed": trace.seed,
        "steps": trace.steps,
        "kv_heads": trace.kv_heads,
        "head_dim": trace.head_dim,
        "config": _config_dict(trace.config),
        "events": events,
        "summaries": trace.summaries,
    }


def write_trace_json(trace: RunTrace, path, include_timing: bool = False) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(trace_to_dict(trace, include_timing), fh, sort_keys=True, indent=1)
        fh.write("\n")


def write_trace_csv(trace: RunTrace, path) -> None:
    """Flat ``event,metric,value`` rows; run-level summaries use event=-1."""
    from masskv import diagnostics

    lines = ["event,metric,value"]
    iou = diagnostics.metric_retained_iou(trace)
    for ev in trace.events:
        lines.append(f"{ev.index},cache_len,{ev.cache_len}")
        lines.append(f"{ev.index},kept,{ev.keep_positions.shape[1]}")
        if ev.segments is not None:
            mean_segs = float(np.mean([len(b) - 1 for b in ev.segments]))
            lines.append(f"{ev.index},segments_mean,{mean_segs!r}")
        if ev.index >= 1:
            lines.append(f"{ev.index},retained_iou,{float(iou[ev.index - 1])!r}")
    for key in ("mean_retained_iou", "wipeout_rate"):
        value = trace.summaries.get(key)
        if value is not None:
            lines.append(f"-1,{key},{value!r}")
    hist = trace.summaries.get("spatial_histogram")
    if hist:
        for i, v in enumerate(hist):
            lines.append(f"-1,spatial_bin_{i},{v!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
