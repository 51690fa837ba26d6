#!/usr/bin/env python3
"""Budgeting a compression event by hand.

Shows must-keep carving, budget reconciliation, mass-proportional quota
apportionment, and the in-segment top-k with trim/backfill, on a cache small
enough to eyeball.
"""

import numpy as np

from masskv import compute_quotas, default_config, must_keep, reconcile_budget, select, segment

T = 48
T_KEEP = 16
rng = np.random.default_rng(7)

cfg = default_config().replace(
    t_keep=T_KEEP, n_sink=2, n_last=4, min_seg_len=2, max_seg_len=12, segment_mass=0.2
)

# mass concentrated in the middle third
mass = np.full(T, 0.2)
mass[16:32] += 2.0
mass /= mass.sum()

# scores are independent of mass: the scorer ranks tokens, mass shapes regions
scores = rng.normal(size=T)

mk = must_keep(T, cfg)
mk, t_rem = reconcile_budget(mk, T_KEEP)
print(f"must-keep (sinks + recent suffix): {mk.indices.tolist()}")
print(f"budget {T_KEEP} minus must-keep leaves T_rem = {t_rem}")

segs = segment(mass, cfg)
quotas = compute_quotas(segs, mass, t_rem, cfg)
print("\nsegment        mass   quota")
for (a, b), m_i, q_i in zip(segs, quotas.seg_mass, quotas.quotas):
    print(f"[{a:2d}, {b:2d})      {m_i:.3f}   {q_i}")
print(f"quota total = {quotas.quotas.sum()} = T_rem exactly")

keep = select(scores, segs, quotas.quotas, mk.indices, T_KEEP)
print(f"\nfinal keep set ({keep.size} of {T}): {keep.tolist()}")

marks = np.full(T, ".")
marks[keep] = "k"
marks[mk.indices] = "M"
print("cache map (M = must-keep, k = kept by quota/score):")
print("  " + "".join(marks))

assert keep.size == T_KEEP
assert np.isin(mk.indices, keep).all()
print("\nevery segment kept at least min(q_min, len) tokens; the middle third,")
print("holding most of the mass, won proportionally more of the budget.")
