"""Plug-and-play token-importance scorers.

Each scorer returns one real score per cache position (higher = keep). The
selection stage only consumes the ordering, so any deterministic scorer can
drive the pipeline.
"""

from __future__ import annotations

import numpy as np

from masskv.core import CompressionConfig, ConfigError, ContractViolation
from masskv.mass import UsageWindow, aggregate_usage


def score_recent_attention(window: UsageWindow) -> np.ndarray:
    """Attention paid to each position by the single most recent query.

    Suffix positions that query never saw get the row's max over what it did
    see, mirroring the usage padding rule.
    """
    if window is None:
        raise ContractViolation("no usage evidence")
    row = window.rows[-1]
    seen = int(window.visible[-1])
    g = row.astype(np.float64).copy()
    if seen < g.size:
        g[seen:] = g[:seen].max()
    return g


def score_expected_attention_proxy(window: UsageWindow, max_rows: int) -> np.ndarray:
    """Mean attention over the recent-query window with causal max-padding.

    Stands in for expectation-based scorers; shares its machinery with the
    usage aggregation that feeds the mass distribution.
    """
    return aggregate_usage(window, max_rows)


def score_key_diff(keys: np.ndarray) -> np.ndarray:
    """L2 difference between consecutive key vectors; the first position
    copies its neighbor so sinks are neither favored nor punished here."""
    keys = np.asarray(keys, dtype=np.float64)
    if keys.ndim != 2 or keys.shape[0] < 1:
        raise ContractViolation(f"keys must be [T, D] with T >= 1, got {keys.shape}")
    t = keys.shape[0]
    if t == 1:
        return np.zeros(1, dtype=np.float64)
    g = np.empty(t, dtype=np.float64)
    g[1:] = np.linalg.norm(np.diff(keys, axis=0), axis=1)
    g[0] = g[1]
    return g


def score_constant(total: int, value: float) -> np.ndarray:
    """Flat scores; useful as a tie-break and plumbing fixture."""
    return np.full(total, float(value), dtype=np.float64)


def get_scorer(name: str):
    """Scorer by registry name; each takes (window, keys, cfg) per head."""
    if name not in SCORERS:
        raise ConfigError(f"unknown scorer {name!r}; choose from {sorted(SCORERS)}")
    return SCORERS[name]


def _recent(window: UsageWindow, keys: np.ndarray, cfg: CompressionConfig) -> np.ndarray:
    return score_recent_attention(window)


def _expected(window: UsageWindow, keys: np.ndarray, cfg: CompressionConfig) -> np.ndarray:
    return score_expected_attention_proxy(window, cfg.window)


def _keydiff(window: UsageWindow, keys: np.ndarray, cfg: CompressionConfig) -> np.ndarray:
    if keys is None:
        raise ContractViolation("keydiff scorer needs key vectors")
    return score_key_diff(keys)


def _constant(window: UsageWindow, keys: np.ndarray, cfg: CompressionConfig) -> np.ndarray:
    total = window.cache_len if window is not None else keys.shape[0]
    return score_constant(total, 1.0)


SCORERS = {
    "recent": _recent,
    "expected": _expected,
    "keydiff": _keydiff,
    "constant": _constant,
}
