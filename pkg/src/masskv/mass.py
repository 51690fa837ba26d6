"""Quality-mass construction from recent attention usage.

Usage rows from the last W decoding queries are averaged (with causal
max-padding for suffix positions that fewer queries could see), optionally
smoothed with a short 1D average pool, and normalized into a positive mass
distribution over cache positions. An EMA credit store makes the mass
history-aware across compression events.
"""

from __future__ import annotations

import numpy as np

from masskv.core import ConfigError, ContractViolation


class UsageWindow:
    """Attention rows of the last ``w_valid`` decoding queries, shape [w, T].

    Row j is the distribution one query placed over the cache; due to causal
    masking row j only observed the first ``visible[j]`` positions. By default
    rows are consecutive queries ending at the cache tip, so
    ``visible[j] = T - w + 1 + j``. Entries beyond a row's visible prefix are
    ignored.
    """

    def __init__(self, rows: np.ndarray, visible: np.ndarray | None = None):
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
            raise ContractViolation(f"usage rows must be [w, T] with w, T >= 1, got {rows.shape}")
        w, t = rows.shape
        if visible is None:
            visible = t - w + 1 + np.arange(w, dtype=np.int64)
            if visible[0] < 1:
                raise ContractViolation(f"window of {w} rows needs a cache of length >= {w}")
        else:
            visible = np.asarray(visible, dtype=np.int64)
            if visible.shape != (w,) or visible.min() < 1 or visible.max() > t:
                raise ContractViolation("visible lengths must be in [1, T] per row")
        col = np.arange(t)
        mask = col[None, :] < visible[:, None]
        seen = np.where(mask, rows, 0.0)
        if (seen < 0).any():
            raise ContractViolation("attention rows must be non-negative")
        sums = seen.sum(axis=1)
        if not np.allclose(sums, 1.0, atol=1e-6):
            raise ContractViolation("each attention row must sum to 1 over its visible prefix")
        self.rows = rows
        self.visible = visible
        self.mask = mask

    @property
    def w_valid(self) -> int:
        return self.rows.shape[0]

    @property
    def cache_len(self) -> int:
        return self.rows.shape[1]

    def tail(self, n_rows: int) -> "UsageWindow":
        """The newest ``n_rows`` rows (all of them when n_rows >= w_valid)."""
        if n_rows >= self.w_valid:
            return self
        return UsageWindow(self.rows[-n_rows:], self.visible[-n_rows:])


def aggregate_usage(window: UsageWindow, max_rows: int) -> np.ndarray:
    """Mean attention each position received from the newest ``max_rows`` queries.

    Suffix positions seen by fewer queries have their missing observations
    padded with the maximum score observed anywhere in the window, so newly
    generated tokens are not underestimated.
    """
    if window is None:
        raise ContractViolation("no usage evidence")
    if max_rows < 1:
        raise ConfigError("aggregation window must be >= 1 row")
    win = window.tail(max_rows)
    observed = win.rows[win.mask]
    pad = observed.max()
    padded = np.where(win.mask, win.rows, pad)
    return padded.mean(axis=0)


def smooth(u: np.ndarray, kernel: int) -> np.ndarray:
    """Centered moving average; the window shrinks at sequence edges.

    kernel=1 is the identity. Shrinking (rather than zero-padding) avoids
    inventing phantom mass outside the cache.
    """
    if kernel < 1 or kernel % 2 == 0:
        raise ConfigError(f"smoothing kernel must be odd and >= 1, got {kernel}")
    u = np.asarray(u, dtype=np.float64)
    if kernel == 1 or u.size <= 1:
        return u.copy()
    t = u.size
    r = kernel // 2
    csum = np.concatenate([[0.0], np.cumsum(u)])
    lo = np.maximum(np.arange(t) - r, 0)
    hi = np.minimum(np.arange(t) + r + 1, t)
    return (csum[hi] - csum[lo]) / (hi - lo)


def normalize_mass(u: np.ndarray, epsilon: float) -> np.ndarray:
    """Clip negatives, add epsilon, normalize to a strictly positive distribution."""
    if epsilon <= 0.0:
        raise ConfigError(f"epsilon must be > 0, got {epsilon}")
    u = np.asarray(u, dtype=np.float64)
    if u.size < 1:
        raise ContractViolation("cannot normalize an empty usage vector")
    num = np.maximum(u, 0.0) + epsilon
    return num / num.sum()


def _normalize(v: np.ndarray) -> np.ndarray:
    total = v.sum()
    if total <= 0.0:
        raise ContractViolation("cannot normalize a non-positive vector")
    return v / total


class EmaCreditStore:
    """Per-(layer, head) decayed accumulation of past mass assignments.

    Credit follows surviving tokens across gathers (``remap``) and is mixed
    into the current mass so that consistently useful regions keep their
    budget share across events. Single-writer per (layer, head).
    """

    def __init__(self, decay: float, mix: float, enabled: bool = True):
        if not (0.0 < decay < 1.0):
            raise ConfigError(f"ema decay must be in (0, 1), got {decay}")
        if not (0.0 <= mix <= 1.0):
            raise ConfigError(f"mass mix must be in [0, 1], got {mix}")
        self.decay = decay
        self.mix = mix
        self.enabled = enabled
        self._credit: dict[tuple[int, int], np.ndarray] = {}

    def credit(self, layer: int, head: int, length: int | None = None) -> np.ndarray:
        """Current credit vector; created as zeros of ``length`` on first use."""
        key = (layer, head)
        if key not in self._credit:
            if length is None:
                raise ContractViolation(f"no credit yet for layer={layer}, head={head}")
            self._credit[key] = np.zeros(length, dtype=np.float64)
        return self._credit[key]

    def grow_to(self, layer: int, head: int, length: int) -> None:
        """Zero-extend credit for tokens generated since the last event."""
        cur = self.credit(layer, head, length)
        if length < cur.size:
            raise ContractViolation("credit cannot shrink outside remap")
        if length > cur.size:
            self._credit[(layer, head)] = np.concatenate(
                [cur, np.zeros(length - cur.size, dtype=np.float64)]
            )

    def update_and_mix(self, layer: int, head: int, m_cur: np.ndarray) -> np.ndarray:
        """Decay-update the credit with the current mass and return the
        history-aware mass used for segmentation and quotas.

        Disabled stores return ``m_cur`` untouched and leave credit alone.
        """
        m_cur = np.asarray(m_cur, dtype=np.float64)
        if not self.enabled:
            return m_cur
        c = self.credit(layer, head, m_cur.size)
        if c.size != m_cur.size:
            raise ContractViolation(
                f"credit misaligned with cache: {c.size} vs {m_cur.size}"
            )
        c = self.decay * c + (1.0 - self.decay) * m_cur
        self._credit[(layer, head)] = c
        mixed = self.mix * m_cur + (1.0 - self.mix) * _normalize(c)
        return _normalize(mixed)

    def remap(self, layer: int, head: int, keep: np.ndarray, new_len: int) -> None:
        """Gather credit by the keep set; newborn positions start at zero."""
        keep = np.asarray(keep, dtype=np.int64)
        if keep.size == 0:
            raise ContractViolation("keep set may not be empty when remapping credit")
        if new_len < keep.size:
            raise ContractViolation("new_len must be >= |keep|")
        c = self.credit(layer, head, int(keep.max()) + 1)
        if keep.min() < 0 or keep.max() >= c.size:
            raise ContractViolation("keep index out of range for credit")
        fresh = np.zeros(new_len, dtype=np.float64)
        fresh[: keep.size] = c[keep]
        self._credit[(layer, head)] = fresh
