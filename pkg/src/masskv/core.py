"""Shared shapes, compression configuration, and the token-identity ledger.

The ledger maps cache positions back to the global ids tokens were born with,
which is what lets the diagnostics compare retained sets across repeated
compressions after positions have been reshuffled by gathers.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np


class ConfigError(ValueError):
    """A configuration value is outside its documented range."""


class ContractViolation(ValueError):
    """An operation was called with arguments violating its precondition."""


@dataclass(frozen=True)
class CacheShape:
    """Dimensions of a KV cache tensor [batch, kv_heads, seq_len, head_dim]."""

    batch: int
    kv_heads: int
    seq_len: int
    head_dim: int

    def __post_init__(self):
        for name in ("batch", "kv_heads", "seq_len", "head_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"CacheShape.{name} must be >= 1")


@dataclass(frozen=True)
class CompressionConfig:
    """Knobs for one compression policy run.

    ``t_keep`` (the post-compression cache length) has no default and must be
    supplied by the caller before a run. Mode flags select the ablation
    variants: history-aware mass off, length-proportional quotas, or
    fixed-length segments.
    """

    t_keep: int | None = None       # post-compression cache length budget
    interval: int = 512             # tokens between compression events
    segment_mass: float = 0.1       # target mass per initial segment
    min_seg_len: int = 16
    max_seg_len: int = 256
    min_quota: int = 1              # per-segment retention floor
    n_sink: int = 4                 # always-kept prefix tokens
    n_last: int = 16                # always-kept recent suffix
    ema_decay: float = 0.9          # credit decay per event
    mass_mix: float = 0.9           # weight of current mass vs. credit
    window: int = 128               # recent decoding queries aggregated into usage
    epsilon: float = 1e-6           # positivity floor in mass normalization
    smooth_kernel: int = 5          # odd 1D average-pool width over usage
    ema_on: bool = True
    mass_weighted_quotas_on: bool = True
    fixed_length_segments_on: bool = False

    def __post_init__(self):
        if not (0.0 < self.segment_mass <= 1.0):
            raise ConfigError(f"segment_mass must be in (0, 1], got {self.segment_mass}")
        if not (0.0 < self.ema_decay < 1.0):
            raise ConfigError(f"ema_decay must be in (0, 1), got {self.ema_decay}")
        if not (0.0 <= self.mass_mix <= 1.0):
            raise ConfigError(f"mass_mix must be in [0, 1], got {self.mass_mix}")
        if self.min_seg_len > self.max_seg_len:
            raise ConfigError(
                f"min_seg_len {self.min_seg_len} exceeds max_seg_len {self.max_seg_len}"
            )
        if self.min_seg_len < 1:
            raise ConfigError("min_seg_len must be >= 1")
        if self.epsilon <= 0.0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if self.smooth_kernel < 1 or self.smooth_kernel % 2 == 0:
            raise ConfigError(f"smooth_kernel must be odd and >= 1, got {self.smooth_kernel}")
        if self.interval < 1:
            raise ConfigError("interval must be >= 1")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.min_quota < 0:
            raise ConfigError("min_quota must be >= 0")
        if self.n_sink < 0 or self.n_last < 0:
            raise ConfigError("n_sink and n_last must be >= 0")
        if self.t_keep is not None and self.t_keep < 1:
            raise ConfigError(f"t_keep must be >= 1, got {self.t_keep}")

    def replace(self, **changes) -> "CompressionConfig":
        return dataclasses.replace(self, **changes)

    def require_t_keep(self) -> int:
        if self.t_keep is None:
            raise ConfigError("t_keep is unset; supply it before running a policy")
        if self.t_keep < self.n_sink:
            raise ConfigError(f"t_keep {self.t_keep} is smaller than n_sink {self.n_sink}")
        return self.t_keep


def default_config() -> CompressionConfig:
    """Default hyperparameters; ``t_keep`` is left unset for the caller."""
    return CompressionConfig()


_BOOL_WORDS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _parse_value(name: str, text: str, py_type, lineno: int):
    text = text.strip()
    try:
        if py_type is bool:
            key = text.lower()
            if key not in _BOOL_WORDS:
                raise ValueError(text)
            return _BOOL_WORDS[key]
        if py_type is int:
            return int(text)
        if py_type is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"line {lineno}: cannot parse {name}={text!r}") from None
    raise ConfigError(f"line {lineno}: unsupported field type for {name}")


def load_config(path, base: CompressionConfig | None = None) -> CompressionConfig:
    """Read a flat ``key=value`` config file (one pair per line, # comments).

    Values outside the documented ranges are rejected, not clamped. Keys must
    be CompressionConfig field names in snake_case.
    """
    fields = {f.name: f for f in dataclasses.fields(CompressionConfig)}
    overrides = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value, got {raw.rstrip()!r}")
            name, text = (part.strip() for part in line.split("=", 1))
            if name not in fields:
                raise ConfigError(f"line {lineno}: unknown config key {name!r}")
            if name == "t_keep" and text.strip().lower() == "none":
                overrides[name] = None
                continue
            py_type = {"t_keep": int}.get(name)
            if py_type is None:
                py_type = type(getattr(CompressionConfig(), name))
            overrides[name] = _parse_value(name, text, py_type, lineno)
    cfg = base if base is not None else CompressionConfig()
    return cfg.replace(**overrides)


def save_config(cfg: CompressionConfig, path) -> None:
    """Write a config in the same flat format; round-trips bit-exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        for f in dataclasses.fields(CompressionConfig):
            value = getattr(cfg, f.name)
            if value is None:
                fh.write(f"{f.name} = none\n")
            elif isinstance(value, bool):
                fh.write(f"{f.name} = {'true' if value else 'false'}\n")
            elif isinstance(value, float):
                fh.write(f"{f.name} = {value!r}\n")
            else:
                fh.write(f"{f.name} = {value}\n")


class TokenLedger:
    """Per-(batch, head) map from cache position to original global token id.

    Ids are 0-based, assigned in generation order, and strictly increasing
    along the cache axis. Kept per head because keep sets are head-wise.
    """

    def __init__(self, ids: np.ndarray, next_id: int):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 3:
            raise ContractViolation(f"ledger ids must be [batch, heads, T], got shape {ids.shape}")
        if ids.shape[-1] > 0:
            if ids.max() >= next_id:
                raise ContractViolation("next_id must exceed every ledger id")
            if ids.shape[-1] > 1 and not (np.diff(ids, axis=-1) > 0).all():
                raise ContractViolation("ledger ids must be strictly increasing per head")
        self.ids = ids
        self.next_id = int(next_id)

    @classmethod
    def fresh(cls, batch: int, heads: int, length: int) -> "TokenLedger":
        ids = np.broadcast_to(np.arange(length, dtype=np.int64), (batch, heads, length)).copy()
        return cls(ids, next_id=length)

    @property
    def length(self) -> int:
        return self.ids.shape[-1]

    def head_ids(self, b: int, h: int) -> np.ndarray:
        return self.ids[b, h]


def advance_ledger(ledger: TokenLedger, keep: np.ndarray, new_tokens: int) -> TokenLedger:
    """Gather the ledger by per-head keep indices and append fresh ids.

    ``keep`` has shape [batch, heads, k]; appended ids continue the global
    counter, identically across heads (all heads see the same token stream).
    """
    keep = np.asarray(keep, dtype=np.int64)
    if keep.ndim != 3 or keep.shape[:2] != ledger.ids.shape[:2]:
        raise ContractViolation(
            f"keep shape {keep.shape} incompatible with ledger {ledger.ids.shape}"
        )
    if new_tokens < 0:
        raise ContractViolation("new_tokens must be >= 0")
    if keep.size and (keep.min() < 0 or keep.max() >= ledger.length):
        raise ContractViolation("keep index out of range for ledger")
    gathered = np.take_along_axis(ledger.ids, keep, axis=-1)
    if new_tokens:
        fresh = ledger.next_id + np.arange(new_tokens, dtype=np.int64)
        fresh = np.broadcast_to(fresh, gathered.shape[:2] + (new_tokens,))
        gathered = np.concatenate([gathered, fresh], axis=-1)
    return TokenLedger(gathered, next_id=ledger.next_id + new_tokens)
