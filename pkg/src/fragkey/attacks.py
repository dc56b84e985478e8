"""Public-channel adversary acting on bucket sequences."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import ConfigError, check_buckets, seeded_rng

__all__ = ["ATTACK_KINDS", "AttackSpec", "affected_count", "attack"]

ATTACK_KINDS = ("disorder", "forge", "tamper", "discard", "zeroset")


@dataclass(frozen=True)
class AttackSpec:
    """One attack on the bucket sequence sent to ``target_user``.

    ``fraction`` only matters for tamper, discard and zeroset, which touch
    ``ceil(fraction * L)`` distinct positions.  ``seed=None`` lets the
    session derive one from its own seed.
    """

    kind: str
    fraction: float = 0.01
    target_user: int = 0
    seed: int | None = None

    def __post_init__(self):
        kind = self.kind.lower().replace("-", "").replace("_", "")
        if kind not in ATTACK_KINDS:
            raise ConfigError(f"unknown attack {self.kind!r}; choose from {ATTACK_KINDS}")
        object.__setattr__(self, "kind", kind)
        if not 0.0 < self.fraction <= 1.0:
            raise ConfigError(f"attack fraction must lie in (0, 1], got {self.fraction}")
        if self.target_user < 0:
            raise ConfigError("target_user must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


def affected_count(length: int, fraction: float) -> int:
    # the epsilon keeps e.g. 0.01 * 300 from rounding up to 4
    return max(1, math.ceil(fraction * length - 1e-9))


def attack(seq, spec: AttackSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    s = check_buckets(seq)
    if rng is None:
        if spec.seed is None:
            raise ConfigError("attack needs a seed or a generator")
        rng = seeded_rng(spec.seed)
    n = s.size
    k = affected_count(n, spec.fraction)

    if spec.kind == "disorder":
        return rng.permutation(s)
    if spec.kind == "forge":
        mean, var = s.mean(), s.var()
        if var == 0:
            return np.full(n, mean)
        # gamma with matched first two moments stays non-negative
        return rng.gamma(mean * mean / var, var / mean, size=n)
    if k > n or (spec.kind == "discard" and k >= n):
        raise ConfigError(f"cannot {spec.kind} {k} of {n} values")
    idx = rng.choice(n, size=k, replace=False)
    out = s.copy()
    if spec.kind == "tamper":
        out[idx] = rng.uniform(0.0, 2.0 * s.mean(), size=k)
        return out
    if spec.kind == "zeroset":
        out[idx] = 0.0
        return out
    return np.delete(out, idx)
