"""Counter-based pseudo-random streams.

Every stochastic component in the library draws from :class:`RngState`, a
splitmix-style generator whose output depends only on (seed, counter). The
same seed therefore reproduces the same draws bit-for-bit on any platform,
which the sweep's determinism guarantees rely on.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = float(2.0**-53)


def _mix64(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 arithmetic wraps mod 2^64 by design
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def _hash_tag(tag) -> np.uint64:
    """FNV-1a hash of a string or int tag, for deriving child streams."""
    if isinstance(tag, (int, np.integer)):
        return _mix64(np.uint64(int(tag) & 0xFFFFFFFFFFFFFFFF))
    h = np.uint64(0xCBF29CE484222325)
    prime = np.uint64(0x100000001B3)
    with np.errstate(over="ignore"):
        for byte in str(tag).encode("utf-8"):
            h = (h ^ np.uint64(byte)) * prime
    return h


class RngState:
    """Deterministic counter generator: output i = mix(seed + (counter+i)*golden)."""

    def __init__(self, seed: int):
        self.seed = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
        self.counter = np.uint64(0)

    def child(self, tag) -> "RngState":
        """Derive an independent stream keyed by `tag`; does not advance self."""
        return RngState(int(_mix64(self.seed ^ _hash_tag(tag))))

    def _raw(self, n: int) -> np.ndarray:
        with np.errstate(over="ignore"):
            idx = self.counter + np.arange(1, n + 1, dtype=np.uint64)
            out = _mix64(self.seed + idx * _GOLDEN)
        self.counter = self.counter + np.uint64(n)
        return out

    def uniform(self, shape=()) -> np.ndarray:
        """Uniform float64 in [0, 1)."""
        n = int(np.prod(shape)) if shape else 1
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * _U53
        return u.reshape(shape) if shape else u[0]

    def normal(self, shape=(), std: float = 1.0) -> np.ndarray:
        """Standard normals via Box-Muller (uniforms shifted into (0,1])."""
        n = int(np.prod(shape)) if shape else 1
        m = (n + 1) // 2
        raw = self._raw(2 * m)
        u1 = ((raw[:m] >> np.uint64(11)).astype(np.float64) + 1.0) * _U53
        u2 = (raw[m:] >> np.uint64(11)).astype(np.float64) * _U53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n] * std
        return z.reshape(shape) if shape else z[0]

    def integers(self, upper: int, shape=()) -> np.ndarray:
        """Integers in [0, upper). Uses floor(u*upper); bias is < 2^-53 * upper."""
        u = self.uniform(shape if shape else (1,))
        out = np.minimum((u * upper).astype(np.int64), upper - 1)
        return out.reshape(shape) if shape else int(out[0])

    def shuffled(self, items: list) -> list:
        """Deterministic permutation of a list (sort by per-item random keys)."""
        keys = self.uniform((len(items),)) if items else np.zeros(0)
        order = np.argsort(keys, kind="stable")
        return [items[i] for i in order]
