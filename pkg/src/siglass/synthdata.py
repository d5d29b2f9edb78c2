"""Reproducible synthetic images for null and alternative simulations.

The random stream is pinned to named portable algorithms rather than any
library default, so identical seeds give bit-identical images on every
platform and in any language:

* per-sample substream: xoshiro256++ state seeded by four SplitMix64 draws
  starting from (seed + sample_index) mod 2^64;
* uniforms: ((u64 >> 11) + 1) * 2^-53, which lies in (0, 1];
* normals: Box-Muller pairs, cos first, leftover discarded on odd counts;
* signal square position: one modular draw per axis over the valid corners.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpec

_MASK64 = (1 << 64) - 1


def splitmix64(state):
    """One SplitMix64 step; returns (next_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256pp:
    """xoshiro256++ with SplitMix64 seeding."""

    def __init__(self, seed):
        state = seed & _MASK64
        self.s = []
        for _ in range(4):
            state, v = splitmix64(state)
            self.s.append(v)
        if not any(self.s):
            raise InvalidSpec("all-zero generator state")

    def next_u64(self):
        s = self.s
        result = (_rotl((s[0] + s[3]) & _MASK64, 23) + s[0]) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def next_unit(self):
        """Uniform double in (0, 1]."""
        return ((self.next_u64() >> 11) + 1) * 2.0**-53

    def normals(self, count):
        out = np.empty(count, dtype=np.float64)
        i = 0
        while i < count:
            u1 = self.next_unit()
            u2 = self.next_unit()
            r = math.sqrt(-2.0 * math.log(u1))
            theta = 2.0 * math.pi * u2
            out[i] = r * math.cos(theta)
            i += 1
            if i < count:
                out[i] = r * math.sin(theta)
                i += 1
        return out

    def randint(self, bound):
        """Uniform integer in [0, bound) by a single modular draw."""
        return int(self.next_u64() % bound)


@dataclass(frozen=True)
class SynthSpec:
    """Synthetic dataset description; the stream is a pure function of seed."""

    n_samples: int
    shape: tuple
    loc: float = 0.0
    scale: float = 1.0
    local_signal: float = 0.0
    local_size: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise InvalidSpec("n_samples must be >= 1")
        if len(self.shape) != 3 or any(int(d) < 1 for d in self.shape):
            raise InvalidSpec(f"shape must be (C, H, W) with positive dims, got {self.shape}")
        object.__setattr__(self, "shape", tuple(int(d) for d in self.shape))
        if not self.scale > 0:
            raise InvalidSpec("scale must be positive")
        size = self.effective_local_size()
        if not 1 <= size <= min(self.shape[1], self.shape[2]):
            raise InvalidSpec(f"local_size {size} exceeds image dims {self.shape[1:]}")

    def effective_local_size(self):
        if self.local_size is not None:
            return int(self.local_size)
        return max(1, min(self.shape[1], self.shape[2]) // 3)


def sample(spec, index):
    """Generate sample `index` of the stream: (image, mask, label).

    The image is elementwise loc + scale * N(0, 1); with a nonzero
    local_signal a uniformly placed in-bounds square of side local_size gets
    the signal added to every pixel and is marked in the mask.
    """
    if not 0 <= index < spec.n_samples:
        raise InvalidSpec(f"sample index {index} out of range")
    c, h, w = spec.shape
    rng = Xoshiro256pp((spec.seed + index) & _MASK64)
    image = spec.loc + spec.scale * rng.normals(c * h * w).reshape(spec.shape)
    mask = np.zeros(spec.shape, dtype=np.uint8)
    label = 0
    if spec.local_signal != 0.0:
        size = spec.effective_local_size()
        top = rng.randint(h - size + 1)
        left = rng.randint(w - size + 1)
        image[:, top : top + size, left : left + size] += spec.local_signal
        mask[:, top : top + size, left : left + size] = 1
        label = 1
    return image, mask, label


def generate(spec):
    """Yield every sample of the stream in index order."""
    for i in range(spec.n_samples):
        yield sample(spec, i)
