"""Seedable, splittable random stream with a fixed draw discipline.

Every random quantity in this library is derived from raw PCG64 doubles by
inverse transform, in a documented order.  That makes the draw sequence part
of the API: the compiled and pure-Python sampling kernels consume the same
underlying bit stream and therefore produce bitwise-identical paths.

Draw primitives
---------------
``uniform``        one double in [0, 1) (one ``next_double`` of PCG64).
``open_uniform``   one double in (0, 1); redraws on an exact 0.0.
``exponential``    ``-log(open_uniform()) / rate``.
``discrete``       left-to-right cumulative scan of the weight vector against
                   ``uniform() * sum(weights)`` (sum accumulated in the same
                   left-to-right order).
"""

from __future__ import annotations

import math

import numpy as np


class RandomStream:
    """A PCG64-backed stream of uniform doubles with deterministic splitting.

    Identical seeds give identical draw sequences across runs and platforms.
    ``split`` spawns statistically independent child streams whose seeds are
    derived deterministically from this stream's seed sequence; the parent
    remains usable. A stream must not be shared between concurrent samplers.
    """

    def __init__(self, seed=None, _seq=None):
        if _seq is None:
            _seq = np.random.SeedSequence(seed)
        self._seq = _seq
        self._bitgen = np.random.PCG64(_seq)
        self._gen = np.random.Generator(self._bitgen)

    @property
    def seed(self):
        """Entropy of the underlying seed sequence (int for root streams)."""
        return self._seq.entropy

    @property
    def bit_generator(self):
        """The underlying PCG64 instance (compiled kernels draw from its
        capsule; doing so advances this stream)."""
        return self._bitgen

    def uniform(self) -> float:
        """One double in [0, 1)."""
        return self._gen.random()

    def open_uniform(self) -> float:
        """One double in (0, 1); the measure-zero draw 0.0 is redrawn."""
        u = self._gen.random()
        while u == 0.0:
            u = self._gen.random()
        return u

    def exponential(self, rate: float) -> float:
        """Exponential(rate) waiting time, strictly positive."""
        return -math.log(self.open_uniform()) / rate

    def discrete(self, weights) -> int:
        """Index drawn proportional to ``weights`` (nonnegative, not all 0).

        Uses a sequential scan so the compiled kernels can reproduce the
        draw exactly.
        """
        total = 0.0
        for w in weights:
            total += w
        if total <= 0.0:
            raise ValueError("discrete draw needs a positive total weight")
        target = self.uniform() * total
        acc = 0.0
        last_positive = -1
        for i, w in enumerate(weights):
            if w > 0.0:
                last_positive = i
            acc += w
            if target < acc:
                return i
        return last_positive

    def split(self, k: int) -> list["RandomStream"]:
        """Spawn ``k`` independent child streams.

        Children are determined by the parent's seed and by how many children
        were spawned before, so a fixed seed and call order fix all streams.
        """
        return [RandomStream(_seq=child) for child in self._seq.spawn(k)]

    def __repr__(self):
        return f"RandomStream(seed={self._seq.entropy!r}, spawn_key={self._seq.spawn_key!r})"
