"""Seeded, counter-style random stream derivation.

Every random decision in the pipeline draws from a generator derived from
(experiment seed, purpose string, integer keys...).  Identical keys always
produce identical draws, independent of call order and of how work is
distributed across processes — this is what makes whole runs replayable
bit for bit.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngStream:
    seed: int

    def derive(self, purpose: str, *keys: int) -> np.random.Generator:
        """Generator keyed by (seed, purpose, keys); stable across runs."""
        tag = zlib.crc32(purpose.encode("utf-8"))
        ss = np.random.SeedSequence((int(self.seed), tag, *[int(k) for k in keys]))
        return np.random.Generator(np.random.PCG64(ss))

    def for_sample(self, purpose: str, sample_id: int, epoch: int, replica: int = 0) -> np.random.Generator:
        """Per-sample augmentation stream: fixed (seed, id, epoch) => fixed draws."""
        return self.derive(purpose, sample_id, epoch, replica)
