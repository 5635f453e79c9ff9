"""Deterministic random streams keyed by (master seed, stream label).

Every random draw in the package flows through a :class:`SeedContext`.
The context maps its label to a 128-bit Philox key via SHA-256, so a
stream is a pure function of (master_seed, stream_label): the same pair
yields bit-identical draws no matter which thread, process, or call
order produced it.  Parallel experiment trials therefore derive one
child context per trial and never share generator state.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

_LABEL_SEP = b"\x1f"


@dataclass(frozen=True)
class SeedContext:
    """A master seed plus a structured label naming one random stream."""

    master_seed: int
    stream_label: tuple = field(default_factory=tuple)

    def child(self, *parts) -> "SeedContext":
        """Derive a sub-stream by appending label parts (str or int)."""
        return SeedContext(self.master_seed, self.stream_label + tuple(parts))

    def key(self) -> int:
        """128-bit Philox key derived from the seed and label."""
        h = hashlib.sha256()
        h.update(str(int(self.master_seed)).encode())
        for part in self.stream_label:
            h.update(_LABEL_SEP)
            h.update(str(part).encode())
        return int.from_bytes(h.digest()[:16], "little")

    def generator(self) -> np.random.Generator:
        """Fresh counter-based generator positioned at the stream start."""
        return np.random.Generator(np.random.Philox(key=self.key()))
