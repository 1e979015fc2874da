"""Seeded random substreams.

Every stochastic step draws from a PCG64 generator built from
``SeedSequence(seed, spawn_key=key_words)``, where ``key_words`` are the
first four 32-bit words of ``sha256("/".join(key))``. A key is a path such
as ``("point", "M001", "P")``, so a meter-channel always receives the same
stream no matter how many other series are processed or in which order.
"""

from __future__ import annotations

import hashlib

import numpy as np

_U64 = (1 << 64) - 1


def spawn_key(*key: object) -> tuple[int, ...]:
    digest = hashlib.sha256("/".join(str(k) for k in key).encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))


def substream(seed: int, *key: object) -> np.random.Generator:
    """Return an independent generator for ``key`` under the master ``seed``.

    Negative seeds are folded into the unsigned 64-bit range.
    """
    seq = np.random.SeedSequence(int(seed) & _U64, spawn_key=spawn_key(*key))
    return np.random.Generator(np.random.PCG64(seq))
