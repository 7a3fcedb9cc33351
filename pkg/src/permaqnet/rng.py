"""Named deterministic random substreams.

Every node, link and process draws from its own generator, derived from
the master seed and a stable name, so adding one component never
perturbs another component's draws.
"""

from __future__ import annotations

import zlib

import numpy as np


def substream(master_seed: int, *name_parts) -> np.random.Generator:
    """Generator for the substream named by ``name_parts`` under ``master_seed``."""
    key = tuple(zlib.crc32(str(part).encode()) for part in name_parts)
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(seq))
