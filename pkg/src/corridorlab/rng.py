"""Counter-based RNG stream derivation.

Every random draw in the workbench flows from a Philox generator keyed by
(seed, stream tag, extra ids). Streams are independent, order-insensitive,
and reproducible across processes, which is what makes parallel episode
workers bitwise deterministic.
"""

from __future__ import annotations

import numpy as np

# Stream tags. New tags get new numbers; never reuse one for a different
# purpose or archived seeds change meaning.
SCENE = 1
GP = 2
EXTRINSICS = 3
POLICY_INIT = 4
ROLLOUT = 5
TRAIN = 6
COMMANDS = 7
EVAL = 8
DEMOS = 9


def stream(seed: int, *ids: int) -> np.random.Generator:
    """Derive an independent generator from a base seed and integer ids."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(int(i) for i in ids))
    return np.random.Generator(np.random.Philox(ss))
