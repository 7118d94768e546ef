"""Counter-based random streams with documented path splitting.

Each sample path owns one Philox key derived from its seed; every noise
channel gets its own counter block within that key, so enabling or disabling
one channel never disturbs the draws of another, and paths are independent
work units regardless of execution order.
"""

import numpy as np

# channel ids (the Philox counter's third word)
GRAPH, GRADIENT, RESOURCE, CHANNEL_LAMBDA, CHANNEL_Z, INIT = range(6)


def path_seed(master_seed: int, path: int) -> int:
    """The documented splitting function: derive path `path`'s seed."""
    ss = np.random.SeedSequence((int(master_seed), int(path)))
    return int(ss.generate_state(1, np.uint64)[0])


class PathStream:
    """Per-path random streams, one independent generator per channel."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._key = np.random.SeedSequence(self.seed).generate_state(2, np.uint64)
        self._gens = {}

    def channel(self, channel_id: int) -> np.random.Generator:
        gen = self._gens.get(channel_id)
        if gen is None:
            bg = np.random.Philox(key=self._key, counter=[0, 0, channel_id, 0])
            gen = np.random.Generator(bg)
            self._gens[channel_id] = gen
        return gen
