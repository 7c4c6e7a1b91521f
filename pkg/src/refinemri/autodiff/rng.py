"""Named, independently seeded random streams."""

from __future__ import annotations

import zlib

import numpy as np

STREAMS = ("data", "dropout", "init", "masks", "replay", "noise", "shuffle")


def stream_seed(seed: int, name: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])


class RngStreams:
    """One ``numpy.random.Generator`` per stream name, all derived from ``seed``.

    Streams are created lazily so that adding a new consumer never shifts
    the draws of existing ones.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def __getitem__(self, name: str) -> np.random.Generator:
        if name not in self._streams:
            self._streams[name] = np.random.Generator(np.random.PCG64(stream_seed(self.seed, name)))
        return self._streams[name]

    def get_state(self) -> dict:
        return {"seed": self.seed, "streams": {k: g.bit_generator.state for k, g in self._streams.items()}}

    def set_state(self, state: dict) -> None:
        self.seed = int(state["seed"])
        self._streams = {}
        for name, bg_state in state["streams"].items():
            self[name].bit_generator.state = bg_state
