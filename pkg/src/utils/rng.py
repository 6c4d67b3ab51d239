"""
Deterministic random substreams.

A ``Stream`` is a value-like handle ``(seed, path)``. Children are derived by
appending keys to the path, and a numpy ``Generator`` is only materialised on
demand from ``SeedSequence(seed, spawn_key=path)`` over a counter-based Philox
bit generator. Two handles with the same seed and path always yield the same
draws, no matter which thread asks or in which order.
"""
import zlib
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

Key = Union[int, str]

# Module tags used as the first path component by each simulator.
TAG_GRID = "grid"
TAG_FRACTAL = "fractal"
TAG_COUPLING = "coupling"
TAG_GAMMA = "gamma"
TAG_SPINE = "spine"
TAG_SBM = "sbm"

_SEED_MASK = (1 << 64) - 1


def _key_to_int(key: Key) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    value = int(key)
    if value < 0:
        raise ValueError(f"Stream keys must be non-negative, got {value}")
    return value


@dataclass(frozen=True)
class Stream:
    """Immutable substream handle."""
    seed: int
    path: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _SEED_MASK)

    def child(self, *keys: Key) -> "Stream":
        """Derive a substream by appending keys (ints or string tags)."""
        return Stream(self.seed, self.path + tuple(_key_to_int(k) for k in keys))

    def generator(self) -> np.random.Generator:
        """Fresh Generator positioned at the start of this substream."""
        seq = np.random.SeedSequence(self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(seq))

    def describe(self) -> str:
        return f"seed={self.seed} path={'/'.join(str(p) for p in self.path) or '<root>'}"


def root_stream(seed: int) -> Stream:
    """Top-level stream for an experiment seed."""
    return Stream(seed)


def as_generator(source: Union[Stream, np.random.Generator]) -> np.random.Generator:
    """Accept either a Stream handle or an already materialised Generator."""
    if isinstance(source, np.random.Generator):
        return source
    if isinstance(source, Stream):
        return source.generator()
    raise TypeError(f"Expected Stream or numpy Generator, got {type(source).__name__}")
