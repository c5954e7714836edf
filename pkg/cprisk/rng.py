"""
cprisk.rng

Counter-based random substreams for reproducible path simulation.

Paths are grouped in fixed-size blocks; block b draws from a Philox generator
keyed by the run seed with its counter advanced to b * 2^128. The draws of a
block therefore depend only on (seed, block index, block size) and never on
which worker or in which order the blocks are produced.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Tuple

import numpy as np

BLOCK_PATHS = 1024

# Counter distance between consecutive blocks.
BLOCK_SKIP = 1 << 128

SEED_LIMIT = 1 << 64


@dataclass(frozen=True)
class BlockDraws:
    """Uniforms for the default time, step normals, one bridge normal per path."""

    uniforms: np.ndarray
    normals: np.ndarray
    bridge: np.ndarray

    @property
    def size(self) -> int:
        return int(self.uniforms.size)

    def mirrored(self) -> "BlockDraws":
        """Stack the antithetic copy (1-u, -z, -z_bridge) below the originals."""
        return BlockDraws(
            uniforms=np.concatenate([self.uniforms, 1.0 - self.uniforms]),
            normals=np.concatenate([self.normals, -self.normals]),
            bridge=np.concatenate([self.bridge, -self.bridge]),
        )


class SubstreamRNG:
    """Seeded Philox substreams, one per block of paths."""

    def __init__(self, seed: int, block_paths: int = BLOCK_PATHS):
        if not 0 <= int(seed) < SEED_LIMIT:
            raise ValueError("seed must be an integer in [0, 2^64)")
        if block_paths < 1:
            raise ValueError("block_paths must be >= 1")
        self._seed = int(seed)
        self._block_paths = int(block_paths)

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def block_paths(self) -> int:
        return self._block_paths

    def generator(self, block: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self._seed, counter=block * BLOCK_SKIP))

    def draws(self, block: int, n_paths: int, n_steps: int) -> BlockDraws:
        gen = self.generator(block)
        uniforms = gen.random(n_paths)
        normals = gen.standard_normal((n_paths, n_steps))
        bridge = gen.standard_normal(n_paths)
        return BlockDraws(uniforms=uniforms, normals=normals, bridge=bridge)

    def blocks(self, n_paths: int) -> Iterator[Tuple[int, int]]:
        """Yield (block index, paths in block) covering n_paths."""
        full, rest = divmod(n_paths, self._block_paths)
        for index in range(full):
            yield index, self._block_paths
        if rest:
            yield full, rest

    def n_blocks(self, n_paths: int) -> int:
        return -(-n_paths // self._block_paths)


__all__ = ["BLOCK_PATHS", "BlockDraws", "SubstreamRNG"]
