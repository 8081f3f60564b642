"""Deterministic fan-out of one master seed into independent random streams."""

from typing import NamedTuple

import numpy as np

RNG_NAME = "numpy.random.PCG64"


class SeedStreams(NamedTuple):
    init: np.random.Generator
    shuffle: np.random.Generator
    generator: np.random.Generator


def seed_streams(seed: int) -> SeedStreams:
    """Spawn the init, shuffle and data-generator streams of ``seed``."""
    children = np.random.SeedSequence(seed).spawn(3)
    return SeedStreams(*(np.random.Generator(np.random.PCG64(child)) for child in children))
